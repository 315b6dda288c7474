//! Scatter plots and image grids for qualitative panels.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const GRAY: [f32; 3] = [0.75, 0.75, 0.75];
pub const BLUE: [f32; 3] = [0.1, 0.3, 0.9];
pub const RED: [f32; 3] = [0.85, 0.15, 0.1];
pub const GREEN: [f32; 3] = [0.1, 0.6, 0.2];

/// Plots 2-D point sets on a white `[3, side, side]` canvas covering
/// `[-extent, extent]^2`, later layers on top.
pub fn scatter(layers: &[(&Tensor<f32>, [f32; 3])], extent: f64, side: usize) -> Result<Tensor<f32>> {
    if !(extent > 0.0) || side == 0 {
        return Err(Error::invalid("scatter needs a positive extent and side"));
    }
    let plane = side * side;
    let mut img = vec![1.0f32; 3 * plane];
    for (pts, color) in layers {
        if pts.shape().len() != 2 || pts.shape()[1] != 2 {
            return Err(Error::shape("scatter", pts.shape(), &[pts.batch_len(), 2]));
        }
        for p in pts.data().chunks(2) {
            let u = ((p[0] as f64 + extent) / (2.0 * extent) * side as f64).floor();
            let v = ((extent - p[1] as f64) / (2.0 * extent) * side as f64).floor();
            if u < 0.0 || v < 0.0 || u >= side as f64 || v >= side as f64 {
                continue;
            }
            let (u, v) = (u as usize, v as usize);
            for dy in v.saturating_sub(1)..=(v + 1).min(side - 1) {
                for dx in u.saturating_sub(1)..=(u + 1).min(side - 1) {
                    for c in 0..3 {
                        img[c * plane + dy * side + dx] = color[c];
                    }
                }
            }
        }
    }
    Tensor::new(vec![3, side, side], img)
}

/// Converts a `[1, H, W]` or `[3, H, W]` image to three channels.
pub fn to_rgb(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    match img.shape() {
        [3, _, _] => Ok(img.clone()),
        [1, h, w] => {
            let mut data = Vec::with_capacity(3 * h * w);
            for _ in 0..3 {
                data.extend_from_slice(img.data());
            }
            Tensor::new(vec![3, *h, *w], data)
        }
        s => Err(Error::invalid(format!("not an image: {s:?}"))),
    }
}

/// Places `[3, H, W_i]` images side by side with white gaps.
pub fn hstack(images: &[Tensor<f32>], gap: usize) -> Result<Tensor<f32>> {
    let first = images.first().ok_or_else(|| Error::invalid("nothing to stack"))?;
    let h = first.shape()[1];
    let total_w: usize = images.iter().map(|i| i.shape()[2]).sum::<usize>() + gap * (images.len() - 1);
    let mut out = vec![1.0f32; 3 * h * total_w];
    let mut x0 = 0;
    for img in images {
        let &[c, ih, w] = img.shape() else { unreachable!() };
        if c != 3 || ih != h {
            return Err(Error::shape("hstack", first.shape(), img.shape()));
        }
        for ch in 0..3 {
            for y in 0..h {
                let src = &img.data()[(ch * h + y) * w..(ch * h + y + 1) * w];
                let at = (ch * h + y) * total_w + x0;
                out[at..at + w].copy_from_slice(src);
            }
        }
        x0 += w + gap;
    }
    Tensor::new(vec![3, h, total_w], out)
}

/// Places `[3, H_i, W]` images top to bottom with white gaps.
pub fn vstack(images: &[Tensor<f32>], gap: usize) -> Result<Tensor<f32>> {
    let first = images.first().ok_or_else(|| Error::invalid("nothing to stack"))?;
    let w = first.shape()[2];
    let total_h: usize = images.iter().map(|i| i.shape()[1]).sum::<usize>() + gap * (images.len() - 1);
    let mut out = vec![1.0f32; 3 * total_h * w];
    let mut y0 = 0;
    for img in images {
        let &[c, h, iw] = img.shape() else { unreachable!() };
        if c != 3 || iw != w {
            return Err(Error::shape("vstack", first.shape(), img.shape()));
        }
        for ch in 0..3 {
            let src = &img.data()[ch * h * w..(ch + 1) * h * w];
            let at = (ch * total_h + y0) * w;
            out[at..at + h * w].copy_from_slice(src);
        }
        y0 += h + gap;
    }
    Tensor::new(vec![3, total_h, w], out)
}
