//! im2col lowering shared by convolution and transposed convolution.

use super::Scalar;

/// Geometry of one image plane set and the sliding-window grid over it.
#[derive(Clone, Copy, Debug)]
pub(super) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn cols(&self) -> usize {
        self.grid_h * self.grid_w
    }

    #[inline]
    fn source(&self, grid: usize, k: usize) -> Option<usize> {
        let pos = (grid * self.stride + k) as isize - self.pad as isize;
        (pos >= 0).then_some(pos as usize)
    }

    /// `image` is `[channels, height, width]`; `cols` becomes `[rows, cols]`.
    pub fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        let ncols = self.cols();
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let out = &mut cols[row * ncols..(row + 1) * ncols];
                    for gy in 0..self.grid_h {
                        let iy = self.source(gy, ki).filter(|&y| y < self.height);
                        for gx in 0..self.grid_w {
                            let v = match (iy, self.source(gx, kj).filter(|&x| x < self.width)) {
                                (Some(y), Some(x)) => plane[y * self.width + x],
                                _ => T::zero(),
                            };
                            out[gy * self.grid_w + gx] = v;
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatters-adds `cols` into `image`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        let ncols = self.cols();
        let mut row = 0;
        for c in 0..self.channels {
            let plane =
                &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for gy in 0..self.grid_h {
                        let Some(y) = self.source(gy, ki).filter(|&y| y < self.height) else {
                            continue;
                        };
                        for gx in 0..self.grid_w {
                            if let Some(x) = self.source(gx, kj).filter(|&x| x < self.width) {
                                plane[y * self.width + x] =
                                    plane[y * self.width + x] + src[gy * self.grid_w + gx];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

pub(super) fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

pub(super) fn conv_transpose_out_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Option<usize> {
    let full = (input - 1) * stride + kernel + output_pad;
    (full > 2 * pad).then(|| full - 2 * pad)
}
