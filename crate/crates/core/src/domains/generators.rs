use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingParams {
    pub modes: usize,
    pub radius: f64,
    pub mode_std: f64,
    pub rotation: f64,
    pub scale: f64,
}

impl RingParams {
    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::Config("ring needs at least one mode".into()));
        }
        if !(self.radius >= 0.0) || !(self.mode_std > 0.0) || !(self.scale > 0.0) || !self.rotation.is_finite() {
            return Err(Error::Config(format!("invalid ring parameters {self:?}")));
        }
        Ok(())
    }

    /// Mode centers after rotation and scaling.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.modes).map(|k| self.place(self.base_center(k))).collect()
    }

    /// Standard deviation of each mode after scaling.
    pub fn scaled_std(&self) -> f64 {
        self.mode_std * self.scale
    }

    fn base_center(&self, k: usize) -> [f64; 2] {
        let a = TAU * k as f64 / self.modes as f64;
        [self.radius * a.cos(), self.radius * a.sin()]
    }

    fn place(&self, p: [f64; 2]) -> Vec<f64> {
        let (s, c) = self.rotation.sin_cos();
        vec![self.scale * (c * p[0] - s * p[1]), self.scale * (s * p[0] + c * p[1])]
    }
}

/// Points from an equal-weight Gaussian mixture on a ring, then rotated and scaled.
///
/// Two calls that share a seed draw the same modes and offsets, so their outputs
/// correspond point by point.
pub fn gen_ring(n: usize, p: &RingParams, seed: u64) -> Result<Tensor<f64>> {
    p.validate()?;
    if n == 0 {
        return Err(Error::Config("dataset size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let k = rng.gen_range(0..p.modes);
        let zx: f64 = StandardNormal.sample(&mut rng);
        let zy: f64 = StandardNormal.sample(&mut rng);
        let c = p.base_center(k);
        data.extend(p.place([c[0] + p.mode_std * zx, c[1] + p.mode_std * zy]));
    }
    Tensor::new(vec![n, 2], data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Disk,
}

/// Background and foreground colors of a shapes domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Palette {
    /// Gray 0.9 on 0.1.
    Bright,
    /// Gray 0.4 on 0.1.
    Dark,
    /// RGB (0.9, 0.2, 0.2) on 0.1.
    Red,
    /// RGB (0.2, 0.3, 0.9) on 0.1.
    Blue,
}

impl Palette {
    pub fn channels(&self) -> usize {
        match self {
            Palette::Bright | Palette::Dark => 1,
            Palette::Red | Palette::Blue => 3,
        }
    }

    pub fn background(&self) -> f64 {
        0.1
    }

    pub fn foreground(&self) -> Vec<f64> {
        match self {
            Palette::Bright => vec![0.9],
            Palette::Dark => vec![0.4],
            Palette::Red => vec![0.9, 0.2, 0.2],
            Palette::Blue => vec![0.2, 0.3, 0.9],
        }
    }
}

impl ShapeKind {
    /// Range of the size parameter: edge length for squares, radius for disks.
    pub fn size_range(&self, side: usize) -> (f64, f64) {
        let s = side as f64;
        match self {
            ShapeKind::Square => (s / 4.0, s / 2.0),
            ShapeKind::Disk => (s / 8.0, s / 4.0),
        }
    }

    /// Expected area when the size parameter is uniform over [`Self::size_range`].
    pub fn expected_area(&self, side: usize) -> f64 {
        let (a, b) = self.size_range(side);
        let second_moment = (a * a + a * b + b * b) / 3.0;
        match self {
            ShapeKind::Square => second_moment,
            ShapeKind::Disk => PI * second_moment,
        }
    }
}

fn overlap(lo: f64, hi: f64, cell: f64) -> f64 {
    (hi.min(cell + 1.0) - lo.max(cell)).max(0.0)
}

const DISK_SUBSAMPLES: usize = 8;

/// Fraction of each pixel covered by the shape, row-major `side x side`.
fn coverage(kind: ShapeKind, side: usize, cx: f64, cy: f64, size: f64) -> Vec<f64> {
    let mut out = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            out[y * side + x] = match kind {
                ShapeKind::Square => {
                    let h = size / 2.0;
                    overlap(cx - h, cx + h, x as f64) * overlap(cy - h, cy + h, y as f64)
                }
                ShapeKind::Disk => {
                    let m = DISK_SUBSAMPLES;
                    let mut hits = 0;
                    for sy in 0..m {
                        for sx in 0..m {
                            let px = x as f64 + (sx as f64 + 0.5) / m as f64;
                            let py = y as f64 + (sy as f64 + 0.5) / m as f64;
                            if (px - cx).powi(2) + (py - cy).powi(2) <= size * size {
                                hits += 1;
                            }
                        }
                    }
                    hits as f64 / (m * m) as f64
                }
            };
        }
    }
    out
}

/// Images of one randomly placed and sized shape each, shaped `[n, C, side, side]`.
pub fn gen_shapes(n: usize, side: usize, kind: ShapeKind, palette: Palette, seed: u64) -> Result<Tensor<f64>> {
    if side < 8 {
        return Err(Error::Config(format!("shape images need side >= 8, got {side}")));
    }
    if n == 0 {
        return Err(Error::Config("dataset size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = kind.size_range(side);
    let c = palette.channels();
    let bg = palette.background();
    let fg = palette.foreground();
    let plane = side * side;
    let mut data = Vec::with_capacity(n * c * plane);
    for _ in 0..n {
        let size = rng.gen_range(lo..hi);
        let half = match kind {
            ShapeKind::Square => size / 2.0,
            ShapeKind::Disk => size,
        };
        let cx = rng.gen_range(half..side as f64 - half);
        let cy = rng.gen_range(half..side as f64 - half);
        let cov = coverage(kind, side, cx, cy, size);
        for f in &fg {
            data.extend(cov.iter().map(|a| bg + (f - bg) * a));
        }
    }
    Tensor::new(vec![n, c, side, side], data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Appearance {
    /// Flat square of edge 5 at intensity 0.5, area-weighted at the borders.
    Box,
    /// Gaussian spot of standard deviation 1 and peak 1.
    Blob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionStyle {
    /// Constant speed with reflection at the margins.
    Bounce,
    /// Zero velocity.
    Still,
}

/// Distance kept between the sprite center and the image border.
pub const DOT_MARGIN: f64 = 4.5;
const BOX_EDGE: f64 = 5.0;
const BOX_LEVEL: f64 = 0.5;
const BLOB_STD: f64 = 1.0;

/// Sprite center at every frame of every sequence, in pixel units where pixel
/// `(row, col)` spans `[col, col + 1) x [row, row + 1)`.
pub fn dot_trajectories(
    n_seqs: usize,
    len: usize,
    side: usize,
    motion: MotionStyle,
    speed: f64,
    seed: u64,
) -> Result<Vec<Vec<[f64; 2]>>> {
    if (side as f64) < 2.0 * DOT_MARGIN + 1.0 {
        return Err(Error::Config(format!("moving-dot images need side >= 10, got {side}")));
    }
    if len == 0 || n_seqs == 0 {
        return Err(Error::Config("moving-dot needs positive sequence count and length".into()));
    }
    if !(speed >= 0.0 && speed < side as f64 - 2.0 * DOT_MARGIN) {
        return Err(Error::Config(format!("moving-dot speed {speed} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (DOT_MARGIN, side as f64 - DOT_MARGIN);
    let reflect = |p: &mut f64, v: &mut f64| {
        if *p < lo {
            *p = 2.0 * lo - *p;
            *v = -*v;
        } else if *p > hi {
            *p = 2.0 * hi - *p;
            *v = -*v;
        }
    };
    let mut out = Vec::with_capacity(n_seqs);
    for _ in 0..n_seqs {
        let mut p = [rng.gen_range(lo..hi), rng.gen_range(lo..hi)];
        let angle = rng.gen_range(0.0..TAU);
        let s = match motion {
            MotionStyle::Bounce => speed,
            MotionStyle::Still => 0.0,
        };
        let mut v = [s * angle.cos(), s * angle.sin()];
        let mut traj = Vec::with_capacity(len);
        for _ in 0..len {
            traj.push(p);
            for a in 0..2 {
                p[a] += v[a];
                reflect(&mut p[a], &mut v[a]);
            }
        }
        out.push(traj);
    }
    Ok(out)
}

/// Renders one sprite centered at `c` into a `side x side` frame.
pub fn render_dot(appearance: Appearance, side: usize, c: [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            out[y * side + x] = match appearance {
                Appearance::Box => {
                    let h = BOX_EDGE / 2.0;
                    BOX_LEVEL * overlap(c[0] - h, c[0] + h, x as f64) * overlap(c[1] - h, c[1] + h, y as f64)
                }
                Appearance::Blob => {
                    let dx = x as f64 + 0.5 - c[0];
                    let dy = y as f64 + 0.5 - c[1];
                    (-(dx * dx + dy * dy) / (2.0 * BLOB_STD * BLOB_STD)).exp()
                }
            };
        }
    }
    out
}

/// Sequences of a moving sprite, shaped `[n_seqs, len, 1, side, side]`.
pub fn gen_moving_dot(
    n_seqs: usize,
    len: usize,
    side: usize,
    appearance: Appearance,
    motion: MotionStyle,
    speed: f64,
    seed: u64,
) -> Result<Tensor<f64>> {
    let trajs = dot_trajectories(n_seqs, len, side, motion, speed, seed)?;
    let mut data = Vec::with_capacity(n_seqs * len * side * side);
    for traj in &trajs {
        for &c in traj {
            data.extend(render_dot(appearance, side, c));
        }
    }
    Tensor::new(vec![n_seqs, len, 1, side, side], data)
}

/// Intensity centroid `(x, y)` of a single-channel frame; `None` for a blank frame.
pub fn centroid(frame: &[f64], side: usize) -> Option<[f64; 2]> {
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for y in 0..side {
        for x in 0..side {
            let v = frame[y * side + x].max(0.0);
            m += v;
            sx += v * (x as f64 + 0.5);
            sy += v * (y as f64 + 0.5);
        }
    }
    (m > 0.0).then(|| [sx / m, sy / m])
}
