//! Sample-set and per-image quality measures.
//!
//! Fréchet distances are computed on fixed feature maps rather than pretrained
//! networks, so they are reported as `FD(fm)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::networks::Translator;
use crate::objectives::cycle_loss;
use crate::tensor::{Scalar, Tensor};

/// Ridge added to both covariances before the matrix square root.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Fixed map from one example to a feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMap {
    Identity,
    /// Gaussian matrix with entries of variance `1 / input_dim`, drawn from `seed`.
    RandomProjection { dim: usize, seed: u64 },
    /// Mean over non-overlapping `patch x patch` windows of each channel.
    AvgPool { patch: usize },
}

impl FeatureMap {
    /// Random projection for images, identity for points.
    pub fn default_for(item_shape: &[usize]) -> Self {
        if item_shape.len() == 1 {
            FeatureMap::Identity
        } else {
            FeatureMap::RandomProjection { dim: 16, seed: 7 }
        }
    }

    /// Features of every example in the batch, one row each.
    pub fn apply<T: Scalar>(&self, batch: &Tensor<T>) -> Result<DMatrix<f64>> {
        let n = batch.batch_len();
        let item = batch.item_shape();
        let per: usize = item.iter().product();
        let raw = batch.to_f64_vec();
        match *self {
            FeatureMap::Identity => Ok(DMatrix::from_row_slice(n, per, &raw)),
            FeatureMap::RandomProjection { dim, seed } => {
                if dim == 0 {
                    return Err(Error::invalid("projection dimension must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let scale = 1.0 / (per as f64).sqrt();
                let w = DMatrix::from_fn(per, dim, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                });
                Ok(DMatrix::from_row_slice(n, per, &raw) * w)
            }
            FeatureMap::AvgPool { patch } => {
                let [c, h, w] = item else {
                    return Err(Error::invalid(format!("avg-pool features need images, got {item:?}")));
                };
                let (c, h, w) = (*c, *h, *w);
                if patch == 0 || h % patch != 0 || w % patch != 0 {
                    return Err(Error::invalid(format!("patch {patch} does not tile {h}x{w}")));
                }
                let (gh, gw) = (h / patch, w / patch);
                let norm = 1.0 / (patch * patch) as f64;
                let mut out = DMatrix::zeros(n, c * gh * gw);
                for i in 0..n {
                    let img = &raw[i * per..(i + 1) * per];
                    for ch in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                let col = (ch * gh + y / patch) * gw + x / patch;
                                out[(i, col)] += img[(ch * h + y) * w + x] * norm;
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMap::Identity => f.write_str("identity"),
            FeatureMap::RandomProjection { dim, seed } => write!(f, "proj:{dim}:{seed}"),
            FeatureMap::AvgPool { patch } => write!(f, "pool:{patch}"),
        }
    }
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad feature map `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts[..] {
            ["identity"] => Ok(FeatureMap::Identity),
            ["proj", d, seed] => Ok(FeatureMap::RandomProjection {
                dim: d.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            ["pool", p] => Ok(FeatureMap::AvgPool { patch: p.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

fn moments(f: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = f.nrows();
    let mean = f.row_mean().transpose();
    let mut centered = f.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    for i in 0..cov.nrows() {
        cov[(i, i)] += COVARIANCE_RIDGE;
    }
    (mean, cov)
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets (rows are samples).
pub fn frechet_features(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let d = a.ncols();
    if b.ncols() != d {
        return Err(Error::shape("frechet_distance", &[a.nrows(), d], &[b.nrows(), b.ncols()]));
    }
    for (name, m) in [("first", a), ("second", b)] {
        if m.nrows() < d + 1 {
            return Err(Error::invalid(format!(
                "frechet_distance: {name} set has {} samples, need at least {} for {d}-dim features",
                m.nrows(),
                d + 1
            )));
        }
    }
    let (mu_a, cov_a) = moments(a);
    let (mu_b, cov_b) = moments(b);
    let root_a = sqrt_psd(&cov_a);
    let cross = sqrt_psd(&(&root_a * &cov_b * &root_a));
    let dist = (&mu_a - &mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    Ok(dist.max(0.0))
}

pub fn frechet_distance<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, fm: &FeatureMap) -> Result<f64> {
    if a.item_shape() != b.item_shape() {
        return Err(Error::shape("frechet_distance", a.shape(), b.shape()));
    }
    frechet_features(&fm.apply(a)?, &fm.apply(b)?)
}

/// `10 log10(peak^2 / mse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("psnr", a.shape(), b.shape()));
    }
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("psnr peak must be positive, got {peak}")));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>()
        / a.numel() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean over examples of the distance between unit-normalized features of the
/// input and its translation.
pub fn dipd_proxy<T: Scalar>(input: &Tensor<T>, translated: &Tensor<T>, fm: &FeatureMap) -> Result<f64> {
    if input.shape() != translated.shape() {
        return Err(Error::shape("dipd_proxy", input.shape(), translated.shape()));
    }
    let fa = fm.apply(input)?;
    let fb = fm.apply(translated)?;
    let mut total = 0.0;
    for (ra, rb) in fa.row_iter().zip(fb.row_iter()) {
        let (na, nb) = (ra.norm(), rb.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::invalid("dipd_proxy: zero-norm feature"));
        }
        total += (ra / na - rb / nb).norm();
    }
    Ok(total / fa.nrows() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    /// Fraction of samples captured by each mode.
    pub fractions: Vec<f64>,
    pub uncaptured: f64,
}

impl Coverage {
    pub fn min_fraction(&self) -> f64 {
        self.fractions.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Assigns each sample to its nearest center if within `radius`.
pub fn mode_coverage<T: Scalar>(samples: &Tensor<T>, centers: &[Vec<f64>], radius: f64) -> Result<Coverage> {
    if samples.shape().is_empty() || samples.batch_len() == 0 {
        return Err(Error::invalid("mode_coverage: no samples"));
    }
    if centers.is_empty() {
        return Err(Error::invalid("mode_coverage: no centers"));
    }
    let n = samples.batch_len();
    let per = samples.numel() / n;
    if centers.iter().any(|c| c.len() != per) {
        return Err(Error::invalid(format!("mode_coverage: centers must have {per} coordinates")));
    }
    let mut counts = vec![0usize; centers.len()];
    for s in samples.data().chunks(per) {
        let (best, d2) = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.iter().zip(s).map(|(a, b)| (a - b.as_f64()).powi(2)).sum::<f64>()))
            .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        if d2 <= radius * radius {
            counts[best] += 1;
        }
    }
    let captured: usize = counts.iter().sum();
    Ok(Coverage {
        fractions: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        uncaptured: (n - captured) as f64 / n as f64,
    })
}

/// The cycle loss evaluated without gradients.
pub fn cycle_error<T: Scalar>(gxy: &Translator<T>, gyx: &Translator<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    cycle_loss(gxy, gyx, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64], d: usize) -> Tensor<f64> {
        Tensor::from_f64(&[v.len() / d, d], v).unwrap()
    }

    #[test]
    fn point_masses_in_one_dimension() {
        let a = pts(&[-1.0, 1.0], 1);
        let b = pts(&[0.0, 2.0], 1);
        let d = frechet_distance(&a, &b, &FeatureMap::Identity).unwrap();
        assert!((d - 1.0).abs() < 1e-8, "{d}");
        assert!(frechet_distance(&a, &a, &FeatureMap::Identity).unwrap() < 1e-8);
    }

    #[test]
    fn too_few_samples_rejected() {
        let a = pts(&[0.0, 1.0, 2.0, 3.0], 2);
        assert!(frechet_distance(&a, &a, &FeatureMap::Identity).is_err());
    }

    #[test]
    fn psnr_values() {
        let a = Tensor::<f64>::zeros(&[1, 4]);
        let b = Tensor::full(&[1, 4], 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 100.0);
        assert_eq!(psnr(&a, &Tensor::full(&[1, 4], 1.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn dipd_chords() {
        let a = pts(&[0.6, 0.8], 2);
        let b = pts(&[1.0, 0.0], 2);
        assert!((dipd_proxy(&a, &b, &FeatureMap::Identity).unwrap() - 0.8f64.sqrt()).abs() < 1e-12);
        let c = pts(&[0.0, 3.0], 2);
        assert!((dipd_proxy(&b, &c, &FeatureMap::Identity).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(dipd_proxy(&a, &a, &FeatureMap::Identity).unwrap(), 0.0);
        assert!(dipd_proxy(&a, &pts(&[0.0, 0.0], 2), &FeatureMap::Identity).is_err());
    }

    #[test]
    fn coverage_collapse_signature() {
        let centers = vec![vec![0.0, 0.0], vec![5.0, 0.0]];
        let s = pts(&[0.1, 0.0, -0.1, 0.0], 2);
        let c = mode_coverage(&s, &centers, 0.5).unwrap();
        assert_eq!(c.fractions, vec![1.0, 0.0]);
        assert_eq!(c.uncaptured, 0.0);
    }

    #[test]
    fn avg_pool_features() {
        let img = Tensor::<f64>::from_f64(&[1, 1, 2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let f = FeatureMap::AvgPool { patch: 2 }.apply(&img).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![3.5, 5.5]);
    }

    #[test]
    fn feature_map_strings_roundtrip() {
        for fm in [FeatureMap::Identity, FeatureMap::RandomProjection { dim: 8, seed: 3 }, FeatureMap::AvgPool { patch: 4 }] {
            assert_eq!(fm.to_string().parse::<FeatureMap>().unwrap(), fm);
        }
    }
}
