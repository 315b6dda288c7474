use crate::domains::DomainPair;
use crate::error::Result;
use crate::langevin::LangevinConfig;
use crate::metrics::{cycle_error, frechet_distance, mode_coverage, psnr, Coverage, FeatureMap};
use crate::tensor::Tensor;

use super::{mix_seed, translate_and_revise, TrainState};

pub const METRICS_HEADER: &str = "iter,fd_x,fd_y,cycle_err,energy_init,energy_revised,teach_loss,seconds";

/// One evaluation of a training state on the held-out sets.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub iter: u64,
    /// `FD(G_yx(Y_eval), X_eval)`.
    pub fd_x: f64,
    /// `FD(G_xy(X_eval), Y_eval)`.
    pub fd_y: f64,
    pub cycle_err: f64,
    /// Mean energy of translator outputs, averaged over both domains.
    pub energy_init: f64,
    /// Mean energy after Langevin revision, averaged over both domains.
    pub energy_revised: f64,
    /// Mean squared distance between revised and unrevised outputs, averaged over both domains.
    pub teach_loss: f64,
    pub seconds: f64,
    pub fd_x_revised: f64,
    pub fd_y_revised: f64,
    /// Coverage of the X and Y ring modes by translated samples.
    pub coverage_x: Option<Coverage>,
    pub coverage_y: Option<Coverage>,
    /// PSNR of translations against the paired ground truth (X then Y).
    pub psnr: Option<(f64, f64)>,
}

impl EvalRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.fd_x,
            self.fd_y,
            self.cycle_err,
            self.energy_init,
            self.energy_revised,
            self.teach_loss,
            self.seconds
        )
    }

    /// Parses a metrics CSV row, ignoring fields not in the header.
    pub fn parse_csv(line: &str) -> Option<[f64; 8]> {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().ok()).collect::<Option<_>>()?;
        v.try_into().ok()
    }
}

/// Held-out sets and settings for periodic evaluation.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub x: Tensor<f32>,
    pub y: Tensor<f32>,
    pub feature_map: FeatureMap,
    pub langevin: LangevinConfig,
    pub seed: u64,
    modes_x: Option<(Vec<Vec<f64>>, f64)>,
    modes_y: Option<(Vec<Vec<f64>>, f64)>,
    paired: bool,
}

impl Evaluator {
    /// Evaluation frames come from the descriptor's held-out generators.
    pub fn new(domains: &DomainPair, feature_map: FeatureMap, langevin: LangevinConfig, seed: u64) -> Result<Self> {
        let (gx, gy) = domains.eval_generators();
        let (ex, ey) = (gx.generate()?, gy.generate()?);
        Ok(Self {
            x: ex.frames()?,
            y: ey.frames()?,
            feature_map,
            langevin,
            seed,
            modes_x: domains.x.modes(),
            modes_y: domains.y.modes(),
            paired: domains.paired,
        })
    }

    pub fn evaluate(&self, s: &TrainState, iter: u64) -> Result<EvalRow> {
        let lx = self.langevin.with_seed(mix_seed(&[self.seed, 0xe7a1, iter, 0]));
        let ly = self.langevin.with_seed(mix_seed(&[self.seed, 0xe7a1, iter, 1]));
        let (x_init, x_rev) = translate_and_revise(&s.gen_x, &s.ebm_x, &self.y, &lx)?;
        let (y_init, y_rev) = translate_and_revise(&s.gen_y, &s.ebm_y, &self.x, &ly)?;
        let fm = &self.feature_map;
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let sq = |a: &Tensor<f32>, b: &Tensor<f32>| {
            a.data().iter().zip(b.data()).map(|(p, q)| (*p as f64 - *q as f64).powi(2)).sum::<f64>()
                / a.batch_len() as f64
        };
        let coverage = |modes: &Option<(Vec<Vec<f64>>, f64)>, samples: &Tensor<f32>| -> Result<Option<Coverage>> {
            modes.as_ref().map(|(c, std)| mode_coverage(samples, c, 3.0 * std)).transpose()
        };
        Ok(EvalRow {
            iter,
            fd_x: frechet_distance(&x_init, &self.x, fm)?,
            fd_y: frechet_distance(&y_init, &self.y, fm)?,
            cycle_err: cycle_error(&s.gen_y, &s.gen_x, &self.x, &self.y)?,
            energy_init: (mean(s.ebm_x.energies(&x_init)?) + mean(s.ebm_y.energies(&y_init)?)) / 2.0,
            energy_revised: (mean(s.ebm_x.energies(&x_rev)?) + mean(s.ebm_y.energies(&y_rev)?)) / 2.0,
            teach_loss: (sq(&x_rev, &x_init) + sq(&y_rev, &y_init)) / 2.0,
            seconds: 0.0,
            fd_x_revised: frechet_distance(&x_rev, &self.x, fm)?,
            fd_y_revised: frechet_distance(&y_rev, &self.y, fm)?,
            coverage_x: coverage(&self.modes_x, &x_init)?,
            coverage_y: coverage(&self.modes_y, &y_init)?,
            psnr: if self.paired {
                Some((psnr(&x_init, &self.x, 1.0)?, psnr(&y_init, &self.y, 1.0)?))
            } else {
                None
            },
        })
    }
}
