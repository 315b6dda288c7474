use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::domains::{save_ppm, DataKind, Generator};
use crate::error::{Error, Result};
use crate::langevin::{revise_chains, LangevinConfig};
use crate::networks::{EnergyModel, Translator};
use crate::render::{hstack, scatter, to_rgb, vstack, BLUE, GRAY, GREEN, RED};
use crate::tensor::Tensor;

use super::{mix_seed, save_checkpoint, train_iteration, translate_and_revise, EvalRow, Evaluator, RunConfig, TrainState, METRICS_HEADER};

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Rows produced by this call (after the resume point, if any).
    pub rows: Vec<EvalRow>,
}

/// Translates every frame, then revises each frame as its own chain.
/// Works for a single image batch as well (`frames` shaped `[len, ...]`).
pub fn translate_sequence(
    frames: &Tensor<f32>,
    gen: &Translator<f32>,
    ebm: &EnergyModel<f32>,
    langevin: &LangevinConfig,
) -> Result<Tensor<f32>> {
    let init = gen.translate(frames)?;
    let chains: Vec<u64> = (0..init.batch_len() as u64).collect();
    revise_chains(&init, ebm, langevin, &chains)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Keeps the header and rows up to iteration `t`, or starts a fresh log.
fn prepare_metrics(path: &Path, t: u64) -> Result<()> {
    let mut text = format!("{METRICS_HEADER}\n");
    if t > 0 {
        if let Ok(old) = fs::read_to_string(path) {
            for line in old.lines().skip(1) {
                match line.split(',').next().and_then(|v| v.parse::<u64>().ok()) {
                    Some(i) if i <= t => text.push_str(&format!("{line}\n")),
                    _ => {}
                }
            }
        }
    }
    write_file(path, &text)
}

fn append_row(path: &Path, row: &EvalRow) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", row.csv()).map_err(|e| Error::io(path, e))
}

/// Input | translation | revision panels for both directions.
pub fn render_grid(cfg: &RunConfig, ev: &Evaluator, s: &TrainState) -> Result<Tensor<f32>> {
    let lv = cfg.train.langevin.with_seed(mix_seed(&[cfg.train.seed, 0x9a1d, s.t]));
    match cfg.domains.kind() {
        DataKind::Points => {
            let n = ev.x.batch_len().min(256);
            let x = ev.x.gather(&(0..n).collect::<Vec<_>>());
            let y = ev.y.gather(&(0..n).collect::<Vec<_>>());
            let (y_init, y_rev) = translate_and_revise(&s.gen_y, &s.ebm_y, &x, &lv)?;
            let (x_init, x_rev) = translate_and_revise(&s.gen_x, &s.ebm_x, &y, &lv)?;
            let extent = ev.x.data().iter().chain(ev.y.data()).fold(0.0f32, |m, v| m.max(v.abs())) as f64 * 1.2;
            let row = |src: &Tensor<f32>, target: &Tensor<f32>, init: &Tensor<f32>, rev: &Tensor<f32>| {
                hstack(
                    &[
                        scatter(&[(target, GRAY), (src, BLUE)], extent, 128)?,
                        scatter(&[(target, GRAY), (init, RED)], extent, 128)?,
                        scatter(&[(target, GRAY), (rev, GREEN)], extent, 128)?,
                    ],
                    4,
                )
            };
            vstack(&[row(&x, &y, &y_init, &y_rev)?, row(&y, &x, &x_init, &x_rev)?], 4)
        }
        kind => {
            let n = match kind {
                DataKind::Sequences => match &cfg.domains.x {
                    Generator::MovingDot { len, .. } => *len,
                    _ => 1,
                },
                _ => cfg.train.grid_samples,
            }
            .clamp(1, ev.x.batch_len());
            let idx: Vec<usize> = (0..n).collect();
            let mut rows = Vec::new();
            for (src, gen, ebm) in [(&ev.x, &s.gen_y, &s.ebm_y), (&ev.y, &s.gen_x, &s.ebm_x)] {
                let input = src.gather(&idx);
                let (init, rev) = translate_and_revise(gen, ebm, &input, &lv)?;
                for i in 0..n {
                    rows.push(hstack(
                        &[
                            to_rgb(&input.slice_batch(i).reshape(input.item_shape())?)?,
                            to_rgb(&init.slice_batch(i).reshape(init.item_shape())?)?,
                            to_rgb(&rev.slice_batch(i).reshape(rev.item_shape())?)?,
                        ],
                        1,
                    )?);
                }
            }
            vstack(&rows, 1)
        }
    }
}

/// Runs training from `resume` (or a fresh state) up to `cfg.train.iterations`.
///
/// With an output directory, writes `metrics.csv`, plus `ckpt_{t}/` (holding the run's
/// `config.txt`) and `grid_{t}.ppm` at the checkpoint cadence and at the final iteration.
pub fn train(cfg: &RunConfig, resume: Option<TrainState>, mut on_eval: impl FnMut(&EvalRow)) -> Result<TrainOutcome> {
    cfg.train.validate()?;
    let (dx, dy) = cfg.domains.generate()?;
    let ev = Evaluator::new(&cfg.domains, cfg.feature_map, cfg.train.langevin, cfg.train.seed)?;
    let mut state = match resume {
        Some(s) => {
            if s.spec != cfg.spec {
                return Err(Error::Config("checkpoint architecture differs from the config".into()));
            }
            s
        }
        None => TrainState::new(cfg.spec.clone(), cfg.train.seed)?,
    };
    let metrics = cfg.out.as_ref().map(|o| o.join("metrics.csv"));
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        prepare_metrics(metrics.as_ref().unwrap(), state.t)?;
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    while state.t < cfg.train.iterations {
        train_iteration(&mut state, &dx, &dy, &cfg.train)?;
        let t = state.t;
        if t % cfg.train.eval_every == 0 {
            let mut row = ev.evaluate(&state, t)?;
            if cfg.train.wall_clock {
                row.seconds = start.elapsed().as_secs_f64();
            }
            if let Some(m) = &metrics {
                append_row(m, &row)?;
            }
            on_eval(&row);
            rows.push(row);
        }
        if let Some(out) = &cfg.out {
            if t % cfg.train.checkpoint_every == 0 || t == cfg.train.iterations {
                let dir = out.join(format!("ckpt_{t}"));
                save_checkpoint(&dir, &state, &[])?;
                write_file(&dir.join("config.txt"), &cfg.to_text())?;
                save_ppm(&render_grid(cfg, &ev, &state)?, out.join(format!("grid_{t}.ppm")))?;
            }
        }
    }
    Ok(TrainOutcome { state, rows })
}
