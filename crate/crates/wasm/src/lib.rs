//! WebAssembly bindings for the ring demo page.
//!
//! The page builds a [`RingDemo`], advances it with `train`, reads metrics with
//! `evaluate` and paints `render` into a canvas. The Rust-facing methods return
//! `coopforge::Result` so they can be tested natively.

use coopforge::domains::DomainDataset;
use coopforge::trainer::{render_grid, train_iteration, EvalRow, Evaluator, RunConfig, TrainState};
use coopforge::Tensor;
use wasm_bindgen::prelude::*;

/// Eight-mode ring X against a rotated, scaled ring Y, with a model training on them.
#[wasm_bindgen]
pub struct RingDemo {
    cfg: RunConfig,
    dx: DomainDataset,
    dy: DomainDataset,
    ev: Evaluator,
    state: TrainState,
}

/// RGBA pixels plus their dimensions.
#[wasm_bindgen]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }
}

impl Frame {
    /// Converts a `[3, H, W]` image in `[0, 1]` to RGBA bytes.
    pub fn from_image(img: &Tensor<f32>) -> Self {
        let &[_, h, w] = img.shape() else { panic!("expected a [3, H, W] image") };
        let plane = h * w;
        let d = img.data();
        let mut pixels = Vec::with_capacity(4 * plane);
        for i in 0..plane {
            for c in 0..3 {
                pixels.push((d[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            pixels.push(255);
        }
        Self { width: w as u32, height: h as u32, pixels }
    }
}

fn ring_text(rotation: f64, scale: f64, batch: usize, seed: u64) -> String {
    format!(
        "x.kind=ring\nx.n=1000\nx.modes=8\nx.radius=1\nx.mode_std=0.05\nx.seed={}\n\
         y.kind=ring\ny.n=1000\ny.modes=8\ny.radius=1\ny.mode_std=0.05\ny.scale={scale}\ny.rotation={rotation}\ny.seed={}\n\
         eval_n=256\nbatch={batch}\nseed={seed}\n",
        2 * seed + 1,
        2 * seed + 2,
    )
}

impl RingDemo {
    pub fn try_new(rotation: f64, scale: f64, batch: usize, seed: u64) -> coopforge::Result<Self> {
        let cfg = RunConfig::parse(&ring_text(rotation, scale, batch, seed), &[])?;
        let (dx, dy) = cfg.domains.generate()?;
        let ev = Evaluator::new(&cfg.domains, cfg.feature_map, cfg.train.langevin, cfg.train.seed)?;
        let state = TrainState::new(cfg.spec.clone(), cfg.train.seed)?;
        Ok(Self { cfg, dx, dy, ev, state })
    }

    /// Runs `n` iterations; on a failed iteration the model keeps its last good state.
    pub fn step(&mut self, n: u32) -> coopforge::Result<()> {
        for _ in 0..n {
            train_iteration(&mut self.state, &self.dx, &self.dy, &self.cfg.train)?;
        }
        Ok(())
    }

    pub fn metrics(&self) -> coopforge::Result<EvalRow> {
        self.ev.evaluate(&self.state, self.state.t)
    }

    pub fn frame(&self) -> coopforge::Result<Frame> {
        Ok(Frame::from_image(&render_grid(&self.cfg, &self.ev, &self.state)?))
    }
}

fn js(e: coopforge::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl RingDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(rotation: f64, scale: f64, batch: u32, seed: u32) -> Result<RingDemo, JsError> {
        Self::try_new(rotation, scale, batch as usize, seed as u64).map_err(js)
    }

    /// Completed training iterations.
    #[wasm_bindgen(getter)]
    pub fn iteration(&self) -> f64 {
        self.state.t as f64
    }

    pub fn train(&mut self, n: u32) -> Result<(), JsError> {
        self.step(n).map_err(js)
    }

    /// Fréchet distances, cycle error and mode coverage as a short text report.
    pub fn evaluate(&self) -> Result<String, JsError> {
        let r = self.metrics().map_err(js)?;
        let cov = |c: &Option<coopforge::metrics::Coverage>| c.as_ref().map_or(0.0, |c| c.min_fraction());
        Ok(format!(
            "iteration {}\nFD X->Y {:.4} (revised {:.4})\nFD Y->X {:.4} (revised {:.4})\ncycle error {:.4}\nworst mode coverage {:.3} / {:.3}",
            r.iter,
            r.fd_y,
            r.fd_y_revised,
            r.fd_x,
            r.fd_x_revised,
            r.cycle_err,
            cov(&r.coverage_y),
            cov(&r.coverage_x)
        ))
    }

    /// Source | translation | revision scatter panels for both directions.
    pub fn render(&self) -> Result<Frame, JsError> {
        self.frame().map_err(js)
    }
}
