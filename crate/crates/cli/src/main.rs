mod io;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use coopforge::domains::{parse_key_values, save_ppm, DataKind, DomainPair};
use coopforge::langevin::LangevinConfig;
use coopforge::networks::{Direction, InputSpec};
use coopforge::tensor::ctns;
use coopforge::trainer::{
    default_step_size, load_checkpoint, render_grid, train, translate_and_revise, translate_sequence, EvalRow,
    Evaluator, RunConfig, TrainState, METRICS_HEADER,
};
use coopforge::Tensor;

#[derive(Parser)]
#[command(name = "coopforge", version, about = "Unpaired two-domain translation with cooperative energy-based models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate both datasets of a descriptor as CTNS files.
    Gen {
        descriptor: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `--key value` pairs overriding descriptor keys.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Train from a config file; writes metrics.csv, checkpoints and sample grids.
    Train {
        config: PathBuf,
        /// Continue from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// `--key value` pairs overriding config keys (dashes read as underscores).
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Translate a CTNS/PPM file, or a directory of frames as one sequence.
    Translate {
        checkpoint: PathBuf,
        input: PathBuf,
        #[arg(long, default_value = "x2y")]
        direction: Direction,
        /// Output file, or output directory for a sequence directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        langevin_steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        noise_scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a dataset descriptor (defaults to its training descriptor).
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        descriptor: Option<PathBuf>,
        /// CSV path; defaults to `eval.csv` inside the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a sample grid and revised translations of the held-out sets.
    Sample {
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { descriptor, out, overrides } => gen(&descriptor, &out, &parse_overrides(&overrides)?),
        Cmd::Train { config, resume, overrides } => cmd_train(&config, resume.as_deref(), &parse_overrides(&overrides)?),
        Cmd::Translate { checkpoint, input, direction, out, langevin_steps, step_size, noise_scale, seed } => {
            let ckpt = Loaded::open(&checkpoint)?;
            let mut lv = ckpt.langevin();
            lv.steps = langevin_steps.unwrap_or(lv.steps);
            lv.step_size = step_size.unwrap_or(lv.step_size);
            lv.noise_scale = noise_scale.unwrap_or(lv.noise_scale);
            if let Some(s) = seed {
                lv.seed = s;
            }
            lv.validate()?;
            cmd_translate(&ckpt.state, &input, direction, &out, &lv)
        }
        Cmd::Eval { checkpoint, descriptor, out } => cmd_eval(&checkpoint, descriptor.as_deref(), out),
        Cmd::Sample { checkpoint, out, n, seed } => cmd_sample(&checkpoint, &out, n, seed),
    }
}

/// Reads `--key value` / `--key=value` pairs; dashes in keys become underscores.
fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(key) = a.strip_prefix("--") else {
            bail!("unexpected argument `{a}` (overrides are `--key value`)");
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().with_context(|| format!("`--{key}` needs a value"))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Worker threads allowed by `COOPFORGE_THREADS` (1 when unset).
fn thread_cap() -> Result<usize> {
    match std::env::var("COOPFORGE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("COOPFORGE_THREADS must be a positive integer, got `{v}`"),
        },
        Err(_) => Ok(1),
    }
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn gen(descriptor: &Path, out: &Path, overrides: &[(String, String)]) -> Result<()> {
    let mut map = parse_key_values(&read_text(descriptor, "descriptor")?)?;
    map.extend(overrides.iter().cloned());
    // A full run config works as a descriptor too.
    map.retain(|k, _| k.starts_with("x.") || k.starts_with("y.") || k == "eval_n" || k == "paired");
    let pair = DomainPair::from_map(&map)?;
    let (x, y) = pair.generate()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    x.save(out, "x")?;
    y.save(out, "y")?;
    println!("wrote {} X and {} Y examples to {}", x.len(), y.len(), out.display());
    Ok(())
}

fn cmd_train(config: &Path, resume: Option<&Path>, overrides: &[(String, String)]) -> Result<()> {
    let mut cfg = RunConfig::parse(&read_text(config, "config")?, overrides)?;
    if cfg.out.is_none() {
        bail!("no output directory: set `out` in the config or pass --out DIR");
    }
    cfg.train.threads = cfg.train.threads.min(thread_cap()?);
    let state = match resume {
        Some(dir) => Some(load_checkpoint(dir)?.state),
        None => None,
    };
    let outcome = train(&cfg, state, |r| {
        eprintln!(
            "iter {:>6}  fd_x {:.4}  fd_y {:.4}  cycle {:.4}  energy {:.3} -> {:.3}",
            r.iter, r.fd_x, r.fd_y, r.cycle_err, r.energy_init, r.energy_revised
        )
    })?;
    println!("trained to iteration {} in {}", outcome.state.t, cfg.out.unwrap().display());
    Ok(())
}

/// A checkpoint plus the run config saved beside it, when present.
struct Loaded {
    state: TrainState,
    cfg: Option<RunConfig>,
}

impl Loaded {
    fn open(dir: &Path) -> Result<Self> {
        let state = load_checkpoint(dir)?.state;
        let path = dir.join("config.txt");
        let cfg = if path.exists() { Some(RunConfig::parse(&read_text(&path, "config")?, &[])?) } else { None };
        Ok(Self { state, cfg })
    }

    fn kind(&self) -> DataKind {
        match (self.state.spec.input, &self.state.spec.predictor) {
            (_, Some(_)) => DataKind::Sequences,
            (InputSpec::Points { .. }, None) => DataKind::Points,
            (InputSpec::Images { .. }, None) => DataKind::Images,
        }
    }

    fn langevin(&self) -> LangevinConfig {
        match &self.cfg {
            Some(c) => c.train.langevin.with_seed(c.train.seed),
            None => LangevinConfig { steps: 15, step_size: default_step_size(self.kind()), noise_scale: 1.0, seed: 0 },
        }
    }
}

fn cmd_translate(state: &TrainState, input: &Path, dir: Direction, out: &Path, lv: &LangevinConfig) -> Result<()> {
    let (gen, ebm) = match dir {
        Direction::XToY => (&state.gen_y, &state.ebm_y),
        Direction::YToX => (&state.gen_x, &state.ebm_x),
    };
    let item = state.spec.input.item_shape();
    if input.is_dir() {
        let files = io::frame_files(input)?;
        let frames = files
            .iter()
            .map(|f| {
                let t = io::read_tensor(f)?;
                if t.shape() != item.as_slice() {
                    bail!("{}: shape {:?} does not match the checkpoint's {:?}", f.display(), t.shape(), item);
                }
                Ok(t.reshape(&[&[1][..], &item[..]].concat())?)
            })
            .collect::<Result<Vec<_>>>()?;
        let revised = translate_sequence(&Tensor::stack_batches(&frames)?, gen, ebm, lv)?;
        fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
        for (i, f) in files.iter().enumerate() {
            let frame = revised.slice_batch(i).reshape(&item)?;
            io::write_tensor(&out.join(f.file_name().unwrap()), &frame)?;
        }
        println!("translated {} frames into {}", files.len(), out.display());
        return Ok(());
    }

    let t = io::read_tensor(input)?;
    let shape = t.shape().to_vec();
    let frames = if shape == item {
        t.reshape(&[&[1][..], &item[..]].concat())?
    } else if shape.len() == item.len() + 1 && shape[1..] == item[..] {
        t
    } else if shape.len() == item.len() + 2 && shape[2..] == item[..] {
        t.reshape(&[&[shape[0] * shape[1]][..], &item[..]].concat())?
    } else {
        bail!("{}: shape {shape:?} does not fit the checkpoint's example shape {item:?}", input.display());
    };
    let revised = translate_sequence(&frames, gen, ebm, lv)?;
    io::write_tensor(out, &revised.reshape(&shape)?)?;
    println!("translated {} into {}", input.display(), out.display());
    Ok(())
}

fn eval_config(dir: &Path, descriptor: Option<&Path>) -> Result<RunConfig> {
    let saved = dir.join("config.txt");
    let base = if saved.exists() { Some(read_text(&saved, "config")?) } else { None };
    let desc = match descriptor {
        Some(p) => {
            let map = parse_key_values(&read_text(p, "descriptor")?)?;
            DomainPair::from_map(&map).with_context(|| format!("bad descriptor {}", p.display()))?;
            Some(map)
        }
        None => None,
    };
    Ok(match (base, desc) {
        (Some(text), Some(map)) => {
            // Replace the saved domains wholesale, keep the rest of the run config.
            let mut keys: BTreeMap<String, String> = parse_key_values(&text)?;
            keys.retain(|k, _| !(k.starts_with("x.") || k.starts_with("y.") || k == "eval_n" || k == "paired"));
            keys.extend(map);
            RunConfig::from_map(&keys)?
        }
        (Some(text), None) => RunConfig::parse(&text, &[])?,
        (None, Some(map)) => RunConfig::from_map(&map)?,
        (None, None) => bail!("{} has no config.txt; pass --descriptor", dir.display()),
    })
}

fn cmd_eval(dir: &Path, descriptor: Option<&Path>, out: Option<PathBuf>) -> Result<()> {
    let state = load_checkpoint(dir)?.state;
    let cfg = eval_config(dir, descriptor)?;
    if cfg.domains.frame_spec() != state.spec.input {
        bail!("descriptor examples {:?} do not match the checkpoint's {:?}", cfg.domains.frame_spec(), state.spec.input);
    }
    let ev = Evaluator::new(&cfg.domains, cfg.feature_map, cfg.train.langevin, cfg.train.seed)?;
    let row = ev.evaluate(&state, state.t)?;
    let text = format!("{}\n{}\n", eval_header(), eval_csv(&row));
    print!("{text}");
    let out = out.unwrap_or_else(|| dir.join("eval.csv"));
    fs::write(&out, text).with_context(|| format!("cannot write {}", out.display()))?;
    Ok(())
}

fn eval_header() -> String {
    format!("{METRICS_HEADER},fd_x_revised,fd_y_revised,coverage_x_min,coverage_y_min,psnr_x,psnr_y")
}

fn eval_csv(r: &EvalRow) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{}",
        r.csv(),
        r.fd_x_revised,
        r.fd_y_revised,
        opt(r.coverage_x.as_ref().map(|c| c.min_fraction())),
        opt(r.coverage_y.as_ref().map(|c| c.min_fraction())),
        opt(r.psnr.map(|p| p.0)),
        opt(r.psnr.map(|p| p.1)),
    )
}

fn cmd_sample(dir: &Path, out: &Path, n: usize, seed: Option<u64>) -> Result<()> {
    let ckpt = Loaded::open(dir)?;
    let Some(cfg) = &ckpt.cfg else {
        bail!("{} has no config.txt to draw held-out sets from", dir.display());
    };
    let ev = Evaluator::new(&cfg.domains, cfg.feature_map, cfg.train.langevin, cfg.train.seed)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    save_ppm(&render_grid(cfg, &ev, &ckpt.state)?, out.join("grid.ppm"))?;
    let lv = cfg.train.langevin.with_seed(seed.unwrap_or(cfg.train.seed));
    let s = &ckpt.state;
    for (name, src, gen, ebm) in [("x", &ev.y, &s.gen_x, &s.ebm_x), ("y", &ev.x, &s.gen_y, &s.ebm_y)] {
        let idx: Vec<usize> = (0..n.clamp(1, src.batch_len())).collect();
        let (_, revised) = translate_and_revise(gen, ebm, &src.gather(&idx), &lv)?;
        ctns::save(&revised, out.join(format!("{name}.ctns")))?;
    }
    println!("wrote grid.ppm, x.ctns and y.ctns to {}", out.display());
    Ok(())
}
