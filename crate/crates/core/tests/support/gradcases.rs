use coopforge::networks::{
    Bound, ConvLayer, Direction, EnergyArch, EnergyModel, InputSpec, Module, PredictorArch, TemporalPredictor,
    Translator, TranslatorArch,
};
use coopforge::objectives::{
    cycle_loss_node, ebm_objective_node, sequence_parts_node, spatiotemporal_loss_node, teach_loss_node,
    temporal_loss_node, LossWeights, SequenceBatch, SequenceBound,
};
use coopforge::tensor::grad_check;
use coopforge::{Graph, NodeId, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

/// Entries with magnitude in [0.2, 1], so kinks at zero stay out of reach.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.2..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_f64(shape, &v).unwrap()
}

fn random_shape(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let rank = rng.gen_range(1..=4);
    (0..rank).map(|_| rng.gen_range(1..=3)).collect()
}

/// Reduces `out` to a scalar with fixed random weights so every output element matters.
fn weighted_sum(g: &mut Graph<f64>, out: NodeId, seed: u64) -> Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, g.shape(out));
    let w = g.constant(w);
    let m = g.mul(out, w)?;
    g.sum(m)
}

fn check(name: &str, params: &[Tensor<f64>], loss: impl Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>) {
    let report = grad_check(params, loss, STEP, TOL).unwrap();
    assert!(report.passed(), "{name}: {report:?}");
}

/// Moves every parameter (including zero-initialized ones) off its initial value.
fn jitter<M: Module<f64>>(m: &mut M, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = m
        .params()
        .iter()
        .map(|p| {
            let noise = random(&mut rng, p.tensor.shape());
            Tensor::from_f64(
                p.tensor.shape(),
                &p.tensor.data().iter().zip(noise.data()).map(|(a, b)| a + scale * b).collect::<Vec<_>>(),
            )
            .unwrap()
        })
        .collect();
    m.load_params(values).unwrap();
}

fn params_of<M: Module<f64>>(m: &M) -> Vec<Tensor<f64>> {
    m.params().iter().map(|p| p.tensor.clone()).collect()
}

pub fn elementwise_ops_on_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..6 {
        let shape = random_shape(&mut rng);
        let a = random(&mut rng, &shape);
        let b = random(&mut rng, &shape);
        check("add", &[a.clone(), b.clone()], |g, p| {
            let o = g.add(p[0], p[1])?;
            weighted_sum(g, o, trial)
        });
        check("sub", &[a.clone(), b.clone()], |g, p| {
            let o = g.sub(p[0], p[1])?;
            weighted_sum(g, o, trial)
        });
        check("mul", &[a.clone(), b.clone()], |g, p| {
            let o = g.mul(p[0], p[1])?;
            weighted_sum(g, o, trial)
        });
        check("scale", std::slice::from_ref(&a), |g, p| {
            let o = g.scale(p[0], -1.7)?;
            weighted_sum(g, o, trial)
        });
        let k = away_from_zero(&mut rng, &shape);
        check("leaky_relu", std::slice::from_ref(&k), |g, p| {
            let o = g.leaky_relu(p[0], 0.2)?;
            weighted_sum(g, o, trial)
        });
        check("sum_abs", &[k], |g, p| g.sum_abs(p[0]));
        check("sum", std::slice::from_ref(&a), |g, p| {
            let w = random(&mut ChaCha8Rng::seed_from_u64(trial), g.shape(p[0]));
            let w = g.constant(w);
            let m = g.mul(p[0], w)?;
            g.sum(m)
        });
        check("mean", std::slice::from_ref(&a), |g, p| {
            let s = g.mul(p[0], p[0])?;
            g.mean(s)
        });
        check("sum_squares", std::slice::from_ref(&a), |g, p| g.sum_squares(p[0]));
        let numel: usize = shape.iter().product();
        check("reshape", &[a], |g, p| {
            let o = g.reshape(p[0], &[numel])?;
            weighted_sum(g, o, trial)
        });
    }
}

pub fn dense_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..4 {
        let (m, k, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let a = random(&mut rng, &[m, k]);
        let b = random(&mut rng, &[k, n]);
        check("matmul", &[a, b], |g, p| {
            let o = g.matmul(p[0], p[1])?;
            weighted_sum(g, o, trial)
        });
        let x = random(&mut rng, &[m, n]);
        let bias = random(&mut rng, &[n]);
        check("add_row_bias", &[x, bias], |g, p| {
            let o = g.add_row_bias(p[0], p[1])?;
            weighted_sum(g, o, trial)
        });
    }
}

pub fn channel_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..4 {
        let shape = [rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3)];
        let c = shape[1];
        let x = random(&mut rng, &shape);
        let bias = random(&mut rng, &[c]);
        let gamma = random(&mut rng, &[c]);
        check("add_channel_bias", &[x.clone(), bias.clone()], |g, p| {
            let o = g.add_channel_bias(p[0], p[1])?;
            weighted_sum(g, o, trial)
        });
        check("channel_affine", &[x.clone(), gamma, bias], |g, p| {
            let o = g.channel_affine(p[0], p[1], p[2])?;
            weighted_sum(g, o, trial)
        });
        let other = random(&mut rng, &[shape[0], 2, shape[2], shape[3]]);
        check("concat_channels", &[x, other], |g, p| {
            let o = g.concat_channels(&[p[0], p[1]])?;
            weighted_sum(g, o, trial)
        });
    }
}

pub fn convolutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (trial, &(stride, pad, k)) in [(1, 0, 3), (1, 1, 3), (2, 1, 3), (2, 2, 5)].iter().enumerate() {
        let x = random(&mut rng, &[2, 2, 6, 5]);
        let w = random(&mut rng, &[3, 2, k, k]);
        check("conv2d", &[x, w], |g, p| {
            let o = g.conv2d(p[0], p[1], stride, pad)?;
            weighted_sum(g, o, trial as u64)
        });
    }
    for (trial, &(stride, pad, op)) in [(1, 0, 0), (2, 1, 1), (2, 0, 0), (2, 1, 0)].iter().enumerate() {
        let x = random(&mut rng, &[1, 2, 3, 4]);
        let w = random(&mut rng, &[2, 3, 3, 3]);
        check("conv_transpose2d", &[x, w], |g, p| {
            let o = g.conv_transpose2d(p[0], p[1], stride, pad, op)?;
            weighted_sum(g, o, trial as u64)
        });
    }
}

fn small_image_energy(seed: u64) -> EnergyModel<f64> {
    EnergyModel::new(
        InputSpec::Images { channels: 1, height: 8, width: 8 },
        EnergyArch::Conv { layers: vec![ConvLayer { channels: 3, kernel: 3, stride: 2 }], head: 2 },
        0.5,
        seed,
    )
    .unwrap()
}

pub fn random_perceptron_parameters() {
    let m = EnergyModel::<f64>::new(InputSpec::Points { dim: 3 }, EnergyArch::Mlp { hidden: vec![5, 4] }, 1.0, 11)
        .unwrap();
    let x = random(&mut ChaCha8Rng::seed_from_u64(5), &[4, 3]);
    check("perceptron", &params_of(&m), |g, ids| {
        let p = Bound::new(ids.to_vec());
        let xn = g.constant(x.clone());
        let f = m.negative_energy(g, &p, xn)?;
        g.sum(f)
    });
}

pub fn energy_wrt_input_and_parameters() {
    let m = small_image_energy(12);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&mut rng, &[1, 1, 8, 8]);
    check("energy wrt x", std::slice::from_ref(&x), |g, ids| {
        let p = m.bind(g, false);
        m.energy_node(g, &p, ids[0])
    });
    check("energy wrt theta", &params_of(&m), |g, ids| {
        let p = Bound::new(ids.to_vec());
        let xn = g.constant(x.clone());
        m.energy_node(g, &p, xn)
    });
}

pub fn ebm_objective_wrt_theta() {
    let m = EnergyModel::<f64>::new(InputSpec::Points { dim: 2 }, EnergyArch::Mlp { hidden: vec![6, 6] }, 1.0, 13)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = random(&mut rng, &[5, 2]);
    let synth = random(&mut rng, &[3, 2]);
    check("ebm objective", &params_of(&m), |g, ids| {
        ebm_objective_node(g, &m, &Bound::new(ids.to_vec()), &data, &synth)
    });
}

fn point_translator(direction: Direction, seed: u64) -> Translator<f64> {
    let mut t =
        Translator::new(InputSpec::Points { dim: 2 }, TranslatorArch::Mlp { width: 5, blocks: 2 }, direction, seed)
            .unwrap();
    jitter(&mut t, seed + 100, 0.3);
    t
}

fn image_translator(direction: Direction, seed: u64) -> Translator<f64> {
    let mut t = Translator::new(
        InputSpec::Images { channels: 1, height: 4, width: 4 },
        TranslatorArch::Conv { width: 2, blocks: 1 },
        direction,
        seed,
    )
    .unwrap();
    jitter(&mut t, seed + 100, 0.3);
    t
}

pub fn teach_loss_through_translators() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = point_translator(Direction::YToX, 21);
    let (src, tgt) = (random(&mut rng, &[3, 2]), random(&mut rng, &[3, 2]));
    check("teach mlp", &params_of(&t), |g, ids| teach_loss_node(g, &t, &Bound::new(ids.to_vec()), &src, &tgt));

    let t = image_translator(Direction::XToY, 22);
    let (src, tgt) = (random(&mut rng, &[2, 1, 4, 4]), random(&mut rng, &[2, 1, 4, 4]));
    check("teach conv", &params_of(&t), |g, ids| teach_loss_node(g, &t, &Bound::new(ids.to_vec()), &src, &tgt));
}

pub fn cycle_loss_through_both_translators() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gxy = point_translator(Direction::XToY, 31);
    let gyx = point_translator(Direction::YToX, 32);
    let (x, y) = (random(&mut rng, &[3, 2]), random(&mut rng, &[2, 2]));
    let n = gxy.params().len();
    let mut params = params_of(&gxy);
    params.extend(params_of(&gyx));
    check("cycle", &params, |g, ids| {
        let (a, b) = (Bound::new(ids[..n].to_vec()), Bound::new(ids[n..].to_vec()));
        cycle_loss_node(g, (&gxy, &a), (&gyx, &b), &x, &y)
    });
}

fn point_predictor(seed: u64) -> TemporalPredictor<f64> {
    let mut r = TemporalPredictor::new(InputSpec::Points { dim: 2 }, PredictorArch::Mlp { width: 4 }, 2, seed).unwrap();
    jitter(&mut r, seed + 100, 0.3);
    r
}

pub fn temporal_and_spatiotemporal_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let clips = random(&mut rng, &[2, 3, 2]);
    let r = point_predictor(41);
    check("temporal", &params_of(&r), |g, ids| temporal_loss_node(g, &r, &Bound::new(ids.to_vec()), &clips));

    let there = point_translator(Direction::XToY, 42);
    let back = point_translator(Direction::YToX, 43);
    let (n1, n2) = (there.params().len(), r.params().len());
    let mut params = params_of(&there);
    params.extend(params_of(&r));
    params.extend(params_of(&back));
    check("spatiotemporal", &params, |g, ids| {
        let a = Bound::new(ids[..n1].to_vec());
        let b = Bound::new(ids[n1..n1 + n2].to_vec());
        let c = Bound::new(ids[n1 + n2..].to_vec());
        spatiotemporal_loss_node(g, (&there, &a), (&r, &b), (&back, &c), &clips)
    });

    let image_r = {
        let mut r = TemporalPredictor::new(
            InputSpec::Images { channels: 1, height: 4, width: 4 },
            PredictorArch::Conv { width: 2 },
            2,
            44,
        )
        .unwrap();
        jitter(&mut r, 144, 0.3);
        r
    };
    let image_clips = random(&mut rng, &[1, 3, 1, 4, 4]);
    check("temporal conv", &params_of(&image_r), |g, ids| {
        temporal_loss_node(g, &image_r, &Bound::new(ids.to_vec()), &image_clips)
    });
}

pub fn full_sequence_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gen_x = point_translator(Direction::YToX, 51);
    let gen_y = point_translator(Direction::XToY, 52);
    let pred_x = point_predictor(53);
    let pred_y = point_predictor(54);
    let clips_x = random(&mut rng, &[1, 3, 2]);
    let clips_y = random(&mut rng, &[2, 3, 2]);
    let (src_x, tgt_x) = (random(&mut rng, &[3, 2]), random(&mut rng, &[3, 2]));
    let (src_y, tgt_y) = (random(&mut rng, &[2, 2]), random(&mut rng, &[2, 2]));
    let batch = SequenceBatch {
        gen_x: &gen_x,
        gen_y: &gen_y,
        pred_x: &pred_x,
        pred_y: &pred_y,
        clips_x: &clips_x,
        clips_y: &clips_y,
        teach_x: (&src_x, &tgt_x),
        teach_y: (&src_y, &tgt_y),
    };
    let sizes = [gen_x.params().len(), gen_y.params().len(), pred_x.params().len(), pred_y.params().len()];
    let mut params = params_of(&gen_x);
    params.extend(params_of(&gen_y));
    params.extend(params_of(&pred_x));
    params.extend(params_of(&pred_y));
    let w = LossWeights { lambda_cyc: 9.0, lambda1: 9.0, lambda2: 9.0 };
    check("sequence objective", &params, |g, ids| {
        let mut at = 0;
        let mut take = |n: usize| {
            let b = Bound::new(ids[at..at + n].to_vec());
            at += n;
            b
        };
        let p = SequenceBound { gen_x: take(sizes[0]), gen_y: take(sizes[1]), pred_x: take(sizes[2]), pred_y: take(sizes[3]) };
        let parts = sequence_parts_node(g, &batch, &p)?;
        parts.combine_node(g, &w)
    });
}


/// Every case, for harnesses that run them outside libtest.
pub const CASES: &[(&str, fn())] = &[
    ("elementwise_ops_on_random_shapes", elementwise_ops_on_random_shapes),
    ("dense_ops", dense_ops),
    ("channel_ops", channel_ops),
    ("convolutions", convolutions),
    ("random_perceptron_parameters", random_perceptron_parameters),
    ("energy_wrt_input_and_parameters", energy_wrt_input_and_parameters),
    ("ebm_objective_wrt_theta", ebm_objective_wrt_theta),
    ("teach_loss_through_translators", teach_loss_through_translators),
    ("cycle_loss_through_both_translators", cycle_loss_through_both_translators),
    ("temporal_and_spatiotemporal_losses", temporal_and_spatiotemporal_losses),
    ("full_sequence_objective", full_sequence_objective),
];
