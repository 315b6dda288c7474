use coopforge::domains::{
    centroid, decode_ppm, dot_trajectories, encode_ppm, gen_moving_dot, gen_ring, gen_shapes, Appearance,
    MotionStyle, Palette, RingParams, ShapeKind,
};
use coopforge::metrics::{frechet_distance, psnr, FeatureMap, COVARIANCE_RIDGE};
use coopforge::tensor::ctns;
use coopforge::trainer::{adam_step, AdamConfig};
use coopforge::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

#[test]
fn matmul_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (m, k, n) = (7, 5, 9);
    let a = random(&mut rng, &[m, k]);
    let b = random(&mut rng, &[k, n]);
    let mut g = Graph::new();
    let (an, bn) = (g.constant(a.clone()), g.constant(b.clone()));
    let c = g.matmul(an, bn).unwrap();
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a.data()[i * k + t] * b.data()[t * n + j];
            }
            assert!((g.value(c).data()[i * n + j] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn conv2d_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, ci, h, w, co, k) = (2, 3, 7, 6, 4, 3);
    for &(stride, pad) in &[(1, 0), (1, 1), (2, 1)] {
        let x = random(&mut rng, &[n, ci, h, w]);
        let f = random(&mut rng, &[co, ci, k, k]);
        let mut g = Graph::new();
        let (xn, fnode) = (g.constant(x.clone()), g.constant(f.clone()));
        let out = g.conv2d(xn, fnode, stride, pad).unwrap();
        let (oh, ow) = ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1);
        assert_eq!(g.shape(out), &[n, co, oh, ow]);
        for b in 0..n {
            for o in 0..co {
                for r in 0..oh {
                    for c in 0..ow {
                        let mut s = 0.0;
                        for i in 0..ci {
                            for u in 0..k {
                                for v in 0..k {
                                    let (y, xx) = ((r * stride + u) as isize - pad as isize, (c * stride + v) as isize - pad as isize);
                                    if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                        continue;
                                    }
                                    s += x.data()[((b * ci + i) * h + y as usize) * w + xx as usize]
                                        * f.data()[((o * ci + i) * k + u) * k + v];
                                }
                            }
                        }
                        let got = g.value(out).data()[((b * co + o) * oh + r) * ow + c];
                        assert!((got - s).abs() < 1e-12, "stride {stride} pad {pad}");
                    }
                }
            }
        }
    }
}

#[test]
fn adam_three_steps_by_hand() {
    let cfg = AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    let grads = [[0.3, -1.2], [-0.5, 0.4], [0.1, 2.0]];
    let mut p = [0.5f64, -1.0];
    let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
    let mut expected = p;
    for (step, g) in grads.iter().enumerate() {
        let t = step + 1;
        adam_step(&mut p, g, &mut m, &mut v, &cfg, t as u64).unwrap();
        for i in 0..2 {
            // Moments as explicit weighted sums of the gradient history.
            let m_t: f64 = (0..t).map(|s| 0.1 * 0.9f64.powi((t - 1 - s) as i32) * grads[s][i]).sum();
            let v_t: f64 = (0..t).map(|s| 0.001 * 0.999f64.powi((t - 1 - s) as i32) * grads[s][i] * grads[s][i]).sum();
            let m_hat = m_t / (1.0 - 0.9f64.powi(t as i32));
            let v_hat = v_t / (1.0 - 0.999f64.powi(t as i32));
            expected[i] -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p[i] - expected[i]).abs() < 1e-10, "step {t} coord {i}: {} vs {}", p[i], expected[i]);
        }
    }
}

#[test]
fn frechet_diagonal_closed_form() {
    // Four points (±a, 0), (0, ±b) shifted by mu: mean mu, covariance diag(2a²/3, 2b²/3).
    let cloud = |a: f64, b: f64, mu: [f64; 2]| {
        let pts = [[a, 0.0], [-a, 0.0], [0.0, b], [0.0, -b]];
        let v: Vec<f64> = pts.iter().flat_map(|p| [p[0] + mu[0], p[1] + mu[1]]).collect();
        Tensor::<f64>::from_f64(&[4, 2], &v).unwrap()
    };
    let (a1, b1, mu1) = (1.0, 2.0, [0.5, -1.0]);
    let (a2, b2, mu2) = (3.0, 0.5, [2.0, 1.0]);
    let got = frechet_distance(&cloud(a1, b1, mu1), &cloud(a2, b2, mu2), &FeatureMap::Identity).unwrap();
    let r = COVARIANCE_RIDGE;
    let var = |s: f64| 2.0 * s * s / 3.0 + r;
    let expected = (mu1[0] - mu2[0]).powi(2)
        + (mu1[1] - mu2[1]).powi(2)
        + (var(a1).sqrt() - var(a2).sqrt()).powi(2)
        + (var(b1).sqrt() - var(b2).sqrt()).powi(2);
    assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
}

#[test]
fn frechet_one_dimensional_point_masses() {
    let a = Tensor::<f64>::from_f64(&[2, 1], &[-1.0, 1.0]).unwrap();
    let b = Tensor::<f64>::from_f64(&[2, 1], &[0.0, 2.0]).unwrap();
    let d = frechet_distance(&a, &b, &FeatureMap::Identity).unwrap();
    assert!((d - 1.0).abs() < 1e-8, "{d}");
}

#[test]
fn psnr_twenty_decibels() {
    let a = Tensor::<f64>::from_f64(&[4], &[0.0; 4]).unwrap();
    let b = Tensor::<f64>::from_f64(&[4], &[0.1; 4]).unwrap();
    assert_eq!(psnr(&a, &b, 1.0).unwrap(), 20.0);
}

#[test]
fn ring_mode_histogram() {
    let p = RingParams { modes: 8, radius: 1.0, mode_std: 0.05, rotation: 0.3, scale: 2.0 };
    let n = 8000;
    let pts = gen_ring(n, &p, 3).unwrap();
    let mut counts = [0usize; 8];
    for q in pts.data().chunks(2) {
        // Nearest of the eight centers at angles rotation + 2πk/8 on radius radius·scale.
        let best = (0..8)
            .min_by(|&i, &j| {
                let d = |k: usize| {
                    let ang = 0.3 + std::f64::consts::TAU * k as f64 / 8.0;
                    (q[0] - 2.0 * ang.cos()).powi(2) + (q[1] - 2.0 * ang.sin()).powi(2)
                };
                d(i).total_cmp(&d(j))
            })
            .unwrap();
        counts[best] += 1;
    }
    for c in counts {
        assert!((c as f64 - n as f64 / 8.0).abs() <= 0.2 * n as f64 / 8.0, "{counts:?}");
    }
}

#[test]
fn shape_areas_match_expectation() {
    let side = 16;
    for kind in [ShapeKind::Square, ShapeKind::Disk] {
        let n = 1500;
        let imgs = gen_shapes(n, side, kind, Palette::Bright, 4).unwrap();
        let (bg, fg) = (0.1, 0.9);
        let area: f64 = imgs.data().iter().map(|v| (v - bg) / (fg - bg)).sum::<f64>() / n as f64;
        let expected = match kind {
            ShapeKind::Square => (4.0f64 * 4.0 + 4.0 * 8.0 + 8.0 * 8.0) / 3.0,
            ShapeKind::Disk => std::f64::consts::PI * (2.0f64 * 2.0 + 2.0 * 4.0 + 4.0 * 4.0) / 3.0,
        };
        assert!((area - expected).abs() <= 0.1 * expected, "{kind:?}: {area} vs {expected}");
    }
}

#[test]
fn moving_dot_centroids_are_subpixel() {
    let (n, len, side) = (6, 10, 20);
    for appearance in [Appearance::Box, Appearance::Blob] {
        let trajs = dot_trajectories(n, len, side, MotionStyle::Bounce, 1.5, 5).unwrap();
        let data = gen_moving_dot(n, len, side, appearance, MotionStyle::Bounce, 1.5, 5).unwrap();
        let plane = side * side;
        for (s, traj) in trajs.iter().enumerate() {
            for (f, c) in traj.iter().enumerate() {
                let at = (s * len + f) * plane;
                let got = centroid(&data.data()[at..at + plane], side).unwrap();
                assert!((got[0] - c[0]).abs() < 0.5 && (got[1] - c[1]).abs() < 0.5, "{appearance:?} {got:?} {c:?}");
            }
        }
    }
}

#[test]
fn ctns_and_ppm_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t64 = random(&mut rng, &[2, 3, 4]);
    let back: Tensor<f64> = ctns::decode(&ctns::encode(&t64)).unwrap();
    assert!(back.bits_eq(&t64));
    let t32: Tensor<f32> = t64.cast();
    let back: Tensor<f32> = ctns::decode(&ctns::encode(&t32)).unwrap();
    assert!(back.bits_eq(&t32));

    // Values on the 1/255 grid survive the 8-bit encoding exactly.
    for c in [1usize, 3] {
        let v: Vec<f32> = (0..c * 5 * 4).map(|i| ((i * 37) % 256) as f32 / 255.0).collect();
        let img = Tensor::new(vec![c, 5, 4], v).unwrap();
        let bytes = encode_ppm(&img).unwrap();
        let decoded = decode_ppm(&bytes).unwrap();
        assert!(decoded.bits_eq(&img));
        assert_eq!(encode_ppm(&decoded).unwrap(), bytes);
    }
}
