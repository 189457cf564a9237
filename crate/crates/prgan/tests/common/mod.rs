//! Shared finite-difference gradient checking against independent f64
//! reference implementations.

#![allow(dead_code)]

pub mod fixtures;
pub mod oracles;

use std::sync::Arc;

use prgan::autodiff::{ConvGeometry, Graph, RunningStats, Var};
use prgan::inference::EncoderParams;
use prgan::networks::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, LEAKY_SLOPE};
use prgan::projection::{rotation_table, Projector, Viewpoint};
use prgan::NdValue;
use rand::seq::index::sample;
use rand::Rng;

pub const FD_STEP: f64 = 1e-3;
pub const GRAD_TOL: f64 = 1e-3;
const BN_EPS: f64 = 1e-5;
const EPS_LOG: f64 = 1e-7;

/// Gradients whose norm is below this count as zero (biases feeding batch norm).
pub const ZERO_NORM: f64 = 1e-6;
/// Minimum |pre-ReLU| for points used in network gradient checks.
pub const KINK_MARGIN: f64 = 2e-2;
/// Fraction of the largest gradient norm in a check below which a gradient counts as zero.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖, ZERO_NORM)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(ZERO_NORM)
}

fn to64(x: &NdValue) -> Vec<f64> {
    x.data().iter().map(|&v| v as f64).collect()
}

/// Gradient check of a graph-built function against an f64 reference.
///
/// `build` maps parameter leaves to an output; `reference` computes the same
/// output in f64. A random linear functional of the output is differentiated
/// analytically and by central differences of the reference; at most
/// `max_coords` coordinates per input are probed. Returns the worst per-input
/// norm-wise relative error. Also asserts the forward values agree.
pub fn gradcheck(
    name: &str,
    inputs: &[NdValue],
    max_coords: usize,
    mut build: impl FnMut(&mut Graph, &[Var]) -> Var,
    reference: impl Fn(&[Vec<f64>]) -> Vec<f64>,
) -> f64 {
    let mut rng = prgan::seeded_rng(0x6ead);
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let y = build(&mut g, &vars);
    let yv = g.value(y).clone();
    let w = NdValue::randn(yv.shape(), 1.0, &mut rng);
    let loss = g.weighted_sum(y, w.clone()).unwrap();
    g.backward(loss).unwrap();

    let base: Vec<Vec<f64>> = inputs.iter().map(to64).collect();
    let want = reference(&base);
    assert_eq!(want.len(), yv.len(), "{name}: reference output length");
    let fwd = rel_err(&to64(&yv), &want);
    assert!(fwd < 1e-5, "{name}: forward differs from reference (rel {fwd:e})");

    let w64 = to64(&w);
    let functional = |xs: &[Vec<f64>]| -> f64 { reference(xs).iter().zip(&w64).map(|(a, b)| a * b).sum() };
    let mut checks = Vec::with_capacity(vars.len());
    for (i, &v) in vars.iter().enumerate() {
        let analytic = to64(&g.grad_or_zeros(v));
        let n = analytic.len();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, max_coords).into_vec();
            c.sort_unstable();
            c
        };
        let mut xs = base.clone();
        let mut fd = Vec::with_capacity(coords.len());
        for &c in &coords {
            let x0 = xs[i][c];
            xs[i][c] = x0 + FD_STEP;
            let plus = functional(&xs);
            xs[i][c] = x0 - FD_STEP;
            let minus = functional(&xs);
            xs[i][c] = x0;
            fd.push((plus - minus) / (2.0 * FD_STEP));
        }
        let picked: Vec<f64> = coords.iter().map(|&c| analytic[c]).collect();
        checks.push((i, picked, fd));
    }
    // Inputs whose gradient vanishes (a bias feeding batch norm) are compared
    // against the scale of the largest gradient instead of their own f32 noise.
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = checks.iter().map(|(_, a, f)| norm(a).max(norm(f))).fold(0.0, f64::max);
    let floor = (scale * SCALE_FLOOR).max(ZERO_NORM);
    let mut worst = 0.0f64;
    for (i, a, f) in &checks {
        let diff: f64 = a.iter().zip(f).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let e = diff / norm(a).max(norm(f)).max(floor);
        if std::env::var("GRADCHECK_VERBOSE").is_ok() {
            eprintln!("  {name}[{i}] err {e:.3e} |analytic| {:.3e} |fd| {:.3e}", norm(a), norm(f));
        }
        worst = worst.max(e);
    }
    worst
}

// ---------------------------------------------------------------------------
// f64 reference operations

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn lrelu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// `y[s][o] = b[o] + Σ_i x[s][i]·w[o][i]`.
pub fn linear(x: &[f64], n_in: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_out = b.len();
    let batch = x.len() / n_in;
    let mut y = Vec::with_capacity(batch * n_out);
    for s in 0..batch {
        let xs = &x[s * n_in..(s + 1) * n_in];
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            y.push(b[o] + xs.iter().zip(row).map(|(a, c)| a * c).sum::<f64>());
        }
    }
    y
}

fn unflatten(mut flat: usize, extents: &[usize]) -> Vec<usize> {
    let mut out = vec![0; extents.len()];
    for a in (0..extents.len()).rev() {
        out[a] = flat % extents[a];
        flat /= extents[a];
    }
    out
}

/// Fine-grid flat index read by kernel tap `tap` at coarse position `pos`.
fn fine_index(pos: &[usize], tap: &[usize], fine: &[usize], kernel: usize) -> Option<usize> {
    let pad = (kernel - 1) / 2;
    let mut flat = 0;
    for a in 0..fine.len() {
        let c = (2 * pos[a] + tap[a]) as isize - pad as isize;
        if c < 0 || c >= fine[a] as isize {
            return None;
        }
        flat = flat * fine[a] + c as usize;
    }
    Some(flat)
}

/// Stride-2 cross-correlation; `x` is `[N, C_in, fine…]`, `w` is `[C_out, C_in, k…]`.
pub fn conv(x: &[f64], c_in: usize, fine: &[usize], w: &[f64], b: &[f64], kernel: usize) -> Vec<f64> {
    let c_out = b.len();
    let coarse: Vec<usize> = fine.iter().map(|e| e / 2).collect();
    let (f, p) = (fine.iter().product::<usize>(), coarse.iter().product::<usize>());
    let taps = kernel.pow(fine.len() as u32);
    let n = x.len() / (c_in * f);
    let mut y = vec![0.0; n * c_out * p];
    for s in 0..n {
        for co in 0..c_out {
            for o in 0..p {
                let pos = unflatten(o, &coarse);
                let mut acc = b[co];
                for ci in 0..c_in {
                    for t in 0..taps {
                        let tap = unflatten(t, &vec![kernel; fine.len()]);
                        if let Some(fi) = fine_index(&pos, &tap, fine, kernel) {
                            acc += w[(co * c_in + ci) * taps + t] * x[(s * c_in + ci) * f + fi];
                        }
                    }
                }
                y[(s * c_out + co) * p + o] = acc;
            }
        }
    }
    y
}

/// Stride-2 transposed convolution; `x` is `[N, C_in, coarse…]`, `w` is `[C_in, C_out, k…]`.
pub fn conv_transpose(x: &[f64], c_in: usize, coarse: &[usize], w: &[f64], b: &[f64], kernel: usize) -> Vec<f64> {
    let c_out = b.len();
    let fine: Vec<usize> = coarse.iter().map(|e| e * 2).collect();
    let (f, p) = (fine.iter().product::<usize>(), coarse.iter().product::<usize>());
    let taps = kernel.pow(fine.len() as u32);
    let n = x.len() / (c_in * p);
    let mut y = vec![0.0; n * c_out * f];
    for s in 0..n {
        for co in 0..c_out {
            y[(s * c_out + co) * f..(s * c_out + co + 1) * f].fill(b[co]);
        }
        for ci in 0..c_in {
            for o in 0..p {
                let pos = unflatten(o, coarse);
                let xv = x[(s * c_in + ci) * p + o];
                for t in 0..taps {
                    let tap = unflatten(t, &vec![kernel; fine.len()]);
                    if let Some(fi) = fine_index(&pos, &tap, &fine, kernel) {
                        for co in 0..c_out {
                            y[(s * c_out + co) * f + fi] += w[(ci * c_out + co) * taps + t] * xv;
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn depth_project(x: &[f64], depth: usize) -> Vec<f64> {
    x.chunks(depth).map(|c| 1.0 - (-c.iter().sum::<f64>()).exp()).collect()
}

pub fn gather(x: &[f64], index: &[u32]) -> Vec<f64> {
    index
        .iter()
        .map(|&i| if i == u32::MAX { 0.0 } else { x[i as usize] })
        .collect()
}

pub fn bce(p: &[f64], t: &[f64]) -> f64 {
    p.iter()
        .zip(t)
        .map(|(&p, &t)| {
            let q = p.clamp(EPS_LOG, 1.0 - EPS_LOG);
            if t == 1.0 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum::<f64>()
        / p.len() as f64
}

// ---------------------------------------------------------------------------
// The suite

fn away_from_zero<R: Rng>(shape: &[usize], rng: &mut R) -> NdValue {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f32 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    NdValue::new(shape.to_vec(), data).unwrap()
}

/// Train-mode batch normalization of `[N, C, inner]` with biased variance.
fn bn_ref(x: &[f64], n: usize, channels: usize, gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let inner = x.len() / (n * channels);
    let mut y = vec![0.0; x.len()];
    for c in 0..channels {
        let idx: Vec<usize> = (0..n).flat_map(|s| ((s * channels + c) * inner)..((s * channels + c + 1) * inner)).collect();
        let m = idx.len() as f64;
        let mean = idx.iter().map(|&i| x[i]).sum::<f64>() / m;
        let var = idx.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / m;
        let inv = 1.0 / (var + BN_EPS).sqrt();
        for &i in &idx {
            y[i] = gamma[c] * (x[i] - mean) * inv + beta[c];
        }
    }
    y
}

/// Mini voxel generator: code 8, grid 8³.
pub fn mini_generator() -> Generator {
    let cfg = GeneratorConfig {
        code_dim: 8,
        extent: 8,
        channels: [4, 3, 2],
        kernel: 5,
        rank: 3,
        batch_norm: true,
    };
    let mut g = Generator::new(cfg, "gen", &mut prgan::seeded_rng(21)).unwrap();
    // Wider weights than the default init so every path carries signal.
    let mut rng = prgan::seeded_rng(22);
    for v in g.params.values_mut() {
        let shape = v.shape().to_vec();
        if shape.len() > 1 {
            *v = NdValue::randn(&shape, 0.3, &mut rng);
        } else {
            *v = NdValue::uniform(&shape, 0.5, 1.5, &mut rng);
        }
    }
    g
}

fn generator_ref(cfg: &GeneratorConfig, n: usize, xs: &[Vec<f64>]) -> Vec<f64> {
    generator_ref_margin(cfg, n, xs).0
}

/// Reference forward plus the smallest |pre-ReLU| activation seen.
fn generator_ref_margin(cfg: &GeneratorConfig, n: usize, xs: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let mut margin = f64::MAX;
    let [c0, c1, c2] = cfg.channels;
    let k = cfg.kernel;
    let base = cfg.extent / 8;
    let mut h = linear(&xs[0], cfg.code_dim, &xs[1], &xs[2]);
    let mut extent = base;
    let mut p = 3;
    for cin in [c0, c1, c2] {
        h = bn_ref(&h, n, cin, &xs[p], &xs[p + 1]);
        margin = h.iter().fold(margin, |m, v| m.min(v.abs()));
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        h = conv_transpose(&h, cin, &[extent; 3], &xs[p + 2], &xs[p + 3], k);
        extent *= 2;
        p += 4;
    }
    (h.into_iter().map(sigmoid).collect(), margin)
}

pub fn mini_discriminator() -> Discriminator {
    let cfg = DiscriminatorConfig {
        extent: 8,
        channels: [2, 3, 4],
        kernel: 5,
        rank: 2,
        batch_norm: true,
    };
    let mut d = Discriminator::new(cfg, "disc", &mut prgan::seeded_rng(31)).unwrap();
    let mut rng = prgan::seeded_rng(32);
    for v in d.params.values_mut() {
        let shape = v.shape().to_vec();
        if shape.len() > 1 {
            *v = NdValue::randn(&shape, 0.4, &mut rng);
        } else {
            *v = NdValue::uniform(&shape, 0.5, 1.5, &mut rng);
        }
    }
    d
}

fn discriminator_ref(cfg: &DiscriminatorConfig, n: usize, xs: &[Vec<f64>]) -> Vec<f64> {
    let [c0, c1, c2] = cfg.channels;
    let k = cfg.kernel;
    let slope = LEAKY_SLOPE as f64;
    let mut h = xs[0].clone();
    let mut extent = cfg.extent;
    let mut p = 1;
    for (i, &(cin, cout)) in [(1, c0), (c0, c1), (c1, c2)].iter().enumerate() {
        h = conv(&h, cin, &[extent; 2], &xs[p], &xs[p + 1], k);
        p += 2;
        if i > 0 {
            h = bn_ref(&h, n, cout, &xs[p], &xs[p + 1]);
            p += 2;
        }
        h.iter_mut().for_each(|v| *v = lrelu(*v, slope));
        extent /= 2;
    }
    let flat = h.len() / n;
    linear(&h, flat, &xs[p], &xs[p + 1]).into_iter().map(sigmoid).collect()
}

fn encoder_ref(xs: &[Vec<f64>]) -> Vec<f64> {
    let slope = LEAKY_SLOPE as f64;
    let mut h = xs[0].clone();
    for layer in 0..3 {
        let (w, b) = (&xs[1 + 2 * layer], &xs[2 + 2 * layer]);
        let n_in = w.len() / b.len();
        h = linear(&h, n_in, w, b);
        if layer < 2 {
            h.iter_mut().for_each(|v| *v = lrelu(*v, slope));
        }
    }
    h
}

fn with_params(first: NdValue, params: &[NdValue]) -> Vec<NdValue> {
    std::iter::once(first).chain(params.iter().cloned()).collect()
}

/// Runs every gradient check; returns `(name, worst relative error)` pairs.
pub fn gradient_suite() -> Vec<(String, f64)> {
    let mut rng = prgan::seeded_rng(7);
    let mut out = Vec::new();
    let mut record = |name: &str, err: f64| out.push((name.to_string(), err));

    let a = NdValue::randn(&[3, 4], 1.0, &mut rng);
    let b = NdValue::randn(&[3, 4], 1.0, &mut rng);
    record(
        "add",
        gradcheck("add", &[a.clone(), b.clone()], 64, |g, v| g.add(v[0], v[1]).unwrap(), |x| {
            x[0].iter().zip(&x[1]).map(|(p, q)| p + q).collect()
        }),
    );
    record(
        "mul",
        gradcheck("mul", &[a.clone(), b.clone()], 64, |g, v| g.mul(v[0], v[1]).unwrap(), |x| {
            x[0].iter().zip(&x[1]).map(|(p, q)| p * q).collect()
        }),
    );
    record(
        "scale",
        gradcheck("scale", std::slice::from_ref(&a), 64, |g, v| g.scale(v[0], -2.5), |x| x[0].iter().map(|p| -2.5 * p).collect()),
    );
    record("sum", gradcheck("sum", std::slice::from_ref(&a), 64, |g, v| g.sum(v[0]), |x| vec![x[0].iter().sum()]));
    record(
        "mean",
        gradcheck("mean", std::slice::from_ref(&a), 64, |g, v| g.mean(v[0]), |x| vec![x[0].iter().sum::<f64>() / 12.0]),
    );
    let wts = NdValue::randn(&[3, 4], 1.0, &mut rng);
    let w64 = to64(&wts);
    record(
        "weighted_sum",
        gradcheck(
            "weighted_sum",
            std::slice::from_ref(&a),
            64,
            |g, v| g.weighted_sum(v[0], wts.clone()).unwrap(),
            |x| vec![x[0].iter().zip(&w64).map(|(p, q)| p * q).sum()],
        ),
    );
    record(
        "reshape",
        gradcheck("reshape", std::slice::from_ref(&a), 64, |g, v| g.reshape(v[0], &[2, 6]).unwrap(), |x| x[0].clone()),
    );
    let kinked = away_from_zero(&[3, 4], &mut rng);
    record(
        "relu",
        gradcheck("relu", std::slice::from_ref(&kinked), 64, |g, v| g.relu(v[0]), |x| x[0].iter().map(|p| p.max(0.0)).collect()),
    );
    record(
        "leaky_relu",
        gradcheck("leaky_relu", std::slice::from_ref(&kinked), 64, |g, v| g.leaky_relu(v[0], 0.2), |x| {
            x[0].iter().map(|&p| lrelu(p, 0.2f32 as f64)).collect()
        }),
    );
    record(
        "sigmoid",
        gradcheck("sigmoid", std::slice::from_ref(&a), 64, |g, v| g.sigmoid(v[0]), |x| x[0].iter().map(|&p| sigmoid(p)).collect()),
    );
    let fx = NdValue::randn(&[3, 5], 1.0, &mut rng);
    let fw = NdValue::randn(&[4, 5], 1.0, &mut rng);
    let fb = NdValue::randn(&[4], 1.0, &mut rng);
    record(
        "fully_connected",
        gradcheck(
            "fully_connected",
            &[fx.clone(), fw.clone(), fb.clone()],
            64,
            |g, v| g.fully_connected(v[0], v[1], v[2]).unwrap(),
            |x| linear(&x[0], 5, &x[1], &x[2]),
        ),
    );
    let fx1 = NdValue::randn(&[5], 1.0, &mut rng);
    record(
        "fully_connected_vector",
        gradcheck(
            "fully_connected_vector",
            &[fx1, fw.clone(), fb.clone()],
            64,
            |g, v| g.fully_connected(v[0], v[1], v[2]).unwrap(),
            |x| linear(&x[0], 5, &x[1], &x[2]),
        ),
    );
    let gidx: Arc<Vec<u32>> = Arc::new(vec![0, 3, u32::MAX, 3, 11, 7, 7, 2]);
    let gi = Arc::clone(&gidx);
    record(
        "gather",
        gradcheck(
            "gather",
            std::slice::from_ref(&a),
            64,
            move |g, v| g.gather(v[0], Arc::clone(&gi), &[2, 4]).unwrap(),
            |x| gather(&x[0], &gidx),
        ),
    );
    let dp = NdValue::uniform(&[2, 3, 5], 0.0, 0.6, &mut rng);
    record(
        "depth_project",
        gradcheck("depth_project", &[dp], 64, |g, v| g.depth_project(v[0]).unwrap(), |x| depth_project(&x[0], 5)),
    );

    for (rank, fine, cin, cout) in [(1usize, 8usize, 2usize, 3usize), (2, 8, 2, 3), (3, 4, 2, 2)] {
        let geom = Arc::new(ConvGeometry::new(&vec![fine; rank], 5).unwrap());
        let mut xs = vec![2, cin];
        xs.extend(vec![fine; rank]);
        let mut ws = vec![cout, cin];
        ws.extend(vec![5; rank]);
        let x = NdValue::randn(&xs, 1.0, &mut rng);
        let w = NdValue::randn(&ws, 0.5, &mut rng);
        let bias = NdValue::randn(&[cout], 1.0, &mut rng);
        let gm = Arc::clone(&geom);
        let fines = vec![fine; rank];
        let name = format!("conv{rank}d");
        let err = gradcheck(
            &name,
            &[x, w, bias],
            80,
            move |g, v| g.conv(v[0], v[1], v[2], &gm).unwrap(),
            |x| conv(&x[0], cin, &fines, &x[1], &x[2], 5),
        );
        record(&name, err);

        let mut xt = vec![2, cin];
        xt.extend(vec![fine / 2; rank]);
        let mut wt = vec![cin, cout];
        wt.extend(vec![5; rank]);
        let x = NdValue::randn(&xt, 1.0, &mut rng);
        let w = NdValue::randn(&wt, 0.5, &mut rng);
        let bias = NdValue::randn(&[cout], 1.0, &mut rng);
        let gm = Arc::clone(&geom);
        let coarse = vec![fine / 2; rank];
        let name = format!("conv_transpose{rank}d");
        let err = gradcheck(
            &name,
            &[x, w, bias],
            80,
            move |g, v| g.conv_transpose(v[0], v[1], v[2], &gm).unwrap(),
            |x| conv_transpose(&x[0], cin, &coarse, &x[1], &x[2], 5),
        );
        record(&name, err);
    }

    let bx = NdValue::randn(&[3, 2, 5], 1.0, &mut rng);
    let gamma = NdValue::uniform(&[2], 0.5, 1.5, &mut rng);
    let beta = NdValue::randn(&[2], 1.0, &mut rng);
    record(
        "batch_norm",
        gradcheck(
            "batch_norm",
            &[bx, gamma, beta],
            64,
            |g, v| {
                let mut stats = RunningStats::new(2);
                g.batch_norm(v[0], v[1], v[2], &mut stats, true).unwrap()
            },
            |x| bn_ref(&x[0], 3, 2, &x[1], &x[2]),
        ),
    );

    let probs = NdValue::uniform(&[6], 0.05, 0.95, &mut rng);
    let targets = [1.0f32, 0.0, 1.0, 1.0, 0.0, 0.0];
    let t64: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
    record(
        "bce",
        gradcheck("bce", &[probs], 64, |g, v| g.bce(v[0], &targets).unwrap(), |x| vec![bce(&x[0], &t64)]),
    );
    let target = NdValue::randn(&[3, 4], 1.0, &mut rng);
    let tg64 = to64(&target);
    record(
        "mse",
        gradcheck(
            "mse",
            std::slice::from_ref(&a),
            64,
            |g, v| g.mse(v[0], &target).unwrap(),
            |x| vec![x[0].iter().zip(&tg64).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 12.0],
        ),
    );

    // Rotation + projection, batched, canonical and oblique views.
    let d = 8;
    let grids = NdValue::uniform(&[2, 1, d, d, d], 0.0, 0.3, &mut rng);
    let views = [Viewpoint::canonical(3), Viewpoint::from_degrees(25.0, 70.0).unwrap()];
    let tables: Vec<Vec<u32>> = views.iter().map(|&vp| rotation_table(d, vp)).collect();
    let projector = Projector::new(d);
    record(
        "project_view",
        gradcheck(
            "project_view",
            &[grids],
            200,
            |g, v| projector.project_views(g, v[0], &views).unwrap(),
            |x| {
                let cells = d * d * d;
                (0..2)
                    .flat_map(|s| depth_project(&gather(&x[0][s * cells..(s + 1) * cells], &tables[s]), d))
                    .collect()
            },
        ),
    );

    let gen = mini_generator();
    let n = 3;
    let cfg = gen.cfg.clone();
    // Finite differences are meaningless across a ReLU kink: redraw codes
    // until every pre-activation sits well clear of zero.
    let codes = loop {
        let codes = NdValue::uniform(&[n, 8], -1.0, 1.0, &mut rng);
        let xs: Vec<Vec<f64>> = with_params(codes.clone(), gen.params.values()).iter().map(to64).collect();
        if generator_ref_margin(&cfg, n, &xs).1 > KINK_MARGIN {
            break codes;
        }
    };
    let mut gen_run = gen.clone();
    record(
        "generator",
        gradcheck(
            "generator",
            &with_params(codes, gen.params.values()),
            200,
            |g, v| gen_run.forward(g, &v[1..], v[0], true).unwrap(),
            |x| generator_ref(&cfg, n, x),
        ),
    );

    let disc = mini_discriminator();
    let images = NdValue::uniform(&[n, 8, 8], 0.0, 1.0, &mut rng);
    let dcfg = disc.cfg.clone();
    let mut disc_run = disc.clone();
    record(
        "discriminator",
        gradcheck(
            "discriminator",
            &with_params(images, disc.params.values()),
            60,
            |g, v| disc_run.forward(g, &v[1..], v[0], true).unwrap().prob,
            |x| discriminator_ref(&dcfg, n, x),
        ),
    );

    let enc = EncoderParams::new(&mut prgan::seeded_rng(41));
    let img = NdValue::uniform(&[2, 1024], 0.0, 1.0, &mut rng);
    record(
        "encoder",
        gradcheck(
            "encoder",
            &with_params(img, enc.params.values()),
            40,
            |g, v| enc.forward(g, &v[1..], v[0]).unwrap(),
            encoder_ref,
        ),
    );
    out
}
