use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::NdValue;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

/// Per-channel running mean and variance for batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn update(&mut self, mean: &[f64], unbiased_var: &[f64]) {
        for (r, &m) in self.mean.iter_mut().zip(mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m as f32;
        }
        for (r, &v) in self.var.iter_mut().zip(unbiased_var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v as f32;
        }
    }
}

impl Graph {
    /// Batch normalization over axis 1 of `x` (`[N, C, ...]`).
    ///
    /// In train mode the batch statistics normalize the input and are folded
    /// into `stats`; in eval mode `stats` is read only.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats,
        train: bool,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::invalid("batch_norm", format!("input shape {xs:?} has no channel axis")));
        }
        let (n, c) = (xs[0], xs[1]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || stats.channels() != c {
            return Err(Error::shape("batch_norm", &xs, self.shape(gamma)));
        }
        if train && n < 2 {
            return Err(Error::invalid("batch_norm", "train mode needs a batch of at least 2"));
        }
        let inner: usize = xs[2..].iter().product();
        let xv = self.value(x).data();
        let (mean, inv_std): (Vec<f64>, Vec<f32>) = if train {
            let m = (n * inner) as f64;
            let mut mean = vec![0.0f64; c];
            let mut sq = vec![0.0f64; c];
            for s in 0..n {
                for ch in 0..c {
                    let block = &xv[(s * c + ch) * inner..(s * c + ch + 1) * inner];
                    mean[ch] += block.iter().map(|&v| v as f64).sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            for s in 0..n {
                for ch in 0..c {
                    let block = &xv[(s * c + ch) * inner..(s * c + ch + 1) * inner];
                    let mu = mean[ch];
                    sq[ch] += block.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>();
                }
            }
            let var: Vec<f64> = sq.iter().map(|s| s / m).collect();
            let unbiased: Vec<f64> = sq.iter().map(|s| s / (m - 1.0)).collect();
            stats.update(&mean, &unbiased);
            let inv = var
                .iter()
                .map(|v| (1.0 / (v + BN_EPS as f64).sqrt()) as f32)
                .collect();
            (mean, inv)
        } else {
            (
                stats.mean.iter().map(|&v| v as f64).collect(),
                stats.var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect(),
            )
        };
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![0.0f32; xv.len()];
        let mut out = vec![0.0f32; xv.len()];
        for s in 0..n {
            for ch in 0..c {
                let range = (s * c + ch) * inner..(s * c + ch + 1) * inner;
                let (mu, is, ga, be) = (mean[ch], inv_std[ch], gv[ch], bv[ch]);
                for ((h, o), &v) in xhat[range.clone()]
                    .iter_mut()
                    .zip(&mut out[range.clone()])
                    .zip(&xv[range])
                {
                    *h = ((v as f64 - mu) * is as f64) as f32;
                    *o = ga * *h + be;
                }
            }
        }
        let xhat = NdValue::new(xs.clone(), xhat)?;
        let out = NdValue::new(xs, out)?;
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward_batch_norm(
    acc: &mut Accumulator<'_>,
    dy: &NdValue,
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: &NdValue,
    inv_std: &[f32],
    train: bool,
) {
    let xs = xhat.shape();
    let (n, c) = (xs[0], xs[1]);
    let inner: usize = xs[2..].iter().product();
    let m = (n * inner) as f64;
    let dyv = dy.data();
    let hv = xhat.data();
    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_h = vec![0.0f64; c];
    for s in 0..n {
        for ch in 0..c {
            let range = (s * c + ch) * inner..(s * c + ch + 1) * inner;
            for (&d, &h) in dyv[range.clone()].iter().zip(&hv[range]) {
                sum_dy[ch] += d as f64;
                sum_dy_h[ch] += d as f64 * h as f64;
            }
        }
    }
    acc.add_with(gamma, |g| {
        for (g, s) in g.iter_mut().zip(&sum_dy_h) {
            *g += *s as f32;
        }
    });
    acc.add_with(beta, |g| {
        for (g, s) in g.iter_mut().zip(&sum_dy) {
            *g += *s as f32;
        }
    });
    let gv = acc.value(gamma).data().to_vec();
    acc.add_with(x, |gx| {
        for s in 0..n {
            for ch in 0..c {
                let range = (s * c + ch) * inner..(s * c + ch + 1) * inner;
                let scale = gv[ch] as f64 * inv_std[ch] as f64;
                let (mean_dy, mean_dy_h) = (sum_dy[ch] / m, sum_dy_h[ch] / m);
                for ((g, &d), &h) in gx[range.clone()]
                    .iter_mut()
                    .zip(&dyv[range.clone()])
                    .zip(&hv[range])
                {
                    let v = if train {
                        scale * (d as f64 - mean_dy - h as f64 * mean_dy_h)
                    } else {
                        scale * d as f64
                    };
                    *g += v as f32;
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(shape: &[usize]) -> NdValue {
        let n: usize = shape.iter().product();
        NdValue::new(
            shape.to_vec(),
            (0..n).map(|i| ((i * 37 % 101) as f32) * 0.13 - 4.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut g = Graph::new();
        let x = g.constant(sample(&[4, 3, 2, 2]));
        let ga = g.param(NdValue::full(&[3], 1.0));
        let be = g.param(NdValue::zeros(&[3]));
        let mut st = RunningStats::new(3);
        let y = g.batch_norm(x, ga, be, &mut st, true).unwrap();
        let yv = g.value(y).data();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|s| (0..4).map(move |i| (s, i)))
                .map(|(s, i)| yv[(s * 3 + ch) * 4 + i] as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5, "{mean}");
            assert!((var - 1.0).abs() < 1e-3, "{var}");
        }
        assert_ne!(st, RunningStats::new(3));
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut g = Graph::new();
        let x = g.constant(sample(&[2, 2, 3]));
        let ga = g.param(NdValue::zeros(&[2]));
        let be = g.param(NdValue::from_vec(vec![0.7, -1.5]));
        let mut st = RunningStats::new(2);
        let y = g.batch_norm(x, ga, be, &mut st, true).unwrap();
        let yv = g.value(y).data();
        for s in 0..2 {
            assert!(yv[s * 6..s * 6 + 3].iter().all(|&v| v == 0.7));
            assert!(yv[s * 6 + 3..s * 6 + 6].iter().all(|&v| v == -1.5));
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train_mode_only() {
        let mut g = Graph::new();
        let x = g.constant(sample(&[1, 2, 3]));
        let ga = g.param(NdValue::full(&[2], 1.0));
        let be = g.param(NdValue::zeros(&[2]));
        let mut st = RunningStats::new(2);
        assert!(g.batch_norm(x, ga, be, &mut st, true).is_err());
        assert!(g.batch_norm(x, ga, be, &mut st, false).is_ok());
    }

    #[test]
    fn eval_mode_uses_running_stats() {
        let mut g = Graph::new();
        let x = g.constant(NdValue::full(&[1, 1, 2], 3.0));
        let ga = g.param(NdValue::full(&[1], 2.0));
        let be = g.param(NdValue::full(&[1], 0.5));
        let mut st = RunningStats {
            mean: vec![1.0],
            var: vec![4.0 - BN_EPS],
        };
        let y = g.batch_norm(x, ga, be, &mut st, false).unwrap();
        for &v in g.value(y).data() {
            assert!((v - 2.5).abs() < 1e-6);
        }
    }
}
