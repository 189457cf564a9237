use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::NdValue;

/// Probabilities are clamped to `[EPS_LOG, 1 − EPS_LOG]` before the logarithm.
pub const EPS_LOG: f32 = 1e-7;

fn clamp_prob(p: f32) -> f64 {
    (p as f64).clamp(EPS_LOG as f64, 1.0 - EPS_LOG as f64)
}

impl Graph {
    /// Mean binary cross-entropy `−[t·log p + (1−t)·log(1−p)]` over the batch.
    ///
    /// The clamp does not zero the gradient: saturated inputs still receive the
    /// derivative evaluated at the clamped probability.
    pub fn bce(&mut self, p: Var, targets: &[f32]) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != targets.len() {
            return Err(Error::shape("bce", pv.shape(), &[targets.len()]));
        }
        if let Some(t) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::invalid("bce", format!("target {t} is not 0 or 1")));
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let q = clamp_prob(p);
                if t == 1.0 {
                    -q.ln()
                } else {
                    -(1.0 - q).ln()
                }
            })
            .sum();
        let loss = total / targets.len() as f64;
        Ok(self.push(
            NdValue::scalar(loss as f32),
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            &[p],
        ))
    }

    /// Mean squared error against a constant target, averaged over all entries.
    pub fn mse(&mut self, pred: Var, target: &NdValue) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::shape("mse", pv.shape(), target.shape()));
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum();
        let loss = total / pv.len() as f64;
        Ok(self.push(
            NdValue::scalar(loss as f32),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            &[pred],
        ))
    }
}

pub(super) fn backward_bce(acc: &mut Accumulator<'_>, dy: &NdValue, p: Var, targets: &[f32]) {
    let scale = dy.data()[0] as f64 / targets.len() as f64;
    let pv = acc.value(p).data().to_vec();
    acc.add_with(p, |g| {
        for ((g, &p), &t) in g.iter_mut().zip(&pv).zip(targets) {
            let q = clamp_prob(p);
            let d = if t == 1.0 { -1.0 / q } else { 1.0 / (1.0 - q) };
            *g += (scale * d) as f32;
        }
    });
}

pub(super) fn backward_mse(acc: &mut Accumulator<'_>, dy: &NdValue, pred: Var, target: &NdValue) {
    let pv = acc.value(pred).data().to_vec();
    let scale = 2.0 * dy.data()[0] / pv.len() as f32;
    acc.add_with(pred, |g| {
        for ((g, &a), &b) in g.iter_mut().zip(&pv).zip(target.data()) {
            *g += scale * (a - b);
        }
    });
}
