use crate::error::{Error, Result};
use crate::tensor::NdValue;

/// ADAM moments and hyperparameters for one parameter list.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u64,
    m: Vec<NdValue>,
    v: Vec<NdValue>,
}

impl AdamState {
    pub const BETA1: f32 = 0.5;
    pub const BETA2: f32 = 0.999;
    pub const EPS: f32 = 1e-8;

    /// State for parameters with the given shapes, using β1 = 0.5.
    pub fn new<'a>(lr: f32, shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        Self::with_betas(lr, Self::BETA1, Self::BETA2, Self::EPS, shapes)
    }

    pub fn with_betas<'a>(
        lr: f32,
        beta1: f32,
        beta2: f32,
        eps: f32,
        shapes: impl IntoIterator<Item = &'a [usize]>,
    ) -> Self {
        let m: Vec<NdValue> = shapes.into_iter().map(NdValue::zeros).collect();
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[NdValue], &[NdValue]) {
        (&self.m, &self.v)
    }

    /// Restores moments and the step counter saved from an earlier run.
    pub fn restore(&mut self, step: u64, m: Vec<NdValue>, v: Vec<NdValue>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(Error::invalid("adam", "moment count does not match parameters"));
        }
        for (new, old) in m.iter().chain(&v).zip(self.m.iter().chain(&self.v)) {
            if new.shape() != old.shape() {
                return Err(Error::shape("adam", old.shape(), new.shape()));
            }
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One bias-corrected ADAM update of `params` in place.
    pub fn step(&mut self, params: &mut [NdValue], grads: &[NdValue]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(
                "adam",
                format!(
                    "expected {} parameters, got {} parameters and {} gradients",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != m.shape() {
                return Err(Error::shape("adam", m.shape(), p.shape()));
            }
            if g.shape() != m.shape() {
                return Err(Error::shape("adam", m.shape(), g.shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - (self.beta1 as f64).powi(t);
        let bc2 = 1.0 - (self.beta2 as f64).powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr as f64, self.eps as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m as f64 / bc1;
                let vhat = *v as f64 / bc2;
                *p -= (lr * mhat / (vhat.sqrt() + eps)) as f32;
            }
        }
        Ok(())
    }
}
