//! Stride-2 convolutions over 1–3 spatial axes via im2col + GEMM.
//!
//! A single [`ConvGeometry`] describes the pairing between a fine grid (extent
//! `2S` per axis) and a coarse grid (extent `S`). A strided convolution maps fine
//! to coarse; its transpose maps coarse to fine through the exact adjoint of the
//! same gather table, so both directions share one index layout.

use std::sync::Arc;

use rayon::prelude::*;

use super::{gemm, Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::NdValue;

const NO_TAP: u32 = u32::MAX;

/// Index table for a stride-2 convolution with a cubic odd kernel and symmetric
/// padding `(k − 1) / 2`.
#[derive(Debug)]
pub struct ConvGeometry {
    fine: Vec<usize>,
    coarse: Vec<usize>,
    kernel: usize,
    /// `taps[t * coarse_len + o]` is the fine-grid flat index read by kernel tap
    /// `t` at coarse position `o`, or `NO_TAP` inside the padding.
    taps: Vec<u32>,
}

impl ConvGeometry {
    pub const STRIDE: usize = 2;

    /// Geometry for a fine grid of the given spatial extents.
    pub fn new(fine: &[usize], kernel: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::invalid("conv", format!("kernel {kernel} must be odd")));
        }
        if fine.is_empty() || fine.len() > 3 {
            return Err(Error::invalid(
                "conv",
                format!("{} spatial axes unsupported", fine.len()),
            ));
        }
        if let Some(e) = fine.iter().find(|&&e| e % 2 != 0 || e == 0) {
            return Err(Error::invalid(
                "conv",
                format!("spatial extent {e} in {fine:?} is not even"),
            ));
        }
        let pad = (kernel - 1) / 2;
        let coarse: Vec<usize> = fine.iter().map(|e| e / 2).collect();
        let rank = fine.len();
        let n_taps = kernel.pow(rank as u32);
        let coarse_len: usize = coarse.iter().product();
        let mut taps = vec![NO_TAP; n_taps * coarse_len];
        let mut tap = [0usize; 3];
        let mut pos = [0usize; 3];
        for t in 0..n_taps {
            unflatten(t, &vec![kernel; rank], &mut tap);
            for o in 0..coarse_len {
                unflatten(o, &coarse, &mut pos);
                let mut flat = 0usize;
                let mut inside = true;
                for a in 0..rank {
                    let c = (pos[a] * Self::STRIDE + tap[a]) as isize - pad as isize;
                    if c < 0 || c >= fine[a] as isize {
                        inside = false;
                        break;
                    }
                    flat = flat * fine[a] + c as usize;
                }
                if inside {
                    taps[t * coarse_len + o] = flat as u32;
                }
            }
        }
        Ok(ConvGeometry {
            fine: fine.to_vec(),
            coarse,
            kernel,
            taps,
        })
    }

    pub fn fine(&self) -> &[usize] {
        &self.fine
    }

    pub fn coarse(&self) -> &[usize] {
        &self.coarse
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn n_taps(&self) -> usize {
        self.kernel.pow(self.fine.len() as u32)
    }

    fn fine_len(&self) -> usize {
        self.fine.iter().product()
    }

    fn coarse_len(&self) -> usize {
        self.coarse.iter().product()
    }

    /// `col[(c·K + t)·P + o] = x[c][taps[t][o]]` for a fine-grid input.
    fn im2col(&self, x: &[f32], channels: usize, col: &mut [f32]) {
        let (k, p, f) = (self.n_taps(), self.coarse_len(), self.fine_len());
        for c in 0..channels {
            let src = &x[c * f..(c + 1) * f];
            for t in 0..k {
                let row = &mut col[(c * k + t) * p..(c * k + t + 1) * p];
                let taps = &self.taps[t * p..(t + 1) * p];
                for (dst, &i) in row.iter_mut().zip(taps) {
                    *dst = if i == NO_TAP { 0.0 } else { src[i as usize] };
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatter-adds columns back onto the fine grid.
    fn col2im(&self, col: &[f32], channels: usize, x: &mut [f32]) {
        let (k, p, f) = (self.n_taps(), self.coarse_len(), self.fine_len());
        for c in 0..channels {
            let dst = &mut x[c * f..(c + 1) * f];
            for t in 0..k {
                let row = &col[(c * k + t) * p..(c * k + t + 1) * p];
                let taps = &self.taps[t * p..(t + 1) * p];
                for (&v, &i) in row.iter().zip(taps) {
                    if i != NO_TAP {
                        dst[i as usize] += v;
                    }
                }
            }
        }
    }
}

fn unflatten(mut flat: usize, extents: &[usize], out: &mut [usize; 3]) {
    for a in (0..extents.len()).rev() {
        out[a] = flat % extents[a];
        flat /= extents[a];
    }
}

impl Graph {
    /// Stride-2 cross-correlation.
    ///
    /// `x`: `[N, C_in, fine...]`, `w`: `[C_out, C_in, k...]`, `b`: `[C_out]`.
    /// Output: `[N, C_out, fine/2...]`.
    pub fn conv(&mut self, x: Var, w: Var, b: Var, geom: &Arc<ConvGeometry>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let rank = geom.fine.len();
        if xs.len() != rank + 2 || xs[2..] != geom.fine[..] {
            return Err(Error::shape("conv", &xs, &geom.fine));
        }
        let kshape: Vec<usize> = vec![geom.kernel; rank];
        if ws.len() != rank + 2 || ws[1] != xs[1] || ws[2..] != kshape[..] {
            return Err(Error::shape("conv", &xs, &ws));
        }
        if self.shape(b) != [ws[0]] {
            return Err(Error::shape("conv", &ws, self.shape(b)));
        }
        let (n, c_in, c_out) = (xs[0], xs[1], ws[0]);
        let (k, p, f) = (geom.n_taps(), geom.coarse_len(), geom.fine_len());
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0f32; n * c_out * p];
        out.par_chunks_mut(c_out * p)
            .enumerate()
            .for_each_init(
                || vec![0.0f32; c_in * k * p],
                |col, (s, y)| {
                    geom.im2col(&xv[s * c_in * f..(s + 1) * c_in * f], c_in, col);
                    for (row, &bias) in y.chunks_exact_mut(p).zip(bv) {
                        row.fill(bias);
                    }
                    gemm(c_out, c_in * k, p, wv, false, col, false, y, 1.0);
                },
            );
        let mut shape = vec![n, c_out];
        shape.extend_from_slice(&geom.coarse);
        let out = NdValue::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                b,
                geom: Arc::clone(geom),
            },
            &[x, w, b],
        ))
    }

    /// Stride-2 transposed convolution, the adjoint of [`Graph::conv`] in `x`.
    ///
    /// `x`: `[N, C_in, coarse...]`, `w`: `[C_in, C_out, k...]`, `b`: `[C_out]`.
    /// Output: `[N, C_out, 2·coarse...]`.
    pub fn conv_transpose(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        geom: &Arc<ConvGeometry>,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let rank = geom.fine.len();
        if xs.len() != rank + 2 || xs[2..] != geom.coarse[..] {
            return Err(Error::shape("conv_transpose", &xs, &geom.coarse));
        }
        let kshape: Vec<usize> = vec![geom.kernel; rank];
        if ws.len() != rank + 2 || ws[0] != xs[1] || ws[2..] != kshape[..] {
            return Err(Error::shape("conv_transpose", &xs, &ws));
        }
        if self.shape(b) != [ws[1]] {
            return Err(Error::shape("conv_transpose", &ws, self.shape(b)));
        }
        let (n, c_in, c_out) = (xs[0], xs[1], ws[1]);
        let (k, p, f) = (geom.n_taps(), geom.coarse_len(), geom.fine_len());
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0f32; n * c_out * f];
        out.par_chunks_mut(c_out * f)
            .enumerate()
            .for_each_init(
                || vec![0.0f32; c_out * k * p],
                |col, (s, y)| {
                    // col = Wᵀ · x, with W viewed as [C_in, C_out·K].
                    gemm(
                        c_out * k,
                        c_in,
                        p,
                        wv,
                        true,
                        &xv[s * c_in * p..(s + 1) * c_in * p],
                        false,
                        col,
                        0.0,
                    );
                    for (row, &bias) in y.chunks_exact_mut(f).zip(bv) {
                        row.fill(bias);
                    }
                    geom.col2im(col, c_out, y);
                },
            );
        let mut shape = vec![n, c_out];
        shape.extend_from_slice(&geom.fine);
        let out = NdValue::new(shape, out)?;
        Ok(self.push(
            out,
            Op::ConvTranspose {
                x,
                w,
                b,
                geom: Arc::clone(geom),
            },
            &[x, w, b],
        ))
    }
}

pub(super) fn backward_conv(
    acc: &mut Accumulator<'_>,
    dy: &NdValue,
    x: Var,
    w: Var,
    b: Var,
    geom: &ConvGeometry,
) {
    let xs = acc.value(x).shape().to_vec();
    let ws = acc.value(w).shape().to_vec();
    let (n, c_in, c_out) = (xs[0], xs[1], ws[0]);
    let (k, p, f) = (geom.n_taps(), geom.coarse_len(), geom.fine_len());
    let want_x = acc.wants(x);
    let want_w = acc.wants(w);
    let dyv = dy.data();

    if want_w {
        let xv = acc.value(x).data().to_vec();
        let mut col = vec![0.0f32; c_in * k * p];
        acc.add_with(w, |gw| {
            for s in 0..n {
                geom.im2col(&xv[s * c_in * f..(s + 1) * c_in * f], c_in, &mut col);
                // dW += dy_s · colᵀ
                gemm(c_out, p, c_in * k, &dyv[s * c_out * p..], false, &col, true, gw, 1.0);
            }
        });
    }
    acc.add_with(b, |gb| {
        for s in 0..n {
            for (c, g) in gb.iter_mut().enumerate() {
                let row = &dyv[(s * c_out + c) * p..(s * c_out + c + 1) * p];
                *g += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
            }
        }
    });
    if want_x {
        let wv = acc.value(w).data().to_vec();
        acc.add_with(x, |gx| {
            gx.par_chunks_mut(c_in * f).enumerate().for_each_init(
                || vec![0.0f32; c_in * k * p],
                |dcol, (s, gxs)| {
                    // dcol = Wᵀ · dy_s
                    gemm(c_in * k, c_out, p, &wv, true, &dyv[s * c_out * p..], false, dcol, 0.0);
                    geom.col2im(dcol, c_in, gxs);
                },
            );
        });
    }
}

pub(super) fn backward_conv_transpose(
    acc: &mut Accumulator<'_>,
    dy: &NdValue,
    x: Var,
    w: Var,
    b: Var,
    geom: &ConvGeometry,
) {
    let xs = acc.value(x).shape().to_vec();
    let ws = acc.value(w).shape().to_vec();
    let (n, c_in, c_out) = (xs[0], xs[1], ws[1]);
    let (k, p, f) = (geom.n_taps(), geom.coarse_len(), geom.fine_len());
    let want_x = acc.wants(x);
    let want_w = acc.wants(w);
    let dyv = dy.data();

    if want_w || want_x {
        let xv = acc.value(x).data().to_vec();
        let wv = acc.value(w).data().to_vec();
        let mut dcol = vec![0.0f32; c_out * k * p];
        let mut gw = vec![0.0f32; if want_w { wv.len() } else { 0 }];
        let mut gx = vec![0.0f32; if want_x { xv.len() } else { 0 }];
        for s in 0..n {
            geom.im2col(&dyv[s * c_out * f..(s + 1) * c_out * f], c_out, &mut dcol);
            if want_w {
                // dW += x_s · dcolᵀ  ([C_in, P] · [P, C_out·K])
                gemm(c_in, p, c_out * k, &xv[s * c_in * p..], false, &dcol, true, &mut gw, 1.0);
            }
            if want_x {
                // dx_s = W · dcol  ([C_in, C_out·K] · [C_out·K, P])
                gemm(
                    c_in,
                    c_out * k,
                    p,
                    &wv,
                    false,
                    &dcol,
                    false,
                    &mut gx[s * c_in * p..(s + 1) * c_in * p],
                    0.0,
                );
            }
        }
        if want_w {
            acc.add_with(w, |g| g.iter_mut().zip(&gw).for_each(|(a, b)| *a += b));
        }
        if want_x {
            acc.add_with(x, |g| g.iter_mut().zip(&gx).for_each(|(a, b)| *a += b));
        }
    }
    acc.add_with(b, |gb| {
        for s in 0..n {
            for (c, g) in gb.iter_mut().enumerate() {
                let row = &dyv[(s * c_out + c) * f..(s * c_out + c + 1) * f];
                *g += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
            }
        }
    });
}
