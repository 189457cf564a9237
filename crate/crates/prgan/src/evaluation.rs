//! Maximum Mean Discrepancy between sets of binarized samples.
//!
//! Pairs are first counted by Hamming distance in integers and the kernel is
//! summed over that histogram afterwards, so the estimate does not depend on
//! the order of samples or on which set is passed first.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::projection::{Silhouette, VoxelGrid};
use crate::tensor::NdValue;

/// Binarization threshold for PrGAN images and voxels.
pub const PRGAN_THRESHOLD: f32 = 0.001;
/// Binarization threshold for voxels from the 3D-GAN baseline.
pub const GAN3D_THRESHOLD: f32 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelForm {
    /// `exp(−d² / (2h))`
    Gaussian,
    /// `exp(−d / h)`
    Laplacian,
}

impl FromStr for KernelForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelForm::Gaussian),
            "laplacian" => Ok(KernelForm::Laplacian),
            _ => Err(Error::invalid("kernel", format!("unknown kernel {s:?} (gaussian, laplacian)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// U-statistic: diagonal terms excluded.
    Unbiased,
    /// V-statistic: diagonal included; nonnegative.
    Biased,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u" | "unbiased" => Ok(Estimator::Unbiased),
            "v" | "biased" => Ok(Estimator::Biased),
            _ => Err(Error::invalid("estimator", format!("unknown estimator {s:?} (unbiased, biased)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmdConfig {
    pub bandwidth: f64,
    pub kernel: KernelForm,
    pub estimator: Estimator,
    /// Samples drawn from each set before estimating.
    pub samples: usize,
    pub threshold: f32,
}

impl MmdConfig {
    pub fn images() -> Self {
        MmdConfig {
            bandwidth: 1e-3,
            kernel: KernelForm::Gaussian,
            estimator: Estimator::Unbiased,
            samples: 128,
            threshold: PRGAN_THRESHOLD,
        }
    }

    pub fn voxels() -> Self {
        MmdConfig {
            bandwidth: 1e-2,
            ..Self::images()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("mmd", "bandwidth must be positive"));
        }
        if self.samples < 2 {
            return Err(Error::invalid("mmd", "sample count must be at least 2"));
        }
        check_threshold(self.threshold)
    }

    fn kernel(&self, d: f64) -> f64 {
        match self.kernel {
            KernelForm::Gaussian => (-d * d / (2.0 * self.bandwidth)).exp(),
            KernelForm::Laplacian => (-d / self.bandwidth).exp(),
        }
    }
}

fn check_threshold(tau: f32) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("binarize", format!("threshold {tau} outside (0, 1)")))
    }
}

/// Bit-packed binary array.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryArray {
    shape: Vec<usize>,
    words: Vec<u64>,
}

impl fmt::Debug for BinaryArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryArray({:?}, {} ones)", self.shape, self.count_ones())
    }
}

impl BinaryArray {
    pub fn from_bools(shape: &[usize], bits: &[bool]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != bits.len() || len == 0 {
            return Err(Error::shape("binary array", shape, &[bits.len()]));
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / 64] |= 1 << (i % 64);
        }
        Ok(BinaryArray {
            shape: shape.to_vec(),
            words,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn to_nd(&self) -> NdValue {
        let data = (0..self.len()).map(|i| if self.get(i) { 1.0 } else { 0.0 }).collect();
        NdValue::new(self.shape.clone(), data).expect("shape matches length")
    }

    fn differing(&self, other: &BinaryArray) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

/// 1 where the value reaches `tau`, else 0.
///
/// Inclusive, so a single full voxel (pixel `1 − e⁻¹`) survives `tau = 1 − e⁻¹`.
pub fn binarize(x: &NdValue, tau: f32) -> Result<BinaryArray> {
    check_threshold(tau)?;
    let bits: Vec<bool> = x.data().iter().map(|&v| v >= tau).collect();
    BinaryArray::from_bools(x.shape(), &bits)
}

pub fn binarize_silhouette(s: &Silhouette, tau: f32) -> Result<BinaryArray> {
    binarize(&s.to_nd(), tau)
}

pub fn binarize_grid(v: &VoxelGrid, tau: f32) -> Result<BinaryArray> {
    binarize(&v.to_nd(), tau)
}

/// Fraction of differing entries.
pub fn hamming_dist(a: &BinaryArray, b: &BinaryArray) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::shape("hamming_dist", &a.shape, &b.shape));
    }
    Ok(a.differing(b) as f64 / a.len() as f64)
}

/// Number of pairs at each differing count, excluding `i == j` when
/// `skip_diagonal`. Integer counts make the estimate independent of order.
fn distance_histogram(xs: &[BinaryArray], ys: &[BinaryArray], skip_diagonal: bool) -> Vec<u64> {
    let dim = xs[0].len();
    xs.par_iter()
        .enumerate()
        .fold(
            || vec![0u64; dim + 1],
            |mut h, (i, x)| {
                for (j, y) in ys.iter().enumerate() {
                    if !(skip_diagonal && i == j) {
                        h[x.differing(y)] += 1;
                    }
                }
                h
            },
        )
        .reduce(
            || vec![0u64; dim + 1],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Sum of kernel values over a histogram, smallest terms first.
fn kernel_total(hist: &[u64], cfg: &MmdConfig) -> f64 {
    let dim = (hist.len() - 1) as f64;
    hist.iter()
        .enumerate()
        .rev()
        .filter(|(_, &n)| n > 0)
        .map(|(c, &n)| n as f64 * cfg.kernel(c as f64 / dim))
        .sum()
}

/// Squared-MMD estimate between two sample sets using every sample given.
pub fn mmd(a: &[BinaryArray], b: &[BinaryArray], cfg: &MmdConfig) -> Result<f64> {
    cfg.validate()?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(
            "mmd",
            format!("need at least 2 samples per set, got {} and {}", a.len(), b.len()),
        ));
    }
    let shape = a[0].shape();
    if let Some(bad) = a.iter().chain(b).find(|s| s.shape() != shape) {
        return Err(Error::shape("mmd", shape, bad.shape()));
    }
    let (m, n) = (a.len() as f64, b.len() as f64);
    let total = |xs: &[BinaryArray], ys: &[BinaryArray], skip| kernel_total(&distance_histogram(xs, ys, skip), cfg);
    let kab = total(a, b, false) / (m * n);
    let (kaa, kbb) = match cfg.estimator {
        Estimator::Unbiased => (total(a, a, true) / (m * (m - 1.0)), total(b, b, true) / (n * (n - 1.0))),
        Estimator::Biased => (total(a, a, false) / (m * m), total(b, b, false) / (n * n)),
    };
    Ok(kaa + kbb - 2.0 * kab)
}

/// Picks `count` items (or all of them, if fewer) without replacement.
pub fn draw_samples<T: Clone>(items: &[T], count: usize, seed: u64) -> Vec<T> {
    if items.len() <= count {
        return items.to_vec();
    }
    let mut rng = crate::seeded_rng(seed);
    let mut idx = sample(&mut rng, items.len(), count).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

/// `mmd <value> n_a <count> n_b <count> bandwidth <h>`
pub fn mmd_line(value: f64, n_a: usize, n_b: usize, bandwidth: f64) -> String {
    format!("mmd {value:.9e} n_a {n_a} n_b {n_b} bandwidth {bandwidth}")
}
