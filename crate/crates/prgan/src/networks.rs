//! Generator, discriminator and baseline architectures.
//!
//! Both networks are written once over the number of spatial axes: the voxel
//! generator and the 2D baseline generator differ only in rank, as do the image
//! discriminator and the 3D baseline discriminator.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{ConvGeometry, Graph, RunningStats, Var};
use crate::error::{Error, Result};
use crate::io::Checkpoint;
use crate::projection::{Viewpoint, CANONICAL_VIEWS};
use crate::tensor::NdValue;

/// Length of a latent code: 200 shape dimensions plus one view dimension.
pub const LATENT_DIM: usize = 201;
pub const SHAPE_DIM: usize = 200;
pub const LEAKY_SLOPE: f32 = 0.2;
pub const INIT_STD: f32 = 0.02;

/// A latent code `z ∈ [−1, 1]^201`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(Vec<f32>);

impl LatentCode {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.len() != LATENT_DIM {
            return Err(Error::invalid(
                "LatentCode",
                format!("expected {LATENT_DIM} values, got {}", values.len()),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid("LatentCode", format!("component {v} outside [-1, 1]")));
        }
        Ok(LatentCode(values))
    }

    /// Clamps every component into `[−1, 1]`.
    pub fn clamped(values: Vec<f32>) -> Result<Self> {
        Self::new(values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    /// Each component drawn from `U(−1, 1)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        LatentCode((0..LATENT_DIM).map(|_| rng.random_range(-1.0f32..=1.0)).collect())
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn shape_part(&self) -> &[f32] {
        &self.0[..SHAPE_DIM]
    }

    pub fn view_part(&self) -> f32 {
        self.0[SHAPE_DIM]
    }

    /// `(1 − t)·a + t·b`; endpoints reproduce the inputs exactly.
    pub fn lerp(a: &LatentCode, b: &LatentCode, t: f32) -> LatentCode {
        if t == 0.0 {
            return a.clone();
        }
        if t == 1.0 {
            return b.clone();
        }
        LatentCode(
            a.0.iter()
                .zip(&b.0)
                .map(|(&x, &y)| ((1.0 - t) * x + t * y).clamp(-1.0, 1.0))
                .collect(),
        )
    }
}

/// Quantizes the view coordinate into one of the eight azimuth bins.
pub fn view_bin(view_coord: f32) -> usize {
    let scaled = ((view_coord as f64 + 1.0) / 2.0 * CANONICAL_VIEWS as f64).floor();
    (scaled.max(0.0) as usize).min(CANONICAL_VIEWS - 1)
}

/// The viewpoint selected by a code: θ = 0, φ = 45° × bin of its last coordinate.
pub fn viewpoint_select(z: &LatentCode) -> Viewpoint {
    Viewpoint::canonical(view_bin(z.view_part()))
}

/// Stacks the first `dims` coordinates of each code into `[N, dims]`.
pub fn code_batch(codes: &[LatentCode], dims: usize) -> Result<NdValue> {
    if codes.is_empty() {
        return Err(Error::invalid("code_batch", "empty batch"));
    }
    let mut data = Vec::with_capacity(codes.len() * dims);
    for c in codes {
        data.extend_from_slice(&c.values()[..dims]);
    }
    NdValue::new(vec![codes.len(), dims], data)
}

/// Ordered named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<NdValue>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: NdValue) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[NdValue] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [NdValue] {
        &mut self.values
    }

    pub fn shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.values.iter().map(|v| v.shape())
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Binds every parameter as a gradient-receiving leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.param(v.clone())).collect()
    }

    /// Binds every parameter as a constant.
    pub fn bind_frozen(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.constant(v.clone())).collect()
    }

    pub fn grads(g: &mut Graph, vars: &[Var]) -> Vec<NdValue> {
        vars.iter().map(|&v| g.take_grad(v)).collect()
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        for (n, v) in self.names.iter().zip(&self.values) {
            ckpt.push(n.clone(), v.clone());
        }
    }

    /// Overwrites every parameter from `ckpt`, checking shapes.
    pub fn read_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for (n, v) in self.names.iter().zip(self.values.iter_mut()) {
            let stored = ckpt.require(n)?;
            if stored.shape() != v.shape() {
                return Err(Error::shape("checkpoint", v.shape(), stored.shape()));
            }
            *v = stored.clone();
        }
        Ok(())
    }
}

fn write_stats(prefix: &str, stats: &[RunningStats], ckpt: &mut Checkpoint) {
    for (i, s) in stats.iter().enumerate() {
        ckpt.push(format!("{prefix}/bn{i}/running_mean"), NdValue::from_vec(s.mean.clone()));
        ckpt.push(format!("{prefix}/bn{i}/running_var"), NdValue::from_vec(s.var.clone()));
    }
}

fn read_stats(prefix: &str, stats: &mut [RunningStats], ckpt: &Checkpoint) -> Result<()> {
    for (i, s) in stats.iter_mut().enumerate() {
        let mean = ckpt.require(&format!("{prefix}/bn{i}/running_mean"))?;
        let var = ckpt.require(&format!("{prefix}/bn{i}/running_var"))?;
        if mean.len() != s.channels() || var.len() != s.channels() {
            return Err(Error::shape("checkpoint", &[s.channels()], mean.shape()));
        }
        s.mean = mean.data().to_vec();
        s.var = var.data().to_vec();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Generator

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Leading code coordinates consumed.
    pub code_dim: usize,
    /// Output extent per spatial axis; a multiple of 8.
    pub extent: usize,
    /// Channels after the fully-connected layer and each of the first two
    /// upsampling stages; the last stage emits one channel.
    pub channels: [usize; 3],
    pub kernel: usize,
    /// Spatial axes: 3 for voxel grids, 2 for the image baseline.
    pub rank: usize,
    pub batch_norm: bool,
}

impl GeneratorConfig {
    /// The voxel generator: 200 → 256×4³ → 128×8³ → 64×16³ → 1×32³.
    pub fn voxel() -> Self {
        GeneratorConfig {
            code_dim: SHAPE_DIM,
            extent: 32,
            channels: [256, 128, 64],
            kernel: 5,
            rank: 3,
            batch_norm: true,
        }
    }

    /// The image baseline: 201 → 256×4² → 128×8² → 64×16² → 1×32².
    pub fn image_baseline() -> Self {
        GeneratorConfig {
            code_dim: LATENT_DIM,
            rank: 2,
            ..Self::voxel()
        }
    }

    /// Same layout with every channel count divided by `factor`.
    pub fn narrowed(mut self, factor: usize) -> Self {
        self.channels = self.channels.map(|c| (c / factor).max(1));
        self
    }

    fn base(&self) -> usize {
        self.extent / 8
    }

    fn validate(&self) -> Result<()> {
        if self.extent == 0 || !self.extent.is_multiple_of(8) {
            return Err(Error::invalid("generator", format!("extent {} is not a multiple of 8", self.extent)));
        }
        if !(2..=3).contains(&self.rank) {
            return Err(Error::invalid("generator", format!("rank {} unsupported", self.rank)));
        }
        Ok(())
    }
}

/// Fully-connected projection followed by three stride-2 transposed
/// convolutions, batch norm + ReLU between stages, sigmoid at the end.
#[derive(Clone, Debug)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    pub params: ParamSet,
    pub bn: Vec<RunningStats>,
    prefix: String,
    geoms: Vec<Arc<ConvGeometry>>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(cfg: GeneratorConfig, prefix: &str, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let [c0, c1, c2] = cfg.channels;
        let b = cfg.base();
        let k = cfg.kernel;
        let kdims = vec![k; cfg.rank];
        let with_k = |a: usize, c: usize| {
            let mut s = vec![a, c];
            s.extend_from_slice(&kdims);
            s
        };
        let mut p = ParamSet::new();
        p.add(format!("{prefix}/fc/w"), NdValue::randn(&[c0 * b.pow(cfg.rank as u32), cfg.code_dim], INIT_STD, rng));
        p.add(format!("{prefix}/fc/b"), NdValue::zeros(&[c0 * b.pow(cfg.rank as u32)]));
        let mut bn = Vec::new();
        let ladder = [(c0, c1), (c1, c2), (c2, 1)];
        for (i, &(cin, cout)) in ladder.iter().enumerate() {
            if cfg.batch_norm {
                p.add(format!("{prefix}/bn{i}/gamma"), NdValue::full(&[cin], 1.0));
                p.add(format!("{prefix}/bn{i}/beta"), NdValue::zeros(&[cin]));
                bn.push(RunningStats::new(cin));
            }
            p.add(format!("{prefix}/up{i}/w"), NdValue::randn(&with_k(cin, cout), INIT_STD, rng));
            p.add(format!("{prefix}/up{i}/b"), NdValue::zeros(&[cout]));
        }
        let geoms = (1..=3)
            .map(|s| {
                let fine = vec![b << s; cfg.rank];
                ConvGeometry::new(&fine, k).map(Arc::new)
            })
            .collect::<Result<_>>()?;
        Ok(Generator {
            cfg,
            params: p,
            bn,
            prefix: prefix.to_string(),
            geoms,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    /// Output shape for a batch of `n`: `[n, 1, D, …]`.
    pub fn output_shape(&self, n: usize) -> Vec<usize> {
        let mut s = vec![n, 1];
        s.extend(std::iter::repeat_n(self.cfg.extent, self.cfg.rank));
        s
    }

    /// Runs the generator on `codes` (`[N, code_dim]`) using parameter leaves
    /// `vars` from [`ParamSet::bind`] or [`ParamSet::bind_frozen`].
    pub fn forward(&mut self, g: &mut Graph, vars: &[Var], codes: Var, train: bool) -> Result<Var> {
        let cs = g.shape(codes).to_vec();
        if cs.len() != 2 || cs[1] != self.cfg.code_dim {
            return Err(Error::shape("generator", &cs, &[0, self.cfg.code_dim]));
        }
        if vars.len() != self.params.len() {
            return Err(Error::invalid("generator", "parameter binding does not match"));
        }
        let n = cs[0];
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let h = g.fully_connected(codes, next(), next())?;
        let mut shape = vec![n, self.cfg.channels[0]];
        shape.extend(std::iter::repeat_n(self.cfg.base(), self.cfg.rank));
        let mut h = g.reshape(h, &shape)?;
        for i in 0..3 {
            if self.cfg.batch_norm {
                let (gamma, beta) = (next(), next());
                h = g.batch_norm(h, gamma, beta, &mut self.bn[i], train)?;
            }
            h = g.relu(h);
            let (w, b) = (next(), next());
            h = g.conv_transpose(h, w, b, &self.geoms[i])?;
        }
        Ok(g.sigmoid(h))
    }

    /// Convenience inference pass without gradients (eval-mode batch norm).
    pub fn generate(&mut self, codes: &[LatentCode]) -> Result<NdValue> {
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let z = g.constant(code_batch(codes, self.cfg.code_dim)?);
        let out = self.forward(&mut g, &vars, z, false)?;
        Ok(g.value(out).clone())
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        self.params.write_to(ckpt);
        write_stats(&self.prefix, &self.bn, ckpt);
    }

    pub fn read_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.params.read_from(ckpt)?;
        read_stats(&self.prefix, &mut self.bn, ckpt)
    }

    /// Rebuilds a generator whose layout is inferred from the stored tensor
    /// shapes under `prefix`.
    pub fn from_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let fc = ckpt.require(&format!("{prefix}/fc/w"))?.shape().to_vec();
        let up0 = ckpt.require(&format!("{prefix}/up0/w"))?.shape().to_vec();
        let up1 = ckpt.require(&format!("{prefix}/up1/w"))?.shape().to_vec();
        let bad = || Error::invalid("checkpoint", format!("inconsistent generator tensors under {prefix:?}"));
        if fc.len() != 2 || up0.len() < 4 || up1.len() != up0.len() {
            return Err(bad());
        }
        let rank = up0.len() - 2;
        let (c0, c1, c2) = (up0[0], up0[1], up1[1]);
        let cells = fc[0] / c0;
        let base = (1..=64).find(|b: &usize| b.pow(rank as u32) == cells).ok_or_else(bad)?;
        let cfg = GeneratorConfig {
            code_dim: fc[1],
            extent: base * 8,
            channels: [c0, c1, c2],
            kernel: up0[2],
            rank,
            batch_norm: ckpt.get(&format!("{prefix}/bn0/gamma")).is_some(),
        };
        let mut gen = Generator::new(cfg, prefix, &mut crate::seeded_rng(0))?;
        gen.read_from(ckpt)?;
        Ok(gen)
    }
}

// ---------------------------------------------------------------------------
// Discriminator

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub extent: usize,
    pub channels: [usize; 3],
    pub kernel: usize,
    pub rank: usize,
    pub batch_norm: bool,
}

impl DiscriminatorConfig {
    /// Image discriminator: 32² → 256×16² → 512×8² → 1024×4² → 1.
    pub fn image() -> Self {
        DiscriminatorConfig {
            extent: 32,
            channels: [256, 512, 1024],
            kernel: 5,
            rank: 2,
            batch_norm: true,
        }
    }

    /// Voxel baseline discriminator: 32³ → 256×16³ → 512×8³ → 1024×4³ → 1.
    pub fn voxel_baseline() -> Self {
        DiscriminatorConfig {
            rank: 3,
            ..Self::image()
        }
    }

    pub fn narrowed(mut self, factor: usize) -> Self {
        self.channels = self.channels.map(|c| (c / factor).max(1));
        self
    }
}

/// Discriminator outputs with the per-stage activations kept for inspection.
pub struct DiscriminatorOutput {
    /// `[N]` probabilities of "real".
    pub prob: Var,
    pub stages: Vec<Var>,
}

/// Three stride-2 convolutions with leaky ReLU (batch norm after the first),
/// then a fully-connected layer to one sigmoid unit.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub cfg: DiscriminatorConfig,
    pub params: ParamSet,
    pub bn: Vec<RunningStats>,
    prefix: String,
    geoms: Vec<Arc<ConvGeometry>>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(cfg: DiscriminatorConfig, prefix: &str, rng: &mut R) -> Result<Self> {
        if cfg.extent == 0 || !cfg.extent.is_multiple_of(8) {
            return Err(Error::invalid("discriminator", format!("extent {} is not a multiple of 8", cfg.extent)));
        }
        let k = cfg.kernel;
        let kdims = vec![k; cfg.rank];
        let with_k = |a: usize, c: usize| {
            let mut s = vec![a, c];
            s.extend_from_slice(&kdims);
            s
        };
        let [c0, c1, c2] = cfg.channels;
        let mut p = ParamSet::new();
        let mut bn = Vec::new();
        let ladder = [(1, c0), (c0, c1), (c1, c2)];
        for (i, &(cin, cout)) in ladder.iter().enumerate() {
            p.add(format!("{prefix}/conv{i}/w"), NdValue::randn(&with_k(cout, cin), INIT_STD, rng));
            p.add(format!("{prefix}/conv{i}/b"), NdValue::zeros(&[cout]));
            if cfg.batch_norm && i > 0 {
                p.add(format!("{prefix}/bn{}/gamma", i - 1), NdValue::full(&[cout], 1.0));
                p.add(format!("{prefix}/bn{}/beta", i - 1), NdValue::zeros(&[cout]));
                bn.push(RunningStats::new(cout));
            }
        }
        let flat = c2 * (cfg.extent / 8).pow(cfg.rank as u32);
        p.add(format!("{prefix}/fc/w"), NdValue::randn(&[1, flat], INIT_STD, rng));
        p.add(format!("{prefix}/fc/b"), NdValue::zeros(&[1]));
        let geoms = (0..3)
            .map(|s| ConvGeometry::new(&vec![cfg.extent >> s; cfg.rank], k).map(Arc::new))
            .collect::<Result<_>>()?;
        Ok(Discriminator {
            cfg,
            params: p,
            bn,
            prefix: prefix.to_string(),
            geoms,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    /// `input` is `[N, D, …]` or `[N, 1, D, …]`.
    pub fn forward(
        &mut self,
        g: &mut Graph,
        vars: &[Var],
        input: Var,
        train: bool,
    ) -> Result<DiscriminatorOutput> {
        let s = g.shape(input).to_vec();
        let d = self.cfg.extent;
        let r = self.cfg.rank;
        let spatial_ok = s.len() > r && s[s.len() - r..].iter().all(|&e| e == d);
        let layout_ok = s.len() == r + 1 || (s.len() == r + 2 && s[1] == 1);
        if !spatial_ok || !layout_ok {
            let mut want = vec![s.first().copied().unwrap_or(0)];
            want.extend(std::iter::repeat_n(d, r));
            return Err(Error::shape("discriminator", &s, &want));
        }
        if vars.len() != self.params.len() {
            return Err(Error::invalid("discriminator", "parameter binding does not match"));
        }
        let n = s[0];
        let mut shape = vec![n, 1];
        shape.extend(std::iter::repeat_n(d, r));
        let mut h = g.reshape(input, &shape)?;
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let mut stages = Vec::with_capacity(3);
        for i in 0..3 {
            let (w, b) = (next(), next());
            h = g.conv(h, w, b, &self.geoms[i])?;
            if self.cfg.batch_norm && i > 0 {
                let (gamma, beta) = (next(), next());
                h = g.batch_norm(h, gamma, beta, &mut self.bn[i - 1], train)?;
            }
            h = g.leaky_relu(h, LEAKY_SLOPE);
            stages.push(h);
        }
        let flat: usize = g.shape(h)[1..].iter().product();
        let h = g.reshape(h, &[n, flat])?;
        let logit = g.fully_connected(h, next(), next())?;
        let prob = g.sigmoid(logit);
        let prob = g.reshape(prob, &[n])?;
        Ok(DiscriminatorOutput { prob, stages })
    }

    /// Probabilities for a batch without gradients (eval-mode batch norm).
    pub fn classify(&mut self, input: &NdValue) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let x = g.constant(input.clone());
        let out = self.forward(&mut g, &vars, x, false)?;
        Ok(g.value(out.prob).data().to_vec())
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        self.params.write_to(ckpt);
        write_stats(&self.prefix, &self.bn, ckpt);
    }

    pub fn read_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.params.read_from(ckpt)?;
        read_stats(&self.prefix, &mut self.bn, ckpt)
    }
}
