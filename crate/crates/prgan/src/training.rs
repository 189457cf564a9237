//! Adversarial training with adaptive discriminator skipping.
//!
//! Each step draws one batch of latent codes shared by the discriminator and
//! generator updates. The discriminator is updated only when its accuracy on
//! the current minibatch is at most the skip threshold; the generator is
//! updated every step.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::autodiff::{AdamState, Graph, RunningStats};
use crate::error::{Error, Result};
use crate::io::Checkpoint;
use crate::networks::{
    code_batch, viewpoint_select, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig,
    LatentCode, ParamSet,
};
use crate::projection::{Projector, Silhouette, Viewpoint, VoxelGrid};
use crate::tensor::NdValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Voxel generator + projection + image discriminator.
    PrGan,
    /// Image generator + image discriminator.
    Gan2d,
    /// Voxel generator + voxel discriminator.
    Gan3d,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PrGan => "prgan",
            ModelKind::Gan2d => "gan2d",
            ModelKind::Gan3d => "gan3d",
        }
    }

    pub fn generator_prefix(self) -> &'static str {
        match self {
            ModelKind::PrGan | ModelKind::Gan3d => "gen",
            ModelKind::Gan2d => "gen2d",
        }
    }

    pub fn discriminator_prefix(self) -> &'static str {
        match self {
            ModelKind::PrGan | ModelKind::Gan2d => "disc",
            ModelKind::Gan3d => "disc3d",
        }
    }

    pub fn needs_voxels(self) -> bool {
        self == ModelKind::Gan3d
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prgan" => Ok(ModelKind::PrGan),
            "gan2d" => Ok(ModelKind::Gan2d),
            "gan3d" => Ok(ModelKind::Gan3d),
            _ => Err(Error::invalid("model", format!("unknown model {s:?} (prgan, gan2d, gan3d)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub lr_discriminator: f32,
    pub lr_generator: f32,
    pub beta1: f32,
    /// Discriminator updates are skipped when its accuracy is strictly above this.
    pub skip_threshold: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
    pub gen_channels: [usize; 3],
    pub disc_channels: [usize; 3],
    /// Minimize `log(1 − D(G(z)))` literally instead of maximizing `log D(G(z))`.
    pub saturating_generator_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::PrGan,
            lr_discriminator: 1e-5,
            lr_generator: 0.0025,
            beta1: 0.5,
            skip_threshold: 0.75,
            batch_size: 64,
            epochs: 1,
            seed: 0,
            checkpoint_every: 0,
            gen_channels: GeneratorConfig::voxel().channels,
            disc_channels: DiscriminatorConfig::image().channels,
            saturating_generator_loss: false,
        }
    }
}

fn parse_channels(key: &str, value: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid("config", format!("{key}: expected three comma-separated integers")))?;
    match parts.as_slice() {
        [a, b, c] if *a > 0 && *b > 0 && *c > 0 => Ok([*a, *b, *c]),
        _ => Err(Error::invalid("config", format!("{key}: expected three positive integers"))),
    }
}

impl TrainConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::invalid("config", format!("invalid value {value:?} for {key}"));
        match key {
            "model" => self.model = value.parse()?,
            "lr_discriminator" => self.lr_discriminator = value.parse().map_err(|_| bad())?,
            "lr_generator" => self.lr_generator = value.parse().map_err(|_| bad())?,
            "beta1" => self.beta1 = value.parse().map_err(|_| bad())?,
            "skip_threshold" => self.skip_threshold = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad())?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "checkpoint_every" => self.checkpoint_every = value.parse().map_err(|_| bad())?,
            "gen_channels" => self.gen_channels = parse_channels(key, value)?,
            "disc_channels" => self.disc_channels = parse_channels(key, value)?,
            "saturating_generator_loss" => {
                self.saturating_generator_loss = value.parse().map_err(|_| bad())?
            }
            _ => return Err(Error::invalid("config", format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len() as u64;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::format("config", at, "expected `key = value`"))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::format("config", at, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let ch = |c: [usize; 3]| format!("{},{},{}", c[0], c[1], c[2]);
        format!(
            "model = {}\nlr_discriminator = {}\nlr_generator = {}\nbeta1 = {}\nskip_threshold = {}\n\
             batch_size = {}\nepochs = {}\nseed = {}\ncheckpoint_every = {}\ngen_channels = {}\n\
             disc_channels = {}\nsaturating_generator_loss = {}\n",
            self.model,
            self.lr_discriminator,
            self.lr_generator,
            self.beta1,
            self.skip_threshold,
            self.batch_size,
            self.epochs,
            self.seed,
            self.checkpoint_every,
            ch(self.gen_channels),
            ch(self.disc_channels),
            self.saturating_generator_loss,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_discriminator > 0.0 && self.lr_generator > 0.0) {
            return Err(Error::invalid("config", "learning rates must be positive"));
        }
        if !(self.skip_threshold > 0.5 && self.skip_threshold <= 1.0) {
            return Err(Error::invalid("config", "skip_threshold must lie in (0.5, 1]"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::invalid("config", "beta1 must lie in [0, 1)"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("config", "batch_size must be at least 2"));
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let base = match self.model {
            ModelKind::Gan2d => GeneratorConfig::image_baseline(),
            _ => GeneratorConfig::voxel(),
        };
        GeneratorConfig {
            channels: self.gen_channels,
            ..base
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        let base = match self.model {
            ModelKind::Gan3d => DiscriminatorConfig::voxel_baseline(),
            _ => DiscriminatorConfig::image(),
        };
        DiscriminatorConfig {
            channels: self.disc_channels,
            ..base
        }
    }
}

/// One training step's record.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub d_accuracy: f32,
    pub d_loss: f32,
    pub g_loss: f32,
    pub skipped: bool,
}

impl LogEntry {
    /// `step <n> d_acc <a> d_loss <x> g_loss <y> skipped <0|1>`
    pub fn to_line(&self) -> String {
        format!(
            "step {} d_acc {:.6} d_loss {:.6} g_loss {:.6} skipped {}",
            self.step,
            self.d_accuracy,
            self.d_loss,
            self.g_loss,
            u8::from(self.skipped)
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::invalid("log", format!("malformed log line {line:?}"));
        match f.as_slice() {
            ["step", s, "d_acc", a, "d_loss", dl, "g_loss", gl, "skipped", sk] => Ok(LogEntry {
                step: s.parse().map_err(|_| bad())?,
                d_accuracy: a.parse().map_err(|_| bad())?,
                d_loss: dl.parse().map_err(|_| bad())?,
                g_loss: gl.parse().map_err(|_| bad())?,
                skipped: match *sk {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad()),
                },
            }),
            _ => Err(bad()),
        }
    }
}

pub type TrainLog = Vec<LogEntry>;

/// Real samples for one model kind.
#[derive(Clone, Debug)]
pub enum TrainingData {
    Images(Vec<Silhouette>),
    Voxels(Vec<VoxelGrid>),
}

impl TrainingData {
    pub fn len(&self) -> usize {
        match self {
            TrainingData::Images(v) => v.len(),
            TrainingData::Voxels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacks the selected samples into `[N, D, D]` or `[N, D, D, D]`.
    pub fn batch(&self, indices: &[usize]) -> Result<NdValue> {
        match self {
            TrainingData::Images(v) => NdValue::stack(&indices.iter().map(|&i| v[i].to_nd()).collect::<Vec<_>>()),
            TrainingData::Voxels(v) => NdValue::stack(&indices.iter().map(|&i| v[i].to_nd()).collect::<Vec<_>>()),
        }
    }

    fn check_model(&self, model: ModelKind) -> Result<()> {
        match (self, model.needs_voxels()) {
            (TrainingData::Images(_), true) => Err(Error::invalid(
                "train",
                "gan3d trains on voxel grids, but the dataset holds images",
            )),
            (TrainingData::Voxels(_), false) => Err(Error::invalid(
                "train",
                format!("{model} trains on images, but the dataset holds voxel grids"),
            )),
            _ => Ok(()),
        }
    }
}

/// Generator, discriminator and both optimizers for one model kind.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub gen: Generator,
    pub disc: Discriminator,
    gen_opt: AdamState,
    disc_opt: AdamState,
    projector: Option<Projector>,
    step: usize,
    epoch: usize,
    generator_frozen: bool,
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = crate::seeded_rng(mix_seed(cfg.seed, 0xC0DE));
        let gen = Generator::new(cfg.generator_config(), cfg.model.generator_prefix(), &mut rng)?;
        let disc = Discriminator::new(cfg.discriminator_config(), cfg.model.discriminator_prefix(), &mut rng)?;
        Self::from_parts(cfg, gen, disc)
    }

    /// Wraps existing networks (fresh optimizer state).
    pub fn from_parts(cfg: TrainConfig, gen: Generator, disc: Discriminator) -> Result<Self> {
        cfg.validate()?;
        let gen_opt = AdamState::with_betas(
            cfg.lr_generator,
            cfg.beta1,
            AdamState::BETA2,
            AdamState::EPS,
            gen.params.shapes(),
        );
        let disc_opt = AdamState::with_betas(
            cfg.lr_discriminator,
            cfg.beta1,
            AdamState::BETA2,
            AdamState::EPS,
            disc.params.shapes(),
        );
        let projector = (cfg.model == ModelKind::PrGan).then(|| Projector::new(gen.cfg.extent));
        Ok(Trainer {
            cfg,
            gen,
            disc,
            gen_opt,
            disc_opt,
            projector,
            step: 0,
            epoch: 0,
            generator_frozen: false,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Stops generator updates (discriminator-only training).
    pub fn freeze_generator(&mut self, frozen: bool) {
        self.generator_frozen = frozen;
    }

    /// One adversarial step on `real` using the given latent codes.
    pub fn gan_step(&mut self, real: &NdValue, codes: &[LatentCode]) -> Result<LogEntry> {
        let n = real.shape()[0];
        if codes.len() != n {
            return Err(Error::invalid("gan_step", format!("{} codes for {n} real samples", codes.len())));
        }
        let mut g = Graph::new();
        let gen_vars = if self.generator_frozen {
            self.gen.params.bind_frozen(&mut g)
        } else {
            self.gen.params.bind(&mut g)
        };
        let z = g.constant(code_batch(codes, self.gen.cfg.code_dim)?);
        let generated = self.gen.forward(&mut g, &gen_vars, z, true)?;
        let fake = match self.cfg.model {
            ModelKind::PrGan => {
                let views: Vec<Viewpoint> = codes.iter().map(viewpoint_select).collect();
                self.projector
                    .as_ref()
                    .expect("projector exists for prgan")
                    .project_views(&mut g, generated, &views)?
            }
            ModelKind::Gan2d => {
                let d = self.gen.cfg.extent;
                g.reshape(generated, &[n, d, d])?
            }
            ModelKind::Gan3d => generated,
        };

        let disc_stats: Vec<RunningStats> = self.disc.bn.clone();
        let disc_vars = self.disc.params.bind(&mut g);
        let real_var = g.constant(real.clone());
        let p_real = self.disc.forward(&mut g, &disc_vars, real_var, true)?.prob;
        let fake_detached = g.constant(g.value(fake).clone());
        let p_fake = self.disc.forward(&mut g, &disc_vars, fake_detached, true)?.prob;
        let p_fake_g = self.disc.forward(&mut g, &disc_vars, fake, true)?.prob;

        let correct = g.value(p_real).data().iter().filter(|&&p| p >= 0.5).count()
            + g.value(p_fake).data().iter().filter(|&&p| p < 0.5).count();
        let accuracy = correct as f32 / (2 * n) as f32;

        let loss_real = g.bce(p_real, &vec![1.0; n])?;
        let loss_fake = g.bce(p_fake, &vec![0.0; n])?;
        let d_loss = g.add(loss_real, loss_fake)?;
        let g_loss = if self.cfg.saturating_generator_loss {
            let l = g.bce(p_fake_g, &vec![0.0; n])?;
            g.scale(l, -1.0)
        } else {
            g.bce(p_fake_g, &vec![1.0; n])?
        };
        let (d_val, g_val) = (g.value(d_loss).data()[0], g.value(g_loss).data()[0]);
        if !d_val.is_finite() {
            return Err(Error::NonFinite { what: "discriminator loss", step: self.step });
        }
        if !g_val.is_finite() {
            return Err(Error::NonFinite { what: "generator loss", step: self.step });
        }

        let skipped = accuracy > self.cfg.skip_threshold;
        if skipped {
            self.disc.bn = disc_stats;
        } else {
            g.backward(d_loss)?;
            let grads = ParamSet::grads(&mut g, &disc_vars);
            self.disc_opt.step(self.disc.params.values_mut(), &grads)?;
            g.zero_grad();
        }
        if !self.generator_frozen {
            g.backward(g_loss)?;
            let grads = ParamSet::grads(&mut g, &gen_vars);
            if grads.iter().any(|t| !t.all_finite()) {
                return Err(Error::NonFinite { what: "generator gradient", step: self.step });
            }
            self.gen_opt.step(self.gen.params.values_mut(), &grads)?;
        }
        let entry = LogEntry {
            step: self.step,
            d_accuracy: accuracy,
            d_loss: d_val,
            g_loss: g_val,
            skipped,
        };
        self.step += 1;
        Ok(entry)
    }

    /// One pass over shuffled minibatches; a trailing partial batch is dropped
    /// unless it is the only batch.
    pub fn train_epoch(&mut self, data: &TrainingData, mut on_step: impl FnMut(&LogEntry)) -> Result<TrainLog> {
        if data.is_empty() {
            return Err(Error::invalid("train", "empty dataset"));
        }
        data.check_model(self.cfg.model)?;
        let mut rng = crate::seeded_rng(mix_seed(self.cfg.seed, 1 + self.epoch as u64));
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let bs = self.cfg.batch_size.min(data.len());
        let mut log = Vec::new();
        for chunk in order.chunks(bs) {
            if chunk.len() < bs || chunk.len() < 2 {
                continue;
            }
            let real = data.batch(chunk)?;
            let codes: Vec<LatentCode> = (0..chunk.len()).map(|_| LatentCode::sample(&mut rng)).collect();
            let entry = self.gan_step(&real, &codes)?;
            on_step(&entry);
            log.push(entry);
        }
        self.epoch += 1;
        Ok(log)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.gen.write_to(&mut ck);
        self.disc.write_to(&mut ck);
        write_adam("opt/gen", &self.gen_opt, &self.gen.params, &mut ck);
        write_adam("opt/disc", &self.disc_opt, &self.disc.params, &mut ck);
        ck.push("train/step", NdValue::scalar(self.step as f32));
        ck.push("train/epoch", NdValue::scalar(self.epoch as f32));
        ck
    }

    /// Restores networks, optimizer moments and counters.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        self.gen.read_from(ck)?;
        self.disc.read_from(ck)?;
        read_adam("opt/gen", &mut self.gen_opt, &self.gen.params, ck)?;
        read_adam("opt/disc", &mut self.disc_opt, &self.disc.params, ck)?;
        self.step = ck.require("train/step")?.data()[0] as usize;
        self.epoch = ck.require("train/epoch")?.data()[0] as usize;
        Ok(())
    }
}

fn write_adam(prefix: &str, opt: &AdamState, params: &ParamSet, ck: &mut Checkpoint) {
    let (m, v) = opt.moments();
    for ((name, m), v) in params.names().iter().zip(m).zip(v) {
        ck.push(format!("{prefix}/{name}/m"), m.clone());
        ck.push(format!("{prefix}/{name}/v"), v.clone());
    }
    ck.push(format!("{prefix}/step"), NdValue::scalar(opt.step_count() as f32));
}

fn read_adam(prefix: &str, opt: &mut AdamState, params: &ParamSet, ck: &Checkpoint) -> Result<()> {
    let mut m = Vec::new();
    let mut v = Vec::new();
    for name in params.names() {
        m.push(ck.require(&format!("{prefix}/{name}/m"))?.clone());
        v.push(ck.require(&format!("{prefix}/{name}/v"))?.clone());
    }
    let step = ck.require(&format!("{prefix}/step"))?.data()[0] as u64;
    opt.restore(step, m, v)
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("checkpoint_e{epoch:05}.ckpt"))
}

/// Most recent `checkpoint_eNNNNN.ckpt` in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(num) = name.strip_prefix("checkpoint_e").and_then(|r| r.strip_suffix(".ckpt")) else {
            continue;
        };
        if let Ok(e) = num.parse::<usize>() {
            if best.as_ref().is_none_or(|(b, _)| e > *b) {
                best = Some((e, path));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Runs `cfg.epochs` epochs (continuing from the trainer's current epoch).
///
/// With an output directory, checkpoints are written every
/// `checkpoint_every` epochs and after the last one. A non-finite loss aborts
/// the run; checkpoints already on disk are kept.
pub fn train(
    trainer: &mut Trainer,
    data: &TrainingData,
    out_dir: Option<&Path>,
    mut on_step: impl FnMut(&LogEntry),
) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(Error::invalid("train", "empty dataset"));
    }
    data.check_model(trainer.cfg.model)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut log = Vec::new();
    while trainer.epoch < trainer.cfg.epochs {
        log.extend(trainer.train_epoch(data, &mut on_step)?);
        if let Some(dir) = out_dir {
            let every = trainer.cfg.checkpoint_every;
            let last = trainer.epoch == trainer.cfg.epochs;
            if last || (every > 0 && trainer.epoch.is_multiple_of(every)) {
                trainer.to_checkpoint().save(&checkpoint_path(dir, trainer.epoch))?;
            }
        }
    }
    Ok(log)
}
