//! Shape and viewpoint inference from a single silhouette, and latent
//! interpolation.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::{AdamState, Graph, Var};
use crate::error::{Error, Result};
use crate::io::Checkpoint;
use crate::networks::{viewpoint_select, view_bin, Generator, LatentCode, ParamSet, LATENT_DIM, LEAKY_SLOPE};
use crate::projection::{project_view, Silhouette, VoxelGrid};
use crate::tensor::NdValue;

pub const IMAGE_EXTENT: usize = 32;
pub const HIDDEN: usize = 512;

/// Runs a voxel generator in eval mode and splits the batch into grids.
pub fn generator_forward(gen: &mut Generator, codes: &[LatentCode]) -> Result<Vec<VoxelGrid>> {
    if gen.cfg.rank != 3 {
        return Err(Error::invalid("generator_forward", "generator does not emit voxel grids"));
    }
    if codes.is_empty() {
        return Ok(Vec::new());
    }
    let d = gen.cfg.extent;
    let out = gen.generate(codes)?;
    out.data()
        .chunks(d * d * d)
        .map(|c| VoxelGrid::new(d, c.to_vec()))
        .collect()
}

/// A silhouette and the code that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingPair {
    pub image: Silhouette,
    pub code: LatentCode,
}

const SYNTH_CHUNK: usize = 32;

/// `n` codes from `U(−1, 1)^201`, each with the projection of its generated
/// shape at its selected viewpoint.
pub fn synthesize_pairs(gen: &Generator, n: usize, seed: u64) -> Result<Vec<EncodingPair>> {
    let mut rng = crate::seeded_rng(seed);
    let codes: Vec<LatentCode> = (0..n).map(|_| LatentCode::sample(&mut rng)).collect();
    let chunks: Vec<Vec<EncodingPair>> = codes
        .par_chunks(SYNTH_CHUNK)
        .map_init(
            || gen.clone(),
            |g, chunk| {
                let grids = generator_forward(g, chunk)?;
                Ok(chunk
                    .iter()
                    .zip(grids)
                    .map(|(z, grid)| EncodingPair {
                        image: project_view(&grid, viewpoint_select(z)),
                        code: z.clone(),
                    })
                    .collect())
            },
        )
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Fully-connected encoder 1024 → 512 → 512 → 201 with leaky-ReLU hidden
/// activations and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub params: ParamSet,
}

impl EncoderParams {
    /// He-scaled normal weights, zero biases.
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let dims = [IMAGE_EXTENT * IMAGE_EXTENT, HIDDEN, HIDDEN, LATENT_DIM];
        let mut params = ParamSet::new();
        for (i, w) in dims.windows(2).enumerate() {
            let std = (2.0 / w[0] as f32).sqrt();
            params.add(format!("enc/fc{i}/w"), NdValue::randn(&[w[1], w[0]], std, rng));
            params.add(format!("enc/fc{i}/b"), NdValue::zeros(&[w[1]]));
        }
        EncoderParams { params }
    }

    /// Unclamped codes `[N, 201]` for images `[N, 1024]`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], images: Var) -> Result<Var> {
        let mut h = images;
        for (layer, pair) in vars.chunks(2).enumerate() {
            h = g.fully_connected(h, pair[0], pair[1])?;
            if layer < 2 {
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        Ok(h)
    }

    /// Predicted codes, each clamped into `[−1, 1]`.
    pub fn encode_batch(&self, images: &[Silhouette]) -> Result<Vec<LatentCode>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let x = image_batch(images)?;
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let x = g.constant(x);
        let out = self.forward(&mut g, &vars, x)?;
        g.value(out)
            .data()
            .chunks(LATENT_DIM)
            .map(|c| LatentCode::clamped(c.to_vec()))
            .collect()
    }

    pub fn encode(&self, image: &Silhouette) -> Result<LatentCode> {
        Ok(self.encode_batch(std::slice::from_ref(image))?.remove(0))
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        self.params.write_to(ckpt);
    }

    pub fn read_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.params.read_from(ckpt)
    }
}

fn image_batch(images: &[Silhouette]) -> Result<NdValue> {
    let mut data = Vec::with_capacity(images.len() * IMAGE_EXTENT * IMAGE_EXTENT);
    for img in images {
        if img.extent() != IMAGE_EXTENT {
            return Err(Error::invalid(
                "encoder",
                format!("expected {IMAGE_EXTENT}x{IMAGE_EXTENT} image, got {0}x{0}", img.extent()),
            ));
        }
        data.extend_from_slice(img.data());
    }
    NdValue::new(vec![images.len(), IMAGE_EXTENT * IMAGE_EXTENT], data)
}

fn code_targets(pairs: &[&EncodingPair]) -> Result<NdValue> {
    let mut data = Vec::with_capacity(pairs.len() * LATENT_DIM);
    for p in pairs {
        data.extend_from_slice(p.code.values());
    }
    NdValue::new(vec![pairs.len(), LATENT_DIM], data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderTraining {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EncoderTraining {
    fn default() -> Self {
        EncoderTraining {
            epochs: 10,
            lr: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Fits an encoder by minimizing the code MSE with ADAM. Returns the
/// parameters and the mean training loss of each epoch.
pub fn train_encoder(pairs: &[EncodingPair], opts: &EncoderTraining) -> Result<(EncoderParams, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::invalid("train_encoder", "no training pairs"));
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("train_encoder", "batch_size must be positive"));
    }
    let mut rng = crate::seeded_rng(opts.seed);
    let mut enc = EncoderParams::new(&mut rng);
    let mut opt = AdamState::new(opts.lr, enc.params.shapes());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<&EncodingPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let images: Vec<Silhouette> = batch.iter().map(|p| p.image.clone()).collect();
            let mut g = Graph::new();
            let vars = enc.params.bind(&mut g);
            let x = g.constant(image_batch(&images)?);
            let pred = enc.forward(&mut g, &vars, x)?;
            let loss = g.mse(pred, &code_targets(&batch)?)?;
            let l = g.value(loss).data()[0];
            if !l.is_finite() {
                return Err(Error::NonFinite { what: "encoder loss", step: history.len() });
            }
            total += l as f64 * chunk.len() as f64;
            g.backward(loss)?;
            let grads = ParamSet::grads(&mut g, &vars);
            opt.step(enc.params.values_mut(), &grads)?;
        }
        history.push(total / pairs.len() as f64);
    }
    Ok((enc, history))
}

/// Held-out metrics: fraction of matching view bins and the mean squared
/// error per code coordinate.
pub fn evaluate_encoder(enc: &EncoderParams, pairs: &[EncodingPair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::invalid("evaluate_encoder", "no pairs"));
    }
    let images: Vec<Silhouette> = pairs.iter().map(|p| p.image.clone()).collect();
    let codes = enc.encode_batch(&images)?;
    let mut hits = 0usize;
    let mut sq = 0.0f64;
    for (p, c) in pairs.iter().zip(&codes) {
        hits += usize::from(view_bin(p.code.view_part()) == view_bin(c.view_part()));
        sq += p
            .code
            .values()
            .iter()
            .zip(c.values())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>();
    }
    let n = pairs.len() as f64;
    Ok((hits as f64 / n, sq / (n * LATENT_DIM as f64)))
}

/// Intersection over union of the cells above `threshold`; 1 when both are empty.
pub fn iou(a: &VoxelGrid, b: &VoxelGrid, threshold: f32) -> Result<f64> {
    if a.extent() != b.extent() {
        return Err(Error::shape("iou", &[a.extent(); 3], &[b.extent(); 3]));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x > threshold, y > threshold);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Grids for `z(t) = (1 − t)·zA + t·zB` at `steps` evenly spaced `t` in
/// `[0, 1]`. Each frame is generated on its own, so the endpoints match
/// single-code generation exactly.
pub fn interpolate(gen: &mut Generator, za: &LatentCode, zb: &LatentCode, steps: usize) -> Result<Vec<VoxelGrid>> {
    if steps < 2 {
        return Err(Error::invalid("interpolate", format!("need at least 2 steps, got {steps}")));
    }
    let mut frames = Vec::with_capacity(steps);
    for s in 0..steps {
        let t = if s == steps - 1 { 1.0 } else { s as f32 / (steps - 1) as f32 };
        let z = LatentCode::lerp(za, zb, t);
        frames.extend(generator_forward(gen, std::slice::from_ref(&z))?);
    }
    Ok(frames)
}
