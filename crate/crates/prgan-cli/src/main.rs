//! `prgan` command-line interface.

mod outputs;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prgan::dataset::{self, Family, ShapeRecipe};
use prgan::evaluation::{self, BinaryArray, Estimator, KernelForm, MmdConfig};
use prgan::inference::{self, EncoderParams, EncoderTraining};
use prgan::io::{pgm, voxfile, Checkpoint};
use prgan::networks::{view_bin, Generator, LatentCode, LATENT_DIM};
use prgan::projection::{project_view, Silhouette, Viewpoint, VoxelGrid};
use prgan::training::{self, LogEntry, ModelKind, TrainConfig, Trainer, TrainingData};

use outputs::Outputs;

#[derive(Parser)]
#[command(name = "prgan", version, about = "3D shape generation from 2D silhouettes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a procedural silhouette dataset.
    GenData(GenDataArgs),
    /// Train PrGAN or a baseline.
    Train(TrainArgs),
    /// Sample voxel grids from a trained generator.
    Sample(SampleArgs),
    /// Project a voxel grid from canonical views.
    Project(ProjectArgs),
    /// Write a three-view contact sheet of a voxel grid.
    Render(RenderArgs),
    /// MMD between two sample directories.
    EvalMmd(EvalMmdArgs),
    /// Fit the image encoder on pairs synthesized by a generator.
    TrainEncoder(TrainEncoderArgs),
    /// Predict a latent code and view bin for a silhouette.
    Encode(EncodeArgs),
    /// Generate grids along a line between two latent codes.
    Interpolate(InterpolateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Shape family; repeat (or separate with commas) to pool several.
    #[arg(long, value_delimiter = ',', required = true)]
    family: Vec<Family>,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 8)]
    views: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write 32³ voxel grids (needed by gan3d).
    #[arg(long)]
    voxels: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from the latest checkpoint in --out.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 128)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Canonical view bin (0-7); repeatable.
    #[arg(long, required = true)]
    view: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalMmdArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Defaults to 1e-3 for images and 1e-2 for voxels.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelForm,
    #[arg(long, default_value = "unbiased")]
    estimator: Estimator,
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long, default_value_t = evaluation::PRGAN_THRESHOLD)]
    threshold: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainEncoderArgs {
    #[arg(long)]
    generator: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pairs: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f32,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    encoder: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Write the code here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InterpolateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    /// Code file for the first endpoint (random from --seed if absent).
    #[arg(long)]
    from: Option<PathBuf>,
    #[arg(long)]
    to: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|()| run(cli.command)) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PRGAN_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().with_context(|| format!("PRGAN_THREADS={v:?} is not a count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Sample(a) => sample(a),
        Command::Project(a) => project(a),
        Command::Render(a) => render(a),
        Command::EvalMmd(a) => eval_mmd(a),
        Command::TrainEncoder(a) => train_encoder(a),
        Command::Encode(a) => encode(a),
        Command::Interpolate(a) => interpolate(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut families = a.family.clone();
    families.dedup();
    let (recipes, manifest) = if families.len() == 1 {
        let recipes = ShapeRecipe::batch(families[0], a.count, a.seed);
        let manifest = dataset::make_dataset(&recipes, a.views, a.seed)?;
        (recipes, manifest)
    } else {
        let sets: Vec<Vec<ShapeRecipe>> = families
            .iter()
            .enumerate()
            .map(|(i, &f)| ShapeRecipe::batch(f, a.count, a.seed.wrapping_add(i as u64 * 1_000_003)))
            .collect();
        dataset::mixed_category(&sets, a.views, a.seed)?
    };
    let mut out = Outputs::new();
    out.dir(&a.out)?;
    out.dir(&a.out.join("images"))?;
    for e in &manifest.entries {
        out.file(&a.out.join(&e.path));
    }
    out.file(&a.out.join(dataset::MANIFEST_FILE));
    dataset::write_dataset(&a.out, &recipes, &manifest)?;
    if a.voxels {
        out.dir(&a.out.join("voxels"))?;
        for id in 0..recipes.len() {
            out.file(&a.out.join(dataset::voxel_path(id)));
        }
        out.file(&a.out.join(dataset::VOXEL_MANIFEST_FILE));
        dataset::write_voxels(&a.out, &recipes, 32)?;
    }
    out.commit();
    eprintln!("wrote {} images to {}", manifest.len(), a.out.display());
    Ok(())
}

fn load_training_data(dir: &Path, model: ModelKind) -> Result<TrainingData> {
    if model.needs_voxels() {
        if !dir.join(dataset::VOXEL_MANIFEST_FILE).exists() {
            bail!(
                "gan3d trains on voxel grids, but {} has no {} (generate one with gen-data --voxels)",
                dir.display(),
                dataset::VOXEL_MANIFEST_FILE
            );
        }
        Ok(TrainingData::Voxels(dataset::load_voxels(dir)?))
    } else {
        let (_, images) = dataset::load_images(dir)
            .with_context(|| format!("loading dataset from {}", dir.display()))?;
        Ok(TrainingData::Images(images))
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let saved_config = a.out.join("config.txt");
    let mut cfg = match (&a.config, a.resume && saved_config.exists()) {
        (Some(p), _) => TrainConfig::parse(&read_text(p)?).with_context(|| format!("config {}", p.display()))?,
        (None, true) => TrainConfig::parse(&read_text(&saved_config)?)?,
        (None, false) => TrainConfig::default(),
    };
    if let Some(m) = a.model {
        cfg.model = m;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    cfg.validate()?;
    let data = load_training_data(&a.data, cfg.model)?;

    let mut trainer = Trainer::new(cfg.clone())?;
    let log_path = a.out.join("train.log");
    let mut kept_log = String::new();
    if a.resume {
        match training::latest_checkpoint(&a.out)? {
            Some(p) => {
                let ck = Checkpoint::load(&p).with_context(|| format!("checkpoint {}", p.display()))?;
                trainer.restore(&ck)?;
                eprintln!("resuming from {} (epoch {})", p.display(), trainer.epoch());
                if log_path.exists() {
                    for line in read_text(&log_path)?.lines() {
                        if LogEntry::parse_line(line).is_ok_and(|e| e.step < trainer.step()) {
                            kept_log.push_str(line);
                            kept_log.push('\n');
                        }
                    }
                }
            }
            None => eprintln!("no checkpoint in {}; starting fresh", a.out.display()),
        }
    }

    let mut out = Outputs::new();
    out.dir(&a.out)?;
    out.file(&saved_config);
    out.file(&log_path);
    for e in trainer.epoch() + 1..=cfg.epochs {
        out.file(&training::checkpoint_path(&a.out, e));
    }
    prgan::io::write_atomic(&saved_config, cfg.to_text().as_bytes())?;
    let mut log = std::io::BufWriter::new(fs::File::create(&log_path)?);
    log.write_all(kept_log.as_bytes())?;
    let mut io_err = None;
    let result = training::train(&mut trainer, &data, Some(&a.out), |e| {
        if io_err.is_none() {
            io_err = writeln!(log, "{}", e.to_line()).and_then(|()| log.flush()).err();
        }
    });
    result?;
    if let Some(e) = io_err {
        return Err(e).context("writing train.log");
    }
    out.commit();
    eprintln!("trained {} steps; checkpoints in {}", trainer.step(), a.out.display());
    Ok(())
}

fn load_generator(path: &Path) -> Result<Generator> {
    let ck = Checkpoint::load(path).with_context(|| format!("checkpoint {}", path.display()))?;
    let gen = Generator::from_checkpoint(&ck, "gen")
        .with_context(|| format!("{} holds no voxel generator", path.display()))?;
    Ok(gen)
}

fn sample(a: SampleArgs) -> Result<()> {
    let mut gen = load_generator(&a.checkpoint)?;
    let mut rng = prgan::seeded_rng(a.seed);
    let codes: Vec<LatentCode> = (0..a.count).map(|_| LatentCode::sample(&mut rng)).collect();
    let mut out = Outputs::new();
    out.dir(&a.out)?;
    let mut index = 0;
    for chunk in codes.chunks(32) {
        for grid in inference::generator_forward(&mut gen, chunk)? {
            voxfile::save(&grid, out.file(&a.out.join(format!("sample_{index:05}.vox"))))?;
            index += 1;
        }
    }
    out.commit();
    eprintln!("wrote {index} grids to {}", a.out.display());
    Ok(())
}

fn load_grid(path: &Path) -> Result<VoxelGrid> {
    voxfile::load(path).with_context(|| format!("reading {}", path.display()))
}

fn project(a: ProjectArgs) -> Result<()> {
    let grid = load_grid(&a.input)?;
    if let Some(bad) = a.view.iter().find(|&&v| v >= 8) {
        bail!("view {bad} out of range 0-7");
    }
    let mut out = Outputs::new();
    out.dir(&a.out)?;
    for &v in &a.view {
        let img = project_view(&grid, Viewpoint::canonical(v));
        pgm::save(&pgm::GrayImage::from_silhouette(&img), out.file(&a.out.join(format!("view_{v}.pgm"))))?;
    }
    out.commit();
    Ok(())
}

/// Front, diagonal and side views side by side.
fn contact_sheet(grid: &VoxelGrid) -> pgm::GrayImage {
    let d = grid.extent();
    let views: Vec<Silhouette> = [0, 1, 2]
        .iter()
        .map(|&b| project_view(grid, Viewpoint::canonical(b)))
        .collect();
    let mut data = vec![0f32; 3 * d * d];
    for (c, img) in views.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                data[i * 3 * d + c * d + j] = img.get(i, j);
            }
        }
    }
    pgm::GrayImage {
        width: 3 * d,
        height: d,
        data,
    }
}

fn render(a: RenderArgs) -> Result<()> {
    let grid = load_grid(&a.input)?;
    let mut out = Outputs::new();
    pgm::save(&contact_sheet(&grid), out.file(&a.out))?;
    out.commit();
    Ok(())
}

enum SampleSet {
    Images(Vec<Silhouette>),
    Voxels(Vec<VoxelGrid>),
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == ext) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// A dataset directory (manifest or voxel list) or a directory of `.vox` / `.pgm` files.
fn load_sample_set(dir: &Path) -> Result<SampleSet> {
    if dir.join(dataset::MANIFEST_FILE).exists() {
        return Ok(SampleSet::Images(dataset::load_images(dir)?.1));
    }
    if dir.join(dataset::VOXEL_MANIFEST_FILE).exists() {
        return Ok(SampleSet::Voxels(dataset::load_voxels(dir)?));
    }
    let vox = files_with_extension(dir, "vox")?;
    if !vox.is_empty() {
        return Ok(SampleSet::Voxels(vox.iter().map(|p| load_grid(p)).collect::<Result<_>>()?));
    }
    let pgms = files_with_extension(dir, "pgm")?;
    if !pgms.is_empty() {
        let images = pgms
            .iter()
            .map(|p| {
                pgm::load(p)
                    .and_then(|g| g.into_silhouette())
                    .with_context(|| format!("reading {}", p.display()))
            })
            .collect::<Result<_>>()?;
        return Ok(SampleSet::Images(images));
    }
    bail!("{} holds no manifest, .vox or .pgm files", dir.display())
}

fn binarize_set(set: &SampleSet, tau: f32) -> Result<Vec<BinaryArray>> {
    Ok(match set {
        SampleSet::Images(v) => v
            .iter()
            .map(|s| evaluation::binarize_silhouette(s, tau))
            .collect::<prgan::Result<_>>()?,
        SampleSet::Voxels(v) => v
            .iter()
            .map(|g| evaluation::binarize_grid(g, tau))
            .collect::<prgan::Result<_>>()?,
    })
}

fn eval_mmd(a: EvalMmdArgs) -> Result<()> {
    let set_a = load_sample_set(&a.a)?;
    let set_b = load_sample_set(&a.b)?;
    let base = match (&set_a, &set_b) {
        (SampleSet::Images(_), SampleSet::Images(_)) => MmdConfig::images(),
        (SampleSet::Voxels(_), SampleSet::Voxels(_)) => MmdConfig::voxels(),
        _ => bail!("cannot compare images against voxel grids"),
    };
    let cfg = MmdConfig {
        bandwidth: a.bandwidth.unwrap_or(base.bandwidth),
        kernel: a.kernel,
        estimator: a.estimator,
        samples: a.samples,
        threshold: a.threshold,
    };
    cfg.validate()?;
    let bin_a = evaluation::draw_samples(&binarize_set(&set_a, cfg.threshold)?, cfg.samples, a.seed);
    let bin_b = evaluation::draw_samples(&binarize_set(&set_b, cfg.threshold)?, cfg.samples, a.seed.wrapping_add(1));
    let value = evaluation::mmd(&bin_a, &bin_b, &cfg)?;
    println!("{}", evaluation::mmd_line(value, bin_a.len(), bin_b.len(), cfg.bandwidth));
    Ok(())
}

fn train_encoder(a: TrainEncoderArgs) -> Result<()> {
    let gen = load_generator(&a.generator)?;
    let pairs = inference::synthesize_pairs(&gen, a.pairs, a.seed)?;
    let opts = EncoderTraining {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let (enc, history) = inference::train_encoder(&pairs, &opts)?;
    for (e, loss) in history.iter().enumerate() {
        eprintln!("epoch {e} loss {loss:.6}");
    }
    let mut ck = Checkpoint::new();
    enc.write_to(&mut ck);
    let mut out = Outputs::new();
    ck.save(out.file(&a.out))?;
    out.commit();
    Ok(())
}

fn code_text(z: &LatentCode) -> String {
    let mut s = String::new();
    for v in z.values() {
        s.push_str(&format!("{v}\n"));
    }
    s.push_str(&format!("view {}\n", view_bin(z.view_part())));
    s
}

/// Reads the first 201 numeric lines of a code file; a trailing `view` line is ignored.
fn read_code(path: &Path) -> Result<LatentCode> {
    let text = read_text(path)?;
    let mut values = Vec::with_capacity(LATENT_DIM);
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if !t.is_empty() && !t.starts_with("view") && values.len() < LATENT_DIM {
            let v: f32 = t
                .parse()
                .with_context(|| format!("{}: malformed code value at byte offset {offset}", path.display()))?;
            values.push(v);
        }
        offset += line.len();
    }
    LatentCode::new(values).with_context(|| format!("code file {}", path.display()))
}

fn encode(a: EncodeArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.encoder).with_context(|| format!("checkpoint {}", a.encoder.display()))?;
    let mut enc = EncoderParams::new(&mut prgan::seeded_rng(0));
    enc.read_from(&ck)?;
    let img = pgm::load(&a.input)
        .and_then(|g| g.into_silhouette())
        .with_context(|| format!("reading {}", a.input.display()))?;
    let z = enc.encode(&img)?;
    let text = code_text(&z);
    match a.out {
        Some(p) => {
            let mut out = Outputs::new();
            prgan::io::write_atomic(out.file(&p), text.as_bytes())?;
            out.commit();
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn interpolate(a: InterpolateArgs) -> Result<()> {
    let mut gen = load_generator(&a.checkpoint)?;
    let mut rng = prgan::seeded_rng(a.seed);
    let za = match &a.from {
        Some(p) => read_code(p)?,
        None => LatentCode::sample(&mut rng),
    };
    let zb = match &a.to {
        Some(p) => read_code(p)?,
        None => LatentCode::sample(&mut rng),
    };
    let frames = inference::interpolate(&mut gen, &za, &zb, a.steps)?;
    let mut out = Outputs::new();
    out.dir(&a.out)?;
    for (i, f) in frames.iter().enumerate() {
        voxfile::save(f, out.file(&a.out.join(format!("frame_{i:03}.vox"))))?;
    }
    out.commit();
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
