use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facenormal::config::{load_config, LoadedConfig, Precision, Stage, TrainConfig, DEFAULT_SEED};
use facenormal::eval::{
    angular_error_map, compute_metrics, render_shading_suite, save_error_map, DEFAULT_SHADING_LIGHTS,
};
use facenormal::nn::ArchProfile;
use facenormal::synth::codec::save_gray_png;
use facenormal::synth::{
    build_dataset, decode_normal_png, encode_normal_png, load_image_png, load_split, NormalMap, Split, SynthProfile,
};
use facenormal::train::{
    image_mask, load_checkpoint, run_coarse, run_refine, Checkpoint, CoarseTrainer, Pipeline, RefineTrainer,
    RunOptions, TrainSet,
};
use facenormal::{DType, Error, Result, Scalar};

const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "facenormal", version, about = "Coarse-to-fine face normal estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic image / normal-map pairs and a train/test manifest.
    GenSynth(GenSynth),
    /// Train the coarse predictor (stage 1).
    TrainCoarse(TrainCoarse),
    /// Train the refinement network on a frozen coarse predictor (stage 2).
    TrainRefine(TrainRefine),
    /// Predict coarse and refined normal maps for images.
    Infer(Infer),
    /// Angular-error metrics of predicted against ground-truth normal maps.
    Eval(Eval),
    /// Render a normal map under a suite of directional lights.
    RenderShading(RenderShading),
    /// Render per-pixel angular error maps.
    RenderError(RenderError),
}

#[derive(Debug, Args)]
struct GenSynth {
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Fraction of scenes in the training split.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Image size comes from the profile resolution.
    #[arg(long, default_value = "desk")]
    profile: String,
}

#[derive(Debug, Args)]
struct TrainOpts {
    /// Dataset directory written by gen-synth.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed (default 42).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    precision: Option<Precision>,
    /// Continue from a checkpoint of the same stage.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Progress line every N iterations (0 disables).
    #[arg(long, default_value_t = 100)]
    log_every: u64,
}

#[derive(Debug, Args)]
struct TrainCoarse {
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Debug, Args)]
struct TrainRefine {
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long)]
    cp_checkpoint: PathBuf,
}

#[derive(Debug, Args)]
struct Infer {
    /// An image PNG or a directory of `<id>_image.png` files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    cp_checkpoint: PathBuf,
    #[arg(long)]
    nr_checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fails if the checkpoints were trained with another profile.
    #[arg(long)]
    profile: Option<String>,
    /// Fails if the checkpoints hold another precision.
    #[arg(long)]
    precision: Option<Precision>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct Eval {
    /// Predicted normal map PNG or directory of `<id>_normal.png` files.
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth, matched to predictions by file name.
    #[arg(long)]
    gt: PathBuf,
    /// Metrics CSV.
    #[arg(long)]
    report: PathBuf,
    /// Directory for the run manifest; defaults to the report's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RenderShading {
    /// Normal map PNG or directory of `<id>_normal.png` files.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SHADING_LIGHTS)]
    lights: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RenderError {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

/// `run_manifest.txt`: what produced the contents of an output directory.
struct RunManifest {
    lines: Vec<(String, String)>,
}

impl RunManifest {
    fn new(command: &str, seed: u64) -> Self {
        let argv: Vec<String> = std::env::args().skip(1).collect();
        RunManifest {
            lines: vec![
                ("command".into(), command.into()),
                ("argv".into(), argv.join(" ")),
                ("seed".into(), seed.to_string()),
                ("build".into(), BUILD_ID.into()),
            ],
        }
    }

    fn add(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    fn add_train(&mut self, cfg: &TrainConfig, profile: &ArchProfile) {
        self.add("config.lr", cfg.lr);
        self.add("config.iterations", cfg.iterations);
        self.add("config.batch_size", cfg.batch_size);
        self.add("config.lambda_dcp", cfg.lambda_dcp);
        self.add("config.checkpoint_every", cfg.checkpoint_every);
        self.add("config.adv_loss", format!("{:?}", cfg.adv_form));
        self.add("config.precision", cfg.precision);
        self.add("config.profile", &profile.name);
        self.add("config.merge", format!("{:?}", profile.merge));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        mkdir(dir)?;
        let mut s = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        let path = dir.join("run_manifest.txt");
        fs::write(&path, s).map_err(|e| io_err(&path, e))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Files in `path` ending in `suffix`, sorted; a file path is returned as is.
fn list_files(path: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| io_err(path, e))? {
        let p = entry.map_err(|e| io_err(path, e))?.path();
        if p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix))
        {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Invalid(format!("no *{suffix} files in {}", path.display())));
    }
    Ok(out)
}

fn file_name(p: &Path) -> &str {
    p.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

fn stem_id<'a>(p: &'a Path, suffix: &str) -> &'a str {
    let n = file_name(p);
    n.strip_suffix(suffix).or_else(|| n.strip_suffix(".png")).unwrap_or(n)
}

/// Prediction / ground-truth pairs matched by file name.
fn paired_maps(pred: &Path, gt: &Path) -> Result<Vec<(String, NormalMap, NormalMap)>> {
    let gts = list_files(gt, "_normal.png")?;
    let mut out = Vec::new();
    if pred.is_file() {
        if gts.len() != 1 && !gt.is_file() {
            return Err(Error::Invalid(
                "a single prediction needs a single ground-truth file".into(),
            ));
        }
        out.push((
            stem_id(pred, "_normal.png").to_string(),
            decode_normal_png(pred)?,
            decode_normal_png(&gts[0])?,
        ));
        return Ok(out);
    }
    for g in gts {
        let p = pred.join(file_name(&g));
        if !p.exists() {
            return Err(Error::Invalid(format!(
                "no prediction {} for {}",
                p.display(),
                g.display()
            )));
        }
        out.push((
            stem_id(&g, "_normal.png").to_string(),
            decode_normal_png(&p)?,
            decode_normal_png(&g)?,
        ));
    }
    Ok(out)
}

fn gen_synth(a: &GenSynth) -> Result<()> {
    let prof = ArchProfile::by_name(&a.profile)?;
    let synth = SynthProfile::with_size(prof.resolution);
    let manifest = build_dataset(&a.out, a.count, a.seed, a.split, &synth)?;
    let mut m = RunManifest::new("gen-synth", a.seed);
    m.add("count", a.count);
    m.add("split", a.split);
    m.add("size", synth.size);
    m.write(&a.out)?;
    let train = manifest.entries.iter().filter(|e| e.split == Split::Train).count();
    println!(
        "wrote {} pairs ({train} train, {} test) to {}",
        a.count,
        a.count - train,
        a.out.display()
    );
    Ok(())
}

fn resolve_config(o: &TrainOpts, stage: Stage) -> Result<LoadedConfig> {
    let mut c = match &o.config {
        Some(p) => load_config(p, stage)?,
        None => LoadedConfig {
            train: TrainConfig::new(stage),
            profile: ArchProfile::desk(),
        },
    };
    if let Some(s) = o.seed {
        c.train.seed = s;
    }
    if let Some(i) = o.iterations {
        c.train.iterations = i;
    }
    if let Some(p) = &o.profile {
        let merge = c.profile.merge;
        c.profile = ArchProfile::by_name(p)?;
        c.profile.merge = merge;
        c.train.profile = p.clone();
    }
    if let Some(p) = o.precision {
        c.train.precision = p;
    }
    c.train.validate()?;
    Ok(c)
}

fn run_opts(o: &TrainOpts) -> RunOptions {
    RunOptions {
        out_dir: Some(o.out.clone()),
        log_every: o.log_every,
    }
}

fn precision_of(ck: &Checkpoint) -> Precision {
    match ck.dtype() {
        Some(DType::F64) => Precision::F64,
        _ => Precision::F32,
    }
}

fn check_precision(ck: &Checkpoint, want: Precision) -> Result<()> {
    let have = precision_of(ck);
    if have != want {
        return Err(Error::Invalid(format!(
            "checkpoint holds {have} weights, {want} was requested"
        )));
    }
    Ok(())
}

fn train_coarse_as<T: Scalar>(o: &TrainOpts, c: LoadedConfig) -> Result<()> {
    let data = TrainSet::<T>::from_samples(&load_split(&o.data, Split::Train)?)?;
    let mut t = match &o.resume {
        Some(p) => CoarseTrainer::<T>::from_checkpoint(&load_checkpoint(p)?, c.train)?,
        None => CoarseTrainer::<T>::new(c.train, c.profile)?,
    };
    let reps = run_coarse(&mut t, &data, &run_opts(o))?;
    if let Some(r) = reps.last() {
        println!("stage 1 done: iteration {} loss {:.5}", t.iteration, r.total);
    }
    Ok(())
}

fn train_coarse(a: &TrainCoarse) -> Result<()> {
    let o = &a.opts;
    let c = resolve_config(o, Stage::Coarse)?;
    let mut m = RunManifest::new("train-coarse", c.train.seed);
    m.add("data", o.data.display());
    m.add_train(&c.train, &c.profile);
    if let Some(r) = &o.resume {
        m.add("resume", r.display());
    }
    m.write(&o.out)?;
    match c.train.precision {
        Precision::F32 => train_coarse_as::<f32>(o, c),
        Precision::F64 => train_coarse_as::<f64>(o, c),
    }
}

fn train_refine_as<T: Scalar>(o: &TrainOpts, c: LoadedConfig, cp: &Checkpoint) -> Result<()> {
    let data = TrainSet::<T>::from_samples(&load_split(&o.data, Split::Train)?)?;
    let mut t = match &o.resume {
        Some(p) => RefineTrainer::<T>::from_checkpoint(&load_checkpoint(p)?, c.train, cp)?,
        None => RefineTrainer::<T>::new(c.train, cp)?,
    };
    if o.profile.is_some() && t.profile != c.profile {
        return Err(facenormal::error::CheckpointError::Mismatch(format!(
            "coarse checkpoint uses profile `{}`, configured `{}`",
            t.profile.name, c.profile.name
        ))
        .into());
    }
    let reps = run_refine(&mut t, &data, &run_opts(o))?;
    if let Some(r) = reps.last() {
        println!("stage 2 done: iteration {} loss {:.5}", t.iteration, r.total);
    }
    Ok(())
}

fn train_refine(a: &TrainRefine) -> Result<()> {
    let o = &a.opts;
    let mut c = resolve_config(o, Stage::Refine)?;
    let cp = load_checkpoint(&a.cp_checkpoint)?;
    if o.precision.is_none() && o.config.is_none() {
        c.train.precision = precision_of(&cp);
    }
    check_precision(&cp, c.train.precision)?;
    let mut m = RunManifest::new("train-refine", c.train.seed);
    m.add("data", o.data.display());
    m.add("cp_checkpoint", a.cp_checkpoint.display());
    m.add_train(&c.train, &c.profile);
    if let Some(r) = &o.resume {
        m.add("resume", r.display());
    }
    m.write(&o.out)?;
    match c.train.precision {
        Precision::F32 => train_refine_as::<f32>(o, c, &cp),
        Precision::F64 => train_refine_as::<f64>(o, c, &cp),
    }
}

fn infer_as<T: Scalar>(a: &Infer, cp: &Checkpoint, nr: &Checkpoint, m: &RunManifest) -> Result<usize> {
    let expected = a.profile.as_deref().map(ArchProfile::by_name).transpose()?;
    let pipe = Pipeline::<T>::load(cp, nr, expected.as_ref())?;
    let files = list_files(&a.data, "_image.png")?;
    m.write(&a.out)?;
    let (rdir, ndir) = (a.out.join("R"), a.out.join("N"));
    mkdir(&rdir)?;
    mkdir(&ndir)?;
    for f in &files {
        let img = load_image_png(f)?;
        if (img.width, img.height) != (pipe.profile.resolution, pipe.profile.resolution) {
            return Err(Error::Invalid(format!(
                "{} is {}x{}, the model expects {r}x{r}",
                f.display(),
                img.width,
                img.height,
                r = pipe.profile.resolution
            )));
        }
        let (r, n) = pipe.infer(&img, &image_mask(&img))?;
        let name = format!("{}_normal.png", stem_id(f, "_image.png"));
        encode_normal_png(&r, rdir.join(&name))?;
        encode_normal_png(&n, ndir.join(&name))?;
    }
    Ok(files.len())
}

fn infer(a: &Infer) -> Result<()> {
    let cp = load_checkpoint(&a.cp_checkpoint)?;
    let nr = load_checkpoint(&a.nr_checkpoint)?;
    let precision = precision_of(&cp);
    if let Some(p) = a.precision {
        check_precision(&cp, p)?;
    }
    check_precision(&nr, precision)?;
    let mut m = RunManifest::new("infer", a.seed);
    m.add("data", a.data.display());
    m.add("cp_checkpoint", a.cp_checkpoint.display());
    m.add("nr_checkpoint", a.nr_checkpoint.display());
    m.add("precision", precision);
    let n = match precision {
        Precision::F32 => infer_as::<f32>(a, &cp, &nr, &m)?,
        Precision::F64 => infer_as::<f64>(a, &cp, &nr, &m)?,
    };
    println!("wrote {n} coarse (R/) and refined (N/) maps to {}", a.out.display());
    Ok(())
}

fn eval(a: &Eval) -> Result<()> {
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.report.parent().map(Path::to_path_buf).unwrap_or_default());
    let out = if out.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        out
    };
    let pairs = paired_maps(&a.pred, &a.gt)?;
    let maps = pairs
        .iter()
        .map(|(_, p, g)| angular_error_map(p, g))
        .collect::<Result<Vec<_>>>()?;
    let report = compute_metrics(&maps)?;
    let mut m = RunManifest::new("eval", a.seed);
    m.add("pred", a.pred.display());
    m.add("gt", a.gt.display());
    m.add("report", a.report.display());
    m.add("maps", pairs.len());
    m.write(&out)?;
    report.write_csv(&a.report)?;
    println!("{report}");
    Ok(())
}

fn render_shading(a: &RenderShading) -> Result<()> {
    let files = list_files(&a.pred, "_normal.png")?;
    let mut m = RunManifest::new("render-shading", a.seed);
    m.add("pred", a.pred.display());
    m.add("lights", a.lights);
    m.write(&a.out)?;
    for f in &files {
        let nm = decode_normal_png(f)?;
        let id = stem_id(f, "_normal.png");
        for (i, img) in render_shading_suite(&nm, a.lights)?.iter().enumerate() {
            let gray: Vec<f64> = img.pixels.iter().map(|p| p[0]).collect();
            save_gray_png(img.width, img.height, &gray, a.out.join(format!("{id}_light{i}.png")))?;
        }
    }
    println!("rendered {} maps under {} lights", files.len(), a.lights);
    Ok(())
}

fn render_error(a: &RenderError) -> Result<()> {
    let pairs = paired_maps(&a.pred, &a.gt)?;
    let mut m = RunManifest::new("render-error", a.seed);
    m.add("pred", a.pred.display());
    m.add("gt", a.gt.display());
    m.write(&a.out)?;
    for (id, p, g) in &pairs {
        save_error_map(&angular_error_map(p, g)?, &a.out.join(format!("{id}_error.png")))?;
    }
    println!("rendered {} error maps", pairs.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::TrainCoarse(a) => train_coarse(a),
        Command::TrainRefine(a) => train_refine(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::RenderShading(a) => render_shading(a),
        Command::RenderError(a) => render_error(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
