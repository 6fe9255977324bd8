//! Two-stage training, checkpoints and inference.
//!
//! Stage 1 trains the coarse predictor against the discriminator; stage 2
//! freezes it and trains the refinement network on its outputs.

pub mod checkpoint;

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Graph;
use crate::config::{Stage, TrainConfig};
use crate::error::{CheckpointError, Error, Result};
use crate::losses::{disc_loss, gen_loss, reconstruction, stage1_total, AdvForm, LossReport};
use crate::nn::{ArchProfile, CpNet, Discriminator, NrNet};
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamStore;
use crate::synth::{Image, NormalMap, Sample};
use crate::tensor::{DType, Scalar, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, TensorRecord, FORMAT_VERSION};
use checkpoint::{profile_from_meta, profile_meta, OptimRecord};

pub const LOSS_CSV_HEADER: &str = "iter,loss_total,loss_normal,loss_adv";

/// Training pairs converted to tensors once.
#[derive(Clone, Debug)]
pub struct TrainSet<T> {
    pub ids: Vec<String>,
    images: Vec<Tensor<T>>,
    normals: Vec<Tensor<T>>,
    masks: Vec<Vec<bool>>,
    size: (usize, usize),
}

/// One stacked mini-batch.
pub struct Batch<T> {
    pub indices: Vec<usize>,
    pub images: Tensor<T>,
    pub normals: Tensor<T>,
    pub mask: Vec<bool>,
}

fn stack<T: Scalar>(items: &[&Tensor<T>]) -> Tensor<T> {
    let mut shape = items[0].shape().to_vec();
    shape[0] = items.len();
    let data = items.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(shape, data).expect("items share a shape")
}

impl<T: Scalar> TrainSet<T> {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Invalid("training set is empty".into()));
        };
        let size = (first.image.width, first.image.height);
        let mut set = TrainSet {
            ids: Vec::new(),
            images: Vec::new(),
            normals: Vec::new(),
            masks: Vec::new(),
            size,
        };
        for s in samples {
            if (s.image.width, s.image.height) != size || (s.normals.width, s.normals.height) != size {
                return Err(Error::Invalid(format!("sample {} is not {}x{}", s.id, size.0, size.1)));
            }
            set.ids.push(s.id.clone());
            set.images.push(s.image.to_tensor());
            set.normals.push(s.normals.to_tensor());
            set.masks.push(s.normals.mask.clone());
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn size(&self) -> (usize, usize) {
        self.size
    }

    pub fn image(&self, i: usize) -> &Tensor<T> {
        &self.images[i]
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<T> {
        let pick = |v: &[Tensor<T>]| stack(&indices.iter().map(|&i| &v[i]).collect::<Vec<_>>());
        Batch {
            indices: indices.to_vec(),
            images: pick(&self.images),
            normals: pick(&self.normals),
            mask: indices.iter().flat_map(|&i| self.masks[i].iter().copied()).collect(),
        }
    }

    fn check_resolution(&self, prof: &ArchProfile) -> Result<()> {
        if self.size != (prof.resolution, prof.resolution) {
            return Err(Error::Invalid(format!(
                "data is {}x{} but profile `{}` expects {r}x{r}",
                self.size.0,
                self.size.1,
                prof.name,
                r = prof.resolution
            )));
        }
        Ok(())
    }
}

fn sample_batch(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Vec<usize> {
    (0..b).map(|_| rng.gen_range(0..n)).collect()
}

fn adam_config(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    }
}

fn non_finite(iteration: u64, batch: &[usize], detail: String) -> Error {
    Error::NonFinite {
        iteration,
        batch: batch.to_vec(),
        detail,
    }
}

fn config_meta<T: Scalar>(cfg: &TrainConfig, prof: &ArchProfile) -> Vec<(String, String)> {
    let adv = match cfg.adv_form {
        AdvForm::Hinge => "hinge",
        AdvForm::NonSaturating => "non-saturating",
    };
    let precision = match T::DTYPE {
        DType::F32 => "f32",
        DType::F64 => "f64",
    };
    let mut meta = profile_meta(prof);
    for (k, v) in [
        ("seed", cfg.seed.to_string()),
        ("lr", cfg.lr.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("lambda_dcp", cfg.lambda_dcp.to_string()),
        ("adv_loss", adv.to_string()),
        ("precision", precision.to_string()),
    ] {
        meta.push((k.to_string(), v));
    }
    meta
}

/// Stage 1: coarse predictor and discriminator, alternating 1:1.
pub struct CoarseTrainer<T: Scalar> {
    pub cfg: TrainConfig,
    pub profile: ArchProfile,
    pub cp: CpNet,
    pub cp_store: ParamStore<T>,
    pub disc: Discriminator,
    pub d_store: ParamStore<T>,
    opt_g: Adam<T>,
    opt_d: Adam<T>,
    rng: ChaCha8Rng,
    pub iteration: u64,
}

impl<T: Scalar> CoarseTrainer<T> {
    pub fn new(cfg: TrainConfig, profile: ArchProfile) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut cp_store = ParamStore::new();
        let cp = CpNet::new(&mut cp_store, &profile, &mut rng)?;
        let mut d_store = ParamStore::new();
        let disc = Discriminator::new(&mut d_store, &profile, &mut rng)?;
        let opt_g = Adam::new(&cp_store, adam_config(&cfg));
        let opt_d = Adam::new(&d_store, adam_config(&cfg));
        Ok(CoarseTrainer {
            cfg: TrainConfig {
                stage: Stage::Coarse,
                ..cfg
            },
            profile,
            cp,
            cp_store,
            disc,
            d_store,
            opt_g,
            opt_d,
            rng,
            iteration: 0,
        })
    }

    /// Restores a trainer from a stage-1 checkpoint. Architecture, seed and
    /// optimizer state come from the file; `cfg` supplies the schedule.
    pub fn from_checkpoint(ck: &Checkpoint, cfg: TrainConfig) -> Result<Self> {
        ck.expect_stage(Stage::Coarse)?;
        let profile = profile_from_meta(ck)?;
        let mut t = Self::new(cfg, profile)?;
        ck.load_params(&mut t.cp_store)?;
        ck.load_params(&mut t.d_store)?;
        t.opt_g = ck.optim("cp")?.to_adam(&t.cp_store)?;
        t.opt_d = ck.optim("d")?.to_adam(&t.d_store)?;
        t.opt_g.config.lr = t.cfg.lr;
        t.opt_d.config.lr = t.cfg.lr;
        t.rng = ck.rng.restore();
        t.iteration = ck.iteration;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            version: FORMAT_VERSION,
            stage: Stage::Coarse,
            iteration: self.iteration,
            meta: config_meta::<T>(&self.cfg, &self.profile),
            tensors: Vec::new(),
            optim: vec![
                OptimRecord::from_adam("cp", &self.opt_g, &self.cp_store),
                OptimRecord::from_adam("d", &self.opt_d, &self.d_store),
            ],
            rng: RngState::capture(&self.rng),
        };
        ck.push_params(&self.cp_store);
        ck.push_params(&self.d_store);
        ck
    }

    /// One generator update, preceded by one discriminator update when the
    /// adversarial weight is non-zero.
    pub fn step(&mut self, data: &TrainSet<T>) -> Result<LossReport> {
        data.check_resolution(&self.profile)?;
        let it = self.iteration + 1;
        let idx = sample_batch(&mut self.rng, data.len(), self.cfg.batch_size);
        let batch = data.batch(&idx);
        let lambda = self.cfg.lambda_dcp;
        let form = self.cfg.adv_form;

        let mut g = Graph::new();
        let x = g.constant(batch.images);
        let pred = self.cp.forward(&mut g, &self.cp_store, x)?;
        let ln = reconstruction(&mut g, pred, &batch.normals, Some(&batch.mask))?;

        let (total, adv) = if lambda > 0.0 {
            let mut gd = Graph::new();
            let real = gd.constant(batch.normals.clone());
            let fake = gd.constant(g.value(pred).clone());
            let sr = self.disc.forward(&mut gd, &self.d_store, real)?;
            let sf = self.disc.forward(&mut gd, &self.d_store, fake)?;
            let ld = disc_loss(&mut gd, sr, sf, form);
            let ldv = gd.value(ld).data()[0];
            if !ldv.is_finite() {
                return Err(non_finite(it, &idx, format!("discriminator loss {ldv}")));
            }
            gd.backward(ld)?;
            let grads = gd.param_grads(&self.d_store);
            self.opt_d.step(&mut self.d_store, &grads);

            g.freeze(&self.d_store);
            let sf = self.disc.forward(&mut g, &self.d_store, pred)?;
            let la = gen_loss(&mut g, sf, form);
            (stage1_total(&mut g, ln, la, lambda)?, Some(la))
        } else {
            (ln, None)
        };

        let report = LossReport {
            normal: g.value(ln).data()[0].f64(),
            adv: adv.map_or(0.0, |a| g.value(a).data()[0].f64()),
            total: g.value(total).data()[0].f64(),
            lambda_dcp: lambda,
        };
        if !report.total.is_finite() {
            return Err(non_finite(
                it,
                &idx,
                format!("loss_normal {} loss_adv {}", report.normal, report.adv),
            ));
        }
        g.backward(total)?;
        let grads = g.param_grads(&self.cp_store);
        self.opt_g.step(&mut self.cp_store, &grads);
        self.iteration = it;
        Ok(report)
    }
}

/// Coarse predictor applied to one `[1, 3, h, w]` image, without gradients.
fn coarse_forward<T: Scalar>(cp: &CpNet, store: &ParamStore<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::no_grad();
    let x = g.constant(image.clone());
    let r = cp.forward(&mut g, store, x)?;
    Ok(g.value(r).clone())
}

/// Training set plus the frozen coarse prediction of every image.
pub struct RefineSet<'a, T> {
    pub data: &'a TrainSet<T>,
    exemplars: Vec<Tensor<T>>,
}

/// Stage 2: the refinement network trained on frozen coarse exemplars.
pub struct RefineTrainer<T: Scalar> {
    pub cfg: TrainConfig,
    pub profile: ArchProfile,
    pub cp: CpNet,
    pub cp_store: ParamStore<T>,
    pub nr: NrNet,
    pub nr_store: ParamStore<T>,
    opt: Adam<T>,
    rng: ChaCha8Rng,
    pub iteration: u64,
}

impl<T: Scalar> RefineTrainer<T> {
    /// Fresh refinement network on top of the coarse predictor in `cp_ck`.
    pub fn new(cfg: TrainConfig, cp_ck: &Checkpoint) -> Result<Self> {
        cfg.validate()?;
        cp_ck.expect_stage(Stage::Coarse)?;
        let profile = profile_from_meta(cp_ck)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut cp_store = ParamStore::new();
        let cp = CpNet::new(&mut cp_store, &profile, &mut rng)?;
        cp_ck.load_params(&mut cp_store)?;
        // Network init draws from a stream independent of the coarse init.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let mut nr_store = ParamStore::new();
        let nr = NrNet::new(&mut nr_store, &profile, &mut rng)?;
        let opt = Adam::new(&nr_store, adam_config(&cfg));
        Ok(RefineTrainer {
            cfg: TrainConfig {
                stage: Stage::Refine,
                ..cfg
            },
            profile,
            cp,
            cp_store,
            nr,
            nr_store,
            opt,
            rng,
            iteration: 0,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint, cfg: TrainConfig, cp_ck: &Checkpoint) -> Result<Self> {
        ck.expect_stage(Stage::Refine)?;
        let mut t = Self::new(cfg, cp_ck)?;
        let profile = profile_from_meta(ck)?;
        if profile != t.profile {
            return Err(CheckpointError::Mismatch(format!(
                "refinement checkpoint uses profile `{}`, the coarse checkpoint `{}`",
                profile.name, t.profile.name
            ))
            .into());
        }
        ck.load_params(&mut t.nr_store)?;
        t.opt = ck.optim("nr")?.to_adam(&t.nr_store)?;
        t.opt.config.lr = t.cfg.lr;
        t.rng = ck.rng.restore();
        t.iteration = ck.iteration;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            version: FORMAT_VERSION,
            stage: Stage::Refine,
            iteration: self.iteration,
            meta: config_meta::<T>(&self.cfg, &self.profile),
            tensors: Vec::new(),
            optim: vec![OptimRecord::from_adam("nr", &self.opt, &self.nr_store)],
            rng: RngState::capture(&self.rng),
        };
        ck.push_params(&self.nr_store);
        ck
    }

    /// Runs the frozen coarse predictor over every training image. Each image
    /// is processed alone, so the result does not depend on batch layout.
    pub fn prepare<'a>(&self, data: &'a TrainSet<T>) -> Result<RefineSet<'a, T>> {
        data.check_resolution(&self.profile)?;
        let exemplars = (0..data.len())
            .map(|i| coarse_forward(&self.cp, &self.cp_store, data.image(i)))
            .collect::<Result<_>>()?;
        Ok(RefineSet { data, exemplars })
    }

    pub fn step(&mut self, set: &RefineSet<'_, T>) -> Result<LossReport> {
        let it = self.iteration + 1;
        let idx = sample_batch(&mut self.rng, set.data.len(), self.cfg.batch_size);
        let batch = set.data.batch(&idx);
        let ex = stack(&idx.iter().map(|&i| &set.exemplars[i]).collect::<Vec<_>>());

        let mut g = Graph::new();
        g.freeze(&self.cp_store);
        let x = g.constant(batch.images);
        let r = g.constant(ex);
        let n = self.nr.forward(&mut g, &self.nr_store, x, r)?;
        let ln = reconstruction(&mut g, n, &batch.normals, Some(&batch.mask))?;
        let v = g.value(ln).data()[0].f64();
        if !v.is_finite() {
            return Err(non_finite(it, &idx, format!("loss_normal {v}")));
        }
        g.backward(ln)?;
        let grads = g.param_grads(&self.nr_store);
        self.opt.step(&mut self.nr_store, &grads);
        self.iteration = it;
        Ok(LossReport::stage2(v))
    }
}

/// Output locations and logging for [`run_coarse`] / [`run_refine`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Loss CSV, checkpoints and diagnostics go here; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
    /// Print a progress line to stderr every this many iterations (0: never).
    pub log_every: u64,
}

struct LossLog {
    w: Option<BufWriter<File>>,
}

impl LossLog {
    fn open(dir: Option<&Path>, stage: Stage, resume: bool) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(LossLog { w: None });
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("loss_{stage}.csv"));
        let append = resume && path.exists();
        let f = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(f);
        if !append {
            writeln!(w, "{LOSS_CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
        }
        Ok(LossLog { w: Some(w) })
    }

    fn row(&mut self, it: u64, r: &LossReport) -> Result<()> {
        if let Some(w) = self.w.as_mut() {
            writeln!(w, "{it},{},{},{}", r.total, r.normal, r.adv).map_err(|e| Error::io("loss log", e))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = self.w.as_mut() {
            w.flush().map_err(|e| Error::io("loss log", e))?;
        }
        Ok(())
    }
}

/// Writes the ids and input statistics of a batch that produced a non-finite loss.
fn dump_batch<T: Scalar>(dir: &Path, data: &TrainSet<T>, err: &Error) -> Result<()> {
    let Error::NonFinite {
        iteration,
        batch,
        detail,
    } = err
    else {
        return Ok(());
    };
    let mut s = format!("iteration {iteration}\n{detail}\n");
    for &i in batch {
        let img = data.image(i).data();
        let finite = img.iter().all(|v| v.is_finite());
        let (lo, hi) = img.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v.f64()), b.max(v.f64()))
        });
        s.push_str(&format!(
            "sample {} (index {i}): finite {finite} min {lo} max {hi}\n",
            data.ids[i]
        ));
    }
    let path = dir.join("nonfinite_batch.txt");
    fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

fn run_loop<T: Scalar>(
    stage: Stage,
    start: u64,
    cfg: &TrainConfig,
    opts: &RunOptions,
    data: &TrainSet<T>,
    mut step: impl FnMut() -> Result<LossReport>,
    checkpoint: impl Fn() -> Checkpoint,
) -> Result<Vec<LossReport>> {
    let dir = opts.out_dir.as_deref();
    let mut log = LossLog::open(dir, stage, start > 0)?;
    let mut reports = Vec::new();
    for it in start + 1..=cfg.iterations {
        let r = match step() {
            Ok(r) => r,
            Err(e) => {
                log.flush()?;
                if let Some(d) = dir {
                    dump_batch(d, data, &e)?;
                }
                return Err(e);
            }
        };
        log.row(it, &r)?;
        if opts.log_every > 0 && it % opts.log_every == 0 {
            eprintln!(
                "[{stage}] iter {it}/{} loss {:.5} (normal {:.5}, adv {:.4})",
                cfg.iterations, r.total, r.normal, r.adv
            );
        }
        reports.push(r);
        if let Some(d) = dir {
            if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it != cfg.iterations {
                log.flush()?;
                checkpoint().save(&d.join(format!("{stage}_{it:06}.ckpt")))?;
            }
        }
    }
    log.flush()?;
    if let Some(d) = dir {
        checkpoint().save(&d.join(format!("{stage}.ckpt")))?;
    }
    Ok(reports)
}

/// Trains until `cfg.iterations`, resuming from the trainer's current iteration.
pub fn run_coarse<T: Scalar>(
    t: &mut CoarseTrainer<T>,
    data: &TrainSet<T>,
    opts: &RunOptions,
) -> Result<Vec<LossReport>> {
    let cfg = t.cfg.clone();
    let start = t.iteration;
    let cell = std::cell::RefCell::new(t);
    run_loop(
        Stage::Coarse,
        start,
        &cfg,
        opts,
        data,
        || cell.borrow_mut().step(data),
        || cell.borrow().checkpoint(),
    )
}

pub fn run_refine<T: Scalar>(
    t: &mut RefineTrainer<T>,
    data: &TrainSet<T>,
    opts: &RunOptions,
) -> Result<Vec<LossReport>> {
    let cfg = t.cfg.clone();
    let start = t.iteration;
    let set = t.prepare(data)?;
    let cell = std::cell::RefCell::new(t);
    run_loop(
        Stage::Refine,
        start,
        &cfg,
        opts,
        data,
        || cell.borrow_mut().step(&set),
        || cell.borrow().checkpoint(),
    )
}

/// Stage-1 training from scratch.
pub fn train_stage1<T: Scalar>(
    cfg: TrainConfig,
    profile: ArchProfile,
    samples: &[Sample],
    opts: &RunOptions,
) -> Result<Checkpoint> {
    let data = TrainSet::<T>::from_samples(samples)?;
    let mut t = CoarseTrainer::new(cfg, profile)?;
    run_coarse(&mut t, &data, opts)?;
    Ok(t.checkpoint())
}

/// Stage-2 training from scratch on top of a stage-1 checkpoint.
pub fn train_stage2<T: Scalar>(
    cfg: TrainConfig,
    samples: &[Sample],
    cp_ck: &Checkpoint,
    opts: &RunOptions,
) -> Result<Checkpoint> {
    let data = TrainSet::<T>::from_samples(samples)?;
    let mut t = RefineTrainer::new(cfg, cp_ck)?;
    run_refine(&mut t, &data, opts)?;
    Ok(t.checkpoint())
}

/// Both trained networks, ready for inference.
pub struct Pipeline<T: Scalar> {
    pub profile: ArchProfile,
    pub cp: CpNet,
    pub cp_store: ParamStore<T>,
    pub nr: NrNet,
    pub nr_store: ParamStore<T>,
}

impl<T: Scalar> Pipeline<T> {
    /// `expected`, when given, must equal the profile both checkpoints were trained with.
    pub fn load(cp_ck: &Checkpoint, nr_ck: &Checkpoint, expected: Option<&ArchProfile>) -> Result<Self> {
        cp_ck.expect_stage(Stage::Coarse)?;
        nr_ck.expect_stage(Stage::Refine)?;
        let profile = profile_from_meta(cp_ck)?;
        let nr_profile = profile_from_meta(nr_ck)?;
        if nr_profile != profile {
            return Err(CheckpointError::Mismatch(format!(
                "coarse checkpoint uses profile `{}`, refinement checkpoint `{}`",
                profile.name, nr_profile.name
            ))
            .into());
        }
        if let Some(p) = expected {
            if *p != profile {
                return Err(CheckpointError::Mismatch(format!(
                    "checkpoints were trained with profile `{}` ({}x{}), configured profile is `{}` ({}x{})",
                    profile.name, profile.resolution, profile.resolution, p.name, p.resolution, p.resolution
                ))
                .into());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cp_store = ParamStore::new();
        let cp = CpNet::new(&mut cp_store, &profile, &mut rng)?;
        cp_ck.load_params(&mut cp_store)?;
        let mut nr_store = ParamStore::new();
        let nr = NrNet::new(&mut nr_store, &profile, &mut rng)?;
        nr_ck.load_params(&mut nr_store)?;
        Ok(Pipeline {
            profile,
            cp,
            cp_store,
            nr,
            nr_store,
        })
    }

    /// Coarse exemplar `R` and refined normals `N`, both carrying `mask`.
    pub fn infer(&self, image: &Image, mask: &[bool]) -> Result<(NormalMap, NormalMap)> {
        if mask.len() != image.width * image.height {
            return Err(Error::Invalid("mask does not match the image size".into()));
        }
        let x = image.to_tensor::<T>();
        let r = coarse_forward(&self.cp, &self.cp_store, &x)?;
        let mut g = Graph::no_grad();
        let xi = g.constant(x);
        let ri = g.constant(r.clone());
        let n = self.nr.forward(&mut g, &self.nr_store, xi, ri)?;
        Ok((
            NormalMap::from_tensor(&r, 0, mask.to_vec())?,
            NormalMap::from_tensor(g.value(n), 0, mask.to_vec())?,
        ))
    }
}

/// Pixels that are not pure black. Rendered inputs are black outside the
/// face region.
pub fn image_mask(image: &Image) -> Vec<bool> {
    image.pixels.iter().map(|p| p.iter().any(|&c| c > 0.0)).collect()
}

/// Loads both checkpoints and runs inference on one image.
pub fn infer<T: Scalar>(image: &Image, cp_ck: &Checkpoint, nr_ck: &Checkpoint) -> Result<(NormalMap, NormalMap)> {
    Pipeline::<T>::load(cp_ck, nr_ck, None)?.infer(image, &image_mask(image))
}
