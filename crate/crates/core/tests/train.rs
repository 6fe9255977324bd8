use facenormal::config::{parse_config, Precision, Stage, TrainConfig};
use facenormal::error::{CheckpointError, ConfigError, Error};
use facenormal::losses::AdvForm;
use facenormal::nn::{ArchProfile, MergeMode};
use facenormal::synth::dataset::scene_seeds;
use facenormal::synth::{Image, Sample, SynthProfile};
use facenormal::train::*;
use facenormal::Scalar;

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let prof = SynthProfile::with_size(64);
    scene_seeds(n, seed)
        .iter()
        .enumerate()
        .map(|(i, &s)| Sample::generate(format!("{i:05}"), s, &prof))
        .collect()
}

fn tiny() -> ArchProfile {
    ArchProfile::tiny(64, 8)
}

fn cfg(stage: Stage, iterations: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_size: 2,
        lr: 1e-3,
        checkpoint_every: 0,
        ..TrainConfig::new(stage)
    }
}

fn coarse<T: Scalar>(data: &TrainSet<T>, iterations: u64) -> CoarseTrainer<T> {
    let mut t = CoarseTrainer::new(cfg(Stage::Coarse, iterations), tiny()).unwrap();
    run_coarse(&mut t, data, &RunOptions::default()).unwrap();
    t
}

#[test]
fn config_defaults_and_overrides() {
    let c = parse_config("", Stage::Coarse).unwrap();
    assert_eq!(c.train, TrainConfig::new(Stage::Coarse));
    assert_eq!((c.train.lr, c.train.lambda_dcp, c.train.seed), (1e-4, 1e-4, 42));
    assert_eq!(c.train.iterations, 5000);
    assert_eq!(parse_config("", Stage::Refine).unwrap().train.iterations, 4000);
    assert_eq!(c.profile, ArchProfile::desk());

    let text = "# comment\nlr = 0.001\n\n  batch_size=3 # trailing\nadv_loss = non-saturating\nprecision = f64\nmerge = concat\n";
    let c = parse_config(text, Stage::Coarse).unwrap();
    assert_eq!(c.train.lr, 0.001);
    assert_eq!(c.train.batch_size, 3);
    assert_eq!(c.train.adv_form, AdvForm::NonSaturating);
    assert_eq!(c.train.precision, Precision::F64);
    assert_eq!(c.profile.merge, MergeMode::Concat);
}

#[test]
fn config_errors_name_keys_and_lines() {
    let err = parse_config("lr = 0.1\ntypo_key = 1\nother = 2\n", Stage::Coarse).unwrap_err();
    match &err {
        Error::Config(ConfigError::UnknownKeys(keys)) => {
            assert_eq!(keys, &vec![("typo_key".to_string(), 2), ("other".to_string(), 3)]);
        }
        e => panic!("unexpected {e:?}"),
    }
    let msg = err.to_string();
    assert!(msg.contains("typo_key") && msg.contains("line 2"), "{msg}");

    match parse_config("seed = 1\nlr = fast\n", Stage::Coarse).unwrap_err() {
        Error::Config(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
        e => panic!("unexpected {e:?}"),
    }
    match parse_config("just words\n", Stage::Coarse).unwrap_err() {
        Error::Config(ConfigError::Parse { line, .. }) => assert_eq!(line, 1),
        e => panic!("unexpected {e:?}"),
    }
    assert!(parse_config("lr = -1\n", Stage::Coarse).is_err());
    assert!(parse_config("batch_size = 0\n", Stage::Coarse).is_err());
    assert!(parse_config("iterations = 0\n", Stage::Coarse).is_err());
    assert!(parse_config("profile = huge\n", Stage::Coarse).is_err());
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let data = TrainSet::<f32>::from_samples(&samples(3, 1)).unwrap();
    let t = coarse(&data, 2);
    let ck = t.checkpoint();
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ck);

    let r = CoarseTrainer::<f32>::from_checkpoint(&back, cfg(Stage::Coarse, 2)).unwrap();
    assert!(r.cp_store.bitwise_eq(&t.cp_store));
    assert!(r.d_store.bitwise_eq(&t.d_store));
    assert_eq!(r.iteration, 2);
    // The model runs in one precision only.
    assert!(CoarseTrainer::<f64>::from_checkpoint(&back, cfg(Stage::Coarse, 2)).is_err());
}

#[test]
fn checkpoint_errors_are_distinct() {
    let data = TrainSet::<f64>::from_samples(&samples(2, 2)).unwrap();
    let bytes = coarse(&data, 1).checkpoint().to_bytes();

    for cut in [0, 3, 4, 7, 9, 17, 40, 200, bytes.len() / 2, bytes.len() - 1] {
        match Checkpoint::from_bytes(&bytes[..cut]) {
            Err(Error::Checkpoint(CheckpointError::Truncated(_))) => {}
            other => panic!("cut at {cut}: {other:?}"),
        }
    }

    let mut v2 = bytes.clone();
    v2[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = Checkpoint::from_bytes(&v2).unwrap_err();
    assert!(matches!(
        err,
        Error::Checkpoint(CheckpointError::Version { found: 2, expected: 1 })
    ));
    let msg = err.to_string();
    assert!(msg.contains('2') && msg.contains('1'), "{msg}");

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        Checkpoint::from_bytes(&bad),
        Err(Error::Checkpoint(CheckpointError::BadMagic(_)))
    ));

    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(
        Checkpoint::from_bytes(&long),
        Err(Error::Checkpoint(CheckpointError::Corrupt(_)))
    ));
}

#[test]
fn f64_training_is_bitwise_reproducible_and_resumable() {
    let data = TrainSet::<f64>::from_samples(&samples(4, 3)).unwrap();
    let a = coarse(&data, 5).checkpoint().to_bytes();
    let b = coarse(&data, 5).checkpoint().to_bytes();
    assert_eq!(a, b);

    let half = Checkpoint::from_bytes(&coarse(&data, 3).checkpoint().to_bytes()).unwrap();
    let mut t = CoarseTrainer::<f64>::from_checkpoint(&half, cfg(Stage::Coarse, 5)).unwrap();
    run_coarse(&mut t, &data, &RunOptions::default()).unwrap();
    assert_eq!(t.checkpoint().to_bytes(), a);
}

#[test]
fn refinement_resume_and_frozen_coarse_net() {
    let data = TrainSet::<f64>::from_samples(&samples(3, 4)).unwrap();
    let cp = coarse(&data, 2).checkpoint();
    let run = |iters: u64| {
        let mut t = RefineTrainer::<f64>::new(cfg(Stage::Refine, iters), &cp).unwrap();
        run_refine(&mut t, &data, &RunOptions::default()).unwrap();
        t
    };
    let full = run(4);
    let mut cp_params = full.cp_store.clone();
    cp.load_params(&mut cp_params).unwrap();
    assert!(full.cp_store.bitwise_eq(&cp_params));

    let half = run(2).checkpoint();
    let mut t = RefineTrainer::<f64>::from_checkpoint(&half, cfg(Stage::Refine, 4), &cp).unwrap();
    run_refine(&mut t, &data, &RunOptions::default()).unwrap();
    assert_eq!(t.checkpoint().to_bytes(), full.checkpoint().to_bytes());

    assert!(RefineTrainer::<f64>::new(cfg(Stage::Refine, 1), &half).is_err());
}

#[test]
fn zero_lambda_leaves_the_discriminator_alone() {
    let data = TrainSet::<f32>::from_samples(&samples(2, 5)).unwrap();
    let mut c = cfg(Stage::Coarse, 3);
    c.lambda_dcp = 0.0;
    let mut t = CoarseTrainer::<f32>::new(c, tiny()).unwrap();
    let before = t.d_store.clone();
    let cp_before = t.cp_store.clone();
    let reps = run_coarse(&mut t, &data, &RunOptions::default()).unwrap();
    assert!(t.d_store.bitwise_eq(&before));
    assert!(!t.cp_store.bitwise_eq(&cp_before));
    assert!(reps.iter().all(|r| r.adv == 0.0 && r.total == r.normal));

    let mut t = CoarseTrainer::<f32>::new(cfg(Stage::Coarse, 1), tiny()).unwrap();
    let before = t.d_store.clone();
    let r = t.step(&data).unwrap();
    assert!(!t.d_store.bitwise_eq(&before));
    assert!(r.adv != 0.0);
    assert!(((r.total - r.normal - 1e-4 * r.adv) / r.total).abs() < 1e-6);
}

#[test]
fn reconstruction_only_loss_decreases() {
    let data = TrainSet::<f32>::from_samples(&samples(4, 6)).unwrap();
    let mut c = cfg(Stage::Coarse, 400);
    c.lambda_dcp = 0.0;
    let mut t = CoarseTrainer::<f32>::new(c, tiny()).unwrap();
    let reps = run_coarse(&mut t, &data, &RunOptions::default()).unwrap();
    let means: Vec<f64> = reps
        .chunks(100)
        .map(|c| c.iter().map(|r| r.normal).sum::<f64>() / 100.0)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] < w[0], "{means:?}");
    }
}

#[test]
fn run_writes_logs_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = TrainSet::<f32>::from_samples(&samples(2, 7)).unwrap();
    let mut c = cfg(Stage::Coarse, 5);
    c.checkpoint_every = 2;
    let mut t = CoarseTrainer::<f32>::new(c, tiny()).unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        log_every: 0,
    };
    run_coarse(&mut t, &data, &opts).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("loss_coarse.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], LOSS_CSV_HEADER);
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("5,"));
    for name in ["coarse_000002.ckpt", "coarse_000004.ckpt", "coarse.ckpt"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert_eq!(
        load_checkpoint(&dir.path().join("coarse_000004.ckpt"))
            .unwrap()
            .iteration,
        4
    );
    assert_eq!(
        load_checkpoint(&dir.path().join("coarse.ckpt")).unwrap(),
        t.checkpoint()
    );

    // Resuming appends to the same log.
    let ck = load_checkpoint(&dir.path().join("coarse_000004.ckpt")).unwrap();
    let mut r = CoarseTrainer::<f32>::from_checkpoint(&ck, cfg(Stage::Coarse, 6)).unwrap();
    run_coarse(&mut r, &data, &opts).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("loss_coarse.csv")).unwrap();
    let iters: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["1", "2", "3", "4", "5", "5", "6"]);
}

#[test]
fn non_finite_loss_aborts_with_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = samples(2, 8);
    for p in s.iter_mut().flat_map(|x| x.image.pixels.iter_mut()) {
        p[0] = f64::NAN;
    }
    let data = TrainSet::<f32>::from_samples(&s).unwrap();
    let mut t = CoarseTrainer::<f32>::new(cfg(Stage::Coarse, 3), tiny()).unwrap();
    let before = t.cp_store.clone();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        log_every: 0,
    };
    match run_coarse(&mut t, &data, &opts) {
        Err(Error::NonFinite { iteration, batch, .. }) => {
            assert_eq!(iteration, 1);
            assert_eq!(batch.len(), 2);
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert!(t.cp_store.bitwise_eq(&before));
    let dump = std::fs::read_to_string(dir.path().join("nonfinite_batch.txt")).unwrap();
    assert!(dump.contains("finite false"), "{dump}");
}

#[test]
fn inference_outputs() {
    let s = samples(3, 9);
    let data = TrainSet::<f32>::from_samples(&s).unwrap();
    let cp = coarse(&data, 1).checkpoint();
    let mut rt = RefineTrainer::<f32>::new(cfg(Stage::Refine, 1), &cp).unwrap();
    run_refine(&mut rt, &data, &RunOptions::default()).unwrap();
    let nr = rt.checkpoint();

    let p = Pipeline::<f32>::load(&cp, &nr, Some(&tiny())).unwrap();
    let mask = image_mask(&s[0].image);
    let (r1, n1) = p.infer(&s[0].image, &mask).unwrap();
    let (r2, n2) = p.infer(&s[0].image, &mask).unwrap();
    assert_eq!((&r1, &n1), (&r2, &n2));
    for m in [&r1, &n1] {
        assert_eq!((m.width, m.height), (64, 64));
        assert_eq!(m.mask, mask);
        for n in &m.normals {
            assert!((n.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
        }
    }
    assert_eq!(infer::<f32>(&s[0].image, &cp, &nr).unwrap(), (r1, n1));

    match Pipeline::<f32>::load(&cp, &nr, Some(&ArchProfile::desk())) {
        Err(Error::Checkpoint(CheckpointError::Mismatch(msg))) => assert!(msg.contains("desk"), "{msg}"),
        other => panic!("{:?}", other.err()),
    }
    assert!(Pipeline::<f32>::load(&nr, &cp, None).is_err());
    assert!(Pipeline::<f32>::load(&cp, &nr, None)
        .unwrap()
        .infer(&Image::new(32, 32), &[true; 1024])
        .is_err());
}

#[test]
fn image_mask_follows_the_render() {
    for s in samples(5, 10) {
        let m = image_mask(&s.image);
        let agree = m.iter().zip(&s.normals.mask).filter(|(a, b)| a == b).count();
        // Only fully shadowed face pixels can be lost.
        assert!(m.iter().zip(&s.normals.mask).all(|(&a, &b)| !a || b));
        assert!(agree as f64 >= 0.99 * m.len() as f64);
    }
}
