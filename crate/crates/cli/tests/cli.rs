use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_facenormal"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn facenormal")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` with its contents.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gen-synth"));
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["train-refine", "--data", "d", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--cp-checkpoint"));

    let out = run(&["gen-synth", "--out", "o", "--count", "many"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train-coarse",
        "--data",
        s(&tmp.path().join("missing")),
        "--out",
        s(&tmp.path().join("o")),
        "--iterations",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "lr = 0.001\nlearning_rate = 3\n").unwrap();
    let out = run(&[
        "train-coarse",
        "--data",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("o2")),
        "--config",
        s(&bad),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn gen_synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, c) = (tmp.path().join("a"), tmp.path().join("c"));
    ok(&["gen-synth", "--count", "4", "--seed", "7", "--out", s(&a)]);
    let sa = snapshot(&a);
    fs::remove_dir_all(&a).unwrap();
    ok(&["gen-synth", "--count", "4", "--seed", "7", "--out", s(&a)]);
    assert!(snapshot(&a) == sa, "rerun differs");
    ok(&["gen-synth", "--count", "4", "--seed", "8", "--out", s(&c)]);
    let sc = snapshot(&c);
    assert!(sc[Path::new("train/00001_image.png")] != sa[Path::new("train/00001_image.png")]);
    assert!(sa.contains_key(Path::new("manifest.tsv")));
    assert!(sa.contains_key(Path::new("run_manifest.txt")));
    let manifest = String::from_utf8(sa[Path::new("run_manifest.txt")].clone()).unwrap();
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("build = facenormal-cli"));
}

#[test]
fn eval_of_ground_truth_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen-synth", "--count", "5", "--out", s(&data)]);
    let report = tmp.path().join("eval/metrics.csv");
    let gt = data.join("test");
    let out = ok(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--report", s(&report)]);
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("metric,value\n"));
    assert!(csv.contains("mean_deg,0"), "{csv}");
    assert!(csv.contains("pct_lt20,100"), "{csv}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean"));
    assert!(tmp.path().join("eval/run_manifest.txt").exists());

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = run(&["eval", "--pred", s(&empty), "--gt", s(&gt), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_pipeline_writes_only_into_out_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n);
    ok(&["gen-synth", "--count", "5", "--out", s(&p("data"))]);
    let data_before = snapshot(&p("data"));

    let cfg = p("stage.cfg");
    fs::write(
        &cfg,
        "# short run\nlambda_dcp = 0.0001\ncheckpoint_every = 2\niterations = 50\n",
    )
    .unwrap();
    ok(&[
        "train-coarse",
        "--data",
        s(&p("data")),
        "--out",
        s(&p("cp")),
        "--config",
        s(&cfg),
        "--iterations",
        "3",
        "--seed",
        "5",
    ]);
    let cp = snapshot(&p("cp"));
    for f in [
        "coarse.ckpt",
        "coarse_000002.ckpt",
        "loss_coarse.csv",
        "run_manifest.txt",
    ] {
        assert!(cp.contains_key(Path::new(f)), "missing {f}");
    }
    let manifest = String::from_utf8(cp[Path::new("run_manifest.txt")].clone()).unwrap();
    assert!(manifest.contains("config.iterations = 3"), "{manifest}");
    assert!(manifest.contains("seed = 5"));
    assert_eq!(
        String::from_utf8_lossy(&cp[Path::new("loss_coarse.csv")])
            .lines()
            .count(),
        4
    );

    ok(&[
        "train-refine",
        "--data",
        s(&p("data")),
        "--out",
        s(&p("nr")),
        "--cp-checkpoint",
        s(&p("cp/coarse.ckpt")),
        "--iterations",
        "2",
    ]);
    assert!(p("nr/refine.ckpt").exists());

    ok(&[
        "infer",
        "--data",
        s(&p("data/test")),
        "--cp-checkpoint",
        s(&p("cp/coarse.ckpt")),
        "--nr-checkpoint",
        s(&p("nr/refine.ckpt")),
        "--out",
        s(&p("pred")),
    ]);
    let pred = snapshot(&p("pred"));
    let test_ids: Vec<String> = data_before
        .keys()
        .filter_map(|k| k.strip_prefix("test").ok())
        .filter_map(|k| k.to_str()?.strip_suffix("_image.png").map(String::from))
        .collect();
    assert!(!test_ids.is_empty());
    for id in &test_ids {
        assert!(pred.contains_key(&PathBuf::from(format!("R/{id}_normal.png"))));
        assert!(pred.contains_key(&PathBuf::from(format!("N/{id}_normal.png"))));
    }

    let out = run(&[
        "infer",
        "--data",
        s(&p("data/test")),
        "--cp-checkpoint",
        s(&p("cp/coarse.ckpt")),
        "--nr-checkpoint",
        s(&p("nr/refine.ckpt")),
        "--out",
        s(&p("pred_full")),
        "--profile",
        "full",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("desk") && err.contains("full"), "{err}");

    ok(&[
        "eval",
        "--pred",
        s(&p("pred/N")),
        "--gt",
        s(&p("data/test")),
        "--report",
        s(&p("metrics/metrics.csv")),
    ]);
    let csv = fs::read_to_string(p("metrics/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    ok(&[
        "render-shading",
        "--pred",
        s(&p("pred/N")),
        "--out",
        s(&p("shade")),
        "--lights",
        "3",
    ]);
    let shade = snapshot(&p("shade"));
    assert_eq!(shade.len(), test_ids.len() * 3 + 1);

    ok(&[
        "render-error",
        "--pred",
        s(&p("pred/N")),
        "--gt",
        s(&p("data/test")),
        "--out",
        s(&p("err")),
    ]);
    assert_eq!(snapshot(&p("err")).len(), test_ids.len() + 1);

    assert_eq!(snapshot(&p("data")), data_before);
    let mut top: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    top.sort();
    assert_eq!(
        top,
        ["cp", "data", "err", "metrics", "nr", "pred", "shade", "stage.cfg"]
    );
}
