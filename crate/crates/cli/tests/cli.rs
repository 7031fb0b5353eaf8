use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn demo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demo"))
        .args(args)
        .env_remove("DEMO_OUT_DIR")
        .output()
        .expect("run demo")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
[model]
kind = "logistic"

[data]
features = 16
classes = 4
samples = 512
eval_samples = 64
batch = 16

[optimizer]
chunk = 4
k = 2   # overridden in one test

[run]
workers = 2
steps = 10
"#;

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.conf");
    fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn train_writes_one_row_per_step_plus_initial() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    let o = demo(&["train", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 11);
    assert!(lines[0].starts_with("step,train_loss"));
    assert!(lines[1].starts_with("0,"));
    assert!(lines[11].starts_with("10,"));
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 11);
    assert!(fs::read_to_string(out.join("config.txt")).unwrap().contains("k = 2"));
}

#[test]
fn set_overrides_file_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(demo(&["train", &cfg, "--out", a.to_str().unwrap()]).status.success());
    let o = demo(&["train", &cfg, "--set", "optimizer.k=4", "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(b.join("config.txt")).unwrap().contains("k = 4"));
    let payload = |dir: &Path| -> u64 {
        let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
        csv.lines().nth(2).unwrap().split(',').nth(4).unwrap().parse().unwrap()
    };
    assert_eq!(payload(&b), 2 * payload(&a));
}

#[test]
fn out_dir_defaults_to_env() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = Command::new(env!("CARGO_BIN_EXE_demo"))
        .args(["train", &cfg, "--set", "run.steps=2"])
        .env("DEMO_OUT_DIR", tmp.path().join("from-env"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("from-env/metrics.csv").exists());
}

#[test]
fn malformed_key_exits_1_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.conf");
    fs::write(&path, "[run]\nsteps = 3\nworkrs = 2\n").unwrap();
    let o = demo(&["train", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(stderr(&o).contains("workrs"));

    let o = demo(&["train", "--set", "optimizer.k=0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn transport_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = demo(&[
        "train",
        &cfg,
        "--set",
        "transport.kind=tcp",
        "--set",
        "transport.host=203.0.113.250",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("transport"));
}

#[test]
fn usage_and_io_errors() {
    assert_eq!(demo(&["train", "--bogus"]).status.code(), Some(3));
    assert_eq!(demo(&[]).status.code(), Some(3));
    assert_eq!(demo(&["--help"]).status.code(), Some(0));
    assert_eq!(demo(&["train", "/nonexistent/cfg.conf"]).status.code(), Some(4));
    assert_eq!(demo(&["bench-compaction", "--signal", "pink"]).status.code(), Some(3));
    assert_eq!(demo(&["bench-compaction", "--length", "64", "--chunk", "48"]).status.code(), Some(3));
}

fn fraction(out: &str, name: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{name}=")))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn bench_compaction_reports() {
    let o = demo(&["bench-compaction", "--signal", "constant", "--k", "1", "--trials", "20"]);
    assert!(o.status.success());
    assert_eq!(fraction(&stdout(&o), "dct_energy_fraction"), 1.0);

    let o = demo(&["bench-compaction", "--signal", "white", "--k", "64", "--trials", "20"]);
    assert_eq!(fraction(&stdout(&o), "dct_energy_fraction"), 1.0);
    assert_eq!(fraction(&stdout(&o), "identity_energy_fraction"), 1.0);

    let o = demo(&["bench-compaction", "--signal", "ar1", "--rho", "0.95", "--k", "8", "--trials", "300"]);
    let out = stdout(&o);
    assert!(fraction(&out, "dct_energy_fraction") > fraction(&out, "identity_energy_fraction"));
}

#[test]
fn sweep_over_k_halves_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("lin.conf");
    fs::write(
        &path,
        "[model]\nkind = \"linear\"\nbias = false\n[data]\nfeatures = 32\noutputs = 32\nsamples = 256\nbatch = 8\n\
         [optimizer]\nchunk = 8\n[run]\nworkers = 2\nsteps = 2\n",
    )
    .unwrap();
    let out = tmp.path().join("sweep");
    let o = demo(&[
        "sweep",
        path.to_str().unwrap(),
        "--grid",
        "optimizer.k=1,2,4,8,16,32",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 7);
    let payload: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    for w in payload.windows(2) {
        assert_eq!(w[1], 2.0 * w[0]);
    }
    assert!(out.join("point-005.csv").exists());
}

#[test]
fn plot_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    assert!(demo(&["train", &cfg, "--out", run.to_str().unwrap()]).status.success());
    let metrics = run.join("metrics.csv");
    let svg = tmp.path().join("loss.svg");
    let o = demo(&["plot", metrics.to_str().unwrap(), "-o", svg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&svg).unwrap().matches("<polyline").count(), 1);

    let o = demo(&["report", metrics.to_str().unwrap(), metrics.to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    assert!(out.lines().nth(2).unwrap().ends_with(",1.000000"));

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(demo(&["plot", empty.to_str().unwrap()]).status.code(), Some(3));
    let header_only = tmp.path().join("header.csv");
    fs::write(&header_only, "step,train_loss\n").unwrap();
    assert_eq!(demo(&["plot", header_only.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(
        demo(&["plot", metrics.to_str().unwrap(), "--column", "nope"]).status.code(),
        Some(3)
    );
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg = demo_core::RunConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        seen += 1;
    }
    assert!(seen >= 3);
}
