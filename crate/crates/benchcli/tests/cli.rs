use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chaosbench::dataset::parse_summary_csv;
use chaosbench::manifest::RunManifest;
use tempfile::TempDir;
use wienerchaos::chaosreg::FittedModel;
use wienerchaos::glselect::parse_traces_csv;

const SMALL: &str = r#"
n_list = [200, 400]
path_steps = 128
grid_size = 16
max_order = 2
replications = 2
seed = 1

[truth]
preset = "quadratic_terminal"
noise = { kind = "gaussian", sigma = 0.5 }

[bandwidth]
mode = "fixed"
values = [{ order = 1, h = 0.25 }, { order = 2, h = 0.25 }]

[check]
n_mc = 2000
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaosbench"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(out).arg("--threads").arg("1");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn manifest(out: &Path, command: &str) -> RunManifest {
    RunManifest::from_json(&fs::read_to_string(out.join(format!("manifest-{command}.json"))).unwrap()).unwrap()
}

#[test]
fn simulate_fit_risk_pipeline() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    for step in ["simulate", "fit", "risk"] {
        let o = run(&[step], Some(&cfg), &out);
        assert_eq!(code(&o), 0, "{step}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join("data/n200/rep1/paths.csv").exists());
    let model = FittedModel::from_json(&fs::read_to_string(out.join("models/n400/rep0/model.json")).unwrap()).unwrap();
    assert_eq!(model.orders(), vec![1, 2]);
    let summary = parse_summary_csv(&fs::read_to_string(out.join("risk_summary.csv")).unwrap()).unwrap();
    assert_eq!(summary.iter().map(|r| r.n).collect::<Vec<_>>(), vec![200, 400]);
    assert!(summary.iter().all(|r| r.replications == 2 && r.mean_risk > 0.0));
    let m = manifest(&out, "risk");
    assert_eq!(m.seeds.len(), 4);
    assert_eq!(m.outputs.len(), 2);
}

#[test]
fn identical_config_gives_identical_digests() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&run(&["simulate"], Some(&cfg), &a)), 0);
    assert_eq!(code(&run(&["simulate"], Some(&cfg), &b)), 0);
    assert_eq!(manifest(&a, "simulate").outputs, manifest(&b, "simulate").outputs);
    let o = run(&["simulate", "--seed", "99"], Some(&cfg), &c);
    assert_eq!(code(&o), 0);
    assert_ne!(manifest(&a, "simulate").outputs, manifest(&c, "simulate").outputs);
    assert_eq!(manifest(&c, "simulate").config.seed, 99);
}

#[test]
fn manifest_replays_its_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run(&["simulate"], Some(&cfg), &a)), 0);
    let replay = a.join("manifest-simulate.json");
    assert_eq!(code(&run(&["simulate"], Some(&replay), &b)), 0);
    assert_eq!(manifest(&a, "simulate").outputs, manifest(&b, "simulate").outputs);
}

#[test]
fn validation_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(
        tmp.path(),
        "bad.toml",
        &SMALL.replace("grid_size = 16", "grid_size = 24"),
    );
    let o = run(&["simulate"], Some(&bad), tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid_size"));
    let unknown = write_config(tmp.path(), "unknown.toml", &format!("colour = 3\n{SMALL}"));
    assert_eq!(code(&run(&["simulate"], Some(&unknown), tmp.path())), 1);
    assert_eq!(code(&run(&["simulate"], None, tmp.path())), 1);
    assert_eq!(code(&run(&["frobnicate"], None, tmp.path())), 1);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let o = run(&["rate"], Some(&cfg), tmp.path());
    assert_eq!(code(&o), 1, "too few sample sizes for a slope");
}

#[test]
fn missing_inputs_are_runtime_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let o = run(&["fit"], Some(&cfg), &tmp.path().join("empty"));
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulate"));
    assert_eq!(code(&run(&["risk"], Some(&cfg), &tmp.path().join("empty"))), 3);
}

#[test]
fn adapt_writes_traces_and_plots() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL
        .replace("n_list = [200, 400]", "n_list = [1000]")
        .replace("replications = 2", "replications = 1")
        .replace("path_steps = 128", "path_steps = 256")
        .replace("[check]", "[majorant]\nm = 1.0\n\n[check]");
    let cfg = write_config(tmp.path(), "adapt.toml", &text);
    let out = tmp.path().join("out");
    assert_eq!(code(&run(&["simulate"], Some(&cfg), &out)), 0);
    let o = run(
        &["fit"],
        Some(&write_config(
            tmp.path(),
            "a.toml",
            &text.replace(
                "mode = \"fixed\"\nvalues = [{ order = 1, h = 0.25 }, { order = 2, h = 0.25 }]",
                "mode = \"adaptive\"",
            ),
        )),
        &out,
    );
    assert_eq!(code(&o), 1, "fit refuses adaptive configs");
    let o = run(&["adapt"], Some(&cfg), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace_path = out.join("models/n1000/rep0/trace.csv");
    let traces = parse_traces_csv(&fs::read_to_string(&trace_path).unwrap()).unwrap();
    assert_eq!(traces.len(), 2);
    for t in &traces {
        assert_eq!(t.records.last().unwrap().bias_proxy, 0.0);
    }
    let o = bin()
        .args(["plot", "--input"])
        .arg(&trace_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("trace.svg")).unwrap().starts_with("<svg"));
    assert_eq!(code(&run(&["risk"], Some(&cfg), &out)), 0);
    let o = bin()
        .args(["plot", "--input"])
        .arg(out.join("risk_summary.csv"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let garbage = write_config(tmp.path(), "garbage.csv", "a,b\n1,2\n");
    let o = bin()
        .args(["plot", "--input"])
        .arg(&garbage)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn check_passes_and_detects_a_broken_kernel() {
    let tmp = TempDir::new().unwrap();
    let good = write_config(tmp.path(), "good.toml", SMALL);
    let o = run(&["check"], Some(&good), &tmp.path().join("good"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = SMALL.replace("n_mc = 2000", "n_mc = 2000\nkernel_perturbation = 1e-3");
    let bad = write_config(tmp.path(), "bad.toml", &text);
    let out = tmp.path().join("bad");
    let o = run(&["check"], Some(&bad), &out);
    assert_eq!(code(&o), 2);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("check.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = chaosbench::config::ExperimentConfig::from_toml(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}
