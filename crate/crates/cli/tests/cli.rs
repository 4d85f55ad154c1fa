use std::fs;
use std::path::Path;
use std::process::Command;

use pcd_cli::ablate::{cmd_ablate, Axis};
use pcd_cli::pipeline::{cmd_eval, cmd_sample, cmd_train, MeanStd};
use pcd_cli::{cmd_gen_data, cmd_run, CliError, RunConfig};
use pcd_core::dataset::{OfflineDataset, DATASET_MAGIC};

fn tiny(task: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    for pair in [
        "task.n=300",
        "task.strategy=uniform",
        "model.width=32",
        "model.depth=1",
        "train.batch_size=64",
        "train.steps=30",
        "sampler.steps=8",
        "cond.l=8",
        "cond.j=8",
        "cond.q=40",
    ] {
        cfg.set_pair(pair).unwrap();
    }
    cfg.set("task.name", task).unwrap();
    cfg
}

fn pcd(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pcd"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn config_file_round_trips() {
    let text = "# comment\ntask.name = dtlz1\ntask.m = 5\nsampler.gamma = 5 # inline\n\n";
    let cfg = RunConfig::parse(text).unwrap();
    assert_eq!(cfg.task.m, Some(5));
    assert_eq!(cfg.sampler.gamma, 5.0);
    let again = RunConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(again.entries(), cfg.entries());

    let mut cfg = cfg;
    cfg.set("task.m", "auto").unwrap();
    assert_eq!(cfg.task.m, None);
    assert!(matches!(cfg.set("task.colour", "red"), Err(CliError::Config(_))));
    assert!(matches!(cfg.set("sampler.steps", "many"), Err(CliError::Config(_))));
    assert!(RunConfig::parse("no equals sign").is_err());
}

#[test]
fn defaults_are_valid() {
    let cfg = RunConfig::default();
    cfg.validate().unwrap();
    let e = cfg.entries();
    assert_eq!(e["reweight.bins"], "30");
    assert_eq!(e["reweight.k"], "10.0");
    assert_eq!(e["reweight.tau"], "0.05");
    assert_eq!(e["cond.j"], "32");
    assert_eq!(e["cond.q"], "256");
    assert_eq!(e["sampler.gamma"], "2.5");
}

#[test]
fn invalid_values_are_config_errors() {
    for (k, v) in [
        ("task.name", "zdt99"),
        ("cond.strategy", "nearest"),
        ("reweight.tau", "0"),
        ("cond.distance", "1.0"),
        ("sampler.mode", "euler"),
        ("eval.seeds", "0"),
        ("task.dataset", "/no/such/file.pcdd"),
    ] {
        let mut cfg = RunConfig::default();
        cfg.set(k, v).unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2, "{k} = {v}: {err}");
    }
}

#[test]
fn gen_data_header_and_rerun() {
    let mut cfg = RunConfig::default();
    cfg.set("task.seed", "7").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ds, summary) = cmd_gen_data(&cfg, a.path()).unwrap();
    assert_eq!((ds.d(), ds.m(), ds.n()), (30, 2, 10_000));
    assert_eq!(summary.min, 0.0);
    assert_eq!(summary.histogram.iter().sum::<usize>(), 10_000);

    let bytes = fs::read(a.path().join("dataset.pcdd")).unwrap();
    assert_eq!(&bytes[..4], DATASET_MAGIC);
    let back = OfflineDataset::load(a.path().join("dataset.pcdd")).unwrap();
    assert_eq!((back.d(), back.m(), back.n(), back.seed), (30, 2, 10_000, 7));

    cmd_gen_data(&cfg, b.path()).unwrap();
    assert_eq!(bytes, fs::read(b.path().join("dataset.pcdd")).unwrap());
}

#[test]
fn gen_data_dtlz1_five_objectives() {
    let mut cfg = tiny("dtlz1");
    cfg.set("task.m", "5").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = cmd_gen_data(&cfg, dir.path()).unwrap();
    assert_eq!(ds.m(), 5);
    assert_eq!(OfflineDataset::load(dir.path().join("dataset.pcdd")).unwrap().m(), 5);
}

#[test]
fn run_writes_artifacts_and_respects_budget() {
    let mut cfg = tiny("zdt2");
    cfg.set("eval.seeds", "2").unwrap();
    cfg.set("sampler.gamma", "5").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let res = cmd_run(&cfg, Some(dir.path())).unwrap();

    assert_eq!(res.seeds.len(), 2);
    for s in &res.seeds {
        assert_eq!(s.oracle_calls, 40);
        assert_eq!(s.x.len(), 40);
        assert!((s.relative_improvement - s.hv.hv_100 / s.dbest_hv_100).abs() < 1e-12);
    }
    let hv: Vec<f64> = res.seeds.iter().map(|s| s.hv.hv_100).collect();
    assert_eq!(res.aggregate.hv_100, MeanStd::of(&hv));
    assert_eq!(res.timings.train_s.len(), 2);

    for f in [
        "config.txt",
        "weights.csv",
        "model_seed0.ckpt",
        "model_seed1.ckpt",
        "conditioning_seed1.csv",
        "result.json",
        "front.csv",
        "metrics.csv",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["sampler.gamma"], "5.0");
    assert_eq!(cfg.sampler_config(0).unwrap().guidance_scale, 5.0);
    let front = fs::read_to_string(dir.path().join("front.csv")).unwrap();
    assert_eq!(front.lines().count(), 1 + 80);

    // The snapshot alone reproduces the run.
    let replay = RunConfig::from_file(dir.path().join("config.txt")).unwrap();
    assert_eq!(cmd_run(&replay, None).unwrap().payload(), res.payload());
}

#[test]
fn dbest_without_reweighting() {
    let mut cfg = tiny("zdt1");
    cfg.set("reweight.mode", "none").unwrap();
    cfg.set("cond.strategy", "dbest").unwrap();
    let res = cmd_run(&cfg, None).unwrap();
    assert_eq!(res.weight_cv, 0.0);
    assert_eq!(res.seeds[0].oracle_calls, 40);
}

#[test]
fn every_conditioning_strategy_runs() {
    for s in ["refdir", "dbest", "ideal", "dataset-fronts"] {
        let mut cfg = tiny("vlmop2");
        cfg.set("cond.strategy", s).unwrap();
        cfg.set("reweight.mode", "prune").unwrap();
        let res = cmd_run(&cfg, None).unwrap();
        assert_eq!(res.seeds[0].oracle_calls, 40, "{s}");
    }
}

#[test]
fn failures_carry_their_phase() {
    let mut cfg = tiny("zdt1");
    cfg.set("task.n", "5").unwrap();
    let err = cmd_run(&cfg, None).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().starts_with("conditioning"), "{err}");
}

#[test]
fn train_sample_eval_chain() {
    let cfg = tiny("zdt1");
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&cfg, dir.path()).unwrap();
    let ckpt = dir.path().join("model.ckpt");
    let x = cmd_sample(&cfg, &ckpt, dir.path()).unwrap();
    assert_eq!(x.nrows(), 40);
    let hv = cmd_eval(&cfg, &dir.path().join("samples.csv"), dir.path()).unwrap();
    assert!(hv.hv_100 >= hv.hv_75 && hv.hv_75 >= hv.hv_50);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["oracle_calls"], 40);

    let mut other = tiny("zdt1");
    other.set("task.d", "4").unwrap();
    assert!(cmd_sample(&other, &ckpt, dir.path()).is_err());
}

#[test]
fn ablate_gamma_normalizes_to_the_default() {
    let grid: Vec<String> = Axis::Gamma.default_grid().iter().map(|s| s.to_string()).collect();
    let dir = tempfile::tempdir().unwrap();
    let rows = cmd_ablate(&tiny("zdt1"), Axis::Gamma, &grid, Some(dir.path())).unwrap();
    assert_eq!(rows.len(), 5);
    let at_default = rows.iter().find(|r| r.value == "2.5").unwrap();
    assert_eq!(at_default.ratio, 1.0);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn ablate_objectives_on_dtlz1() {
    let grid: Vec<String> = Axis::Objectives.default_grid().iter().map(|s| s.to_string()).collect();
    let rows = cmd_ablate(&tiny("dtlz1"), Axis::Objectives, &grid, None).unwrap();
    let values: Vec<&str> = rows.iter().map(|r| r.value.as_str()).collect();
    assert_eq!(values, ["3", "4", "5", "6"]);
    assert_eq!(rows[0].ratio, 1.0);
}

#[test]
fn ablate_tau_records_weight_spread() {
    let grid: Vec<String> = Axis::Tau.default_grid().iter().map(|s| s.to_string()).collect();
    let rows = cmd_ablate(&tiny("zdt1"), Axis::Tau, &grid, None).unwrap();
    let cv: Vec<f64> = rows.iter().map(|r| r.weight_cv).collect();
    assert!(cv.windows(2).all(|w| w[1] < w[0]), "{cv:?}");
}

#[test]
fn unknown_axis_is_a_config_error() {
    let err = "learning-rate".parse::<Axis>().unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = pcd(&["gen-data", "--set", "task.name=vlmop1", "--set", "task.n=50", "--set", "task.strategy=lhs", "--out", "d"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("d/dataset.pcdd").exists());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("median"));

    let bad_key = pcd(&["run", "--set", "model.colour=3"], dir.path());
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_task = pcd(&["gen-data", "--set", "task.name=zdt99"], dir.path());
    assert_eq!(bad_task.status.code(), Some(2));
    let bad_axis = pcd(&["ablate", "--axis", "width"], dir.path());
    assert_eq!(bad_axis.status.code(), Some(2));
    let missing_config = pcd(&["run", "--config", "nope.txt"], dir.path());
    assert_eq!(missing_config.status.code(), Some(2));
    let missing_ckpt = pcd(
        &["sample", "--checkpoint", "none.ckpt", "--set", "task.name=vlmop1", "--set", "task.n=50", "--out", "s"],
        dir.path(),
    );
    assert_eq!(missing_ckpt.status.code(), Some(3));
}
