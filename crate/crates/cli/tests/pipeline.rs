use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use postcut_core::ingest::write_units;
use postcut_core::synthetic::{grid_units, offices_at};
use postcut_core::Point;
use serde_json::Value;

const SIDE: usize = 10;
const CELL: f64 = 10.0;

/// A 10 x 10 grid state with two offices per cell and a config file.
fn fixture(dir: &Path, extra: &str) -> PathBuf {
    let pops: Vec<u64> = (0..SIDE * SIDE).map(|k| 800 + (k as u64 * 137) % 400).collect();
    let set = grid_units(SIDE, SIDE, CELL, &pops);
    write_units(dir.join("units.geojson"), &set).unwrap();
    let mut csv = String::from("id,lon,lat\n");
    let mut points = Vec::new();
    for k in 0..SIDE * SIDE {
        let (x0, y0) = ((k % SIDE) as f64 * CELL, (k / SIDE) as f64 * CELL);
        let j = (k % 7) as f64 / 10.0;
        points.push(Point::new(x0 + 2.0 + j, y0 + 3.0));
        points.push(Point::new(x0 + 7.0, y0 + 6.0 + j));
    }
    // checks the fixture offices land in their cells
    assert_eq!(offices_at(&points, &set).unwrap().len(), 2 * SIDE * SIDE);
    for (i, p) in points.iter().enumerate() {
        csv.push_str(&format!("o{i:04},{},{}\n", p.x, p.y));
    }
    fs::write(dir.join("offices.csv"), csv).unwrap();
    let config = dir.join("run.toml");
    fs::write(
        &config,
        format!(
            "units = \"units.geojson\"\noffices = \"offices.csv\"\nout = \"out\"\n\
             id_key = \"id\"\npop_key = \"population\"\ndistricts = 3\npp_min_ref = 0.45\n\
             iterations = 2000\nseed = 1\n{extra}"
        ),
    )
    .unwrap();
    config
}

fn postcut(config: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_postcut"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn ok(config: &Path, args: &[&str]) {
    let out = postcut(config, args);
    assert!(out.status.success(), "{args:?} exited {:?}", out.status.code());
}

fn manifest(dir: &Path, stage: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(stage).join("manifest.json")).unwrap()).unwrap()
}

fn history_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn full_pipeline_writes_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "");
    ok(&config, &["ingest"]);
    let m = manifest(tmp.path(), "ingest");
    assert_eq!(m["summary"]["units"], 100);
    assert_eq!(m["summary"]["offices"], 200);
    assert_eq!(m["summary"]["adjacency"], "computed");
    assert_eq!(m["summary"]["adjacency_edges"], 180);

    ok(&config, &["network"]);
    let m = manifest(tmp.path(), "network");
    assert!(m["summary"]["epsilon"].as_f64().unwrap() > 0.0);
    assert_eq!(m["summary"]["components"], 1);

    ok(&config, &["seed"]);
    assert_eq!(manifest(tmp.path(), "seed")["summary"]["converged"], true);

    ok(&config, &["mcmc"]);
    let lines = history_lines(&tmp.path().join("out/mcmc/history.jsonl"));
    // burn-in is 1% of 2000 iterations, then one summary record
    assert_eq!(lines.len(), 1980 + 1);
    let last = lines.last().unwrap();
    assert!(last["accepted_count"].as_u64().unwrap() > 0);
    assert_eq!(last["best_plan_path"], "best_plan.json");
    assert!(tmp.path().join("out/mcmc/best_plan.json").exists());
    assert!(!tmp.path().join("out/mcmc/checkpoint.json").exists());

    let out = postcut(&config, &["analyze", "--reference-cut-edges", "40"]);
    assert!(out.status.success());
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/analysis/report.json")).unwrap()).unwrap();
    assert_eq!(report["reference_cut_edges"], 40);
    assert!(report["selected_k"].as_u64().unwrap() >= 1);
    let p = report["cumulative_probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    for f in ["histogram.tsv", "density.tsv", "trace.tsv", "bic.tsv"] {
        assert!(tmp.path().join("out/analysis").join(f).exists(), "{f}");
    }
}

#[test]
fn report_bundles_results() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "");
    ok(&config, &["report", "--iterations", "500", "--reference-cut-edges", "40"]);
    let dir = tmp.path().join("out/report");
    for f in ["seed_rebalanced_plan.json", "mcmc_best_plan.json", "analysis_report.json", "mcmc_manifest.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

#[test]
fn external_adjacency_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "");
    ok(&config, &["ingest"]);
    let adj = tmp.path().join("adj.csv");
    fs::copy(tmp.path().join("out/ingest/adjacency.csv"), &adj).unwrap();
    ok(&config, &["ingest", "--adjacency", adj.to_str().unwrap()]);
    let m = manifest(tmp.path(), "ingest");
    assert_eq!(m["summary"]["adjacency"], "external");
    assert_eq!(m["summary"]["adjacency_edges"], 180);
}

#[test]
fn burn_in_discards_half_of_the_records() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "");
    for stage in ["ingest", "network", "seed"] {
        ok(&config, &[stage]);
    }
    ok(&config, &["mcmc", "--iterations", "1000", "--burn-in-rate", "0.5"]);
    let lines = history_lines(&tmp.path().join("out/mcmc/history.jsonl"));
    let samples: Vec<&Value> = lines.iter().filter(|l| l.get("iteration").is_some()).collect();
    assert_eq!(samples.len(), 500);
    assert_eq!(samples[0]["iteration"], 500);
}

#[test]
fn resumed_chain_matches_uninterrupted_run() {
    let run = |halt: bool| {
        let tmp = tempfile::tempdir().unwrap();
        let config = fixture(tmp.path(), "");
        for stage in ["ingest", "network", "seed"] {
            ok(&config, &[stage]);
        }
        if halt {
            ok(&config, &["mcmc", "--iterations", "2500", "--halt-after", "1700"]);
            assert!(tmp.path().join("out/mcmc/checkpoint.json").exists());
            ok(&config, &["mcmc", "--iterations", "2500", "--resume"]);
        } else {
            ok(&config, &["mcmc", "--iterations", "2500"]);
        }
        let h = fs::read(tmp.path().join("out/mcmc/history.jsonl")).unwrap();
        let b = fs::read(tmp.path().join("out/mcmc/best_plan.json")).unwrap();
        (h, b)
    };
    let straight = run(false);
    let resumed = run(true);
    assert!(straight.0 == resumed.0, "histories differ");
    assert!(straight.1 == resumed.1, "best plans differ");
}

#[test]
fn parallel_chains_use_distinct_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "");
    for stage in ["ingest", "network", "seed"] {
        ok(&config, &[stage]);
    }
    ok(&config, &["mcmc", "--iterations", "800", "--chains", "2"]);
    let a = fs::read(tmp.path().join("out/mcmc/history-0.jsonl")).unwrap();
    let b = fs::read(tmp.path().join("out/mcmc/history-1.jsonl")).unwrap();
    assert_ne!(a, b);
    assert_eq!(manifest(tmp.path(), "mcmc")["summary"]["chains"].as_array().unwrap().len(), 2);
}

#[test]
fn given_mixture_is_evaluated_directly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "");
    let model = tmp.path().join("model.json");
    fs::write(
        &model,
        r#"{"weights": [0.38466576, 0.18806542, 0.42726882],
            "means": [498.37, 605.86, 430.81],
            "variances": [1013.28, 2047.77, 1018.74]}"#,
    )
    .unwrap();
    let out = postcut(
        &config,
        &["analyze", "--model-json", model.to_str().unwrap(), "--reference-cut-edges", "597"],
    );
    assert!(out.status.success());
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/analysis/report.json")).unwrap()).unwrap();
    let p = report["cumulative_probability"].as_f64().unwrap();
    assert!((p - 0.8910).abs() < 5e-5, "{p}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("0.8910"));
}

#[test]
fn exact_balance_is_reported_as_not_converged() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "max_iter = 100\nrestarts = 1\n");
    ok(&config, &["ingest"]);
    let out = postcut(&config, &["seed", "--theta", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(tmp.path().join("out/seed/convergence.json").exists());
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), "");

    // missing upstream stage
    assert_eq!(postcut(&config, &["network"]).status.code(), Some(4));
    // bad value
    assert_eq!(postcut(&config, &["ingest", "--percentile", "120"]).status.code(), Some(2));
    // unreadable input
    let missing = tmp.path().join("nope.geojson");
    assert_eq!(
        postcut(&config, &["ingest", "--units", missing.to_str().unwrap()]).status.code(),
        Some(4)
    );
    // stale upstream artifacts
    ok(&config, &["ingest"]);
    let units = tmp.path().join("out/ingest/units.geojson");
    let mut text = fs::read_to_string(&units).unwrap();
    text.push(' ');
    fs::write(&units, text).unwrap();
    assert_eq!(postcut(&config, &["network"]).status.code(), Some(2));
    // unknown config key
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "thetta = 0.1\n").unwrap();
    assert_eq!(postcut(&bad, &["ingest"]).status.code(), Some(2));
}
