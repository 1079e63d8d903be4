mod common;

use std::path::Path;
use std::process::{Command, Output};

use catalytic::cli::SimulationMetadata;
use catalytic::experiment::simulate_population;
use catalytic::model::ModelFamily;
use catalytic::posterior::{posterior_summary, SampleMatrix};
use catalytic::{build_catalytic_prior, fit_linear_posterior, fit_simple_model, Dataset, SynthConfig};
use common::*;
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn catalytic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catalytic"))
        .current_dir(dir)
        .env_remove("CATALYTIC_SEED")
        .env_remove("CATALYTIC_OUT")
        .env_remove("CATALYTIC_FORMAT")
        .env_remove("CATALYTIC_CONFIG")
        .env_remove("CATALYTIC_WORKERS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn simulate_is_reproducible_and_records_its_spec() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&catalytic(d, &["simulate", "--n", "300", "--seed", "4", "--out", "a.csv"]));
    ok(&catalytic(d, &["simulate", "--n", "300", "--seed", "4", "--out", "b.csv"]));
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("b.csv")).unwrap());
    let data = Dataset::load_csv(d.join("a.csv")).unwrap();
    assert_eq!(data.n(), 300);

    let meta: SimulationMetadata = serde_json::from_slice(&std::fs::read(d.join("a.meta.json")).unwrap()).unwrap();
    assert_eq!((meta.rows, meta.treated, meta.spec.n, meta.spec.seed), (300, 150, 300, 4));
    // the recorded spec regenerates the file
    let again = simulate_population(&meta.spec).unwrap();
    assert_eq!(again.data, data);
    let spec_path = d.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_vec(&meta.spec).unwrap()).unwrap();
    ok(&catalytic(d, &["simulate", "--config", "spec.json", "--out", "c.csv"]));
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("c.csv")).unwrap());
}

#[test]
fn linear_fit_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut r = rng(31);
    let x = DMatrix::from_fn(25, 3, |_, j| if j == 0 { 1.0 } else { normal(&mut r) });
    let y = DVector::from_fn(25, |i, _| 0.5 + x[(i, 1)] + 0.7 * normal(&mut r));
    let data = Dataset::new(x, y, vec![catalytic::INTERCEPT.into(), "a".into(), "b".into()]).unwrap();
    data.save_csv(d.join("lin.csv")).unwrap();
    ok(&catalytic(d, &["fit", "--data", "lin.csv", "--model", "linear", "--sigma", "0.7", "--seed", "9", "--out", "post.json"]));
    let out = json(&d.join("post.json"));

    let family = ModelFamily::Gaussian { sigma: 0.7 };
    let simple = fit_simple_model(&data, &[0], family).unwrap();
    let prior = build_catalytic_prior(&data, &SynthConfig::with_defaults(3, simple, 9)).unwrap();
    let post = fit_linear_posterior(&data, &prior, 0.7).unwrap();
    assert_eq!(floats(&out["mean"]), post.mean.iter().copied().collect::<Vec<_>>());
    assert_eq!(out["method"], "closed_form");
}

#[test]
fn flat_fit_on_separated_data_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    separated_data(40, 3, 9).save_csv(d.join("sep.csv")).unwrap();
    let out = catalytic(d, &["fit", "--data", "sep.csv", "--prior", "flat", "--out", "flat.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    ok(&catalytic(d, &["fit", "--data", "sep.csv", "--prior", "catalytic", "--out", "cat.json"]));
    let cat = json(&d.join("cat.json"));
    assert_eq!(cat["converged"], true);
    assert!(floats(&cat["mean"]).iter().all(|b| b.abs() < 1e3));
}

#[test]
fn catalytic_fit_reports_the_synthetic_weight() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&catalytic(d, &["simulate", "--n", "400", "--out", "pop.csv"]));
    ok(&catalytic(d, &["fit", "--data", "pop.csv", "--arm", "treated", "--tau", "24", "--m", "400", "--out", "t.json"]));
    let t = json(&d.join("t.json"));
    assert!((t["catalytic"]["weight_per_row"].as_f64().unwrap() - 0.06).abs() < 1e-15);
    assert_eq!(t["n"], 200);
    ok(&catalytic(d, &["fit", "--data", "pop.csv", "--format", "csv", "--out", "t.csv"]));
    let text = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(text.starts_with("name,estimate,sd"));
}

fn write_samples(path: &Path, draws: DMatrix<f64>, names: &[String]) {
    let mut buf = Vec::new();
    SampleMatrix::from_draws(draws).write_csv(&mut buf, Some(names)).unwrap();
    std::fs::write(path, buf).unwrap();
}

#[test]
fn effect_command_wraps_the_causal_layer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&catalytic(d, &["simulate", "--n", "200", "--out", "units.csv"]));
    let units = Dataset::load_csv(d.join("units.csv")).unwrap();
    let names = units.column_names().to_vec();
    let mut r = rng(32);
    let t = DMatrix::from_fn(300, 12, |_, _| 0.1 * normal(&mut r));
    let c = DMatrix::from_fn(300, 12, |_, _| 0.1 * normal(&mut r));
    write_samples(&d.join("t.csv"), t.clone(), &names);
    write_samples(&d.join("c.csv"), c, &names);

    ok(&catalytic(d, &["effect", "--treatment", "t.csv", "--control", "t.csv", "--covariates", "units.csv", "--out", "same.json"]));
    let same = json(&d.join("same.json"));
    assert_eq!(same[0]["gamma_avg"].as_f64(), Some(0.0));

    ok(&catalytic(d, &[
        "effect", "--treatment", "t.csv", "--control", "c.csv", "--covariates", "units.csv",
        "--group", "all", "--group", "hsdip == 1", "--draws-out", "draws.csv", "--out", "eff.json",
    ]));
    let eff = json(&d.join("eff.json"));
    assert_eq!(eff[1]["group_label"], "hsdip == 1");
    let mut rdr = csv::Reader::from_path(d.join("draws.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), vec!["All", "hsdip == 1"]);
    let draws: Vec<f64> = rdr.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(draws.len(), 300);
    let s = posterior_summary(&draws, 0.99).unwrap();
    let sum = &eff[1]["summary"];
    assert_eq!(sum["lower"].as_f64(), Some(s.lower));
    assert_eq!(sum["upper"].as_f64(), Some(s.upper));
    assert_eq!(sum["mean"].as_f64(), Some(s.mean));

    // sample columns must match the covariates
    write_samples(&d.join("bad.csv"), DMatrix::zeros(10, 3), &names[..3]);
    let out = catalytic(d, &["effect", "--treatment", "bad.csv", "--control", "bad.csv", "--covariates", "units.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiment_smoke_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["experiment", "--replications", "5", "--n-grid", "100", "--seed", "3"];
    ok(&catalytic(d, &[&args[..], &["--out", "a", "--workers", "2"]].concat()));
    ok(&catalytic(d, &[&args[..], &["--out", "b", "--workers", "1"]].concat()));
    for f in ["report.json", "table.csv", "msdpte.csv", "replications.csv"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let table = std::fs::read_to_string(d.join("a/table.csv")).unwrap();
    assert!(table.starts_with("Group,n,flat,cauchy,catalytic"));
    assert!(table.lines().nth(1).unwrap().starts_with("All,100,"));
}

#[test]
fn bridge_check_labels_and_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&catalytic(d, &["bridge-check", "--kind", "ridge", "--kind", "lq:1/3", "--instances", "2", "--out", "b.json"]));
    let b = json(&d.join("b.json"));
    let entries = b["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for e in entries {
        let rep = &e["report"];
        if e["label"] == "ridge" {
            assert!(rep["objective_gap"].as_f64().unwrap() <= 1e-12 * (1.0 + rep["solver_objective"].as_f64().unwrap().abs()));
            assert_eq!(rep["guarantee"], "global");
        } else {
            assert_eq!(rep["guarantee"], "local");
            assert_eq!(rep["local_only"], true);
        }
    }
}

#[test]
fn usage_errors_and_environment_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(catalytic(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(catalytic(d, &["fit", "--data", "missing.csv"]).status.code(), Some(1));
    assert_eq!(catalytic(d, &["bridge-check", "--kind", "lq:abc"]).status.code(), Some(1));
    assert_eq!(catalytic(d, &["--help"]).status.code(), Some(0));

    let out = Command::new(env!("CARGO_BIN_EXE_catalytic"))
        .current_dir(d)
        .env("CATALYTIC_SEED", "11")
        .env("CATALYTIC_OUT", "env.csv")
        .args(["simulate", "--n", "50"])
        .output()
        .unwrap();
    ok(&out);
    let meta = json(&d.join("env.meta.json"));
    assert_eq!(meta["spec"]["seed"], 11);
}
