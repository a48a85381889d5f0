use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use acmp::graph::io::read_bundle;
use serde_json::Value;

fn acmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acmp"))
        .args(args)
        .env_remove("ACMP_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = acmp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a strict CSV file (equal field counts, header required).
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = csv_rows(path);
    let k = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn dir_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fig4_contrasts_grand_and_acmp() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let summary = ok(&["simulate", "--preset", "fig4", "--out", dir_str(tmp.path())]);
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(summary["blow_up"], false);

    let grand = column(&tmp.path().join("grand/energy.csv"), "dirichlet");
    assert!(grand.last().unwrap() < &(1e-6 * grand[0]));
    let acmp = column(&tmp.path().join("acmp-gcn/energy.csv"), "dirichlet");
    assert!(*acmp.last().unwrap() > 0.01);

    let run = read_json(&tmp.path().join("run.json"));
    assert_eq!(run["seed"], 42);
    assert_eq!(run["runs"].as_array().unwrap().len(), 2);
    assert_eq!(
        run["config"]["model"],
        serde_json::json!(["grand", "acmp-gcn"])
    );
    assert!(run["runs"][0]["stats"]["accepted"].as_u64().unwrap() > 0);
}

#[test]
fn all_csv_outputs_are_strict() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--preset",
        "fig2",
        "--out",
        dir_str(tmp.path()),
        "--t-end",
        "2",
    ]);
    let (h, rows) = csv_rows(&tmp.path().join("trajectory.csv"));
    assert_eq!(h, ["t", "node", "channel", "value"]);
    assert_eq!(rows.len(), 5 * 100 * 2);
    let (h, rows) = csv_rows(&tmp.path().join("clusters.csv"));
    assert_eq!(h, ["t", "node", "corner_index"]);
    assert!(rows.iter().all(|r| r[2].parse::<u64>().unwrap() < 4));
    let (h, _) = csv_rows(&tmp.path().join("energy.csv"));
    assert_eq!(
        h,
        [
            "t",
            "dirichlet",
            "pseudo_gl",
            "norm_sq",
            "mass_center_0",
            "mass_center_1"
        ]
    );
}

#[test]
fn fig6_blows_up_without_wells_and_stays_bounded_with_them() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d0");
    let summary = ok(&["simulate", "--preset", "fig6", "--out", dir_str(&dir)]);
    assert_eq!(summary["blow_up"], true);
    assert!(summary["runs"][0]["max_abs"].as_f64().unwrap() > 1e3);
    assert_eq!(read_json(&dir.join("run.json"))["blow_up"], true);

    let dir = tmp.path().join("d1");
    let summary = ok(&[
        "simulate",
        "--preset",
        "fig6",
        "--delta",
        "1",
        "--out",
        dir_str(&dir),
    ]);
    assert_eq!(summary["blow_up"], false);
    let max = summary["runs"][0]["max_abs"].as_f64().unwrap();
    assert!(max.is_finite() && max <= 10.0, "{max}");
}

#[test]
fn empty_graph_grand_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.json");
    fs::write(
        &cfg,
        r#"{
          "graph": {"two_class": {"n": 6, "p_in": 0, "p_out": 0, "means": [-1, 1], "sigma": 1, "dim": 2}},
          "model": "grand",
          "solver": {"t_end": 3, "sample_every": 1},
          "seed": 3
        }"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "simulate",
        "--config",
        dir_str(&cfg),
        "--out",
        dir_str(&out),
    ]);
    let (_, rows) = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 4 * 6 * 2);
    let initial: Vec<&str> = rows[..12].iter().map(|r| r[3].as_str()).collect();
    for chunk in rows.chunks(12) {
        let values: Vec<&str> = chunk.iter().map(|r| r[3].as_str()).collect();
        assert_eq!(values, initial);
    }
}

#[test]
fn simulation_is_reproducible_from_run_json() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "simulate",
        "--preset",
        "trapping",
        "--out",
        dir_str(&a),
        "--t-end",
        "5",
        "--beta",
        "0",
    ]);
    let echo = serde_json::to_string(&read_json(&a.join("run.json"))["config"]).unwrap();
    let cfg = tmp.path().join("echo.json");
    fs::write(&cfg, echo).unwrap();
    ok(&["simulate", "--config", dir_str(&cfg), "--out", dir_str(&b)]);
    for f in ["trajectory.csv", "energy.csv", "clusters.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("noseed.json");
    fs::write(
        &cfg,
        r#"{"graph": {"two_class": {"n": 10, "p_in": 0.5, "p_out": 0.1, "means": [-1, 1], "sigma": 1, "dim": 1}},
            "solver": {"t_end": 1}}"#,
    )
    .unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let out = tmp.path().join(format!("{env:?}{flag:?}"));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_acmp"));
        cmd.args([
            "simulate",
            "--config",
            dir_str(&cfg),
            "--out",
            dir_str(&out),
        ]);
        cmd.env_remove("ACMP_SEED");
        if let Some(e) = env {
            cmd.env("ACMP_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success());
        read_json(&out.join("run.json"))["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None), 0);
    assert_eq!(run(Some("17"), None), 17);
    assert_eq!(run(Some("17"), Some("5")), 5);
}

#[test]
fn sweep_single_point_matches_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let sweep = tmp.path().join("sweep");
    ok(&[
        "simulate",
        "--preset",
        "fig5",
        "--out",
        dir_str(&sim),
        "--t-end",
        "5",
    ]);
    ok(&[
        "sweep-beta",
        "--preset",
        "fig5",
        "--betas",
        "0",
        "--out",
        dir_str(&sweep),
        "--t-end",
        "5",
    ]);
    let run = read_json(&sim.join("run.json"));
    let sim_final = run["runs"][0]["final_dirichlet"].as_f64().unwrap();
    let col = column(&sweep.join("sweep.csv"), "final_dirichlet");
    assert_eq!(col, vec![sim_final]);
}

#[test]
fn fig5_sweep_reports_finite_separation() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "sweep-beta",
        "--preset",
        "fig5",
        "--out",
        dir_str(tmp.path()),
        "--jobs",
        "2",
    ]);
    let path = tmp.path().join("sweep.csv");
    assert_eq!(column(&path, "beta"), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    let sep = column(&path, "separation");
    assert_eq!(sep.len(), 5);
    assert!(sep.iter().all(|s| s.is_finite()));
}

#[test]
fn sweep_is_independent_of_job_count() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = |d: &Path, jobs: &str| {
        vec![
            "sweep-beta".to_string(),
            "--preset".into(),
            "fig5".into(),
            "--t-end".into(),
            "3".into(),
            "--out".into(),
            dir_str(d).to_string(),
            "--jobs".into(),
            jobs.into(),
        ]
    };
    let run = |v: Vec<String>| ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    run(args(&a, "1"));
    run(args(&b, "4"));
    assert_eq!(
        fs::read(a.join("sweep.csv")).unwrap(),
        fs::read(b.join("sweep.csv")).unwrap()
    );
}

#[test]
fn dominant_repulsion_without_wells_flags_blow_up() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "sweep-beta",
        "--preset",
        "fig6",
        "--betas",
        "1,2",
        "--delta",
        "0",
        "--out",
        dir_str(tmp.path()),
    ]);
    let (header, rows) = csv_rows(&tmp.path().join("sweep.csv"));
    let k = header.iter().position(|h| h == "blow_up").unwrap();
    assert!(rows.iter().all(|r| r[k] == "true"));
}

#[test]
fn gen_graph_is_deterministic_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["gen-graph", "--seed", "11", "--out", dir_str(&a)]);
    ok(&["gen-graph", "--seed", "11", "--out", dir_str(&b)]);
    for f in ["edges.txt", "labels.txt", "features.txt", "graph.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let bundle = read_bundle(&a).unwrap();
    assert_eq!(bundle.graph.node_count(), 100);
    let h = bundle.graph.homophily_level().unwrap().level;
    assert!((h - 0.9).abs() <= 0.05, "{h}");

    let spec = acmp::graph::TwoClassGraphSpec::synthetic(11);
    let (g, x) = acmp::graph::generate_two_class_graph(&spec).unwrap();
    assert_eq!(bundle.graph, g);
    assert_eq!(bundle.features.unwrap(), x);
}

#[test]
fn gen_graph_two_nodes_full_probability_is_one_edge() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "gen-graph",
        "--n",
        "2",
        "--p-in",
        "1",
        "--p-out",
        "1",
        "--out",
        dir_str(tmp.path()),
    ]);
    let bundle = read_bundle(tmp.path()).unwrap();
    assert_eq!(bundle.graph.edge_count(), 1);
    assert_eq!(bundle.graph.weight(0, 1), 1.0);
}

#[test]
fn bundle_can_drive_a_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g");
    ok(&[
        "gen-graph",
        "--n",
        "20",
        "--seed",
        "1",
        "--out",
        dir_str(&g),
    ]);
    let out = tmp.path().join("out");
    let s = ok(&[
        "simulate",
        "--preset",
        "fig2",
        "--graph",
        dir_str(&g),
        "--t-end",
        "2",
        "--out",
        dir_str(&out),
    ]);
    assert_eq!(read_json(&out.join("run.json"))["graph"]["nodes"], 20);
    assert_eq!(s["runs"][0]["outcome"]["status"], "completed");
}

#[test]
fn flocking_preset_holds_and_separates() {
    let tmp = tempfile::tempdir().unwrap();
    let v = ok(&[
        "flocking",
        "--preset",
        "flocking",
        "--out",
        dir_str(tmp.path()),
    ]);
    assert_eq!(v["condition"]["holds"], true);
    assert!(v["condition"]["margin"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["verdict"]["separated"], true);
    assert!(v["verdict"]["inter_min"].as_f64().unwrap() >= 0.5);
    assert!(tmp.path().join("flocking.json").exists());
}

#[test]
fn flocking_equal_strengths_fail_the_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let v = ok(&[
        "flocking",
        "--preset",
        "flocking",
        "--d",
        "1",
        "--out",
        dir_str(tmp.path()),
    ]);
    assert!(v["condition"]["margin"].as_f64().unwrap() < 0.0);
    assert_eq!(v["condition"]["holds"], false);
    assert!(v["agreement"]
        .as_str()
        .unwrap()
        .starts_with("condition fails"));
}

#[test]
fn flocking_without_repulsion_or_wells_reaches_group_consensus() {
    let tmp = tempfile::tempdir().unwrap();
    let v = ok(&[
        "flocking",
        "--preset",
        "flocking",
        "--d",
        "0",
        "--delta",
        "0",
        "--out",
        dir_str(tmp.path()),
    ]);
    assert!(v["m2_bound"].is_null());
    let (_, rows) = csv_rows(&tmp.path().join("trajectory.csv"));
    let t_end: f64 = rows.last().unwrap()[0].parse().unwrap();
    let last: Vec<(usize, usize, f64)> = rows
        .iter()
        .filter(|r| r[0].parse::<f64>().unwrap() == t_end)
        .map(|r| {
            (
                r[1].parse().unwrap(),
                r[2].parse().unwrap(),
                r[3].parse().unwrap(),
            )
        })
        .collect();
    for group in [0..5, 5..10] {
        for ch in 0..2 {
            let vals: Vec<f64> = last
                .iter()
                .filter(|(i, k, _)| group.contains(i) && *k == ch)
                .map(|e| e.2)
                .collect();
            let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - vals.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-8, "{spread}");
        }
    }
}

#[test]
fn config_errors_exit_2_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"solver": {"t_end": 1}, "unknown": 3}"#).unwrap();
    for args in [
        vec!["simulate", "--config", dir_str(&bad)],
        vec!["simulate", "--preset", "fig9"],
        vec!["simulate"],
        vec!["simulate", "--preset", "fig2", "--t-end", "-1"],
        vec!["simulate", "--preset", "fig2", "--model", "gcn"],
        vec!["sweep-beta", "--preset", "fig2"],
        vec!["gen-graph", "--p-in", "0.1", "--p-out", "0.5"],
        vec!["flocking", "--preset", "fig2"],
        vec!["simulate", "--what"],
    ] {
        let out = acmp(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_json(&out)["error"]["kind"], "config", "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_3_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = acmp(&[
        "simulate",
        "--preset",
        "fig2",
        "--graph",
        "/nonexistent/graph",
        "--out",
        dir_str(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "io");

    let cfg = tmp.path().join("budget.json");
    fs::write(
        &cfg,
        r#"{"graph": {"two_class": {"n": 10, "p_in": 0.5, "p_out": 0.1, "means": [-1, 1], "sigma": 1, "dim": 1}},
            "solver": {"t_end": 10, "max_steps": 3}}"#,
    )
    .unwrap();
    let out = acmp(&[
        "simulate",
        "--config",
        dir_str(&cfg),
        "--out",
        dir_str(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "solver");
}
