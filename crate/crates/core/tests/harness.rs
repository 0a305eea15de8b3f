use std::path::{Path, PathBuf};
use std::process::Command;

use optlab::harness::analysis;
use optlab::harness::config::RunConfig;
use optlab::harness::run::{self, METRICS_FILE, TRACE_FILE};
use serde_json::Value;

const SMALL: &str = r#"
scenario = "grid"
layout = "grid9"
share_params = false
total_steps = 3000
hidden = [16]
advisor_hidden = [16]
embed_dim = 8
embed_hidden = [16]
sr_hidden = [16]
warmup = 64
target_interval = 50
eps_anneal = 1000
"#;

fn small(extra: &str) -> RunConfig {
    RunConfig::parse_str(&format!("{SMALL}{extra}")).unwrap()
}

fn records(dir: &Path, file: &str) -> Vec<Value> {
    std::fs::read_to_string(dir.join(file))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn small_text(steps: u64) -> String {
    SMALL.replace("total_steps = 3000", &format!("total_steps = {steps}"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optlab"))
}

#[test]
fn file_round_trips_through_canonical_form() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("preset.cfg"), "scenario = \"coop_nav\"\nepisode_cap = 50\n").unwrap();
    std::fs::write(dir.path().join("run.cfg"), "include = \"preset.cfg\"\nadvisor = \"sro\"\nmu = 0.05\n").unwrap();
    let cfg = RunConfig::load(&dir.path().join("run.cfg")).unwrap();
    let canonical = cfg.to_canonical();
    std::fs::write(dir.path().join("canon.cfg"), &canonical).unwrap();
    let again = RunConfig::load(&dir.path().join("canon.cfg")).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_canonical(), canonical);
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("advisor = \"loa\"\n");
    run::run(&cfg, &dir.path().join("a")).unwrap();
    run::run(&cfg, &dir.path().join("b")).unwrap();
    for f in [METRICS_FILE, "summary.json", "params.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    let mut other = cfg.clone();
    other.seed = 1;
    run::run(&other, &dir.path().join("c")).unwrap();
    assert_ne!(
        std::fs::read(dir.path().join("a").join(METRICS_FILE)).unwrap(),
        std::fs::read(dir.path().join("c").join(METRICS_FILE)).unwrap()
    );
}

#[test]
fn sro_trace_follows_the_loop_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse_str(
        r#"
scenario = "predator_prey"
advisor = "sro"
share_params = false
total_steps = 2000
hidden = [16]
embed_dim = 8
embed_hidden = [16]
sr_hidden = [16]
warmup = 64
target_interval = 40
eps_anneal = 500
termination_lr = 0.05
xi = -0.05
trace = true
"#,
    )
    .unwrap();
    let summary = run::run(&cfg, dir.path()).unwrap();
    let trace = records(dir.path(), TRACE_FILE);
    let t = cfg.segment_length as u64;
    let k = cfg.target_interval;
    let mut held: Vec<Option<u64>> = vec![None; cfg.num_agents];
    let (mut actor, mut syncs, mut reselect_after_stop) = (0, 0, 0);
    for e in &trace {
        match e["event"].as_str().unwrap() {
            "actor_update" => {
                actor += 1;
                assert_eq!(e["step"].as_u64().unwrap() % t, 0, "{e}");
            }
            "target_sync" => {
                syncs += 1;
                assert_eq!(e["advisor_update"].as_u64().unwrap() % k, 0, "{e}");
            }
            "advice" => {
                let agent = e["agent"].as_u64().unwrap() as usize;
                let option = e["option"].as_u64().unwrap();
                assert_ne!(option, agent as u64, "{e}");
                let reselected = e["reselected"].as_bool().unwrap();
                match e["terminated"].as_bool() {
                    None => assert!(reselected, "{e}"),
                    Some(true) => {
                        assert!(reselected, "{e}");
                        reselect_after_stop += 1;
                    }
                    Some(false) => {
                        assert!(!reselected, "{e}");
                        assert_eq!(held[agent], Some(option), "{e}");
                    }
                }
                held[agent] = Some(option);
            }
            other => panic!("unknown event {other}"),
        }
    }
    assert!(actor > 0 && syncs > 0 && reselect_after_stop > 0);
    assert_eq!(syncs, summary.target_syncs);
}

#[test]
fn episodes_are_fully_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("advisor = \"sro\"\n");
    let summary = run::run(&cfg, dir.path()).unwrap();
    let eps: Vec<Value> = records(dir.path(), METRICS_FILE).into_iter().filter(|r| r["kind"] == "episode").collect();
    assert!(summary.episodes >= 1);
    assert_eq!(eps.len() as u64, summary.episodes);
    let mut total = 0;
    for (i, e) in eps.iter().enumerate() {
        assert_eq!(e["episode"].as_u64().unwrap(), i as u64);
        let len = e["length"].as_u64().unwrap();
        assert!((1..=100).contains(&len));
        total += len;
        let returns: Vec<f64> = e["returns"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(e["team_return"].as_f64().unwrap(), returns.iter().sum::<f64>());
        let advice = e["advice"].as_array().unwrap();
        let mut steps = 0;
        for (a, row) in advice.iter().enumerate() {
            let row: Vec<u64> = row.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
            assert_eq!(row[a], 0);
            steps += row.iter().sum::<u64>();
        }
        assert_eq!(steps, len * cfg.num_agents as u64);
    }
    assert!(total <= cfg.total_steps);
}

#[test]
fn baseline_never_advises() {
    let dir = tempfile::tempdir().unwrap();
    run::run(&small(""), dir.path()).unwrap();
    for e in records(dir.path(), METRICS_FILE).iter().filter(|r| r["kind"] == "episode") {
        assert_eq!(e["transfer_weight"].as_f64().unwrap(), 0.0);
        assert!(e["advice"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|v| v == 0));
    }
}

#[test]
fn failed_runs_leave_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("");
    cfg.layout = "no_such_layout".into();
    assert!(run::run(&cfg, dir.path()).is_err());
    let err: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("error.json")).unwrap()).unwrap();
    assert!(err["error"].is_string() && err["message"].is_string());
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn cli_run_compare_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "g.cfg", &small_text(1500));
    let out = dir.path().join("r0");
    let st = bin().args(["run", "--config"]).arg(&cfg).args(["--seed", "4", "--out"]).arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let summary: Value = serde_json::from_slice(&st.stdout).unwrap();
    assert_eq!(summary["seed"], 4);

    let cmp = bin().args(["compare", "--metric", "team_return"]).arg(&out).arg(&out).output().unwrap();
    assert!(cmp.status.success());
    let table: Value = serde_json::from_slice(&cmp.stdout).unwrap();
    let m = &table["methods"][0];
    assert_eq!(m["runs"], 2);
    assert_eq!(m["values"][0], m["values"][1]);
    assert_eq!(m["iqr"].as_f64().unwrap(), 0.0);

    let raw = analysis::load_series(&out, "team_return").unwrap();
    let plot = bin().args(["plotdata", "--metric", "team_return", "--window", "1"]).arg(&out).output().unwrap();
    assert!(plot.status.success());
    let csv = String::from_utf8(plot.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), raw.points.len());
    for (row, (step, v)) in rows.iter().zip(&raw.points) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0].parse::<u64>().unwrap(), *step);
        assert_eq!(cols[1].parse::<f64>().unwrap(), *v);
        assert_eq!(cols[2].parse::<f64>().unwrap(), *v);
    }

    let nav = write_cfg(dir.path(), "n.cfg", "scenario = \"coop_nav\"\ntotal_steps = 200\nhidden = [8]\n");
    let out_nav = dir.path().join("nav");
    assert!(bin().args(["run", "--config"]).arg(&nav).arg("--out").arg(&out_nav).output().unwrap().status.success());
    let refused = bin().args(["compare", "--metric", "team_return"]).arg(&out).arg(&out_nav).output().unwrap();
    assert!(!refused.status.success());
    let err: Value = serde_json::from_slice(&refused.stderr).unwrap();
    assert_eq!(err["error"], "usage");
}

#[test]
fn cli_sweep_runs_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "g.cfg", &small_text(500));
    let root = dir.path().join("runs");
    let st = bin().args(["sweep", "--config"]).arg(&cfg).args(["--seeds", "0..2", "--out"]).arg(&root).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for s in 0..=2 {
        assert!(root.join(format!("grid-none-s{s}")).join("summary.json").exists());
    }
}

#[test]
fn cli_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_cfg(dir.path(), "bad.cfg", "gamma = = 1\n");
    let out = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");

    let unknown = write_cfg(dir.path(), "unknown.cfg", "speed = 3\n");
    let out = bin().args(["run", "--config"]).arg(&unknown).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(serde_json::from_slice::<Value>(&out.stderr).unwrap()["error"], "config");

    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(serde_json::from_slice::<Value>(&out.stderr).unwrap()["error"], "usage");
}

#[test]
fn env_override_reaches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "g.cfg", &small_text(5000));
    let out = dir.path().join("r");
    let st = bin()
        .env("OPLAB_TOTAL_STEPS", "320")
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success());
    let summary: Value = serde_json::from_slice(&st.stdout).unwrap();
    assert_eq!(summary["steps"], 320);
    assert!(std::fs::read_to_string(out.join("config.cfg")).unwrap().contains("total_steps = 320\n"));
}

#[test]
fn cli_oracle_matches_policy_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    // Two-state loop, one action, reward 1 everywhere, one option that never stops.
    let spec = r#"{
        "states": 2, "actions": 1, "gamma": 0.5,
        "transitions": [[[[1.0, 1, 1.0, false]]], [[[1.0, 0, 1.0, false]]]],
        "option_policies": [[[1.0], [1.0]]],
        "betas": [[0.0], [0.0]]
    }"#;
    let p = write_cfg(dir.path(), "p.json", spec);
    let out = bin().arg("oracle").arg(&p).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for s in 0..2 {
        assert!((v["q"][s][0].as_f64().unwrap() - 2.0).abs() < 1e-9);
    }
}
