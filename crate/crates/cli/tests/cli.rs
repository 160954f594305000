use std::io::Write;
use std::process::{Command, Output, Stdio};

fn dirmech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirmech"))
        .args(args)
        .env_remove("DIRMECH_SEED")
        .output()
        .expect("binary runs")
}

fn dirmech_stdin(args: &[&str], input: &str, env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dirmech"));
    cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    match env_seed {
        Some(s) => cmd.env("DIRMECH_SEED", s),
        None => cmd.env_remove("DIRMECH_SEED"),
    };
    let mut child = cmd.spawn().expect("binary runs");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn generated(args: &[&str]) -> String {
    let o = dirmech(args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn psi_at_full_marginals_is_one() {
    let o = dirmech(&["psi", "--x1", "1", "--x2", "1", "--rho1", "0.3", "--rho2", "0.3", "--trials", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    // lower, mc_estimate, upper_k0, upper_k3
    for col in [4, 5, 7, 8] {
        assert_eq!(rows[0][col].parse::<f64>().unwrap(), 1.0, "column {col}");
    }
}

#[test]
fn constants_report_and_exit_status() {
    let o = dirmech(&["constants", "--steps-q", "200", "--steps-l", "100"]);
    let text = stdout(&o);
    let c3 = data_rows(&text).into_iter().find(|r| r[0] == "c3").unwrap();
    assert!((c3[1].parse::<f64>().unwrap() - 0.814462).abs() <= 5e-7);
    assert_eq!(c3[3], "PASS");
    // two analysis constants miss their rounded references by < 1e-7
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma_c3"));
}

#[test]
fn flag_errors_exit_64_and_help_exits_0() {
    assert_eq!(dirmech(&["--no-such-flag"]).status.code(), Some(64));
    assert_eq!(dirmech(&["psi", "--x1", "nope", "--x2", "1", "--rho1", "0", "--rho2", "0"]).status.code(), Some(64));
    assert_eq!(dirmech(&[]).status.code(), Some(64));
    let help = dirmech(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    for sub in ["copula-test", "round", "psi", "odrs", "schedule", "certify", "constants", "gen"] {
        assert!(stdout(&help).contains(sub), "{sub}");
    }
}

#[test]
fn invalid_instances_exit_1() {
    let bad = r#"{"left":["a"],"right":["b"],"edges":[{"u":"a","v":"b","x":1.5,"rho":0.3}]}"#;
    let o = dirmech_stdin(&["round", "--in", "-", "--trials", "10"], bad, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("x(N(v))"));
    let o = dirmech_stdin(&["odrs", "--in", "-"], "not json", None);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(dirmech(&["round", "--in", "/nonexistent/inst.json"]).status.code(), Some(1));
}

#[test]
fn headers_echo_seed_trials_and_parameters() {
    let inst = generated(&["gen", "bipartite", "--seed", "5"]);
    let o = dirmech_stdin(&["round", "--in", "-", "--trials", "2000"], &inst, Some("41"));
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# dirmech ") && text.contains("git="));
    assert!(lines.next().unwrap().contains("seed=41 trials=2000"));
    assert!(lines.next().unwrap().contains("dirmech round --seed 41 --trials 2000 --in -"));
    // an explicit flag overrides the environment
    let o2 = dirmech_stdin(&["round", "--in", "-", "--trials", "2000", "--seed", "41"], &inst, Some("9"));
    assert_eq!(stdout(&o2), text);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let stream = generated(&["gen", "stream", "--seed", "2", "--offline", "4", "--arrivals", "6"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stream.json");
    std::fs::write(&path, &stream).unwrap();
    let p = path.to_str().unwrap();
    let one = dirmech(&["odrs", "--in", p, "--trials", "30000", "--seed", "3", "--threads", "1"]);
    let two = dirmech(&["odrs", "--in", p, "--trials", "30000", "--seed", "3", "--threads", "3"]);
    assert!(one.status.success());
    assert_eq!(stdout(&one), stdout(&two));
}

#[test]
fn round_marginals_match_within_half_widths() {
    let inst = generated(&["gen", "bipartite", "--seed", "7", "--left", "3", "--right", "3"]);
    let o = dirmech_stdin(&["round", "--in", "-", "--trials", "1000000", "--seed", "7"], &inst, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&stdout(&o));
    let marginals: Vec<_> = rows.iter().filter(|r| r[0] == "marginal").collect();
    assert!(!marginals.is_empty());
    for r in marginals {
        let (emp, x, hw): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!((emp - x).abs() <= hw, "{r:?}");
    }
}

#[test]
fn json_output_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = dirmech(&[
        "certify",
        "--g-min",
        "0.4",
        "--epsilon",
        "0.05",
        "--depth",
        "5",
        "--exact",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["header"]["subcommand"], "certify");
    assert_eq!(v["header"]["seed"], 0);
    assert_eq!(v["result"]["report"]["passed"], true);
    assert!(v["result"]["report"]["boxes_checked"].as_u64().unwrap() > 0);
    assert!(v["result"]["report"]["worst_bound"].as_f64().unwrap() < 0.3947);
    assert_eq!(v["result"]["exact_checks"].as_array().unwrap().len(), 5);
    let product = v["result"]["small_g"]["product"].as_f64().unwrap();
    assert!((product - 0.394774).abs() < 1e-5);
}

#[test]
fn certify_failure_exits_2() {
    let o = dirmech(&["certify", "--g-min", "0.4", "--epsilon", "0.1", "--depth", "1", "--c", "0.2", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("passed,\"false\""));
}

#[test]
fn generated_instances_feed_their_commands() {
    let sched = generated(&["gen", "schedule", "--machines", "2", "--jobs", "4", "--seed", "1"]);
    let o = dirmech_stdin(&["schedule", "--in", "-", "--trials", "500"], &sched, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&stdout(&o)).len(), 8);
    let stream = generated(&["gen", "overloaded", "--arrivals", "5"]);
    let o = dirmech_stdin(&["odrs", "--in", "-", "--trace"], &stream, None);
    assert!(o.status.success());
    assert!(stdout(&o).contains("arrival_index,u,v,g,r,y,rho,x,selected,committed"));
    let o = dirmech(&["copula-test", "--rho", "0.5", "--trials", "20000", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["header"]["trials"], 20000);
}
