use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use maooam_core::io::{read_checkpoint, RunManifest};

fn maooam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maooam")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `name = value  # note` lines as a map of raw values.
fn values(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let (k, rest) = l.split_once('=')?;
            let v = rest.split('#').next()?.trim();
            Some((k.trim().to_string(), v.to_string()))
        })
        .collect()
}

fn num(map: &HashMap<String, String>, key: &str) -> f64 {
    map[key].parse().unwrap_or_else(|_| panic!("{key} = {}", map[key]))
}

#[test]
fn constants_report_default_values() {
    let o = maooam(&["constants"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = values(&stdout(&o));
    assert!((num(&v, "kappa") - 15.0).abs() < 0.15);
    assert!((num(&v, "mu_gamma_a") - 9.0).abs() < 0.09);
    assert!((num(&v, "mu_gamma_o") - 500.0).abs() < 5.0);
    assert!((num(&v, "lipschitz_bound") - 18.8587).abs() < 1e-3);
    assert_eq!(v["lipschitz_ok"], "true");
    let n = num(&v, "N_modes");
    assert!(n >= 1e12 * num(&v, "C_rho"), "N {n:e}");
}

#[test]
fn constants_follow_c_rho_override() {
    let o = maooam(&["constants", "--c-rho", "1e-20"]);
    assert!(o.status.success());
    let v = values(&stdout(&o));
    assert_eq!(v["eps_star"], "unconditional");
    assert!(!v.contains_key("N_modes"));
}

#[test]
fn equilibrium_closed_form() {
    let o = maooam(&["equilibrium", "--ra", "170", "--ro", "170", "--eps-a", "1", "--lambda", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = values(&stdout(&o));
    assert!((num(&v, "T_a0") - 278.3).abs() < 0.1);
    assert!((num(&v, "T_o0") - 308.0).abs() < 0.1);
}

#[test]
fn unknown_key_exits_with_config_code() {
    let o = maooam(&["--set", "physical.epsilon=0.5", "constants"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("physical.epsilon"), "{err}");
}

#[test]
fn invalid_parameter_exits_with_config_code() {
    let o = maooam(&["--set", "physical.eps_a=1.5", "equilibrium"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("eps_a"));
    let o = maooam(&["--resolution", "8by8", "constants"]);
    assert_eq!(o.status.code(), Some(2));
    let o = maooam(&["--t-end", "3 weeks", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_length_run_writes_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = maooam(&["--resolution", "4x4", "--t-end", "0", "--out", out.to_str().unwrap(), "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let init = read_checkpoint(&out.join("initial.ckpt")).unwrap();
    let fin = read_checkpoint(&out.join("final.ckpt")).unwrap();
    assert_eq!(init.run.state, fin.run.state);
    assert_eq!(fin.run.steps, 0);
    let series = std::fs::read_to_string(out.join("series.ndjson")).unwrap();
    assert_eq!(series.lines().count(), 1);
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn manifest_lists_artifacts_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = maooam(&["--resolution", "4x4", "--t-end", "2d", "--emit", "csv", "--out", out.to_str().unwrap(), "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m.command, "simulate");
    assert_eq!(m.exit_status, 0);
    assert!(m.verify_config().unwrap());
    for name in ["config.toml", "series.csv", "initial.ckpt", "final.ckpt"] {
        assert!(m.artifacts.iter().any(|a| a == Path::new(name)), "{name} missing from {:?}", m.artifacts);
    }
    for a in &m.artifacts {
        assert!(out.join(a).exists(), "{a:?}");
    }
    assert!(m.end_wall >= m.start_wall);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, exec: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["--resolution", "5x5", "--t-end", "3d", "--out", out.to_str().unwrap()];
        args.extend_from_slice(exec);
        args.push("simulate");
        assert!(maooam(&args).status.success());
        std::fs::read(out.join("series.ndjson")).unwrap()
    };
    let a = run("a", &[]);
    assert_eq!(a, run("b", &[]));
    assert_eq!(a, run("c", &["--sequential"]));
}

#[test]
fn restart_appends_to_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let whole = dir.path().join("whole");
    let split = dir.path().join("split");
    let args = |out: &Path, t: &'static str| {
        vec!["--resolution".to_string(), "4x4".into(), "--t-end".into(), t.into(), "--out".into(), out.display().to_string()]
    };
    let run = |mut a: Vec<String>, extra: &[String]| {
        a.push("simulate".into());
        a.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_maooam")).args(&a).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run(args(&whole, "4d"), &[]);
    run(args(&split, "2d"), &[]);
    let ckpt = split.join("final.ckpt").display().to_string();
    run(args(&split, "4d"), &["--restart".into(), ckpt]);
    let a = read_checkpoint(&whole.join("final.ckpt")).unwrap();
    let b = read_checkpoint(&split.join("final.ckpt")).unwrap();
    assert_eq!(a.run, b.run);
    let lines = |p: &Path| std::fs::read_to_string(p.join("series.ndjson")).unwrap().lines().count();
    assert_eq!(lines(&whole), lines(&split));
}

#[test]
fn overflow_writes_abort_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = maooam(&[
        "--resolution",
        "4x4",
        "--set",
        "numerics.overflow_cap=1e-3",
        "--out",
        out.to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("overflow"));
    let abort = read_checkpoint(&out.join("abort.ckpt")).unwrap();
    assert_eq!(abort.run.steps, 0);
    assert_eq!(manifest(&out).exit_status, 3);
}

#[test]
fn validate_passes_at_low_resolution() {
    let o = maooam(&["--resolution", "4x4", "validate", "--cases", "16"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
}

#[test]
fn experiment_commands_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str], &str); 5] = [
        ("tlm", &["tlm", "--horizon", "5d", "--n-vectors", "3"], "lyapunov.json"),
        ("sync", &["sync", "--horizon", "5d"], "sync_summary.json"),
        ("continuity", &["continuity", "--horizon", "2d"], "continuity.json"),
        ("param-sweep", &["param-sweep", "--horizon", "2d"], "cell_003/cell.json"),
        ("converge", &["converge", "--ladder", "2x2,3x3,4x4", "--horizon", "1d"], "converge.json"),
    ];
    for (name, cmd, artifact) in cases {
        let out = dir.path().join(name);
        let mut args = vec!["--resolution", "4x4", "--out", out.to_str().unwrap()];
        args.extend_from_slice(cmd);
        let o = maooam(&args);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(out.join(artifact).exists(), "{name}: {artifact}");
        let m = manifest(&out);
        assert!(m.artifacts.iter().any(|a| a == Path::new(artifact)), "{name}: {:?}", m.artifacts);
    }
}
