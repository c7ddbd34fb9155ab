use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[defaults]
grid = { size = 12, half_width = 6.0 }
sphere_order = 4
seed = 5

[kernel.maxwell]
lambda = 0.0

[[case]]
id = "young-222"
inequality = "young"
kernel = "maxwell"
p = 2
q = 1
r = 2
f = "gaussian"
g = "random_bumps"

[[case]]
id = "mass"
inequality = "mass_balance"
kernel = "maxwell"
f = "gaussian"
g = "shifted_gaussian"
"#;

fn boltzgain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boltzgain")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o).lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("campaign.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn verify_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = boltzgain(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("young-222"));
    assert!(text.contains("2 cases: 2 passed, 0 failed, 0 skipped"), "{text}");
    for f in ["report.csv", "report.json", "summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn verify_overrides_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = boltzgain(&["verify", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed, "--grid", "10,5"]);
        assert!(o.status.success());
        std::fs::read_to_string(out.join("report.json")).unwrap()
    };
    let a = run("7", "a");
    assert_eq!(a, run("7", "b"));
    assert_ne!(a, run("8", "c"));
    assert!(a.contains("\"size\": 10") || a.contains("\"size\":10"), "grid override missing");
}

#[test]
fn infeasible_campaign_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("p = 2\nq = 1", "p = 2\nq = 2"));
    let out = dir.path().join("out");
    let o = boltzgain(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn infeasible_case_is_skipped_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("seed = 5", "seed = 5\ninfeasible = \"skip\"").replace("p = 2\nq = 1", "p = 2\nq = 2");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = boltzgain(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1 passed, 0 failed, 1 skipped"), "{}", stdout(&o));
}

#[test]
fn missing_config_exits_two() {
    let o = boltzgain(&["verify", "--config", "/nonexistent/x.toml", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constants_match_closed_forms() {
    // b ≡ 1, β = 1, n = 3: Young (1,1,1) gives 32π and C₁ gives 16π
    let rows = csv_rows(&boltzgain(&["constants", "--kind", "young"]));
    assert_eq!(rows[0].join(","), "p,q,r,alpha,lambda,n,constant,value,quad_err");
    assert_eq!(rows[1][6], "young");
    let v: f64 = rows[1][7].parse().unwrap();
    assert!((v - 32.0 * PI).abs() < 1e-9 * v, "{v}");

    let rows = csv_rows(&boltzgain(&["constants", "--kind", "mm-c1"]));
    let v: f64 = rows[1][7].parse().unwrap();
    assert!((v - 16.0 * PI).abs() < 1e-9 * v, "{v}");

    let o = boltzgain(&["constants", "--kind", "hls", "--p", "3/2", "--q", "3/2", "--r", "3", "--lambda", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn counterexample_follows_log_log_growth() {
    let rows = csv_rows(&boltzgain(&["counterexample", "--radii", "3,10,100"]));
    assert_eq!(rows[0].join(","), "radius,value,closed_form");
    for row in &rows[1..] {
        let r: f64 = row[0].parse().unwrap();
        let v: f64 = row[1].parse().unwrap();
        let want = 4.0 * PI * r.ln().ln();
        assert!((v - want).abs() < 1e-8 * want, "R = {r}: {v} vs {want}");
    }
    let o = boltzgain(&["counterexample", "--radii", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sharpness_ratios_approach_one() {
    let rows = csv_rows(&boltzgain(&["sharpness", "--eps", "0.1,0.01,0.001"]));
    assert_eq!(rows[0].join(","), "eps,norm,constant,ratio");
    let ratios: Vec<f64> = rows[1..].iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(ratios.len(), 3);
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
    assert!(ratios.iter().all(|&x| x <= 1.0));
    assert!(ratios[2] > 0.998);
}
