use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_delay-adaptive");

const SCENARIO: &str = "\
[plant]
theta = 1

[controller]
eps = 0.1
c = 1
r = 1
sigma = 0.05

[run]
h = 0.01
t_final = 3
";

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn cli(dir: &TempDir, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir.path())
        .env("DELAY_ADAPTIVE_OUT_DIR", dir.path().join("out"))
        .output()
        .unwrap()
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

#[test]
fn run_writes_trace_and_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SCENARIO);
    let out = cli(&dir, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let csv = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(csv.starts_with("t,x,u,p,theta_hat,d\n"));
    assert_eq!(csv.lines().count(), 302);
    for f in ["meta.json", "reports.txt", "reports.jsonl"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS state_bound"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = cli(&dir, &["run", "nope.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = write_config(
        dir.path(),
        "bad.toml",
        &SCENARIO.replace("sigma = 0.05", "sigma = 0.05\nomega = 5"),
    );
    let out = cli(&dir, &["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("exp(omega r) < 2"), "{}", text(&out));
    let unknown = write_config(dir.path(), "unk.toml", &format!("{SCENARIO}bogus = 1\n"));
    assert_eq!(cli(&dir, &["run", unknown.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_three_and_time_stamp() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "blow.toml",
        &SCENARIO.replace("sigma = 0.05", "sigma = 0.05\nblowup_limit = 1e-6"),
    );
    let out = cli(&dir, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out).contains("blow-up detected at t = 0"), "{}", text(&out));
}

#[test]
fn failing_check_exits_with_one() {
    let dir = TempDir::new().unwrap();
    // Stored trace with a tampered state violates the state bound.
    let cfg = write_config(dir.path(), "s.toml", SCENARIO);
    assert_eq!(cli(&dir, &["run", cfg.to_str().unwrap()]).status.code(), Some(0));
    let trace = dir.path().join("out/trace.csv");
    let check = cli(&dir, &["check", trace.to_str().unwrap(), cfg.to_str().unwrap()]);
    assert_eq!(check.status.code(), Some(0), "{}", text(&check));

    let csv = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_owned).collect();
    let mut fields: Vec<String> = lines[200].split(',').map(str::to_owned).collect();
    fields[1] = "50".into();
    lines[200] = fields.join(",");
    let tampered = dir.path().join("tampered.csv");
    fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let out = cli(&dir, &["check", tampered.to_str().unwrap(), cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL state_bound"));
}

#[test]
fn check_rejects_trace_from_other_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SCENARIO);
    assert_eq!(cli(&dir, &["run", cfg.to_str().unwrap()]).status.code(), Some(0));
    let other = write_config(dir.path(), "o.toml", &SCENARIO.replace("h = 0.01", "h = 0.02"));
    let trace = dir.path().join("out/trace.csv");
    let out = cli(&dir, &["check", trace.to_str().unwrap(), other.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("{SCENARIO}[output]\ndir = \"elsewhere\"\n"),
    );
    let out = cli(&dir, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("out/trace.csv").exists());
    assert!(!dir.path().join("elsewhere").exists());
}

#[test]
fn sweep_and_converge_write_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SCENARIO);
    let out = cli(
        &dir,
        &[
            "sweep",
            cfg.to_str().unwrap(),
            "--axis",
            "sigma",
            "--values",
            "0.05,0.5,5",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let table = fs::read_to_string(dir.path().join("out/sweep_sigma.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("sigma,"));

    let bad_axis = cli(&dir, &["sweep", cfg.to_str().unwrap(), "--axis", "r", "--values", "1"]);
    assert_eq!(bad_axis.status.code(), Some(2));
    assert!(text(&bad_axis).contains("not sweepable"));

    let conv = cli(&dir, &["converge", cfg.to_str().unwrap(), "--halvings", "2"]);
    assert_eq!(conv.status.code(), Some(0), "{}", text(&conv));
    assert!(String::from_utf8_lossy(&conv.stdout).contains("identity order: "));
    assert!(dir.path().join("out/convergence.csv").exists());
}
