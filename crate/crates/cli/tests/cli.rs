use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_frontier");

const CONFIG: &str = r#"
[schema]
firm = "firm"
year = "year"
output = "y"
inputs = ["K", "L", "F"]
determinants = ["trend", "owner"]
prices = ["wK", "wL", "wF"]
category = "category"

[estimation]
multistart = 2

[simulation]
replications = 3

[simulation.dgp]
firms = 40
periods = 8
categories = ["Coal", "Gas"]
"#;

fn run(args: &[&str], dir: &Path) -> Output {
    run_env(args, dir, None)
}

fn run_env(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).current_dir(dir);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let out = run(
        &[
            "simulate",
            "--config",
            "run.toml",
            "--out",
            ".",
            "--panel-only",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    dir
}

#[test]
fn panel_generation_is_reproducible() {
    let a = setup();
    let b = setup();
    assert_eq!(
        fs::read(a.path().join("panel.csv")).unwrap(),
        fs::read(b.path().join("panel.csv")).unwrap()
    );
}

#[test]
fn validate_prints_year_grid() {
    let dir = setup();
    let out = run(
        &["validate", "--config", "run.toml", "--data", "panel.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Coal") && text.contains("Gas") && text.contains("Firm-Years"));
}

#[test]
fn validate_rejects_empty_and_short_panels() {
    let dir = setup();
    fs::write(dir.path().join("empty.csv"), "").unwrap();
    let out = run(
        &["validate", "--config", "run.toml", "--data", "empty.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let panel = fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    let mut lines = panel.lines();
    let mut short = String::from(lines.next().unwrap());
    short.push('\n');
    for line in lines.filter(|l| l.contains(",2000,")) {
        short.push_str(line);
        short.push('\n');
    }
    fs::write(dir.path().join("short.csv"), short).unwrap();
    let out = run(
        &["validate", "--config", "run.toml", "--data", "short.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fewer than two observations"));
}

#[test]
fn unparseable_config_is_usage_error_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "frontier = \"sideways\"\n").unwrap();
    let out = run(
        &["estimate", "--config", "bad.toml", "--data", "x.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frontier"));

    let out = run(&["estimate", "--frontier", "sideways"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_replications_rejected() {
    let dir = setup();
    let out = run(
        &["simulate", "--config", "run.toml", "--replications", "0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn estimate_and_decompose_per_category() {
    let dir = setup();
    let out = run(
        &[
            "estimate",
            "--config",
            "run.toml",
            "--data",
            "panel.csv",
            "--out",
            "res",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let res = dir.path().join("res");
    let md = fs::read_to_string(res.join("estimates.md")).unwrap();
    assert!(md.starts_with("| Variable | Par. | Coal | Gas |"));
    assert!(md.contains("| Log Likelihood |"));
    assert!(md.contains("ln(σ_u)") && md.contains("ln(σ_v)"));
    for f in [
        "estimates.json",
        "estimates.txt",
        "inefficiency.csv",
        "fixed_effects.csv",
        "efficiency_trend.csv",
    ] {
        assert!(res.join(f).exists(), "{f}");
    }

    for (boundary, label) in [("2004", "mean_2000-04"), ("2005", "mean_2000-05")] {
        let out = run(
            &[
                "decompose",
                "--config",
                "run.toml",
                "--data",
                "panel.csv",
                "--out",
                "res",
                "--boundary",
                boundary,
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let table = fs::read_to_string(res.join("tfp_aggregate.md")).unwrap();
        assert!(table.starts_with("| Group | Years | TFP | ΔT | ΔTE | Ψ | Ω | Γ |"));
        assert!(table.contains(&format!("| Coal | {label} |")), "{table}");
    }
    let records = fs::read_to_string(res.join("tfp_records.csv")).unwrap();
    // 40 firms with 7 year pairs each
    assert_eq!(records.lines().count(), 1 + 40 * 7);
}

#[test]
fn pooled_estimate_has_single_block() {
    let dir = setup();
    let out = run(
        &[
            "estimate",
            "--config",
            "run.toml",
            "--data",
            "panel.csv",
            "--out",
            "res",
            "--pooled",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let md = fs::read_to_string(dir.path().join("res/estimates.md")).unwrap();
    assert!(md.starts_with("| Variable | Par. | All |\n"));
}

#[test]
fn decompose_detects_schema_mismatch() {
    let dir = setup();
    let out = run(
        &[
            "estimate",
            "--config",
            "run.toml",
            "--data",
            "panel.csv",
            "--out",
            "res",
            "--pooled",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let fewer = CONFIG.replace(
        r#"determinants = ["trend", "owner"]"#,
        r#"determinants = ["trend"]"#,
    );
    fs::write(dir.path().join("fewer.toml"), fewer).unwrap();
    let out = run(
        &[
            "decompose",
            "--config",
            "fewer.toml",
            "--data",
            "panel.csv",
            "--out",
            "res",
            "--pooled",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_identical_across_runs_and_thread_counts() {
    let dir = setup();
    let mut snapshots = Vec::new();
    for (out, threads) in [("a", "1"), ("b", "4"), ("c", "1")] {
        for cmd in ["estimate", "decompose"] {
            let o = run_env(
                &[
                    cmd,
                    "--config",
                    "run.toml",
                    "--data",
                    "panel.csv",
                    "--out",
                    out,
                ],
                dir.path(),
                Some(threads),
            );
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let o = run_env(
            &["simulate", "--config", "run.toml", "--out", out],
            dir.path(),
            Some(threads),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        snapshots.push(snapshot(&dir.path().join(out)));
    }
    assert!(snapshots[0].iter().any(|(n, _)| n == "mc_report.json"));
    assert_eq!(snapshots[0], snapshots[1]);
    assert_eq!(snapshots[0], snapshots[2]);
}
