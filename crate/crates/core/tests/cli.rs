use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_edmkit");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--out", out.to_str().unwrap()];
    full.extend_from_slice(args);
    let o = run(&full);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

const COMMANDS: &[&[&str]] = &[
    &["embed-search", "--e", "1:6"],
    &[
        "forecast",
        "--columns",
        "debris,total",
        "--e",
        "4",
        "--theta",
        "7",
        "--to",
        "2050",
    ],
    &["forecast", "--method", "simplex", "--to", "2050"],
    &[
        "ccm",
        "--a",
        "debris",
        "--b",
        "total",
        "--e",
        "4",
        "--seed",
        "7",
        "--n-sizes",
        "6",
        "--samples",
        "5",
    ],
    &["simulate"],
];

#[test]
fn help_and_usage_errors() {
    for sub in ["embed-search", "forecast", "ccm", "simulate", "version"] {
        assert_eq!(run(&[sub, "--help"]).status.code(), Some(0), "{sub}");
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["forecast", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let v = run(&["version"]);
    assert_eq!(
        String::from_utf8_lossy(&v.stdout).trim(),
        format!("edmkit {}", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn missing_data_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "embed-search",
        "--data",
        "/nonexistent/debris.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/debris.csv"));
}

#[test]
fn computation_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("short.csv");
    std::fs::write(&csv, "year,x\n2000,1\n2001,2\n2002,3\n2003,5\n2004,4\n").unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "forecast",
        "--data",
        csv.to_str().unwrap(),
        "--target",
        "x",
        "--e",
        "3",
        "--train-end",
        "2002",
        "--to",
        "2004",
    ]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn outputs_are_deterministic_across_runs_and_threads() {
    for args in COMMANDS {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = tempfile::tempdir().unwrap();
        run_in(a.path(), args);
        let mut one = vec!["--threads", "1"];
        one.extend_from_slice(args);
        run_in(b.path(), &one);
        let mut eight = vec!["--threads", "8"];
        eight.extend_from_slice(args);
        run_in(c.path(), &eight);
        let fa = files(a.path());
        assert!(fa.keys().any(|k| k.ends_with(".manifest.json")), "{args:?}");
        assert_eq!(fa, files(b.path()), "{args:?}");
        assert_eq!(fa, files(c.path()), "{args:?}");
    }
}

#[test]
fn embed_search_single_dimension() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["embed-search", "--e", "3:3"]);
    let table = std::fs::read_to_string(dir.path().join("embed_search.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("3,"));
}

#[test]
fn forecast_inside_data_has_no_extrapolation() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &["forecast", "--method", "simplex", "--to", "2020"],
    );
    let csv = std::fs::read_to_string(dir.path().join("forecast.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("2020,"));
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2).is_some_and(|o| !o.is_empty())));
}

#[test]
fn ccm_singleton_grid_flagged() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &[
            "ccm", "--a", "debris", "--b", "total", "--e", "4", "--sizes", "50",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("ccm_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["insufficient_grid"], true);
}

#[test]
fn simulate_bundled_grid_and_late_policies() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["simulate"]);
    let csv = std::fs::read_to_string(dir.path().join("mitigation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 15);
    assert!(csv.starts_with("policy,debris,baseline,pct_mitigated,margin_of_error"));

    let cfg = dir.path().join("late.cfg");
    std::fs::write(
        &cfg,
        "[[scenario]]\nkind = \"pmd\"\npmd_years = 0\neffective_year = 2030\n\n\
         [[scenario]]\nkind = \"adr\"\nadr_per_year = 1000\neffective_year = 2030\n\n\
         [[scenario]]\nkind = \"launch_reduction\"\nreduction_fraction = 0.4\neffective_year = 2030\n",
    )
    .unwrap();
    let out = dir.path().join("late");
    run_in(&out, &["simulate", "--config", cfg.to_str().unwrap()]);
    let csv = std::fs::read_to_string(out.join("mitigation.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(3), Some("0.00"), "{line}");
    }
}

#[test]
fn malformed_config_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[[scenario]]\nkind = \"adr\"\nadr_per_year = 100\n\n[[scenario]]\nkind = \"pmd\"\npmd_yeers = 5\n").unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.cfg:7"), "{err}");
}

#[test]
fn data_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let src = concat!(env!("CARGO_MANIFEST_DIR"), "/data/leo_debris_1960_2022.csv");
    let text = std::fs::read_to_string(src).unwrap();
    let head: String = text.lines().take(40).map(|l| format!("{l}\n")).collect();
    std::fs::write(dir.path().join("leo_debris_1960_2022.csv"), head).unwrap();
    let out = dir.path().join("o");
    let o = Command::new(BIN)
        .env("EDMKIT_DATA_DIR", dir.path())
        .current_dir(dir.path().join(".."))
        .args([
            "--out",
            out.to_str().unwrap(),
            "forecast",
            "--method",
            "simplex",
            "--to",
            "2000",
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("forecast.csv")).unwrap();
    // the shortened record ends in 1998, so 2000 is an extrapolated row
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    assert_eq!((last[0], last[2]), ("2000", ""));
}
