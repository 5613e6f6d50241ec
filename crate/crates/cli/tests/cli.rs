use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use basket_cds_cli::config::ScenarioConfig;
use basket_cds_cli::rows::{read_rows, RowMethod};
use basket_cds_cli::scenario::{run_scenario, RunOptions};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_basket-cds"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const HOMOGENEOUS: &str = r#"
ks = [1, 2, 3]
method = "both"
[model]
kind = "homogeneous"
n = 3
a = 0.5
c = 0.7
[contract]
maturity = 2.0
period = 0.5
recovery = 0.4
rate = 0.03
[mc_plan]
paths = 20000
seed = 42
"#;

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn shipped_configs_load_and_run() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let mut cfg = ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if let Some(plan) = cfg.mc_plan.as_mut() {
            plan.paths = 2000;
        }
        let rows = run_scenario(&cfg, &RunOptions::default()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let per_k = usize::from(cfg.method.analytic()) + usize::from(cfg.method.mc());
        assert_eq!(rows.len(), cfg.ks.len() * per_k, "{}", path.display());
        assert!(rows.iter().all(|r| r.rate.is_finite() && r.rate > 0.0));
        seen += 1;
    }
    assert_eq!(seen, 5);
}

#[test]
fn csv_round_trips_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "h.toml", HOMOGENEOUS);
    let out = dir.path().join("out.csv");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(std::fs::File::open(&out).unwrap()).unwrap();
    let direct = run_scenario(
        &ScenarioConfig::from_toml_str(HOMOGENEOUS).unwrap(),
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(rows, direct);
    assert_eq!(rows.iter().filter(|r| r.method == RowMethod::Mc).count(), 3);
}

#[test]
fn repeated_seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "h.toml", HOMOGENEOUS);
    let mut files = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}.csv"));
        let o = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(std::fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn regime_with_equal_levels_matches_homogeneous_rates() {
    let regime = r#"
ks = [1, 4, 10]
[model]
kind = "regime_switching"
n = 10
c = 3.0
x1 = 1.0
x2 = 1.0
eta1 = 1.0
eta2 = 1.0
initial_state = 1
[contract]
maturity = 3.0
period = 0.5
recovery = 0.5
rate = 0.05
"#;
    let homogeneous = r#"
ks = [1, 4, 10]
[model]
kind = "homogeneous"
n = 10
a = 1.0
c = 3.0
[contract]
maturity = 3.0
period = 0.5
recovery = 0.5
rate = 0.05
"#;
    let r = run_scenario(&ScenarioConfig::from_toml_str(regime).unwrap(), &RunOptions::default()).unwrap();
    let h = run_scenario(
        &ScenarioConfig::from_toml_str(homogeneous).unwrap(),
        &RunOptions::default(),
    )
    .unwrap();
    for (x, y) in r.iter().zip(&h) {
        assert!((x.rate - y.rate).abs() < 1e-8 * y.rate, "{x:?} vs {y:?}");
    }
}

#[test]
fn timings_only_when_requested() {
    let cfg = ScenarioConfig::from_toml_str(HOMOGENEOUS).unwrap();
    let quiet = run_scenario(&cfg, &RunOptions::default()).unwrap();
    assert!(quiet.iter().all(|r| r.wall_clock_ms.is_none()));
    let timed = run_scenario(&cfg, &RunOptions { timings: true }).unwrap();
    assert!(timed.iter().all(|r| r.wall_clock_ms.is_some_and(|ms| ms >= 0.0)));
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();

    let bad_k = write_cfg(
        dir.path(),
        "k.toml",
        &HOMOGENEOUS.replace("ks = [1, 2, 3]", "ks = [1, 4]"),
    );
    let o = run(&["--config", bad_k.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ks"), "{}", stderr(&o));

    let bad_recovery = write_cfg(
        dir.path(),
        "r.toml",
        &HOMOGENEOUS.replace("recovery = 0.4", "recovery = 1.5"),
    );
    let o = run(&["--config", bad_recovery.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("contract.recovery"), "{}", stderr(&o));

    let unknown = write_cfg(
        dir.path(),
        "u.toml",
        &HOMOGENEOUS.replace("c = 0.7", "c = 0.7\nd = 1.0"),
    );
    assert_eq!(run(&["--config", unknown.to_str().unwrap()]).status.code(), Some(2));

    let broken = write_cfg(dir.path(), "b.toml", "ks = [1,\n");
    assert_eq!(run(&["--config", broken.to_str().unwrap()]).status.code(), Some(2));

    // c = 1 makes two stage rates coincide for n = 3.
    let degenerate = write_cfg(dir.path(), "d.toml", &HOMOGENEOUS.replace("c = 0.7", "c = 1.0"));
    let o = run(&["--config", degenerate.to_str().unwrap(), "--method", "analytic"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["--config", missing.to_str().unwrap()]).status.code(), Some(4));

    let cfg = write_cfg(dir.path(), "h.toml", HOMOGENEOUS);
    let unwritable = dir.path().join("no/such/dir/out.csv");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", unwritable.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    assert_eq!(run(&["--grid", "0.1,0.2"]).status.code(), Some(2));
}

fn csv_records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn table_two_first_condition_is_sane() {
    let o = run(&["--table", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv_records(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(header.last().map(String::as_str), Some("rate"));
    assert_eq!(rows.len(), 40);
    // First-to-default on ten names at a = 1, c = 3 is roughly n * a / (1 - R) discounted.
    let first: f64 = rows[0][9].parse().unwrap();
    assert!((first - 5.0).abs() < 0.5, "{first}");
    let rates: Vec<f64> = rows.iter().take(10).map(|r| r[9].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
}

#[test]
fn sweep_output_has_expected_columns() {
    let o = run(&["--sweep", "a", "--grid", "0.1:0.3:0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv_records(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(
        header,
        [
            "parameter",
            "value",
            "k",
            "theta_analytic",
            "theta_fd",
            "fd_rel_step",
            "flag"
        ]
    );
    assert_eq!(rows.len(), 3 * 10);
    for r in &rows {
        let (an, fd): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!((an - fd).abs() <= 1e-4 * an.abs().max(1e-12), "{r:?}");
        assert_eq!(r[6], "ok");
    }
    let o = run(&["--sweep", "c", "--method", "mc"]);
    assert_eq!(o.status.code(), Some(2));
}
