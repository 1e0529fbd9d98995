use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gbergomi_core::calibration::{MarketTargets, VixParams};
use serde_json::Value;

fn gbergomi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbergomi"))
        .current_dir(dir)
        .env_remove("GBERGOMI_WORKERS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV written by the tool, header comments skipped.
fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|row| row.unwrap()[i].to_string()).collect()
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        ok(&gbergomi(dir.path(), &["--paths", "500", "--seed", "11", "simulate"]));
    }
    for f in ["gbergomi_simulate.json", "gbergomi_samples.csv"] {
        let x = fs::read_to_string(a.path().join(f)).unwrap();
        let y = fs::read_to_string(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let samples = fs::read_to_string(a.path().join("gbergomi_samples.csv")).unwrap();
    assert!(samples.starts_with("# gbergomi "));
    assert!(samples.contains("# seed = 11"));
}

#[test]
fn beta_one_runs_are_tagged_as_rough_bergomi() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[model]\nbeta = 1.0\n").unwrap();
    ok(&gbergomi(dir.path(), &["--config", "run.toml", "--paths", "200", "simulate"]));
    let doc = json(&dir.path().join("gbergomi_simulate.json"));
    assert_eq!(doc["result"]["mean"]["rbergomi_equivalent"], Value::Bool(true));

    ok(&gbergomi(dir.path(), &["--paths", "200", "simulate"]));
    let doc = json(&dir.path().join("gbergomi_simulate.json"));
    assert_eq!(doc["result"]["mean"]["rbergomi_equivalent"], Value::Bool(false));
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[mc]\nn_path = 10\n").unwrap();
    let out = gbergomi(dir.path(), &["--config", "bad.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_path"));
}

#[test]
fn missing_market_file_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[model]\nvix_spot = 0.2\n[calibrate]\nvix_smile = \"absent.csv\"\nspx_smile = \"absent_too.csv\"\nvix_futures = 0.21\n",
    )
    .unwrap();
    let out = gbergomi(dir.path(), &["--config", "run.toml", "calibrate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn invalid_parameters_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[model]\nhurst = 1.2\n").unwrap();
    let out = gbergomi(dir.path(), &["--config", "run.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

fn specfun_value(args: &[&str], row: usize, col: usize) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let out = gbergomi(dir.path(), args);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().nth(row).unwrap();
    line.split(',').nth(col).unwrap().parse().unwrap()
}

#[test]
fn specfun_prints_known_values() {
    let e1 = specfun_value(&["specfun", "--beta", "1", "--x", "1"], 1, 1);
    assert!((e1 - std::f64::consts::E).abs() < 1e-12, "E_1(1) = {e1}");
    let m = specfun_value(&["specfun", "--beta", "0.5", "--x", "0"], 1, 2);
    assert!((m - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12, "M_1/2(0) = {m}");
}

#[test]
fn calibrate_recovers_parameters_from_their_own_targets() {
    let dir = tempfile::tempdir().unwrap();
    let truth = VixParams::new(0.08, 0.7, 1.1);
    let targets = MarketTargets::from_limits(truth, -0.7, 0.094, 0.2, 1.0 / 12.0).unwrap();
    let cfg = format!(
        "[calibrate.targets]\nlevel = {}\nskew = {}\ncurvature = {}\nspx_skew = {}\nt_mkt = {}\nvix_spot = {}\n\
         [calibrate.search]\nhurst = {{ lo = 0.02, hi = 0.15, points = 8 }}\n\
         beta = {{ lo = 0.1, hi = 1.0, points = 8 }}\neta = {{ lo = 0.2, hi = 3.0, points = 8 }}\n",
        targets.level, targets.skew, targets.curvature, targets.spx_skew, targets.t_mkt, targets.vix_spot
    );
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    ok(&gbergomi(dir.path(), &["--config", "run.toml", "calibrate"]));

    let doc = json(&dir.path().join("gbergomi_calibration.json"));
    let c = &doc["result"]["calibration"];
    let got = |k: &str| c[k].as_f64().unwrap();
    assert!((got("hurst") - 0.08).abs() < 1e-3, "{c}");
    assert!((got("beta") - 0.7).abs() < 1e-2, "{c}");
    assert!((got("eta") - 1.1).abs() < 1e-2, "{c}");
    assert!((got("rho") + 0.7).abs() < 1e-2, "{c}");
    assert_eq!(rows(&dir.path().join("gbergomi_residuals.csv")).len(), 4);
}

#[test]
fn calibrate_from_smile_files_writes_overlay() {
    let dir = tempfile::tempdir().unwrap();
    // smiles shaped like an arctan so the fit is exact
    let vix: String = (0..9)
        .map(|i| {
            let k = 0.16 + 0.01 * i as f64;
            format!("{k},0.094,{}\n", 0.4 * (40.0 * (k - 0.2)).atan() + 1.1)
        })
        .collect();
    let spx: String = (0..9)
        .map(|i| {
            let k = 0.96 + 0.01 * i as f64;
            format!("{k},0.094,{}\n", -0.05 * (20.0 * (k - 1.0)).atan() + 0.2)
        })
        .collect();
    fs::write(dir.path().join("vix.csv"), format!("strike,maturity,implied_vol\n{vix}")).unwrap();
    fs::write(dir.path().join("spx.csv"), format!("strike,maturity,implied_vol\n{spx}")).unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[model]\nvix_spot = 0.19\n[calibrate]\nvix_smile = \"vix.csv\"\nspx_smile = \"spx.csv\"\nvix_futures = 0.2\n\
         [calibrate.search]\nhurst = { lo = 0.02, hi = 0.15, points = 5 }\n\
         beta = { lo = 0.1, hi = 1.0, points = 5 }\neta = { lo = 0.2, hi = 3.0, points = 5 }\n",
    )
    .unwrap();
    ok(&gbergomi(dir.path(), &["--config", "run.toml", "calibrate"]));
    let doc = json(&dir.path().join("gbergomi_calibration.json"));
    let t = &doc["result"]["targets"];
    assert!((t["level"].as_f64().unwrap() - 1.1).abs() < 1e-6, "{t}");
    // S = F σ'(F) at the futures
    assert!((t["skew"].as_f64().unwrap() - 0.2 * 0.4 * 40.0).abs() < 1e-4, "{t}");
    let overlay = dir.path().join("gbergomi_overlay.csv");
    assert_eq!(rows(&overlay).len(), 18);
    for (m, f) in column(&overlay, "market_vol").iter().zip(column(&overlay, "fitted_vol")) {
        let (m, f): (f64, f64) = (m.parse().unwrap(), f.parse().unwrap());
        assert!((m - f).abs() < 1e-6);
    }
}

#[test]
fn bounds_sandwich_the_monte_carlo_futures() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[bounds]\nmaturities = [0.25, 1.0]\n").unwrap();
    ok(&gbergomi(dir.path(), &["--config", "run.toml", "--paths", "3000", "bounds"]));
    let path = dir.path().join("gbergomi_bounds.csv");
    assert_eq!(rows(&path).len(), 6);
    assert!(column(&path, "inside").iter().all(|v| v == "true"));
    // scenario 1 is flat at 0.235², so the upper bound is 0.235
    for (s, u) in column(&path, "scenario").iter().zip(column(&path, "upper")) {
        if s == "1" {
            assert!((u.parse::<f64>().unwrap() - 0.235).abs() < 1e-9);
        }
    }
}

#[test]
fn asymptotics_sweep_carries_the_ssr() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[asymptotics]\nfrom = 0.03\nto = 0.3\n").unwrap();
    ok(&gbergomi(dir.path(), &["--config", "run.toml", "asymptotics", "--sweep", "hurst"]));
    let path = dir.path().join("gbergomi_asymptotics.csv");
    let hs = column(&path, "hurst");
    let ssr = column(&path, "ssr");
    assert_eq!(hs.len(), 10);
    for (h, s) in hs.iter().zip(&ssr) {
        let (h, s): (f64, f64) = (h.parse().unwrap(), s.parse().unwrap());
        assert!((s - (h + 1.5)).abs() < 1e-12);
    }
    // curvature limit only exists below H = 1/6
    for (h, c) in hs.iter().zip(column(&path, "vix_curvature_scaled")) {
        assert_eq!(h.parse::<f64>().unwrap() < 1.0 / 6.0, !c.is_empty(), "H = {h}");
    }
}

#[test]
fn price_writes_a_vix_smile_with_positive_slope() {
    let dir = tempfile::tempdir().unwrap();
    ok(&gbergomi(dir.path(), &["--paths", "4000", "price"]));
    let doc = json(&dir.path().join("gbergomi_price.json"));
    assert_eq!(doc["result"]["atm_reference"], "futures");
    assert!(doc["result"]["atm"]["skew"].as_f64().unwrap() > 0.0);
    assert_eq!(rows(&dir.path().join("gbergomi_smile.csv")).len(), 13);
}
