use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn zaremba(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zaremba"))
        .args(args)
        .env("ZAREMBA_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn run_config(sub: &str, config: &Path, out: &Path) -> Value {
    let o = zaremba(&[sub, config.to_str().unwrap()], out);
    assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join(format!("{sub}_summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Data rows of a CSV written by the tool, header comment and column line
/// excluded.
fn csv_rows(path: &Path) -> (String, Vec<String>, Vec<csv::StringRecord>) {
    let text = std::fs::read_to_string(path).unwrap();
    let (comment, body) = text.split_once('\n').unwrap();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|r| r.unwrap()).collect();
    (comment.to_string(), headers, rows)
}

#[test]
fn solve_with_zero_data_has_zero_energy() {
    let out = tempfile::tempdir().unwrap();
    let s = run_config("solve", &configs().join("solve_zero_data.toml"), out.path());
    assert_eq!(s["subcommand"], "solve");
    assert_eq!(s["results"]["energy"].as_f64(), Some(0.0));
    assert_eq!(s["results"]["weighted_grad_norm"].as_f64(), Some(0.0));
    let (comment, headers, rows) = csv_rows(&out.path().join("solve.csv"));
    assert!(comment.starts_with("# schema_version=1 config_hash="));
    assert_eq!(headers, ["index", "x1", "x2", "u"]);
    assert_eq!(rows.len(), 17 * 17);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn gradient_data_is_reproduced() {
    let out = tempfile::tempdir().unwrap();
    let s = run_config("solve", &configs().join("solve_gradient.toml"), out.path());
    assert!((s["results"]["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    let (_, _, rows) = csv_rows(&out.path().join("solve.csv"));
    for r in rows {
        let (x, y, u): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        let w = x * (1.0 + 0.5 * (std::f64::consts::PI * y).sin());
        assert!((u - w).abs() < 1e-6, "u({x}, {y}) = {u}, expected {w}");
    }
}

#[test]
fn unweighted_quadratic_scaling_is_flat() {
    let out = tempfile::tempdir().unwrap();
    let s = run_config("scaling", &configs().join("scaling_unweighted_q2.toml"), out.path());
    assert!(s["results"]["fitted_slope"].as_f64().unwrap().abs() < 1e-8);
    let (_, headers, rows) = csv_rows(&out.path().join("scaling.csv"));
    assert_eq!(headers, ["r", "m", "q", "s", "capacity", "mu_Q", "ratio", "iterations"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn scaling_slope_matches_csv_refit() {
    let out = tempfile::tempdir().unwrap();
    let s = run_config("scaling", &configs().join("scaling_power.toml"), out.path());
    let (_, _, rows) = csv_rows(&out.path().join("scaling.csv"));
    let pts: Vec<(f64, f64)> =
        rows.iter().map(|r| (r[0].parse::<f64>().unwrap().ln(), r[4].parse::<f64>().unwrap().ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let reported = s["results"]["fitted_slope"].as_f64().unwrap();
    assert!((slope - reported).abs() < 1e-9);
    assert!((reported - 1.0).abs() < 1e-6);
}

#[test]
fn cantor_cen_check_has_positive_ratios() {
    let out = tempfile::tempdir().unwrap();
    let s = run_config("cen", &configs().join("cen_cantor.toml"), out.path());
    assert!(s["results"]["min_ratio"].as_f64().unwrap() > 0.0);
    let (_, headers, rows) = csv_rows(&out.path().join("cen.csv"));
    assert_eq!(headers, ["x0_1", "x0_2", "r", "q", "cap", "mu_Qr", "ratio"]);
    assert!(rows.len() >= 15);
}

#[test]
fn cantor_dump_lists_intervals_and_nodes() {
    let out = tempfile::tempdir().unwrap();
    let s = run_config("cantor", &configs().join("cantor_dump.toml"), out.path());
    assert_eq!(s["results"]["intervals"], 64);
    let (_, headers, rows) = csv_rows(&out.path().join("cantor_intervals.csv"));
    assert_eq!(headers, ["index", "start", "end"]);
    assert_eq!(rows.len(), 64);
    let (_, headers, rows) = csv_rows(&out.path().join("cantor_dirichlet_nodes.csv"));
    assert_eq!(headers, ["index", "x1", "x2"]);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() == -0.5));
}

#[test]
fn csv_output_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (sub, cfg, file) in [
        ("meyers", "meyers_checkerboard.toml", "meyers.csv"),
        ("local", "local_caccioppoli.toml", "local.csv"),
        ("ap", "ap_power.toml", "ap.csv"),
    ] {
        let cfg = configs().join(cfg);
        run_config(sub, &cfg, a.path());
        run_config(sub, &cfg, b.path());
        let (x, y) = (std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap());
        assert_eq!(x, y, "{file} differs between runs");
    }
}

#[test]
fn config_hash_tracks_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(configs().join("solve_zero_data.toml")).unwrap();
    let c1 = write(dir.path(), "a.toml", &base);
    let c2 = write(dir.path(), "b.toml", &format!("{base}\n# comment\n"));
    let h1 = run_config("solve", &c1, &dir.path().join("o1"))["config_hash"].clone();
    let h2 = run_config("solve", &c2, &dir.path().join("o2"))["config_hash"].clone();
    assert_ne!(h1, h2);
    let (comment, _, _) = csv_rows(&dir.path().join("o1/solve.csv"));
    assert_eq!(comment, format!("# schema_version=1 config_hash={}", h1.as_str().unwrap()));
}

#[test]
fn validate_lists_every_violation() {
    let out = tempfile::tempdir().unwrap();
    let o = zaremba(&["validate", configs().join("invalid.toml").to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(2));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("p must exceed 1"));
    assert!(text.contains("lambda must be in (0, 1/2)"));
    assert!(text.contains("gamma must be in (0, 1/2)"));

    let ok = zaremba(&["validate", configs().join("cen_cantor.toml").to_str().unwrap()], out.path());
    assert_eq!(ok.status.code(), Some(0));
    assert!(ok.stdout.is_empty());
}

#[test]
fn exponent_order_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "q.toml", "[exponents]\np = 1.5\nq = 2.0\n");
    let o = zaremba(&["validate", c.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stdout).unwrap().contains("1 < q <= p"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // invalid values and unknown keys are config errors
    let invalid = configs().join("invalid.toml");
    assert_eq!(zaremba(&["cantor", invalid.to_str().unwrap()], &out).status.code(), Some(2));
    let unknown = write(dir.path(), "unknown.toml", "[domain]\nm = 8\nsize = 3\n");
    let o = zaremba(&["solve", unknown.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("size"));

    // missing section for the subcommand
    let bare = write(dir.path(), "bare.toml", "seed = 1\n");
    assert_eq!(zaremba(&["solve", bare.to_str().unwrap()], &out).status.code(), Some(2));

    // no Dirichlet nodes: numerical failure
    let neumann = write(
        dir.path(),
        "neumann.toml",
        "[domain]\nm = 8\n[boundary]\nkind = \"edges\"\nedges = []\n[exponents]\np = 2.0\n[data]\nkind = \"constant\"\nvalue = [1.0, 0.0]\n",
    );
    let o = zaremba(&["solve", neumann.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    // unreadable file
    assert_eq!(zaremba(&["solve", "/nonexistent/config.toml"], &out).status.code(), Some(3));
}
