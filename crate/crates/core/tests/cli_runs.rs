//! End-to-end runs of the `kahler-flow` binary.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kahler_flow::cli::diagnostics::{self, CSV_HEADER};

fn binary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kahler-flow"))
        .args(args)
        .env("KAHLER_FLOW_THREADS", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn summary_f64(entries: &[(String, String)], key: &str) -> f64 {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("no {key} in summary"))
        .1
        .parse()
        .unwrap()
}

#[test]
fn product_run_writes_full_history() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        "model = product_E_sigma\ndt = 1e-3\nt_max = 10\nsample_interval = 0.01\n",
    );
    let o = binary(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    let rows = diagnostics::parse_csv(&text).unwrap();
    assert_eq!(rows.len(), 1001);
    assert_eq!(rows[0].t, 0.0);
    assert!((rows[1000].t - 10.0).abs() < 1e-12);

    // accumulated plus fitted tail should match 2 b0 V ln(a0)/(a0 - 1) at a0 = 2
    let s = summary(&out);
    let exact = 2.0 * 4.0 * PI * 2f64.ln();
    let extrapolated = summary_f64(&s, "scalar_l2_accum_extrapolated");
    assert!((extrapolated - exact).abs() / exact < 1e-3, "{extrapolated} vs {exact}");
}

#[test]
fn projective_plane_run_reports_singular_time() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "cp2.cfg",
        &format!("model = cp2_round\ndt = 1e-3\nt_max = 10\nsample_interval = 0.01\nout = {}\n", out.display()),
    );
    let o = binary(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let s = summary(&out);
    let exact = ((1.0 + 6.0 * PI) / (6.0 * PI)).ln();
    let observed = summary_f64(&s, "singular_time");
    assert!((observed - exact).abs() / exact < 0.05);
    assert!(String::from_utf8_lossy(&o.stdout).contains("singular time"));
}

#[test]
fn flat_torus_scalar_columns_vanish() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "torus.cfg",
        "model = flat_torus_n2\ngrid_points = 16\ndt = 0.05\nt_max = 1\nsample_interval = 0.1\n",
    );
    let o = binary(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rows = diagnostics::parse_csv(&fs::read_to_string(out.join("diagnostics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 11);
    for r in rows {
        for v in [r.r_min, r.r_max, r.scalar_l2, r.scalar_l2_accum, r.e_t] {
            assert!(v.abs() < 1e-10, "{v}");
        }
        // |Ric + ω|² = n pointwise on a flat metric
        assert!((r.ricci_l2 - 2.0 * r.volume).abs() < 1e-10 * r.volume);
    }
}

#[test]
fn invalid_config_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("neg.cfg", "model = product_E_sigma\ndt = -1\n"),
        ("unknown.cfg", "model = k3_surface\n"),
        ("genus.cfg", "model = product_sigma_sigma\ngenus = 1\n"),
    ] {
        let cfg = write_config(tmp.path(), name, body);
        let o = binary(&["run", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{name}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    let o = binary(&["run", "--config", tmp.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bounds_suite_skips_big_canonical_product() {
    let o = binary(&["verify", "--suite", "verify-bounds"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout
        .lines()
        .any(|l| l.starts_with("SKIPPED verify-bounds product_sigma_sigma") && l.contains("not big")));
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL")));
}

#[test]
fn chern_suite_passes() {
    let o = binary(&["verify", "--suite", "verify-chern"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn resume_at_horizon_adds_nothing_and_foreign_checkpoint_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let ckpt = tmp.path().join("end.ckpt");
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        "model = product_E_sigma\ndt = 1e-3\nt_max = 2\nsample_interval = 0.1\n",
    );
    let o = binary(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let before = fs::read_to_string(out.join("diagnostics.csv")).unwrap();

    let o = binary(&["resume", "--checkpoint", ckpt.to_str().unwrap(), "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("diagnostics.csv")).unwrap(), before);

    let other = write_config(
        tmp.path(),
        "other.cfg",
        "model = product_sigma_sigma\ndt = 1e-3\nt_max = 2\nsample_interval = 0.1\n",
    );
    let o = binary(&["resume", "--checkpoint", ckpt.to_str().unwrap(), "--config", &other, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}
