use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rescert(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rescert"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> Output {
    assert_eq!(
        code(&o),
        0,
        "{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

/// A small 2-D run so the grid tests stay fast.
const SMALL_LINEAR: &str = r#"
system = "linear2d_lyap"
output_dir = "small"

[net]
m = 40
seed = 3

[collocation]
kind = "grid"
count = 900
"#;

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rescert(dir.path(), &["train", "--config", "no_such_file.toml"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_file.toml"));
    // no subcommand, unknown flag
    assert_eq!(code(&rescert(dir.path(), &[])), 3);
    assert_eq!(code(&rescert(dir.path(), &["train", "-c", "scalar_exp", "--bogus"])), 3);
    // unknown keys in a config are rejected
    fs::write(dir.path().join("bad.toml"), format!("{SMALL_LINEAR}\nfoo = 1\n")).unwrap();
    assert_eq!(code(&rescert(dir.path(), &["train", "-c", "bad.toml"])), 3);
    // certifying before training: no net file
    assert_eq!(code(&rescert(dir.path(), &["certify", "-c", "scalar_exp"])), 3);
}

#[test]
fn same_seed_gives_identical_nets() {
    let dir = tempfile::tempdir().unwrap();
    ok(rescert(dir.path(), &["train", "-c", "scalar_exp", "--out", "a"]));
    ok(rescert(dir.path(), &["train", "-c", "scalar_exp", "--out", "b"]));
    let a = fs::read(dir.path().join("a/net.txt")).unwrap();
    let b = fs::read(dir.path().join("b/net.txt")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let hash = text.lines().next().unwrap().strip_prefix("# config ").unwrap();
    assert_eq!(hash.len(), 64);
    let report = fs::read_to_string(dir.path().join("a/train_report.json")).unwrap();
    assert!(report.contains(hash));
}

#[test]
fn scalar_pipeline_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(rescert(d, &["--threads", "1", "train", "-c", "scalar_exp"]));
    let o = ok(rescert(d, &["--threads", "1", "certify", "-c", "scalar_exp"]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("certified"));
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/scalar_exp/certificate.json")).unwrap()).unwrap();
    let eps = cert["epsilon"].as_f64().unwrap();
    assert!(eps > 0.0 && eps <= 1e-3, "{eps}");
    ok(rescert(d, &["check", "-c", "scalar_exp"]));
    let report = fs::read_to_string(d.join("out/scalar_exp/check_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 102);

    let o = rescert(d, &["oracle-value", "-c", "scalar_exp", "--x", "0.4"]);
    let v: serde_json::Value = serde_json::from_slice(&ok(o).stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.08).abs() <= 1e-6);

    // ε = 0 is false for a trained net: refuted, and `check` then refuses the certificate
    let o = rescert(
        d,
        &[
            "certify",
            "-c",
            "scalar_exp",
            "--eps",
            "0",
            "--out",
            "zero",
            "--net",
            "out/scalar_exp/net.txt",
        ],
    );
    assert_eq!(code(&o), 1);
    let o = rescert(
        d,
        &[
            "check",
            "-c",
            "scalar_exp",
            "--net",
            "out/scalar_exp/net.txt",
            "--cert",
            "zero/certificate.json",
        ],
    );
    assert_ne!(code(&o), 0);
    // a tiny box budget is its own verdict
    fs::write(
        d.join("tight.toml"),
        "system = \"scalar_exp\"\n[net]\nm = 50\nseed = 7\n[collocation]\nkind = \"grid\"\ncount = 2000\n[bnb]\nmax_boxes = 2\n",
    )
    .unwrap();
    let o = rescert(
        d,
        &[
            "certify",
            "-c",
            "tight.toml",
            "--eps",
            "1e-3",
            "--net",
            "out/scalar_exp/net.txt",
        ],
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn export_grid_shape_and_bound_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("small.toml"), SMALL_LINEAR).unwrap();
    ok(rescert(d, &["train", "-c", "small.toml"]));
    ok(rescert(d, &["certify", "-c", "small.toml", "--eps", "0.5"]));
    ok(rescert(
        d,
        &[
            "export-grid",
            "-c",
            "small.toml",
            "--cert",
            "small/certificate.json",
            "--resolution",
            "101",
        ],
    ));
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("small/certificate.json")).unwrap()).unwrap();
    let eps = cert["epsilon"].as_f64().unwrap();

    let csv = fs::read_to_string(d.join("small/grid.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,v_hat,bound"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10201);
    let origin = rows
        .iter()
        .find(|r| r[0] == 0.0 && r[1] == 0.0)
        .expect("grid contains the origin");
    assert!(origin[2].abs() <= 1e-15, "{origin:?}");
    for r in &rows {
        let expected = eps / (1.0 - eps) * r[2];
        assert!((r[3] - expected).abs() <= 1e-15 * (1.0 + expected.abs()), "{r:?}");
    }

    // without a certificate there is no bound column
    ok(rescert(
        d,
        &[
            "export-grid",
            "-c",
            "small.toml",
            "--resolution",
            "5",
            "--csv",
            "plain.csv",
        ],
    ));
    let plain = fs::read_to_string(d.join("plain.csv")).unwrap();
    assert_eq!(plain.lines().next(), Some("x1,x2,v_hat"));
    assert_eq!(plain.lines().count(), 26);
}
