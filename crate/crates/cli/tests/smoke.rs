use std::process::Command;

fn niche() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_niche"));
    for (k, _) in std::env::vars() {
        if k.starts_with("NICHE_") {
            c.env_remove(k);
        }
    }
    c
}

#[test]
fn symmetric_loyalty_game_prints_unit_prices() {
    let dir = tempfile::tempdir().unwrap();
    let out = niche()
        .args([
            "equilibrium",
            "--model",
            "sz",
            "--theta",
            "0.5",
            "--l-alpha",
            "1",
            "--c",
            "0",
            "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("prices 1, 1"), "{stdout}");
    assert!(stdout.contains("certified"));
    assert!(dir.path().join("equilibrium_sz.csv").is_file());
}

#[test]
fn missing_artifact_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = niche()
        .arg("niche")
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("impute"));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let out = niche()
        .args(["--svd-ratio", "2", "config"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "no-such-key = 1\n").unwrap();
    let out = niche()
        .arg("--config")
        .arg(&conf)
        .arg("config")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_of_range_theta_is_a_numeric_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = niche()
        .args([
            "equilibrium",
            "--model",
            "sz",
            "--theta",
            "1.5",
            "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn flags_override_env_which_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("n.conf");
    std::fs::write(&conf, "seed = 5\nout-dir = from_file\nmin-words = 30\n").unwrap();
    let out = niche()
        .arg("--config")
        .arg(&conf)
        .env("NICHE_OUT_DIR", "from_env")
        .args(["--min-words", "25", "config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.contains("seed = 5"), "{s}");
    assert!(s.contains("out-dir = from_env"), "{s}");
    assert!(s.contains("min-words = 25"), "{s}");
}

#[test]
fn full_run_on_generated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let st = niche()
        .arg("gen-synthetic")
        .arg("--dest")
        .arg(&data)
        .status()
        .unwrap();
    assert!(st.success());
    let out_dir = dir.path().join("out");
    let st = niche()
        .arg("--input")
        .arg(data.join("panel.jsonl"))
        .arg("--top-firms")
        .arg(data.join("top_firms.txt"))
        .arg("--wave-dates")
        .arg(data.join("wave_dates.txt"))
        .arg("--out-dir")
        .arg(&out_dir)
        .args(["--k-fine", "2,3,4,5,6,8,10,12,16,20", "run"])
        .status()
        .unwrap();
    assert!(st.success());
    for f in ["niche.csv", "tables.md", "report.md", "fits.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
}
