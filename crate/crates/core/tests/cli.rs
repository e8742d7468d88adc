use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rydberg_entangle::config::PAPER_DEFAULT_TOML;
use rydberg_entangle::output::{verify_manifest, RunManifest};

fn rydent(args: &[&str], env_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rydent"));
    cmd.args(args).env_remove("RYDENT_OUTPUT_DIR");
    if let Some(d) = env_dir {
        cmd.env("RYDENT_OUTPUT_DIR", d);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = rydent(&["--output", dir.to_str().unwrap(), "repeater", "--source", "dlcz", "--sweep", "p"], None);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert_eq!(fa.len(), 3);
    assert_eq!(fa, fb);
    assert!(verify_manifest(&a).unwrap().is_empty());
    let m: RunManifest = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "repeater --source dlcz --sweep p");
    assert!(m.outputs.contains_key("repeater_dlcz.csv"));
}

#[test]
fn different_seed_changes_monte_carlo_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let o = rydent(&["--seed", seed, "--output", dir.to_str().unwrap(), "g2", "--field", "coherent"], None);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_ne!(fs::read(a.join("g2_coherent.json")).unwrap(), fs::read(b.join("g2_coherent.json")).unwrap());
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rydent(&["rabi", "--single"], Some(tmp.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("rabi_single.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t_ns,p_rydberg,p_single_atom"));
    assert!(tmp.path().join("manifest.json").exists());
}

#[test]
fn misspelled_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, PAPER_DEFAULT_TOML.replace("detector_efficiency = 0.6", "detector_eficiency = 0.6")).unwrap();
    let o = rydent(&["--config", cfg.to_str().unwrap(), "--output", tmp.path().to_str().unwrap(), "rabi", "--pair"], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("detection.detector_eficiency"), "{err}");
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn unit_errors_and_missing_seed_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, PAPER_DEFAULT_TOML.replace("single_period = \"492 ns\"", "single_period = \"492\"")).unwrap();
    let o = rydent(&["--config", cfg.to_str().unwrap(), "rabi", "--single"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dynamics.single_period"), "{}", stderr(&o));

    fs::write(&cfg, PAPER_DEFAULT_TOML.replace("seed = 20240601", "")).unwrap();
    let out = tmp.path().join("out");
    let o = rydent(&["--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "g2", "--field", "single"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn low_sample_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, PAPER_DEFAULT_TOML.replace("samples = 2000", "samples = 99")).unwrap();
    let o = rydent(&["--config", cfg.to_str().unwrap(), "dephasing", "--flags", "motion"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("raman.samples"));
}

#[test]
fn invalid_flag_combinations_are_rejected() {
    for args in [
        vec!["rabi", "--single", "--pair"],
        vec!["rabi"],
        vec!["entangle", "--phi-sweep", "--fidelity"],
        vec!["g2", "--field", "laser"],
        vec!["repeater", "--source", "semi", "--sweep", "q"],
    ] {
        let o = rydent(&args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let o = rydent(&["--output", tmp.path().to_str().unwrap(), "dephasing", "--flags", "motoin"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("motoin"));
    let o = rydent(&["--output", tmp.path().to_str().unwrap(), "repeater", "--source", "semi", "--sweep", "p"], None);
    assert!(!o.status.success());
}

#[test]
fn default_config_round_trips() {
    let o = rydent(&["default-config"], None);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), PAPER_DEFAULT_TOML);
}

#[test]
fn phi_sweep_columns_are_frozen() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rydent(&["--output", tmp.path().to_str().unwrap(), "entangle", "--phi-sweep"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("entangle_sweep.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("basis,phi_rad,p_xx,p_yy,p_xy,p_yx,c_parallel,c_perpendicular,visibility")
    );
    assert_eq!(csv.lines().count(), 1 + 3 * 73);
}
