use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    let out = dir.join("out");
    let line = format!("[experiment]\noutput_dir = {:?}", out.to_str().unwrap());
    fs::write(&path, body.replacen("[experiment]", &line, 1)).unwrap();
    path
}

fn config(sub_n: &str, t: &str, dt: &str, extra: &str) -> String {
    format!("[experiment]\nname = \"test\"\nalpha = 1.5\nn = {sub_n}\nt = {t}\ndt = {dt}\nmaster_seed = 3\n{extra}")
}

fn run(sub: &str, cfg: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphere-nls"))
        .arg(sub)
        .arg("--config")
        .arg(cfg)
        .args(extra)
        .env_remove("SPHERE_NLS_OUT")
        .output()
        .unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&out.stdout);
    PathBuf::from(stdout.lines().last().expect("directory line"))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn zero_amplitude_simulation_has_zero_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[4]", "0.1", "1e-3", "amplitude = 0.0"));
    let out = run("simulate", &cfg, &["--workers", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let m = manifest(&dir);
    assert_eq!(m["failed"], 0);
    assert_eq!(m["results"][0]["summary"]["max_mass_drift"], 0.0);
    assert!(dir.join("drift_n4.csv").exists());
    assert!(dir.join("phases_n4.csv").exists());
    assert!(dir.join("trajectory_n4/manifest.json").exists());
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("simulate-"));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[2]", "0.01", "1e-3", ""));
    assert!(run("simulate", &cfg, &[]).status.success());
    let again = run("simulate", &cfg, &[]);
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    assert!(run("simulate", &cfg, &["--force"]).status.success());
}

#[test]
fn reruns_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[4]", "0.05", "1e-3", ""));
    let first = run("simulate", &cfg, &[]);
    let dir = run_dir(&first);
    let csv = fs::read_to_string(dir.join("drift_n4.csv")).unwrap();
    let second = run("simulate", &cfg, &["--force", "--workers", "2"]);
    assert_eq!(run_dir(&second), dir);
    assert_eq!(fs::read_to_string(dir.join("drift_n4.csv")).unwrap(), csv);
}

#[test]
fn empty_degree_list_writes_manifest_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[]", "0.01", "1e-3", ""));
    let out = run("ensemble", &cfg, &[]);
    assert!(out.status.success());
    let dir = run_dir(&out);
    let files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec![std::ffi::OsString::from("manifest.json")]);
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[3]", "0.01", "1e-3", ""));
    let out = run("simulate", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment.n"));
}

#[test]
fn output_directory_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[2]", "0.01", "1e-3", ""));
    let alt = tmp.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_sphere-nls"))
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("SPHERE_NLS_OUT", &alt)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(run_dir(&out).starts_with(&alt));
}

#[test]
fn rao_verify_small_shell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[4]", "0.02", "1e-3", "ensemble = 200"));
    let out = run("rao-verify", &cfg, &[]);
    let dir = run_dir(&out);
    let m = manifest(&dir);
    assert_eq!(m["results"].as_array().unwrap().len(), 3, "{m}");
    assert!(out.status.success(), "{m}");
    assert!(
        dir.join("unitarity_n4.csv").exists() && dir.join("wick_n4.csv").exists() && dir.join("law_n4.json").exists()
    );
}

#[test]
fn failing_sub_experiment_sets_exit_code() {
    // The law check refuses ensembles below its minimum, while the other two
    // checks still run and are recorded.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[4]", "0.02", "1e-3", "ensemble = 10"));
    let out = run("rao-verify", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&run_dir(&out));
    assert_eq!(m["failed"], 1);
    let law = m["results"].as_array().unwrap().iter().find(|r| r["name"] == "law_n4").unwrap();
    assert!(law["error"].as_str().unwrap().contains("too few"));
}

#[test]
fn ladder_converge_norms_and_ensemble_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &config("[2, 4]", "0.02", "1e-3", "ensemble = 20\n[params]\nspacing = 2e-3"));
    for sub in ["ladder", "converge", "measure-norms", "ensemble"] {
        let out = run(sub, &cfg, &[]);
        let dir = run_dir(&out);
        let m = manifest(&dir);
        assert_eq!(m["subcommand"], sub);
        assert_eq!(m["results"].as_array().unwrap().len(), 1, "{sub}: {m}");
        assert!(m["results"][0]["error"].is_null(), "{sub}: {m}");
    }
}
