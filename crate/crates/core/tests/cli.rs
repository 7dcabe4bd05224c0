use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_psflow");

fn write_config(dir: &Path, points: usize, extra: &str) -> PathBuf {
    let text = format!(
        "[params]\nn = 3\np = 2.0\n\n[grid]\nmode = \"cartesian_1d\"\nextent = [1.0]\npoints = [{points}]\n\n\
         [solver]\nds_init = 1e-3\nds_max = 1e-3\n\n[diagnostics]\nmargins = [2]\nstride = 10\nprobe_pairs = 2000\n{extra}"
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn psflow(config: &Path, out: &Path, cmd: &str) -> Output {
    Command::new(BIN)
        .args(["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), cmd])
        .env_remove("PSFLOW_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_errors_exit_with_code_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 21, "");
    let text = fs::read_to_string(&cfg).unwrap().replace("p = 2.0", "p = 1.5");
    fs::write(&cfg, text).unwrap();
    let o = psflow(&cfg, &dir.path().join("out"), "solve-prototype");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("params.p"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), 21, "bogus_key = 1\n");
    let o = psflow(&cfg, &dir.path().join("out"), "solve-prototype");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));
}

#[test]
fn verify_on_empty_directory_reports_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 21, "");
    let o = psflow(&cfg, &dir.path().join("empty"), "verify");
    assert_eq!(o.status.code(), Some(3));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 12);
    assert!(lines.iter().all(|l| l.contains("MISSING-INPUT")), "{lines:?}");
}

#[test]
fn coarse_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 21, "");
    let out = dir.path().join("out");
    for cmd in ["solve-prototype", "rescale", "solve-direct", "positivity-report"] {
        let o = psflow(&cfg, &out, cmd);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    for f in ["prototype/manifest.json", "prototype/ledger.csv", "rescale/time_map.csv", "direct/direct.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let mut rdr = csv::Reader::from_path(out.join("rescale/time_map.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "constraint_residual").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let r: f64 = rec.unwrap()[col].parse().unwrap();
        assert!(r <= 1e-12, "{r}");
        rows += 1;
    }
    assert!(rows > 10);

    let o = psflow(&cfg, &out, "verify");
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    for id in ["C01", "C08", "C09"] {
        let line = text.lines().find(|l| l.starts_with(id)).unwrap();
        assert!(line.contains("NOT-MEASURABLE"), "{line}");
    }
    assert!(!text.contains("FAIL"), "{text}");
    assert!(out.join("verify/report.json").is_file());
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 21, "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["solve-prototype", "rescale"] {
            assert_eq!(psflow(&cfg, out, cmd).status.code(), Some(0));
        }
    }
    for f in ["prototype/ledger.csv", "prototype/store.json", "rescale/time_map.csv", "rescale/checks.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("prototype/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn truncated_store_is_rejected_with_last_valid_s() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 21, "");
    let out = dir.path().join("out");
    assert_eq!(psflow(&cfg, &out, "solve-prototype").status.code(), Some(0));
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("prototype/store.json")).unwrap()).unwrap();
    let s_star = meta["extinction_time"].as_f64().unwrap();
    let snaps = meta["snapshots"].as_array().unwrap();
    let cut = snaps.iter().position(|e| e["s"].as_f64().unwrap() > 0.5 * s_star).unwrap();
    let path = out.join("prototype").join(snaps[cut]["file"].as_str().unwrap());
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let o = psflow(&cfg, &out, "rescale");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let last_valid = snaps[cut - 1]["s"].as_f64().unwrap();
    assert!(stderr(&o).contains(&format!("last valid s = {last_valid}")), "{}", stderr(&o));
}

#[test]
fn step_cap_reports_an_incomplete_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 21, "");
    let text = fs::read_to_string(&cfg).unwrap().replace("ds_max = 1e-3\n", "ds_max = 1e-3\nmax_steps = 5\n");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = psflow(&cfg, &out, "solve-prototype");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(out.join("prototype/ledger.csv").is_file());
}
