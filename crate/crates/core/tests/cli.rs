use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sense() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sense"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn reference() -> PathBuf {
    fixture("scenario_paper_sec6.json")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(reference()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

#[test]
fn crlb_prints_report() {
    let out = sense().args(["crlb", "--config"]).arg(reference()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["range_var"].as_array().unwrap().len(), 8);
    assert!(v["position_trace"].as_f64().unwrap() > 0.0);
}

#[test]
fn overhead_prints_modes() {
    let out = sense()
        .args(["overhead", "--config"])
        .arg(reference())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["modes"].as_array().unwrap().len(), 4);
    assert_eq!(v["per_method"]["bayes"].as_f64().unwrap(), 910.0);
}

#[test]
fn missing_file_is_config_error() {
    let out = sense()
        .args(["crlb", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_json_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ \"ofdm\": ").unwrap();
    let out = sense().args(["overhead", "--config"]).arg(&path).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), |v| v["ofdm"]["bandwidth"] = 1.0.into());
    let out = sense().args(["crlb", "--config"]).arg(&path).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandwidth"));
}

#[test]
fn validation_error_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), |v| v["prior"]["pos"]["xmax"] = 20.0.into());
    let out = sense().args(["crlb", "--config"]).arg(&path).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("prior.pos"));

    let out = sense()
        .args(["mc", "--config"])
        .arg(reference())
        .args(["--trials", "0", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn degenerate_geometry_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), |v| {
        v["scene"]["rx_aps"] = serde_json::json!([{ "x": 17.0, "y": 4.0 }]);
        v["snr"]["rho2_db"] = serde_json::json!([10.0]);
    });
    let out = sense().args(["crlb", "--config"]).arg(&path).output().unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = sense()
        .args(["mc", "--config"])
        .arg(reference())
        .args(["--trials", "1", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn mc_writes_trials_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = sense()
        .args(["mc", "--config"])
        .arg(reference())
        .args(["--trials", "3", "--seed", "11", "--out"])
        .arg(&out_dir)
        .env("SENSE_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,method,x_hat,y_hat,vx_hat,vy_hat,err_pos_m,err_vel_mps,iters,converged,wall_us,failed"
    );
    assert_eq!(lines.count(), 3 * 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    for key in ["config_echo", "rmse", "cdf", "crlb", "overhead", "timing"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["config_echo"]["trials"], 3);
    assert_eq!(summary["config_echo"]["seed"], 11);
    assert!(summary["crlb"]["position_trace"].as_f64().unwrap() > 0.0);
}

#[test]
fn thread_count_does_not_change_trials() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out_dir = dir.path().join(threads);
        let out = sense()
            .args(["mc", "--config"])
            .arg(reference())
            .args(["--trials", "4", "--no-timing", "--threads", threads, "--out"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        std::fs::read(out_dir.join("trials.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn spectrum_dump_has_peak_near_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = sense()
        .args(["spectrum", "--config"])
        .arg(reference())
        .args(["--method", "bayes", "--step", "0.25", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,x,y,value");
    let best = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[0], "bayes");
            let p: Vec<f64> = f[1..].iter().map(|s| s.parse().unwrap()).collect();
            (p[0], p[1], p[2])
        })
        .fold((0.0, 0.0, f64::MIN), |a, b| if b.2 > a.2 { b } else { a });
    assert!((best.0 - 30.5).hypot(best.1 - 30.5) < 0.5, "{best:?}");
}

#[test]
fn unknown_method_is_rejected_by_parser() {
    let out = sense()
        .args(["spectrum", "--config"])
        .arg(reference())
        .args(["--method", "magic", "--out", "/tmp"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
