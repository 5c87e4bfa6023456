use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn aact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, sub: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    aact(&args)
}

#[test]
fn run_writes_and_echoes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "run", &configs().join("static_pair.toml"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let paths: Vec<&str> = stdout.lines().collect();
    assert_eq!(paths.len(), 2);
    assert!(paths[0].ends_with("static_pair_slots.csv"));
    assert!(paths[1].ends_with("static_pair_summary.json"));

    let csv = fs::read_to_string(paths[0]).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,t,device_id,app_id,eta_ij,eta_j,w_used,c_used,battery,remaining_work"
    );
    let rows = lines.count();
    assert!(rows > 0 && rows <= 60 * 2 * 2 && rows % 4 == 0);

    let json = fs::read_to_string(paths[1]).unwrap();
    assert!(json.contains("\"completion_time\""));
    assert!(json.contains("\"total_utility\""));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("onoff_estimators.toml");
    for d in [&a, &b] {
        let out = run_in(d.path(), "run", &cfg, &["--seed", "9"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["onoff_estimators_slots.csv", "onoff_estimators_summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    run_in(c.path(), "run", &cfg, &["--seed", "10"]);
    assert_ne!(
        fs::read(a.path().join("onoff_estimators_slots.csv")).unwrap(),
        fs::read(c.path().join("onoff_estimators_slots.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_aggregate_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "sweep", &configs().join("device_count.toml"), &["--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = fs::read_to_string(dir.path().join("device_count_sweep.csv")).unwrap();
    let mut lines = agg.lines();
    assert_eq!(
        lines.next().unwrap(),
        "param,value,policy,app_id,mean_completion,std_completion,mean_battery_at_completion"
    );
    assert_eq!(lines.count(), 4 * 2 * 2);
    let runs = fs::read_to_string(dir.path().join("device_count_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 8);
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn static_pair_text() -> String {
    fs::read_to_string(configs().join("static_pair.toml")).unwrap()
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = static_pair_text();

    let no_apps = text.split("# Video streaming.").next().unwrap();
    let p = write(dir.path(), "no_apps.toml", no_apps);
    let out = run_in(dir.path(), "run", &p, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("apps"));

    let bad_alpha = text.replacen("battery_init = 20.0", "battery_init = 20.0\nalpha = 1.2", 1);
    let p = write(dir.path(), "alpha.toml", &bad_alpha);
    let out = run_in(dir.path(), "run", &p, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("devices[0].alpha"));

    let out = run_in(dir.path(), "sweep", &configs().join("static_pair.toml"), &[]);
    assert_eq!(out.status.code(), Some(1));

    let out = run_in(dir.path(), "run", &dir.path().join("missing.toml"), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "short.txt", "0.5\n0.5\n");
    let text = static_pair_text().replacen(
        r#"bw = { kind = "constant", level = 0.25 }"#,
        r#"bw = { kind = "file", path = "short.txt" }"#,
        1,
    );
    let p = write(dir.path(), "short.toml", &text);
    let out = run_in(dir.path(), "run", &p, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("short.txt"));
}

#[test]
fn file_traces_resolve_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bw.txt", &"0.25\n".repeat(60));
    let text = static_pair_text()
        .replacen(
            r#"bw = { kind = "constant", level = 0.25 }"#,
            r#"bw = { kind = "file", path = "bw.txt" }"#,
            1,
        )
        .replace("name = \"static_pair\"\n", "");
    let p = write(dir.path(), "file.toml", &text);
    let out_dir = dir.path().join("out");
    let out = run_in(&out_dir, "run", &p, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reference = tempfile::tempdir().unwrap();
    run_in(reference.path(), "run", &configs().join("static_pair.toml"), &[]);
    assert_eq!(
        fs::read(out_dir.join("file_slots.csv")).unwrap(),
        fs::read(reference.path().join("static_pair_slots.csv")).unwrap()
    );
}
