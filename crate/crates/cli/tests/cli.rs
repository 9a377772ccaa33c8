use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fqs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fqs"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn data_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn fidelity_map_shape_and_header() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[fidelity_map]\npulse = \"rect\"\ndelta = [0.0, 1.0]\nn_delta = 3\neps = [-0.1, 0.1]\nn_eps = 3\n",
    )
    .unwrap();
    let out = fqs(&["fidelity-map", "--config", "run.toml", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("o/fidelity_map.csv")).unwrap();
    assert!(text.starts_with("# tool: fqs "));
    assert!(text.contains("# config_sha256: "));
    assert!(text.contains("# seed: 0"));
    let (header, rows) = data_rows(&text);
    assert_eq!(header, ["delta_ratio", "eps", "f_qs", "f_qc"]);
    assert_eq!(rows.len(), 9);
    let ideal = rows.iter().find(|r| r[0] == 0.0 && r[1] == 0.0).unwrap();
    assert_eq!(ideal[2], 1.0);
    assert_eq!(ideal[3], 1.0);
}

#[test]
fn composite_beats_rect_at_full_detuning() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = Vec::new();
    for pulse in ["rect", "composite"] {
        fs::write(
            dir.path().join("run.toml"),
            format!("[fidelity_map]\npulse = \"{pulse}\"\ndelta = [1.0, 1.0]\nn_delta = 1\n"),
        )
        .unwrap();
        let out = fqs(&["fidelity-map", "--config", "run.toml"], dir.path());
        assert!(out.status.success());
        let (_, rows) = data_rows(&fs::read_to_string(dir.path().join("fidelity_map.csv")).unwrap());
        f.push(rows[0][2]);
    }
    assert!(f[1] > f[0] + 0.3, "{f:?}");
}

#[test]
fn json_format_carries_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = fqs(&["fidelity-map", "--format", "json", "--seed", "11"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fidelity_map.json")).unwrap()).unwrap();
    assert_eq!(v["metadata"]["seed"], "11");
    assert_eq!(v["metadata"]["command"], "fidelity-map");
    assert_eq!(v["columns"][2], "f_qs");
    assert_eq!(v["rows"].as_array().unwrap().len(), 21);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "seed = 1\n[nmr]\nn_pulses = \"many\"\n").unwrap();
    let out = fqs(&["nmr", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    fs::write(dir.path().join("dep.toml"), "[qpt]\ndepolarizing = 1.5\n").unwrap();
    assert_eq!(fqs(&["qpt", "--config", "dep.toml"], dir.path()).status.code(), Some(2));

    fs::write(dir.path().join("pulse.toml"), "[fidelity_map]\npulse = \"missing.json\"\n").unwrap();
    assert_eq!(fqs(&["fidelity-map", "--config", "pulse.toml"], dir.path()).status.code(), Some(2));

    assert_eq!(fqs(&["qpt", "--config", "absent.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn optimizer_without_progress_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // steps below float resolution can never raise the objective
    fs::write(
        dir.path().join("run.toml"),
        "[optimize]\ninit = \"rect\"\nstep_init = 1e-300\nmax_iters = 50\n",
    )
    .unwrap();
    let out = fqs(&["optimize", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("optimize_pulse.json").exists());
}

#[test]
fn unresolved_slope_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // sensing far past T2 leaves no fringe
    fs::write(
        dir.path().join("run.toml"),
        "[echo_sense]\nn_delta = 1\nt_sense = 0.01\nshots = 1000\n",
    )
    .unwrap();
    let out = fqs(&["echo-sense", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("echo_sense.csv").exists());
}

#[test]
fn optimized_pulse_feeds_back_as_input() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("opt.toml"), "[optimize]\nmax_iters = 20\nn_delta = 3\nn_eps = 1\neps = [0.0, 0.0]\n").unwrap();
    let out = fqs(&["optimize", "--config", "opt.toml", "--out", "p"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pulse: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("p/optimize_pulse.json")).unwrap()).unwrap();
    assert_eq!(pulse["segments"].as_array().unwrap().len(), 5);
    assert!(pulse["provenance"]["config_hash"].as_str().unwrap().len() == 64);

    fs::write(dir.path().join("p/map.toml"), "[fidelity_map]\npulse = \"optimize_pulse.json\"\nn_delta = 2\n").unwrap();
    let out = fqs(&["fidelity-map", "--config", "p/map.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn qpt_of_ideal_flip_is_sigma_x() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[qpt]\nshots = 0\n").unwrap();
    let out = fqs(&["qpt", "--config", "run.toml"], dir.path());
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("qpt_chi_re.csv")).unwrap();
    let x_row = text.lines().find(|l| l.starts_with("X,")).unwrap();
    let xx: f64 = x_row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((xx - 1.0).abs() < 1e-9);
    let records = fs::read_to_string(dir.path().join("qpt_records.csv")).unwrap();
    assert_eq!(records.lines().filter(|l| !l.starts_with('#')).count(), 13);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[echo_sense]\nn_delta = 3\n[nmr]\nn_points = 21\n[optimize]\nmax_iters = 10\nn_delta = 3\nn_eps = 1\neps = [0.0, 0.0]\n",
    )
    .unwrap();
    for cmd in ["echo-sense", "nmr", "optimize", "qpt"] {
        let mut outputs = Vec::new();
        for t in ["1", "4"] {
            let od = format!("t{t}");
            let out = fqs(&[cmd, "--config", "run.toml", "--threads", t, "--out", &od], dir.path());
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
            let mut files: Vec<_> = fs::read_dir(dir.path().join(&od))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            outputs.push(files.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>());
            fs::remove_dir_all(dir.path().join(&od)).unwrap();
        }
        assert_eq!(outputs[0], outputs[1], "{cmd}");
    }
}
