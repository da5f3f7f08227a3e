use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tml() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tml"));
    c.env_remove("TML_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    tml().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn station() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/golden_station.csv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stages_compose_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let (filled, des, seasonal, cal, labels, resid, fits, paths) = (
        d("filled.csv"),
        d("des.csv"),
        d("seasonal.json"),
        d("cal.json"),
        d("labels.csv"),
        d("resid.csv"),
        d("fits.json"),
        d("paths.csv"),
    );

    let stats: serde_json::Value = serde_json::from_str(&ok(&["ingest", "--input", s(&station()), "--output", s(&filled)])).unwrap();
    assert_eq!(stats["filled_days"], 10);
    assert_eq!(stats["stats"]["n"], 1096);

    ok(&["deseasonalize", "--input", s(&filled), "--output", s(&des), "--params", s(&seasonal)]);
    let head = std::fs::read_to_string(&des).unwrap();
    assert!(head.starts_with("date,t,deseasonalized\n2015-01-01,1,"));

    let fit: serde_json::Value = serde_json::from_str(&ok(&[
        "calibrate", "--input", s(&des), "--output", s(&cal), "--labels", s(&labels), "--residuals", s(&resid), "--starts", "2",
    ]))
    .unwrap();
    assert!(fit["p11"].as_f64().unwrap() > 0.5);
    assert_eq!(std::fs::read_to_string(&labels).unwrap().lines().count(), 1097);

    ok(&["fitdist", "--input", s(&resid), "--families", "NIG,Normal", "--starts", "2", "--output", s(&fits)]);
    let gof: serde_json::Value = serde_json::from_str(&ok(&["gof", "--input", s(&resid), "--fits", s(&fits), "--chi2-bins", "20"])).unwrap();
    let rows = gof["distribution_gof"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(gof["hurst"]["h"].as_f64().is_some());

    ok(&[
        "simulate", "--calibration", s(&cal), "--seasonal", s(&seasonal), "--days", "30", "--paths", "5", "--initial-value", "27",
        "--t0", "1096", "--allow-unstable", "--output", s(&paths),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&ok(&["indices", "--input", s(&paths), "--kind", "cat", "--tau1", "0", "--tau2", "29"])).unwrap();
    assert_eq!(summary["n_paths"], 5);
    let single: serde_json::Value =
        serde_json::from_str(&ok(&["indices", "--input", s(&filled), "--kind", "gdd", "--tau1", "0", "--tau2", "9", "--t-optimal", "100"]))
            .unwrap();
    assert_eq!(single["value"], 0.0);
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    // unreadable config: I/O
    assert_eq!(run(&["pipeline", "--config", s(&missing), "--output-dir", s(dir.path())]).status.code(), Some(4));

    // config naming a missing input: validation, before any work
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"stations":[{"id":"x","path":"absent.csv"}]}"#).unwrap();
    let out = run(&["pipeline", "--config", s(&cfg), "--output-dir", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    assert!(!dir.path().join("out").exists());

    // GDD without a threshold and bad usage
    let out = run(&["indices", "--input", s(&station()), "--kind", "gdd", "--tau1", "0", "--tau2", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["calibrate"]).status.code(), Some(2));

    // numerical failure: level guard in error mode on a series crossing zero
    let series = dir.path().join("zero.csv");
    let mut body = String::from("deseasonalized\n");
    for t in 0..200 {
        body.push_str(&format!("{}\n", if t == 50 { 0.0 } else { (t as f64 * 0.3).sin() + 0.01 }));
    }
    std::fs::write(&series, body).unwrap();
    let out = run(&["calibrate", "--input", s(&series), "--guard", "error", "--output", s(&dir.path().join("c.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hint:"));
}

#[test]
fn pipeline_uses_env_output_dir_and_renders_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::copy(station(), dir.path().join("st.csv")).unwrap();
    std::fs::write(
        &cfg,
        r#"{"stations":[{"id":"st","path":"st.csv"}],"fit":{"families":["NIG","Normal"],"starts":2},"em":{"starts":2},"tests":{"chi2_bins":20},"seed":3}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("env-out");
    let out = tml().args(["pipeline", "--config", s(&cfg)]).env("TML_OUTPUT_DIR", &out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = out_dir.join("report.json");
    assert!(report.is_file());
    assert!(out_dir.join("st/regime_labels.csv").is_file());

    let table = ok(&["report", "--report", s(&report), "--table", "tml"]);
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap().split_whitespace().collect::<Vec<_>>(), ["Station", "sigma_1", "kappa", "mu", "sigma_2", "P11", "P22"]);
    assert!(lines.next().unwrap().starts_with("st "));
    let all = ok(&["report", "--report", s(&report)]);
    assert!(all.contains("K-S") && all.contains("A0"));
    assert_eq!(run(&["report", "--report", s(&report), "--table", "bogus"]).status.code(), Some(2));

    // no output directory anywhere
    assert_eq!(run(&["pipeline", "--config", s(&cfg)]).status.code(), Some(2));
}
