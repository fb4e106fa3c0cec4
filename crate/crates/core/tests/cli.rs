use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lppls(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lppls"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LPPLS_CONFIG")
        .output()
        .expect("spawn lppls")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Noisy 400-day bubble written by the `synth` subcommand.
fn synth_data(dir: &Path) {
    let o = lppls(
        &[
            "synth", "--n", "400", "--tc", "420", "--noise", "0.003", "--seed", "4", "--out", "data.csv",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn fit_recovers_synthetic_bubble() {
    let dir = tempfile::tempdir().unwrap();
    synth_data(dir.path());
    let o = lppls(
        &["fit", "--data", "data.csv", "--length", "200", "--format", "json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let tc = v["fit"]["params"]["tc"].as_f64().unwrap();
    let omega = v["fit"]["params"]["omega"].as_f64().unwrap();
    // window-relative: the window starts at sample 200, so tc = 420 - 200
    assert!((tc - 220.0).abs() < 3.0, "tc {tc}");
    assert!((omega - 9.0).abs() < 0.5, "omega {omega}");
}

#[test]
fn fit_csv_lists_every_window_sample() {
    let dir = tempfile::tempdir().unwrap();
    synth_data(dir.path());
    let o = lppls(&["fit", "--data", "data.csv", "--length", "120"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows[0], "t,time,price,fitted");
    assert_eq!(rows.len(), 121);
    assert!(text.starts_with("# lppls "));
}

#[test]
fn short_window_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    synth_data(dir.path());
    let o = lppls(&["fit", "--data", "data.csv", "--length", "10"], dir.path());
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("shorter"));
}

#[test]
fn missing_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lppls(&["fit", "--data", "absent.csv"], dir.path());
    assert_eq!(o.status.code(), Some(65));
    assert!(stderr(&o).contains("absent.csv"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lppls(&["scan", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn bad_config_file_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    synth_data(dir.path());
    std::fs::write(dir.path().join("bad.toml"), "sead = 3\n").unwrap();
    let o = lppls(&["--config", "bad.toml", "fit", "--data", "data.csv"], dir.path());
    assert_eq!(o.status.code(), Some(78), "{}", stderr(&o));
}

#[test]
fn scan_writes_one_row_per_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    synth_data(dir.path());
    let o = lppls(
        &[
            "scan",
            "--data",
            "data.csv",
            "--from",
            "390",
            "--to",
            "399",
            "--schedule",
            "30,90,30",
            "--out",
            "out",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("out/scan_custom.csv")).unwrap();
    let rows = data_rows(&text);
    assert_eq!(
        rows[0],
        "t2,level,schedule,n_windows,n_pass_pos,n_pass_neg,ci_pos,ci_neg"
    );
    assert_eq!(rows.len(), 11);
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1], "1d");
        assert_eq!(cols[3], "3");
    }
}

#[test]
fn split_horizon_writes_three_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = lppls(
        &[
            "synth", "--n", "660", "--tc", "680", "--noise", "0.003", "--out", "long.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let o = lppls(
        &[
            "scan",
            "--data",
            "long.csv",
            "--from",
            "659",
            "--to",
            "659",
            "--split-horizon",
            "--out",
            "out",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let counts: Vec<String> = ["benchmark", "short_term", "long_term"]
        .iter()
        .map(|tag| {
            let text = std::fs::read_to_string(dir.path().join(format!("out/scan_{tag}.csv"))).unwrap();
            data_rows(&text)[1].split(',').nth(3).unwrap().to_string()
        })
        .collect();
    assert_eq!(counts, ["125", "35", "90"]);
}

#[test]
fn crashes_on_daily_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("btc_daily_2013_2018.csv");
    let o = lppls(&["crashes", "--data", data.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("2013-04-09,229.0,2013-04-16,68.1,7,70.3"), "{text}");
    assert!(text.contains("2018-11-11,6357.5,2018-11-26,3727.3,15,41.4"));

    let o = lppls(
        &["crashes", "--data", data.to_str().unwrap(), "--threshold", "0.5"],
        dir.path(),
    );
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert!(rows.len() > 1);
    for row in &rows[1..] {
        let size: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(size > 50.0, "{row}");
    }
}

#[test]
fn hourly_crashes_need_resampling() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("timestamp,price\n");
    for h in 0..24 * 40 {
        let price = if (500..520).contains(&h) {
            60.0
        } else {
            100.0 + (h % 24) as f64
        };
        csv.push_str(&format!("{},{price}\n", 1_514_764_800 + h * 3600));
    }
    std::fs::write(dir.path().join("hourly.csv"), csv).unwrap();
    let o = lppls(&["crashes", "--data", "hourly.csv"], dir.path());
    assert_eq!(o.status.code(), Some(65));
    assert!(stderr(&o).contains("resample"));
    let o = lppls(&["crashes", "--data", "hourly.csv", "--resample"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = lppls(
            &["synth", "--n", "50", "--noise", "0.01", "--seed", "9", "--out", out],
            dir.path(),
        );
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.params.json")).unwrap()).unwrap();
    assert_eq!(params["params"]["tc"], 70.0);
    assert_eq!(params["seed"], 9);
}

#[test]
fn multilevel_rejects_unordered_levels() {
    let dir = tempfile::tempdir().unwrap();
    synth_data(dir.path());
    let o = lppls(
        &["multilevel", "--data", "data.csv", "--data", "data.csv", "--out", "ml"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(78), "{}", stderr(&o));
}

#[test]
fn multilevel_writes_records_and_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (level, n, tc, out) in [("1h", "300", "320", "h.csv"), ("30m", "600", "640", "m.csv")] {
        let o = lppls(
            &[
                "synth",
                "--n",
                n,
                "--tc",
                tc,
                "--noise",
                "0.002",
                "--level",
                level,
                "--start",
                "2018-01-01",
                "--out",
                out,
            ],
            p,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = lppls(
        &[
            "multilevel",
            "--data",
            "h.csv",
            "--data",
            "m.csv",
            "--level",
            "1h",
            "--level",
            "30m",
            "--from",
            "290",
            "--to",
            "299",
            "--stride",
            "3",
            "--schedule",
            "30,120,30",
            "--out",
            "ml",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let records = std::fs::read_to_string(p.join("ml/multilevel_records.csv")).unwrap();
    let rows = data_rows(&records);
    let hourly = rows.iter().filter(|r| r.split(',').nth(1) == Some("1h")).count();
    let fine = rows.iter().filter(|r| r.split(',').nth(1) == Some("30m")).count();
    assert_eq!(hourly, 4);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("ml/multilevel_episodes.json")).unwrap()).unwrap();
    assert!(doc["provenance"].as_str().unwrap().starts_with("lppls "));
    let episodes = doc["episodes"].as_array().unwrap();
    let steps: u64 = episodes.iter().map(|e| e["steps"].as_u64().unwrap()).sum();
    assert_eq!(steps as usize, fine);
    for e in episodes {
        assert_eq!(e["level"], "30m");
        assert!(e["start"].as_str().unwrap() <= e["end"].as_str().unwrap());
    }
}
