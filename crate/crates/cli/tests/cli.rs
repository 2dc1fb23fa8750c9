use std::process::{Command, Output};

fn instrasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_instrasim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn qubit_dephasing_sweep_matches_formula() {
    let out = stdout(&instrasim(&[
        "visibility",
        "--instrument",
        "luders",
        "--d",
        "2",
        "--noise",
        "dephasing",
        "--gamma-grid",
        "0:1:0.05",
    ]));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 21);
    for r in rows {
        let g: f64 = r[0].parse().unwrap();
        let v: f64 = r[3].parse().unwrap();
        let expected = 1.0 / (g + (1.0 - g * g).sqrt());
        assert!((v - expected).abs() < 1e-6, "gamma {g}: {v} vs {expected}");
    }
}

#[test]
fn sic_white_noise_single_row() {
    let out = stdout(&instrasim(&[
        "visibility",
        "--instrument",
        "sic",
        "--noise",
        "white",
        "--format",
        "json",
    ]));
    let rows: serde_json::Value = serde_json::from_str(&out).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0]["v_sdp"].as_f64().unwrap() - 0.773).abs() < 2e-3);
}

#[test]
fn hemisphere_endpoints_and_midpoint() {
    let rows = csv_rows(&stdout(&instrasim(&["hemisphere"])));
    let nums: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    let first = &nums[0];
    let last = nums.last().unwrap();
    assert_eq!(first, &vec![0.5, 1.0, 1.0, 1.0]);
    for x in &last[1..] {
        assert!((x - 2.0 / 3.0).abs() < 1e-15);
    }
    let mid = nums.iter().find(|r| r[0] == 0.625).unwrap();
    assert!((mid[2] - 0.95534).abs() < 1e-5);
    for r in &nums {
        assert!((r[2] - r[3]).abs() < 1e-9);
    }
}

#[test]
fn csv_and_json_hold_the_same_numbers() {
    let args = ["visibility", "--gamma-grid", "0.1:0.3:0.1"];
    let csv = stdout(&instrasim(&args));
    let json = stdout(&instrasim(&[&args[..], &["--format", "json"]].concat()));
    let json: serde_json::Value = serde_json::from_str(&json).unwrap();
    for (row, obj) in csv_rows(&csv).iter().zip(json.as_array().unwrap()) {
        for (i, key) in ["gamma", "v_sdp", "v_analytic"].iter().enumerate() {
            let col = [0, 3, 4][i];
            let a: f64 = row[col].parse().unwrap();
            assert_eq!(a.to_bits(), obj[key].as_f64().unwrap().to_bits(), "{key}");
        }
    }
}

#[test]
fn exit_codes_follow_contract() {
    assert_eq!(
        instrasim(&["visibility", "--gamma-grid", "1:0:0.1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        instrasim(&["visibility", "--gamma", "2.0"]).status.code(),
        Some(2)
    );
    assert_eq!(
        instrasim(&["visibility", "--gamma", "0.5", "--tol", "-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(instrasim(&["nonsense"]).status.code(), Some(2));
    assert_eq!(
        instrasim(&[
            "visibility",
            "--gamma",
            "0.5",
            "-o",
            "/nonexistent/dir/out.csv"
        ])
        .status
        .code(),
        Some(4)
    );
}

#[test]
fn env_override_applies() {
    let o = Command::new(env!("CARGO_BIN_EXE_instrasim"))
        .args(["hemisphere", "--p-grid", "0.5:0.5:0.1"])
        .env("INSTRASIM_FORMAT", "json")
        .output()
        .unwrap();
    assert!(stdout(&o).trim_start().starts_with('['));
}

#[test]
fn seesaw_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let args = [
        "seesaw",
        "--floor",
        "2.05",
        "--restarts",
        "2",
        "--max-rounds",
        "5",
        "--seed",
        "11",
        "--jobs",
        "1",
    ];
    let a = stdout(&instrasim(
        &[&args[..], &["--report", report.to_str().unwrap()]].concat(),
    ));
    let b = stdout(&instrasim(&args));
    assert_eq!(a, b);
    let rows = csv_rows(&a);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], "11");
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let r = &rep[0];
    for key in ["seed", "restarts", "floor", "best", "model", "trace"] {
        assert!(!r[key].is_null(), "{key}");
    }
    assert!(r["best"]["s_ab"].as_f64().unwrap() >= 2.05);
}
