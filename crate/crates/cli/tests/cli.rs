use std::process::{Command, Output};

const PARAMS: [&str; 6] = ["--alpha", "1", "--delta", "1", "--lambda", "0.9"];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuel-boundary"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_params<'a>(sub: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![sub];
    v.extend_from_slice(&PARAMS);
    v.extend_from_slice(extra);
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn constants_json() {
    let o = run(&with_params("constants", &[]));
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["f0"].as_f64().unwrap() - 2.375100220297941).abs() < 1e-12);
    assert_eq!(v["regime"], "new");
}

#[test]
fn constants_report_other_regimes_without_failing() {
    let o = run(&[
        "constants",
        "--alpha",
        "1",
        "--delta",
        "1",
        "--lambda",
        "1.2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "degenerate");
    assert!(v["f0"].is_null());
}

#[test]
fn boundaries_csv_round_trips() {
    let o = run(&with_params(
        "boundaries",
        &["--c-max", "auto", "--c-steps", "64", "--format", "csv"],
    ));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("c,F,G,A,B,G_prime"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 64);
    for row in rows {
        let again: Vec<String> = row
            .split(',')
            .map(|f| format!("{:.16e}", f.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(again.join(","), row);
    }
}

#[test]
fn verify_refuses_open_regime() {
    let o = run(&["verify", "--alpha", "1", "--delta", "1", "--lambda", "0.55"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("open regime"), "{err}");
    assert!(err.contains("lambda_star, lambda_dagger"), "{err}");
}

#[test]
fn verify_passes_on_explicit_list() {
    let o = run(&with_params("verify", &["--c-list", "0.05,0.1"]));
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 24);
    assert!(reports.iter().all(|r| r["passed"] == true));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        run(&with_params("verify", &["--bogus"])).status.code(),
        Some(2)
    );
    assert_eq!(run(&["constants", "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(
        run(&with_params("boundaries", &["--c-max", "lots"]))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_is_seed_deterministic_and_writes_files() {
    let dir = std::env::temp_dir().join(format!("fuel-boundary-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sim.json");
    let args = [
        "--x0",
        "0.51",
        "--c",
        "0.02",
        "--paths",
        "2000",
        "--seed",
        "9",
        "--antithetic",
    ];
    let a = run(&with_params("simulate", &args));
    let mut with_out = args.to_vec();
    let p = path.to_str().unwrap();
    with_out.extend_from_slice(&["--out", p]);
    let b = run(&with_params("simulate", &with_out));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(stdout(&a), std::fs::read_to_string(&path).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn environment_overrides_flags() {
    let o = Command::new(env!("CARGO_BIN_EXE_fuel-boundary"))
        .args(["constants", "--alpha", "1", "--delta", "1"])
        .env("FUEL_BOUNDARY_LAMBDA", "0.55")
        .env("FUEL_BOUNDARY_FORMAT", "csv")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with(",open"));
}

#[test]
fn value_and_oracles() {
    let v = run(&with_params("value", &["--c", "0", "--x-steps", "5"]));
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout(&v).lines().count(), 6);
    let v = run(&with_params("value", &["--c", "0.05", "--format", "json"]));
    let json: serde_json::Value = serde_json::from_str(&stdout(&v)).unwrap();
    assert_eq!(json["xs"].as_array().unwrap().len(), 512);
    let m = run(&with_params(
        "oracle",
        &["--kind", "minorant", "--c", "0.05", "--n", "20000"],
    ));
    assert_eq!(m.status.code(), Some(0));
    assert!(stdout(&m).starts_with("y,w\n"));
    let p = run(&with_params(
        "oracle",
        &[
            "--kind",
            "psor",
            "--c",
            "0.05",
            "--n",
            "2001",
            "--threads",
            "2",
        ],
    ));
    assert_eq!(p.status.code(), Some(0));
    assert!(stdout(&p).starts_with("x,v,stop\n"));
}
