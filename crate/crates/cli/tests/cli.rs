use std::path::Path;
use std::process::{Command, Output};

fn elprice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elprice")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(elprice(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(elprice(&["fit-ou", "--data", "/definitely/missing.csv"]).status.code(), Some(2));
    assert_eq!(elprice(&["simulate", "--span", "ten", "--out", "/tmp/x.csv"]).status.code(), Some(2));
    assert_eq!(elprice(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulation_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = elprice(&["simulate", "--span", "30d", "--seed", "7", "--out", path(p)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 30 * 24 + 1);
}

#[test]
fn params_file_round_trips_through_pricing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.toml");
    assert!(elprice(&["params", "--out", path(&p)]).status.success());
    let from_file = elprice(&["price", "forward", "--params", path(&p), "--t", "4000", "--tau", "4380", "--x", "-3"]);
    let default = elprice(&["price", "forward", "--t", "4000", "--tau", "4380", "--x", "-3"]);
    assert!(from_file.status.success());
    assert_eq!(stdout(&from_file), stdout(&default));
    let f: f64 = stdout(&default).trim().parse().unwrap();
    assert!(f.is_finite() && f > 0.0);
}

#[test]
fn option_put_call_parity_from_the_command_line() {
    let base = ["--t", "4000", "--start", "4368", "--x", "-3", "--strike", "36"];
    let run = |family: &str, kind: &str| -> f64 {
        let mut args = vec!["price", "option", "--family", family, "--kind", kind];
        args.extend_from_slice(&base);
        let o = elprice(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o).trim().parse().unwrap()
    };
    let fut: f64 = stdout(&elprice(&["price", "futures", "--t", "4000", "--start", "4368", "--x", "-3"]))
        .trim()
        .parse()
        .unwrap();
    let disc = (-0.001f64 / 8760.0 * (4368.0 - 24.0 - 4000.0)).exp();
    for family in ["normal", "lognormal"] {
        let parity = run(family, "call") - run(family, "put");
        assert!((parity - disc * (fut - 36.0)).abs() < 1e-9, "{family}: {parity}");
    }
}

#[test]
fn zero_theta_gives_zero_premium() {
    let o = elprice(&["risk-premium", "--tau", "4380", "--lead", "100", "--step", "25", "--theta", "0"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,premium"));
    let rows: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|&p| p == 0.0));
}

#[test]
fn calibrate_and_implied_theta_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let fitted = dir.path().join("fit.toml");
    let truth = dir.path().join("truth.toml");
    assert!(elprice(&["params", "--out", path(&truth)]).status.success());
    assert!(elprice(&["simulate", "--span", "1y", "--seed", "5", "--out", path(&data)]).status.success());

    let o = elprice(&["calibrate", "--data", path(&data), "--params-out", path(&fitted)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout(&o);
    let lambda: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("lambda = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((lambda / 0.0298 - 1.0).abs() < 0.2, "{lambda}");

    let o = elprice(&["implied-theta", "--params", path(&truth), "--data", path(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("month,theta,n_obs,objective"));
    assert!(text.lines().count() >= 12);
    assert!(elprice(&["implied-theta", "--params", path(&fitted), "--data", path(&data)]).status.success());
}

#[test]
fn implied_theta_rejects_a_different_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.toml");
    let data = dir.path().join("d.csv");
    assert!(elprice(&["params", "--out", path(&p)]).status.success());
    assert!(elprice(&["simulate", "--span", "60d", "--out", path(&data)]).status.success());
    let text = std::fs::read_to_string(&p).unwrap().replace("2015-01-01T00:00:00", "2016-01-01T00:00:00");
    std::fs::write(&p, text).unwrap();
    let o = elprice(&["implied-theta", "--params", path(&p), "--data", path(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epoch"));
}

#[test]
fn verify_passes_at_small_sample_size() {
    let o = elprice(&["verify", "--paths", "20000", "--seed", "11"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("PASS")).count(), 11);
}
