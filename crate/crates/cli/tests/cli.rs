use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rnc_core::z_cdf;

fn rnc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn last_field(s: &str) -> String {
    s.lines().last().unwrap().rsplit(',').next().unwrap().to_string()
}

#[test]
fn rn_cdf_rayleigh_branch() {
    let out = stdout(&rnc(&["rn-cdf", "--v", "1", "--mu", "2"]));
    assert_eq!(out.lines().next(), Some("mu,v,z_cdf"));
    assert!(last_field(&out).starts_with("0.632120"));
}

#[test]
fn epr_clone_count() {
    let dir = tempfile::tempdir().unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let epr = write(dir.path(), "epr.json", &format!("{{\"rows\":2,\"cols\":2,\"re\":[{h},0,0,{h}],\"im\":[0,0,0,0]}}"));
    let out = stdout(&rnc(&["locc-clone", "--psi", &epr, "--nu", "0.5", "--n", "10"]));
    assert_eq!(last_field(&out), "12");
}

#[test]
fn curve_round_trips_through_z_cdf() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let o = rnc(&[
        "rn-curve", "--v", "0,0.1,0.1666666666666667,0.3333333333333333,1", "--mu-min", "-4", "--mu-max", "4", "--steps", "41",
        "--out", path.to_str().unwrap(),
    ]);
    stdout(&o);
    let body = fs::read_to_string(&path).unwrap();
    let mut rows = 0;
    for line in body.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let again = z_cdf(f[0], f[1]).unwrap();
        assert!((again - f[2]).abs() < 1e-9, "{line}: {again}");
        if f[1] == 0.0 {
            assert!((f[2] - rnc_core::normal::std_cdf(f[0])).abs() < 1e-11);
        }
        rows += 1;
    }
    assert_eq!(rows, 5 * 41);
}

#[test]
fn deterministic_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", "{\"p\":[0.6,0.4]}");
    let q = write(dir.path(), "q.json", "{\"p\":[0.8,0.2]}");
    let runs: Vec<Vec<&str>> = vec![
        vec!["converge", "--P", &p, "--Q", &q, "--b", "0.3", "--n-grid", "50,100"],
        vec!["fidelity", "--P", &p, "--Q", &q, "--n", "12", "--L", "15", "--mode", "det"],
        vec!["rate-curve", "--P", &p, "--Q", &q, "--nu-steps", "9"],
        vec!["rate", "--P", &p, "--Q", &q, "--nu", "0.7", "--n", "500"],
    ];
    for args in runs {
        let a = rnc(&args);
        let b = rnc(&args);
        assert_eq!(stdout(&a), stdout(&b));
    }
}

#[test]
fn fidelity_plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", "{\"p\":[0.7,0.3]}");
    let u = write(dir.path(), "u.json", "{\"p\":[1,1]}");
    let plan = dir.path().join("plan.json");
    let out = stdout(&rnc(&["fidelity", "--P", &p, "--Q", &u, "--n", "1", "--L", "1", "--plan", plan.to_str().unwrap()]));
    let f: f64 = last_field(&out).parse().unwrap();
    assert!((f - 0.978906312931).abs() < 1e-11);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(plan).unwrap()).unwrap();
    assert_eq!(v["mode"], "majorization");
}

#[test]
fn exit_codes() {
    assert_eq!(rnc(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(rnc(&["rn-cdf", "--v", "1", "--mu", "2", "--bogus"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"p\":[0.5,");
    let good = write(dir.path(), "good.json", "{\"p\":[0.5,0.3,0.2]}");
    assert_eq!(rnc(&["rate", "--P", &bad, "--Q", &good, "--nu", "0.5", "--n", "10"]).status.code(), Some(2));
    assert_eq!(rnc(&["rate", "--P", &good, "--Q", &good, "--nu", "1.5", "--n", "10"]).status.code(), Some(2));
    let prod = write(dir.path(), "prod.json", "{\"rows\":2,\"cols\":2,\"re\":[1,0,0,0],\"im\":[0,0,0,0]}");
    assert_eq!(rnc(&["locc-clone", "--psi", &prod, "--nu", "0.5", "--n", "3"]).status.code(), Some(2));
    let big = rnc(&["fidelity", "--P", &good, "--Q", &good, "--n", "40", "--L", "40", "--mode", "det"]);
    assert_eq!(big.status.code(), Some(3));
}
