use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convex-order"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn pair(mu: &str, nu: &str) -> Vec<String> {
    vec![
        "--mu".into(),
        data(mu).display().to_string(),
        "--nu".into(),
        data(nu).display().to_string(),
    ]
}

fn run_with(head: &[&str], pair: &[String], tail: &[&str]) -> Output {
    let mut args: Vec<&str> = head.to_vec();
    args.extend(pair.iter().map(String::as_str));
    args.extend_from_slice(tail);
    run(&args)
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ordered_pair_exits_zero_with_a_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("c.json");
    let out = run_with(
        &["order", "check", "--relation", "cx"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--exact", "--certificate", cert.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let c = read(&cert);
    assert_eq!(c["pi"].as_array().unwrap().len(), 2);

    let again = run_with(
        &["order", "check", "--relation", "cx"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--exact", "--validate", cert.to_str().unwrap()],
    );
    assert_eq!(code(&again), 0);
}

#[test]
fn rational_masses_are_accepted() {
    let out = run_with(
        &["order", "check", "--relation", "cx"],
        &pair("ex2_mu.json", "ex2_nu.json"),
        &["--exact"],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn unordered_pair_exits_one_with_a_separator() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("s.json");
    let out = run_with(
        &["order", "check", "--relation", "cxp"],
        &pair("dirac0.json", "spread.json"),
        &["--certificate", cert.to_str().unwrap()],
    );
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    let s = read(&cert);
    assert!(s["values"].is_array() && s["subgradients"].is_array());

    let check = run_with(
        &["order", "check", "--relation", "cxp"],
        &pair("dirac0.json", "spread.json"),
        &["--exact", "--validate", cert.to_str().unwrap()],
    );
    assert_eq!(code(&check), 1);
}

#[test]
fn collapsing_a_spread_is_not_cx_ordered() {
    let out = run_with(
        &["order", "check", "--relation", "cx"],
        &pair("spread.json", "dirac0.json"),
        &[],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn tampered_certificate_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("c.json");
    run_with(
        &["order", "check", "--relation", "cx"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--certificate", cert.to_str().unwrap()],
    );
    let mut c = read(&cert);
    c["pi"][0][0] = Value::from(0.5);
    c["pi"][0][1] = Value::from(0.0);
    std::fs::write(&cert, c.to_string()).unwrap();
    let out = run_with(
        &["order", "check", "--relation", "cx"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--validate", cert.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_input_exits_two() {
    let out = run(&[
        "order",
        "check",
        "--relation",
        "cx",
        "--mu",
        "/nonexistent/mu.json",
        "--nu",
        data("ex1_nu.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn unknown_relation_exits_two() {
    let out = run_with(
        &["order", "check", "--relation", "icx"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &[],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn cx_set_is_the_left_edge_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    let out = run_with(
        &["geometry", "cx-set"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--point=-1,0", "--out", p.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let poly = read(&p);
    let mut vertices: Vec<(f64, f64)> = poly["vertices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| (v[0].as_f64().unwrap(), v[1].as_f64().unwrap()))
        .collect();
    vertices.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(vertices, vec![(-1.0, -1.0), (-1.0, 1.0)]);

    let check = run_with(
        &["geometry", "cx-set"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--point=-1,0", "--validate", p.to_str().unwrap()],
    );
    assert_eq!(code(&check), 0);
}

#[test]
fn subset_set_covers_both_excess_points() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.json");
    std::fs::write(&e, "[[-1, 0], [1, 0]]").unwrap();
    let p = dir.path().join("p.json");
    let out = run_with(
        &["geometry", "cx-set"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &[
            "--point=-1,0",
            "--subset",
            e.to_str().unwrap(),
            "--out",
            p.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(read(&p)["vertices"].as_array().unwrap().len(), 4);
}

#[test]
fn witness_splits_the_point_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    let out = run_with(
        &["geometry", "witness"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--point=1,0", "--out", w.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0);
    let v = read(&w);
    let weights: Vec<f64> = v["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_f64().unwrap())
        .collect();
    assert_eq!(weights, vec![0.5, 0.5]);
    for y in v["points"].as_array().unwrap() {
        assert_eq!(y[0].as_f64(), Some(1.0));
    }

    let check = run_with(
        &["geometry", "witness"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--point=1,0", "--validate", w.to_str().unwrap()],
    );
    assert_eq!(code(&check), 0);
}

#[test]
fn witness_for_a_non_excess_point_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    let out = run_with(
        &["geometry", "witness"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--point=1,1", "--out", w.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn kernel_on_the_square_has_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    let out = run_with(
        &["kernel", "build"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--out", k.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let v = read(&k);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert!(v["l1_error"].as_f64().unwrap() <= 1e-6);
    for row in v["k"].as_array().unwrap() {
        let s: f64 = row
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a.as_f64().unwrap())
            .sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    let check = run_with(
        &["kernel", "build"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--validate", k.to_str().unwrap()],
    );
    assert_eq!(code(&check), 0);
}

#[test]
fn kernel_of_a_measure_with_itself_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["iterative", "lp"] {
        let k = dir.path().join(format!("{method}.json"));
        let out = run_with(
            &["kernel", "build", "--method", method],
            &pair("ex1_mu.json", "ex1_mu.json"),
            &["--out", k.to_str().unwrap()],
        );
        assert_eq!(code(&out), 0);
        let v = read(&k);
        let rows = v["rows"].as_array().unwrap();
        let cols = v["cols"].as_array().unwrap();
        for (i, row) in v["k"].as_array().unwrap().iter().enumerate() {
            for (j, w) in row.as_array().unwrap().iter().enumerate() {
                let expect = if rows[i] == cols[j] { 1.0 } else { 0.0 };
                assert!((w.as_f64().unwrap() - expect).abs() < 1e-12, "{method}");
            }
        }
    }
}

#[test]
fn kernel_for_an_unordered_pair_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    let out = run_with(
        &["kernel", "build"],
        &pair("spread.json", "dirac0.json"),
        &["--out", k.to_str().unwrap()],
    );
    assert_eq!(code(&out), 1);
    assert!(!k.exists());
}

#[test]
fn tampered_kernel_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    run_with(
        &["kernel", "build"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--out", k.to_str().unwrap()],
    );
    let mut v = read(&k);
    v["k"][0][0] = Value::from(0.25);
    v["k"][0][1] = Value::from(0.75);
    std::fs::write(&k, v.to_string()).unwrap();
    let out = run_with(
        &["kernel", "build"],
        &pair("ex1_mu.json", "ex1_nu.json"),
        &["--validate", k.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
}

fn sim(args: &[&str], scenario: &str) -> Output {
    let path = data(scenario);
    let mut all = vec!["sim"];
    all.extend_from_slice(&args[..1]);
    all.extend_from_slice(&["--scenario", path.to_str().unwrap(), "--paths", "4000"]);
    all.extend_from_slice(&args[1..]);
    run(&all)
}

#[test]
fn poisson_scenario_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = sim(
        &["compare", "--seed", "3", "--out", report.to_str().unwrap()],
        "poisson.json",
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let r = read(&report);
    assert_eq!(r["n_paths"].as_u64(), Some(4000));
    assert!(r["rows"]
        .as_array()
        .unwrap()
        .iter()
        .all(|row| row["decision"] != "violation"));
}

#[test]
fn control_scenario_needs_force_and_then_fails() {
    let refused = sim(&["compare", "--seed", "3"], "control.json");
    assert_eq!(code(&refused), 2);
    let forced = sim(&["compare", "--seed", "3", "--force"], "control.json");
    assert_eq!(code(&forced), 1);
    assert!(stdout(&forced).contains("violation"));
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    sim(
        &["compare", "--seed", "9", "--out", a.to_str().unwrap()],
        "gaussian.json",
    );
    sim(
        &["compare", "--seed", "9", "--out", b.to_str().unwrap()],
        "gaussian.json",
    );
    assert_eq!(read(&a), read(&b));
}

#[test]
fn deviation_bounds_dominate_the_tail() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("d.json");
    let out = sim(
        &[
            "deviation",
            "--seed",
            "5",
            "--x-grid",
            "1,2,3",
            "--out",
            report.to_str().unwrap(),
        ],
        "gaussian.json",
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let rows = read(&report)["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r["bound"].as_f64().unwrap() >= r["tail"].as_f64().unwrap());
    }
}

#[test]
fn bad_grid_exits_two() {
    let out = sim(
        &["deviation", "--seed", "5", "--x-grid", "1,x"],
        "gaussian.json",
    );
    assert_eq!(code(&out), 2);
    let out = sim(
        &[
            "deviation",
            "--seed",
            "5",
            "--x-grid",
            "1",
            "--lambda-grid=-1",
        ],
        "gaussian.json",
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn triangle_point_sees_the_whole_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    let out = run_with(
        &["geometry", "cx-set"],
        &pair("ex2_mu.json", "ex2_nu.json"),
        &["--point", "0.5,0", "--out", p.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let vertices = read(&p)["vertices"].as_array().unwrap().clone();
    assert_eq!(vertices.len(), 3);
    let h = 3f64.sqrt() / 2.0;
    for target in [[1.0, 0.0], [-0.5, h], [-0.5, -h]] {
        assert!(vertices.iter().any(|v| {
            (v[0].as_f64().unwrap() - target[0]).abs() < 1e-9
                && (v[1].as_f64().unwrap() - target[1]).abs() < 1e-9
        }));
    }
}

#[test]
fn triangle_witness_weights() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    let out = run_with(
        &["geometry", "witness"],
        &pair("ex2_mu.json", "ex2_nu.json"),
        &["--point", "0.5,0", "--out", w.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0);
    let v = read(&w);
    let mut weights: Vec<(f64, f64)> = v["points"]
        .as_array()
        .unwrap()
        .iter()
        .zip(v["weights"].as_array().unwrap())
        .map(|(y, a)| (y[0].as_f64().unwrap(), a.as_f64().unwrap()))
        .collect();
    weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(weights.len(), 3);
    let expect = [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0];
    for ((x, a), e) in weights.iter().zip(expect) {
        assert!((a - e).abs() < 1e-9, "weight {a} at x = {x}");
    }
}

#[test]
fn unwritable_certificate_keeps_the_verdict() {
    let out = run_with(
        &["order", "check", "--relation", "cxp"],
        &pair("dirac0.json", "spread.json"),
        &["--certificate", "/nonexistent/dir/s.json"],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot write"));
}
