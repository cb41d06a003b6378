use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onl-lab")).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn gen(dir: &Path, name: &str, kind: &[&str]) -> PathBuf {
    let out = lab(dir, &[&["space", "gen"], kind, &["--out", name]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join(name)
}

fn csv_rows(bytes: &[u8]) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(bytes).records().map(|r| r.unwrap()).collect()
}

#[test]
fn space_gen_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "g.json", &["--kind", "grid", "--rows", "3", "--cols", "4"]);
    let out = lab(dir.path(), &["space", "validate", "g.json"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n"], 12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "c6.json", &["--kind", "cycle", "--n", "6"]);
    let bad_radii = lab(d, &["--seed", "1", "onl", "profile", "--space", "c6.json", "--R", "2", "--S", "1"]);
    assert_eq!(code(&bad_radii), 2);
    assert_eq!(code(&lab(d, &["space", "gen", "--kind", "nonsense"])), 2);
    assert_eq!(code(&lab(d, &["space", "validate", "missing.json"])), 3);
    std::fs::write(d.join("broken.json"), "{ not json").unwrap();
    assert_eq!(code(&lab(d, &["space", "validate", "broken.json"])), 3);

    gen(d, "p3.json", &["--kind", "path", "--n", "3"]);
    let out = lab(d, &["cert", "build", "--space", "p3.json", "--kind", "ball", "--S", "1", "--form", "kernel", "--out", "k.json"]);
    assert_eq!(code(&out), 0);
    let mut kernel: Value = serde_json::from_str(&std::fs::read_to_string(d.join("k.json")).unwrap()).unwrap();
    for entry in kernel["entries"].as_array_mut().unwrap() {
        if entry[0] != entry[1] && (entry[0].as_u64().unwrap() + entry[1].as_u64().unwrap()) == 2 {
            entry[2] = Value::from(-1.0);
        }
    }
    std::fs::write(d.join("bad.json"), serde_json::to_string(&kernel).unwrap()).unwrap();
    let out = lab(d, &["cert", "check", "--space", "p3.json", "--cert", "bad.json"]);
    assert_eq!(code(&out), 4);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["psd"]["is_psd"], false);
}

#[test]
fn profile_is_deterministic_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "c12.json", &["--kind", "cycle", "--n", "12"]);
    let args = ["--seed", "9", "onl", "profile", "--space", "c12.json", "--R", "1", "--S", "1,2", "--samples", "8", "--budget", "20"];
    let first = lab(d, &args);
    let second = lab(d, &args);
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, second.stdout);
    let rows = csv_rows(&first.stdout);
    assert_eq!(rows.len(), 2);
    let threaded = lab(d, &[&args[..], &["--threads", "1"]].concat());
    assert_eq!(threaded.stdout, first.stdout);
    let to_file = lab(d, &[&args[..], &["--out", "p.csv"]].concat());
    assert_eq!(code(&to_file), 0);
    assert_eq!(std::fs::read(d.join("p.csv")).unwrap(), first.stdout);
}

#[test]
fn identity_mode_gives_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "c8.json", &["--kind", "cycle", "--n", "8"]);
    let out = lab(d, &["--seed", "1", "onl", "profile", "--space", "c8.json", "--R", "1", "--S", "1,3", "--samples", "3", "--mode", "identity", "--json"]);
    assert_eq!(code(&out), 0);
    let profiles: Value = serde_json::from_slice(&out.stdout).unwrap();
    for p in profiles.as_array().unwrap() {
        for key in ["min_ratio", "mean_ratio", "max_ratio"] {
            assert!((p[key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{p}");
        }
    }
}

#[test]
fn adjacency_probe_on_hexagon() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "c6.json", &["--kind", "cycle", "--n", "6"]);
    let out = lab(d, &["--seed", "1", "onl", "profile", "--space", "c6.json", "--R", "1", "--S", "1", "--samples", "4", "--probe-adjacency"]);
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&out.stdout);
    let probe: f64 = rows[0][rows[0].len() - 1].parse().unwrap();
    assert!((probe - 2f64.sqrt() / 2.0).abs() < 1e-8);
}

#[test]
fn equivalence_on_long_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "c60.json", &["--kind", "cycle", "--n", "60"]);
    let out = lab(d, &["--seed", "3", "equiv", "run", "--space", "c60.json", "--R", "1", "--S", "10", "--samples", "20", "--budget", "10"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["epsilon"]["exact"], "1/7");
    assert!((report["epsilon"]["value"].as_f64().unwrap() - 0.142857).abs() < 1e-6);
    assert_eq!(report["verified"], true);
}

#[test]
fn one_point_space() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "p1.json", &["--kind", "path", "--n", "1"]);
    let out = lab(d, &["--seed", "1", "equiv", "run", "--space", "p1.json", "--R", "1", "--S", "1", "--samples", "3", "--budget", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["epsilon"]["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn zero_radius_certificate_warns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "c6.json", &["--kind", "cycle", "--n", "6"]);
    let out = lab(d, &["--seed", "1", "equiv", "run", "--space", "c6.json", "--R", "1", "--S", "0", "--samples", "3", "--budget", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!report["warnings"].as_array().unwrap().is_empty());
    assert_eq!(report["epsilon"]["vacuous"], true);
}

#[test]
fn cb_check_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "c6.json", &["--kind", "cycle", "--n", "6"]);
    let out = lab(d, &["--seed", "5", "cb", "check", "--space", "c6.json", "--R", "1", "--S", "2", "--n", "2", "--samples", "10"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["holds"], true);
}
