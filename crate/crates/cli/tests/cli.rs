use std::path::Path;
use std::process::{Command, Output};

use macgen::netlist::Netlist;
use macgen::verify::{mutate, simulate};

fn macgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macgen")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_mult_writes_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let o = macgen(&["gen-mult", "--width", "4", "--strategy", "area", "--out-dir", path(dir.path()), "--wiring-samples", "50"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Exhaustive"), "{stdout}");
    for f in ["mult4_area.v", "mult4_area.json", "mult4_area.report.json", "mult4_area.wiring.csv", "mult4_area.wiring.svg"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let v = std::fs::read_to_string(dir.path().join("mult4_area.v")).unwrap();
    assert!(v.contains("module mult4_area"));
    let csv = std::fs::read_to_string(dir.path().join("mult4_area.wiring.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    let nl = Netlist::from_json(&std::fs::read_to_string(dir.path().join("mult4_area.json")).unwrap()).unwrap();
    assert_eq!(simulate(&nl, &[13, 11]).unwrap(), vec![143]);
}

#[test]
fn gen_mac_and_adder() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    let o = macgen(&["gen-mac", "--width", "4", "--acc-width", "8", "--name", "fma", "--out-dir", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nl = Netlist::from_json(&std::fs::read_to_string(dir.path().join("fma.json")).unwrap()).unwrap();
    assert_eq!(simulate(&nl, &[15, 15, 255]).unwrap(), vec![225 + 255]);

    let o = macgen(&["gen-adder", "--width", "6", "--arrivals", "0,0,0,2,2,2", "--out-dir", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nl = Netlist::from_json(&std::fs::read_to_string(dir.path().join("add6_tradeoff.json")).unwrap()).unwrap();
    assert_eq!(simulate(&nl, &[63, 1]).unwrap(), vec![64]);

    let o = macgen(&["gen-adder", "--width", "6", "--arrivals", "0,1", "--out-dir", d]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn verify_reports_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&macgen(&["gen-mult", "--width", "4", "--name", "m", "--no-verify", "--out-dir", d])), 0);
    let good = dir.path().join("m.json");
    let o = macgen(&["verify", path(&good), "--mode", "random", "--vectors", "1000"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let nl = Netlist::from_json(&std::fs::read_to_string(&good).unwrap()).unwrap();
    // Pick a mutation that a 16-vector exhaustive run certainly exposes.
    let (bad, _) = (0..nl.gates.len())
        .map(|k| mutate(&nl, k))
        .map(|m| {
            let wrong = (0..256u128).find(|&x| simulate(&m, &[x & 15, x >> 4]).unwrap() != vec![(x & 15) * (x >> 4)]);
            (m, wrong)
        })
        .find(|(_, w)| w.is_some())
        .expect("some mutation changes the function");
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, bad.to_json().unwrap()).unwrap();
    let cx = dir.path().join("cx.json");
    let o = macgen(&["verify", path(&bad_path), "--counterexample", path(&cx)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let text = std::fs::read_to_string(&cx).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let hex = |s: &serde_json::Value| u128::from_str_radix(s.as_str().unwrap().trim_start_matches("0x"), 16).unwrap();
    let (a, b) = (hex(&v["inputs"]["a"]), hex(&v["inputs"]["b"]));
    assert_eq!(hex(&v["expected"]), a * b);
    assert_eq!(vec![hex(&v["observed"])], simulate(&bad, &[a, b]).unwrap());
    assert_ne!(hex(&v["observed"]), a * b);
}

#[test]
fn report_formats() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&macgen(&["gen-mult", "--width", "3", "--name", "m3", "--out-dir", d])), 0);
    let j = dir.path().join("m3.json");
    let o = macgen(&["report", path(&j)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["name"], "m3");
    assert!(v["area"]["total"].as_f64().unwrap() > 0.0);
    assert!(v["timing"]["max"].as_f64().unwrap() > 0.0);
    let o = macgen(&["report", path(&j), "--format", "csv"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("port,bit,arrival"));
    assert_eq!(csv.lines().count(), 1 + 6);

    // Doubling every delay doubles the reported arrival times.
    let cfg = dir.path().join("slow.toml");
    let mut c = macgen::config::Config::default();
    let i = &mut c.gate_delays.intrinsic;
    for x in [&mut i.and, &mut i.nand, &mut i.nor, &mut i.xor, &mut i.xnor, &mut i.oai21, &mut i.aoi21, &mut i.inv] {
        *x *= 2.0;
    }
    std::fs::write(&cfg, c.to_toml()).unwrap();
    let slow = macgen(&["--config", path(&cfg), "report", path(&j)]);
    assert_eq!(code(&slow), 0, "{}", stderr(&slow));
    let s: serde_json::Value = serde_json::from_slice(&slow.stdout).unwrap();
    assert_eq!(s["timing"]["max"].as_f64().unwrap(), 2.0 * v["timing"]["max"].as_f64().unwrap());
}

#[test]
fn sweep_and_fit_timing() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    let o = macgen(&["sweep", "--widths", "4,6", "--out-dir", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let o = macgen(&["fit-timing", "--random-per-width", "4", "--out-dir", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fdc_fit.json")).unwrap()).unwrap();
    assert!(fit["adders"].as_u64().unwrap() >= 50);
    assert!(fit["fdc"]["r2"].as_f64().unwrap() > fit["depth_only"]["r2"].as_f64().unwrap());
    assert!(dir.path().join("fdc_corpus.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&macgen(&["gen-mult", "--width", "1", "--out-dir", d])), 2);
    assert_eq!(code(&macgen(&["gen-mult", "--width", "4", "--strategy", "fastest", "--out-dir", d])), 2);
    assert_eq!(code(&macgen(&["gen-mac", "--width", "4", "--acc-width", "0", "--out-dir", d])), 2);
    assert_eq!(code(&macgen(&["gen-mult"])), 2);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[solver]\ntime_limit_s = -3\n").unwrap();
    assert_eq!(code(&macgen(&["--config", path(&cfg), "gen-mult", "--width", "4", "--out-dir", d])), 2);
    assert_eq!(code(&macgen(&["--config", "/nonexistent.toml", "gen-mult", "--width", "4", "--out-dir", d])), 2);

    let o = macgen(&["gen-mult", "--width", "4", "--solver", "external:/nonexistent/solver", "--out-dir", d]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_macgen"))
        .args(["gen-mult", "--width", "4", "--solver", "external", "--out-dir", d])
        .env_remove("MACGEN_SOLVER")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{}").unwrap();
    assert_ne!(code(&macgen(&["verify", path(&junk)])), 0);
}

#[cfg(unix)]
#[test]
fn external_solver_outcomes() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    let script = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        format!("external:{}", p.display())
    };
    // Writes no solution file: the model is reported infeasible.
    let silent = script("silent.sh", "exit 0");
    let o = macgen(&["gen-mult", "--width", "4", "--solver", &silent, "--out-dir", d]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let crash = script("crash.sh", "exit 7");
    let o = macgen(&["gen-mult", "--width", "4", "--solver", &crash, "--out-dir", d]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
