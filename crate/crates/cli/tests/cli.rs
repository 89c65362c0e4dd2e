use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bvpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvpc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> HashMap<String, String> {
    let out = bvpc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().last().unwrap();
    line.split_whitespace()
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn code(args: &[&str]) -> i32 {
    let out = bvpc(args);
    assert!(!out.stderr.is_empty());
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn geometry_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("sphere.ply");
    let bvpc_file = dir.path().join("sphere.bvpc");
    let dec = dir.path().join("dec.ply");
    let synth = ok(&["synth", "--shape", "sphere", "--depth", "6", "--out", p(&ply)]);
    assert_eq!(synth["command"], "synth");
    let voxels: usize = synth["voxels"].parse().unwrap();
    assert!((3000..=20000).contains(&voxels));

    let enc = ok(&["encode-geometry", "--in", p(&ply), "--out", p(&bvpc_file), "--depth", "6", "--prune", "fixed:4"]);
    assert_eq!(enc["bytes"].parse::<u64>().unwrap(), fs::metadata(&bvpc_file).unwrap().len());
    ok(&["decode-geometry", "--in", p(&bvpc_file), "--out", p(&dec)]);
    let ev = ok(&["evaluate", "--ref", p(&ply), "--test", p(&dec), "--metric", "d1", "--depth", "6"]);
    let psnr: f64 = ev["psnr"].parse().unwrap();
    assert!(psnr.is_finite() && psnr > 30.0, "{psnr}");

    // Unpruned coding is lossless.
    ok(&["encode-geometry", "--in", p(&ply), "--out", p(&bvpc_file), "--depth", "6"]);
    ok(&["decode-geometry", "--in", p(&bvpc_file), "--out", p(&dec), "--reconstruct", "raycast:2"]);
    let ev = ok(&["evaluate", "--ref", p(&ply), "--test", p(&dec), "--depth", "6"]);
    assert_eq!(ev["psnr"].parse::<f64>().unwrap(), 999.0);
}

#[test]
fn attribute_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("torus.ply");
    let bvat = dir.path().join("torus.bvat");
    let dec = dir.path().join("dec.ply");
    ok(&["synth", "--shape", "torus", "--depth", "5", "--field", "checker", "--out", p(&ply)]);
    for order in ["1", "2"] {
        let enc = ok(&["encode-attributes", "--in", p(&ply), "--out", p(&bvat), "--depth", "5", "--order", order]);
        assert_eq!(enc["order"], order);
        ok(&["decode-attributes", "--in", p(&bvat), "--geometry", p(&ply), "--out", p(&dec)]);
        let ev = ok(&["evaluate", "--ref", p(&ply), "--test", p(&dec), "--metric", "y", "--depth", "5"]);
        assert!(ev["psnr"].parse::<f64>().unwrap() > 30.0);
    }
}

#[test]
fn sweeps_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rd.csv");
    let s = ok(&["sweep", "--mode", "rd", "--depth", "5", "--prune", "fixed:3,rd:1,dist:2", "--out", p(&csv)]);
    assert_eq!(s["rows"], "3");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')), "{text}");

    let csv = dir.path().join("compaction.csv");
    ok(&["sweep", "--mode", "compaction", "--depth", "4", "--out", p(&csv)]);
    assert!(fs::read_to_string(&csv).unwrap().lines().count() > 2);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("in.ply");
    ok(&["synth", "--shape", "torus", "--depth", "5", "--out", p(&ply)]);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let g = dir.path().join(format!("{run}.bvpc"));
        let a = dir.path().join(format!("{run}.bvat"));
        ok(&["encode-geometry", "--in", p(&ply), "--out", p(&g), "--depth", "5", "--prune", "rd:20"]);
        ok(&["encode-attributes", "--in", p(&ply), "--out", p(&a), "--depth", "5"]);
        outputs.push((fs::read(&g).unwrap(), fs::read(&a).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("in.ply");
    ok(&["synth", "--shape", "plane", "--depth", "4", "--out", p(&ply)]);
    let out = p(&ply.with_extension("bvpc")).to_string();

    // Usage: unknown flag, bad rule, conflicting levels.
    assert_eq!(code(&["synth", "--bogus"]), 2);
    assert_eq!(code(&["encode-geometry", "--in", p(&ply), "--out", &out, "--depth", "4", "--prune", "warp:1"]), 2);
    assert_eq!(
        code(&["encode-geometry", "--in", p(&ply), "--out", &out, "--depth", "4", "--start-level", "3", "--prune", "fixed:2"]),
        2
    );
    // File errors.
    let missing = dir.path().join("missing.ply");
    assert_eq!(code(&["encode-geometry", "--in", p(&missing), "--out", &out, "--depth", "4"]), 3);
    // Corrupt input.
    let junk = dir.path().join("junk.bvpc");
    fs::write(&junk, b"not a stream").unwrap();
    assert_eq!(code(&["decode-geometry", "--in", p(&junk), "--out", p(&dir.path().join("x.ply"))]), 4);
    let bad_ply = dir.path().join("bad.ply");
    fs::write(&bad_ply, b"ply\nformat ascii 1.0\nelement vertex 2\nend_header\n").unwrap();
    assert_eq!(code(&["encode-geometry", "--in", p(&bad_ply), "--out", &out, "--depth", "4"]), 4);
}
