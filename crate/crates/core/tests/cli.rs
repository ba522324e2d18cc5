use std::path::Path;
use std::process::{Command, Output};

fn cmag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmag")).args(args).output().expect("spawn cmag")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate(dir: &Path, seed: &str) -> String {
    let out = dir.join("scene");
    let o = cmag(&[
        "simulate", "--agents", "3", "--types", "A,B,D", "--boxes", "5", "--seed", seed,
        "--azimuth-steps", "512", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.json").to_string_lossy().into_owned()
}

#[test]
fn gate_stats_reports_hand_checked_row() {
    let o = cmag(&["gate-stats", "--source-dist", "opv2v", "--iterations", "10000", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text
        .lines()
        .find(|l| l.trim_start().starts_with("2 "))
        .expect("row for count 2")
        .split_whitespace()
        .collect();
    assert_eq!(row[0], "2");
    assert_eq!(&row[5..], ["0.000000", "0.794548", "0.205452"]);
    assert!(text.contains("samples 10000"));
    assert!(text.contains("contracted yes"));
}

#[test]
fn cfc_check_without_augmentation_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let m = simulate(tmp.path(), "11");
    let o = cmag(&["cfc-check", "--manifest", &m, "--no-aug"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.0");
}

#[test]
fn augment_is_deterministic_and_reloadable() {
    let tmp = tempfile::tempdir().unwrap();
    let m = simulate(tmp.path(), "12");
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["augment", "--manifest", &m, "--source-dist", "v2xset", "--seed", "5"];
        let out_s = out.to_string_lossy().into_owned();
        args.extend(["--out", &out_s]);
        args.extend(extra);
        let o = cmag(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", &[]);
    let b = run("b", &["--sequential"]);
    for f in ["manifest.json", "step.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let (_, group) = cmag::io::load_group(a.join("manifest.json")).unwrap();
    assert!((2..=4).contains(&group.len()));
    assert_eq!(group.agents.iter().filter(|x| x.is_ego).count(), 1);
}

#[test]
fn project_writes_a_16_bit_pgm() {
    let tmp = tempfile::tempdir().unwrap();
    let m = simulate(tmp.path(), "13");
    let cloud = Path::new(&m).parent().unwrap().join("clouds").join("000_agent-0.pcv");
    let pgm = tmp.path().join("img.pgm");
    let o = cmag(&[
        "project", "--cloud", cloud.to_str().unwrap(), "--type", "A", "--width", "512",
        "--out", pgm.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&pgm).unwrap();
    let header = b"P5\n512 64\n65535\n";
    assert!(bytes.starts_with(header));
    assert_eq!(bytes.len(), header.len() + 512 * 64 * 2);
}

#[test]
fn errors_map_to_exit_codes() {
    let usage = cmag(&["gate-stats", "--source-dist", "nope"]);
    assert_eq!(usage.status.code(), Some(1));
    let io = cmag(&["cfc-check", "--manifest", "/nonexistent/manifest.json", "--no-aug"]);
    assert_eq!(io.status.code(), Some(2));
}
