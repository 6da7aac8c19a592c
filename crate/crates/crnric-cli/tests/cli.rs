//! End-to-end tests of the `crnric` binary: each subcommand must agree with
//! calling the library directly, and output bytes must be deterministic.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crnric_core::compiler::compile_maxmin;
use crnric_core::parse::{parse_crn, parse_path, parse_state, serialize_crn};
use crnric_core::pwl::{parse_pwl, PwlFunction};
use crnric_core::reach::verify_path;

fn crnric(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crnric"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const MAX_PWL: &str = "\
arity: 2
component g1 = 1 x1
component g2 = 1 x2
maxmin: {1} {2}
";

const EX22_CRN: &str = "X -> C\nC + Y -> C + Z\n";

#[test]
fn compile_matches_library_and_writes_schedule() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("max.pwl"), MAX_PWL).unwrap();
    let out = crnric(
        &["compile", "--spec", "max.pwl", "--encoding", "dual", "-o", "max.crn"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");

    let text = fs::read_to_string(dir.path().join("max.crn")).unwrap();
    let file = parse_crn(&text).unwrap();
    let f = parse_pwl(MAX_PWL).unwrap();
    let PwlFunction::MaxMin(mm) = f else { panic!() };
    let compiled = compile_maxmin(&mm);
    // The CLI output is exactly the serialized library compilation.
    assert_eq!(
        serialize_crn(&file),
        serialize_crn(&parse_crn(&serialize_crn(&crnfile_of(&compiled))).unwrap())
    );
    let sched = fs::read_to_string(dir.path().join("max.schedule")).unwrap();
    assert_eq!(
        sched.lines().filter(|l| l.starts_with("reaction")).count(),
        compiled.schedule.len()
    );
}

fn crnfile_of(compiled: &crnric_core::compiler::CompiledCrc) -> crnric_core::parse::CrnFile {
    let crc = &compiled.crc;
    let name = |s: usize| crc.crn.species_name(s).to_string();
    crnric_core::parse::CrnFile {
        crn: crc.crn.clone(),
        inputs: crc.inputs.iter().map(|&s| name(s)).collect(),
        output: Some(match crc.output {
            crnric_core::Output::Direct(y) => (name(y), None),
            crnric_core::Output::DualRail { plus, minus } => {
                (name(plus), Some(name(minus)))
            }
        }),
        context: crc
            .initial_context
            .iter()
            .map(|(s, v)| (name(*s), v.clone()))
            .collect(),
    }
}

#[test]
fn reach_two_segment_example_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex.crn"), EX22_CRN).unwrap();
    fs::write(dir.path().join("a.st"), "X = 1\nY = 1\n").unwrap();
    fs::write(dir.path().join("b.st"), "C = 1\nZ = 1\n").unwrap();
    let out = crnric(
        &[
            "reach", "--crn", "ex.crn", "--from", "a.st", "--to", "b.st",
            "--witness", "w.path", "--expect", "reachable",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out), "reachable (2 segments)\n");

    let file = parse_crn(EX22_CRN).unwrap();
    let w = parse_path(
        &file.crn,
        &fs::read_to_string(dir.path().join("w.path")).unwrap(),
    )
    .unwrap();
    let end = verify_path(&file.crn, &w).unwrap();
    let target = parse_state(&file.crn, "C = 1\nZ = 1\n").unwrap();
    assert_eq!(end, target);
}

#[test]
fn reach_reflexive_and_expect_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex.crn"), EX22_CRN).unwrap();
    fs::write(dir.path().join("a.st"), "X = 1\nY = 1\n").unwrap();
    let out = crnric(
        &["reach", "--crn", "ex.crn", "--from", "a.st", "--to", "a.st"],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(stdout(&out), "reachable (0 segments)\n");

    // Same verdict but a wrong expectation: domain failure, exit 1.
    let out = crnric(
        &[
            "reach", "--crn", "ex.crn", "--from", "a.st", "--to", "a.st",
            "--expect", "unreachable",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn limit_state_example_is_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex.crn"), "X -> Y\nX + Y -> Z + Y\n").unwrap();
    fs::write(dir.path().join("a.st"), "X = 1\n").unwrap();
    fs::write(dir.path().join("b.st"), "Z = 1\n").unwrap();
    let out = crnric(
        &["reach", "--crn", "ex.crn", "--from", "a.st", "--to", "b.st"],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(stdout(&out), "unreachable\n");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown flag.
    let out = crnric(&["siphons", "--bogus", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    // Missing file.
    let out = crnric(&["siphons", "--crn", "missing.crn"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    // Malformed CRN file.
    fs::write(dir.path().join("bad.crn"), "this is not a reaction\n").unwrap();
    let out = crnric(&["siphons", "--crn", "bad.crn"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn siphons_stable_feedforward_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("ex.crn"),
        "output: Z\nX -> C\nC + Y -> C + Z\n",
    )
    .unwrap();
    let out = crnric(&["siphons", "--crn", "ex.crn"], dir.path());
    assert!(out.status.success());
    let file = parse_crn("output: Z\nX -> C\nC + Y -> C + Z\n").unwrap();
    let mut expected: Vec<String> = crnric_core::analysis::minimal_siphons(&file.crn)
        .iter()
        .map(|sip| {
            let names: Vec<&str> =
                sip.iter().map(|&s| file.crn.species_name(s)).collect();
            format!("{{{}}}", names.join(", "))
        })
        .collect();
    expected.sort();
    assert_eq!(stdout(&out), expected.join("\n") + "\n");

    fs::write(dir.path().join("s.st"), "Z = 1\n").unwrap();
    let out = crnric(&["stable", "--crc", "ex.crn", "--state", "s.st"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out), "output-stable\n");

    fs::write(dir.path().join("u.st"), "C = 1\nY = 1\n").unwrap();
    let out = crnric(&["stable", "--crc", "ex.crn", "--state", "u.st"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out), "not output-stable\n");

    let out = crnric(&["feedforward", "--crn", "ex.crn"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("feedforward:"), "{}", stdout(&out));

    fs::write(dir.path().join("loop.crn"), "X + X -> Y + Y\nY + X -> X + X\n").unwrap();
    let out = crnric(&["feedforward", "--crn", "loop.crn"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out), "not feedforward\n");
}

#[test]
fn simulate_writes_deterministic_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex.crn"), "X + X -> Y + Y\nY + X -> X + X\n").unwrap();
    fs::write(dir.path().join("x0.st"), "X = 1\n").unwrap();
    let args = [
        "simulate", "--crn", "ex.crn", "--state", "x0.st",
        "--rates", "1:1.0,2:1.0", "--horizon", "1000", "-o", "traj.csv",
        "--plot", "traj.svg",
    ];
    let out = crnric(&args, dir.path());
    assert!(out.status.success(), "{out:?}");
    let csv1 = fs::read(dir.path().join("traj.csv")).unwrap();
    let svg1 = fs::read(dir.path().join("traj.svg")).unwrap();
    let header = String::from_utf8(csv1.clone()).unwrap();
    assert!(header.starts_with("t,X,Y,flux_1,flux_2\n"));
    // Final X concentration approaches k2/(2k1+k2) = 1/3.
    let last = header.trim_end().lines().last().unwrap().to_string();
    let x_final: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((x_final - 1.0 / 3.0).abs() < 1e-6, "{x_final}");
    assert!(svg1.starts_with(b"<svg"));

    let out = crnric(&args, dir.path());
    assert!(out.status.success());
    assert_eq!(csv1, fs::read(dir.path().join("traj.csv")).unwrap());
    assert_eq!(svg1, fs::read(dir.path().join("traj.svg")).unwrap());
}

#[test]
fn blowup_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex.crn"), "2 X -> 3 X\n").unwrap();
    fs::write(dir.path().join("x0.st"), "X = 1\n").unwrap();
    let out = crnric(
        &["simulate", "--crn", "ex.crn", "--state", "x0.st", "-o", "t.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_compiled_max_passes_and_is_jobs_invariant() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("max.pwl"), MAX_PWL).unwrap();
    let out = crnric(
        &["compile", "--spec", "max.pwl", "-o", "max.crn"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");

    let base = [
        "verify", "--crc", "max.crn", "--spec", "max.pwl",
        "--trials", "6", "--prefix", "5", "--seed", "7",
    ];
    let mut args1: Vec<&str> = base.to_vec();
    args1.extend(["--jobs", "1", "--report", "r1.json"]);
    let out1 = crnric(&args1, dir.path());
    assert!(out1.status.success(), "{out1:?}");
    assert_eq!(stdout(&out1), "passed 6/6\n");

    let mut args3: Vec<&str> = base.to_vec();
    args3.extend(["--jobs", "3", "--report", "r3.json"]);
    let out3 = crnric(&args3, dir.path());
    assert!(out3.status.success(), "{out3:?}");
    assert_eq!(
        fs::read(dir.path().join("r1.json")).unwrap(),
        fs::read(dir.path().join("r3.json")).unwrap()
    );
}

#[test]
fn verify_reports_failures_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("max.pwl"), MAX_PWL).unwrap();
    // A CRC that computes min, verified against the max spec: must fail.
    fs::write(
        dir.path().join("wrong.pwl"),
        "arity: 2\ncomponent g1 = 1 x1\ncomponent g2 = 1 x2\nmaxmin: {1,2}\n",
    )
    .unwrap();
    let out = crnric(
        &["compile", "--spec", "wrong.pwl", "-o", "wrong.crn"],
        dir.path(),
    );
    assert!(out.status.success());
    let out = crnric(
        &[
            "verify", "--crc", "wrong.crn", "--spec", "max.pwl",
            "--trials", "4", "--prefix", "3", "--seed", "1",
            "--report", "bad.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bad.json")).unwrap())
            .unwrap();
    assert!(report["failed"].as_u64().unwrap() > 0);
}
