//! End-to-end runs of the `qtree` binary: output lines and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_qtree");
const FLEXIBLE_FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/tests/fixtures/flexible_quorum_conflict.sched"
);

fn qtree(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn single_run_passes_and_reports_its_digest() {
    let out = qtree(&["run", "--protocol", "paxos", "--seed", "42"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("seed=42 linpoints="), "{first}");
    assert!(first.ends_with("result=pass"), "{first}");
    assert_eq!(
        first
            .split("digest=")
            .nth(1)
            .unwrap()
            .split(' ')
            .next()
            .unwrap()
            .len(),
        64
    );
}

#[test]
fn seed_range_is_inclusive_and_writes_one_trace_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let out = qtree(&[
        "run",
        "--protocol",
        "pbft",
        "--seeds",
        "1..10",
        "--drop",
        "0.1",
        "--trace",
        traces.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).ends_with("runs=10 passed=10 failed=0\n"));
    assert_eq!(fs::read_dir(&traces).unwrap().count(), 10);

    let check = qtree(&["check", traces.join("seed-3.trc").to_str().unwrap()]);
    assert_eq!(code(&check), 0, "{}", stdout(&check));
    assert!(stdout(&check).ends_with("result=pass\n"));
}

#[test]
fn repeated_runs_write_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.trc"), dir.path().join("b.trc")];
    for path in &paths {
        let out = qtree(&[
            "run",
            "--protocol",
            "hotstuff",
            "--seed",
            "9",
            "--byzantine",
            "2",
            "--drop",
            "0.1",
            "--trace",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
}

#[test]
fn flexible_quorum_schedule_fails_with_a_conflict() {
    let out = qtree(&[
        "run",
        "--protocol",
        "multipaxos",
        "--n",
        "4",
        "--q1",
        "1",
        "--q2",
        "2",
        "--schedule",
        FLEXIBLE_FIXTURE,
    ]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("declarative=reject:P3-conflict:2"), "{text}");
    assert!(
        text.contains("safety: agreement violated at sn=0"),
        "{text}"
    );
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn label_files_are_checked_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "good.txt",
        "# two adds and a commit\nsn=0 op=add r=1 v=a rp=0 res=OK\nsn=0 op=commit r=1 res=OK\n",
    );
    let out = qtree(&["check", &good]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        stdout(&out),
        "instance=0 declarative=accept replay=accept concordant=true\nresult=pass\n"
    );

    let dup = write(
        dir.path(),
        "dup.txt",
        "sn=0 op=add r=1 v=a rp=0 res=OK\nsn=0 op=add r=1 v=a rp=0 res=OK\n",
    );
    let out = qtree(&["check", &dup]);
    assert_eq!(code(&out), 1);
    assert!(
        stdout(&out).contains("declarative=reject:P1-dup-add:1"),
        "{}",
        stdout(&out)
    );

    let empty = write(dir.path(), "empty.txt", "");
    let out = qtree(&["check", &empty]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("instance=0 declarative=accept"));
}

#[test]
fn malformed_label_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.txt",
        "sn=0 op=commit r=1 res=OK\nsn=0 op=frobnicate\n",
    );
    let out = qtree(&["check", &bad]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn enumerate_reports_no_discordance_and_refuses_huge_bounds() {
    let out = qtree(&["enumerate", "--max-len", "2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.ends_with("discordant=0")), "{text}");

    let out = qtree(&["enumerate", "--max-len", "0", "--mode", "smr"]);
    assert_eq!(
        stdout(&out),
        "mode=smr checked=1 accepted=1 rejected=0 discordant=0\n"
    );

    let out = qtree(&["enumerate", "--max-len", "9"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing to enumerate"));
}

#[test]
fn every_figure_matches() {
    let out = qtree(&["figure", "all"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "fig2: match\nfig3: match\nfig4: match\n");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&qtree(&["run", "--protocol", "zab"])), 2);
    assert_eq!(code(&qtree(&["run", "--bogus"])), 2);
    assert_eq!(code(&qtree(&["figure", "fig9"])), 2);
    assert_eq!(code(&qtree(&["run", "--seeds", "5"])), 2);
    assert_eq!(
        code(&qtree(&["run", "--protocol", "paxos", "--byzantine", "1"])),
        2
    );
}
