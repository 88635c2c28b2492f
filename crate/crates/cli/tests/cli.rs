use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn densify(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densify"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn densify")
}

fn scenario(dir: &Path) {
    fs::write(
        dir.join("tiny.toml"),
        "name = \"tiny\"\ntarget = \"ring\"\ncontroller = \"cadam\"\ngrid_width = 16\ngrid_height = 16\ntotal_steps = 300\n",
    )
    .unwrap();
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    scenario(tmp.path());
    let out = densify(&["run", "tiny.toml", "--out-dir", "o", "--deterministic"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = tmp.path().join("o");
    for f in ["metrics.csv", "events.jsonl", "report.txt", "render_final.pgm", "final.ply", "final.snapshot"] {
        assert!(o.join(f).is_file(), "missing {f}");
    }
    assert!(o.join("masks/round_0000.pgm").is_file());
    let csv = fs::read_to_string(o.join("metrics.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",schema"));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    scenario(tmp.path());
    for d in ["a", "b"] {
        let out = densify(
            &["run", "tiny.toml", "--out-dir", d, "--deterministic", "--seed", "5"],
            tmp.path(),
        );
        assert!(out.status.success());
    }
    for f in ["metrics.csv", "events.jsonl"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn overrides_and_flags_reach_the_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    scenario(tmp.path());
    let out = densify(
        &["run", "tiny.toml", "--steps", "250", "--grid", "8x12", "--set", "controller=\"baseline\""],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(tmp.path().join("out/report.txt")).unwrap();
    assert!(report.contains("controller\tbaseline"));
    assert!(report.contains("steps\t250"));
    assert!(report.contains("grid\t8x12"));
}

#[test]
fn compare_sweep_and_ablate_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    scenario(tmp.path());
    let cmp = densify(&["compare", "tiny.toml", "--out-dir", "c"], tmp.path());
    assert!(cmp.status.success(), "{}", String::from_utf8_lossy(&cmp.stderr));
    let report = fs::read_to_string(tmp.path().join("c/report.txt")).unwrap();
    assert!(report.contains("count_ratio"));
    assert!(tmp.path().join("c/joined.csv").is_file());

    let sw = densify(
        &["sweep", "tiny.toml", "--axis", "tau_Q", "--values", "0.5,0.9", "--out-dir", "s"],
        tmp.path(),
    );
    assert!(sw.status.success(), "{}", String::from_utf8_lossy(&sw.stderr));
    let table = fs::read_to_string(tmp.path().join("s/report.txt")).unwrap();
    assert_eq!(table.lines().count(), 3);

    let ab = densify(&["ablate", "tiny.toml", "--variants", "full,no_reset", "--out-dir", "a"], tmp.path());
    assert!(ab.status.success(), "{}", String::from_utf8_lossy(&ab.stderr));
    let growth = fs::read_to_string(tmp.path().join("a/growth.csv")).unwrap();
    assert!(growth.starts_with("step,full,no_reset\n"));
}

#[test]
fn replay_reads_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trace = String::from("{\"ids\":[4,9]}\n");
    for step in 1..=20 {
        trace.push_str(&format!("{{\"step\":{step},\"grads\":[[0.3,0.4],[1.0,-1.0]]}}\n"));
    }
    fs::write(tmp.path().join("t.jsonl"), trace).unwrap();
    let out = densify(&["replay", "t.jsonl", "--interval", "10"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = fs::read_to_string(tmp.path().join("out/replay.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    scenario(tmp.path());
    fs::write(tmp.path().join("bad.jsonl"), "{\"step\":1,\"grads\":[[0,0]]}\n{\"step\":1,\"grads\":[[0,0]]}\n").unwrap();
    let cases: [&[&str]; 4] = [
        &["run", "tiny.toml", "--set", "bogus=1"],
        &["export", "tiny.toml"],
        &["replay", "bad.jsonl"],
        &["run", "missing.toml"],
    ];
    for args in cases {
        let out = densify(args, tmp.path());
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty());
    }
    let out = densify(&["replay", "bad.jsonl"], tmp.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
