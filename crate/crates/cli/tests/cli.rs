use std::fs;
use std::process::{Command, Output};

fn metades(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metades"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn run_then_tables_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.cfg"),
        "dataset = banana\nn = 240\nreplications = 2\npool_size = 8\nepochs = 20\nseed = 3\ndiagnostics = diag.jsonl\n",
    )
    .unwrap();

    let out = metades(
        &["run", "--config", "exp.cfg", "--out", "res.json"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("META-DES.H"));
    assert!(dir.path().join("res.json").exists());
    let diag = fs::read_to_string(dir.path().join("diag.jsonl")).unwrap();
    // 2 replications x 60 test queries x 11 methods.
    assert_eq!(diag.lines().count(), 2 * 60 * 11);

    let out = metades(
        &[
            "tables",
            "--in",
            "res.json",
            "--format",
            "md",
            "--ranks",
            "--wilcoxon",
            "META-DES.H",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let md = String::from_utf8_lossy(&out.stdout);
    assert!(md.starts_with("| Dataset | META-DES.S | META-DES.W | META-DES.H | KNORA-E"));
    assert!(md.contains("| Banana |"));
    assert!(md.contains("Friedman mean rank"));

    let out = metades(
        &[
            "tables", "--in", "res.json", "--format", "csv", "--out", "t.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    for test in ["friedman", "kruskal", "wilcoxon"] {
        let out = metades(&["stats", "--table", "t.csv", "--test", test], dir.path());
        assert!(
            out.status.success(),
            "{test}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn failures_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "replications = 0\n").unwrap();
    let out = metades(&["run", "--config", "bad.cfg"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("replications"));

    let out = metades(&["run", "--config", "missing.cfg"], dir.path());
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    fs::write(dir.path().join("t.csv"), "Dataset,A,B\nx,90,80\n").unwrap();
    let out = metades(
        &[
            "stats",
            "--table",
            "t.csv",
            "--test",
            "wilcoxon",
            "--reference",
            "Z",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}
