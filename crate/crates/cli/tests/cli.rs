use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fedids(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedids")).args(args).env_remove("FEDIDS_THREADS").output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("blobs.csv");
    let o = fedids(&["synth", "-o", s(&data), "--rows", "400", "--telnet-fraction", "0.3", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    data
}

#[test]
fn smoke_train_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("out");
    let o = fedids(&[
        "train",
        "--input",
        s(&data),
        "-o",
        s(&out),
        "--repetitions",
        "1",
        "--iterations",
        "1",
        "--epochs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report_rep01.json", "iterations.csv", "summary.csv", "effective_config.toml", "run.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let iters = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert!(iters.starts_with("experiment,iteration,accuracy,precision,recall,f1\n"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().last().unwrap().starts_with("Average,"));

    let r = fedids(&["report", s(&out)]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("Average"));

    // the echoed config reproduces the run
    let again = dir.path().join("again");
    let o = fedids(&["train", "--config", s(&out.join("effective_config.toml")), "-o", s(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let load = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join("report_rep01.json")).unwrap()).unwrap()
    };
    let (a, b) = (load(&out), load(&again));
    assert_eq!(a["report"], b["report"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
}

#[test]
fn attack_flags_embed_the_flip_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("out");
    let o = fedids(&[
        "train",
        "--input",
        s(&data),
        "-o",
        s(&out),
        "--repetitions",
        "2",
        "--iterations",
        "1",
        "--epochs",
        "1",
        "--attack.enabled",
        "--attack.port",
        "23",
        "--attack.client",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = std::fs::read_to_string(out.join("report_rep02.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["report"]["attack"]["changed"].as_u64().unwrap() > 0);
    assert_eq!(v["config"]["attack"]["enabled"], true);
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join("out");
        let o = Command::new(env!("CARGO_BIN_EXE_fedids"))
            .args([
                "train",
                "--input",
                s(&data),
                "-o",
                s(&out),
                "--repetitions",
                "2",
                "--iterations",
                "2",
                "--epochs",
                "2",
            ])
            .env("FEDIDS_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push(std::fs::read(out.join("report_rep02.json")).unwrap());
    }
    assert!(reports[0] == reports[1], "reports differ between 1 and 4 threads");
}

#[test]
fn invalid_config_lists_every_problem() {
    let o = fedids(&["train", "--n-clients", "0", "--epochs", "0", "--test-fraction", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for needle in ["n_clients", "epochs", "test_fraction", "input"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(fedids(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(fedids(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedids(&["train", "--input", s(&dir.path().join("nope.csv")), "-o", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn extract_matches_golden_and_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("csv");
    let o = fedids(&["extract", s(&fixture("mixed.pcap")), "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("mixed.csv")).unwrap(), std::fs::read(fixture("mixed.golden.csv")).unwrap());

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = fedids(&["extract", s(&empty), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("0 files"));

    let o = fedids(&["extract", s(&fixture("truncated_tcp.pcap")), s(&fixture("mixed.golden.csv")), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("truncated_tcp.pcap") && err.contains("packet 1"), "{err}");
    assert!(err.contains("not a pcap"), "{err}");
}

#[test]
fn assemble_reports_missing_group() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("csv");
    let o = fedids(&["extract", s(&fixture("mixed.pcap")), "-o", s(&csv)]);
    assert!(o.status.success());
    std::fs::rename(csv.join("mixed.csv"), csv.join("mirai_mal_CC_lock.csv")).unwrap();
    let out = dir.path().join("assembled.csv");
    let o = fedids(&["assemble", s(&csv), "-o", s(&out), "--rows-per-group", "2", "--require-group", "leg_lock"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("leg_lock"));
    let o = fedids(&["assemble", s(&csv), "-o", s(&out), "--rows-per-group", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
}
