use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn metalake(lake: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metalake"))
        .arg("--lake")
        .arg(lake)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_file() {
            std::fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}

fn prepared(fixture: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join(fixture), dir.path());
    for stage in ["ingest", "profile", "describe", "index"] {
        ok(&metalake(dir.path(), &[stage]));
    }
    dir
}

/// synth, ingest, profile, describe, index, eval with the scripted policy.
fn bank_pipeline(root: &Path) -> PathBuf {
    let lake = root.join("lake");
    let clean = fixtures().join("bank_clean");
    ok(&metalake(
        &lake,
        &[
            "synth",
            "--clean",
            clean.to_str().unwrap(),
            "--out",
            lake.to_str().unwrap(),
        ],
    ));
    for stage in ["ingest", "profile", "describe", "index"] {
        ok(&metalake(&lake, &[stage]));
    }
    let out_dir = root.join("eval");
    let policy = format!("scripted:{}", fixtures().join("bank_policy.json").display());
    ok(&metalake(
        &lake,
        &[
            "eval",
            "--tasks",
            fixtures().join("bank_tasks.jsonl").to_str().unwrap(),
            "--mode",
            "lineage",
            "--policy",
            &policy,
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
    ));
    out_dir
}

#[test]
fn full_pipeline_matches_golden_summary() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = bank_pipeline(a.path());
    let out_b = bank_pipeline(b.path());
    let golden = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/bank_summary.json"),
    )
    .unwrap();
    let summary = std::fs::read_to_string(out_a.join("summary.json")).unwrap();
    assert_eq!(summary, golden);
    for f in ["summary.json", "scores.csv", "selections.jsonl"] {
        assert_eq!(
            std::fs::read(out_a.join(f)).unwrap(),
            std::fs::read(out_b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let scores = std::fs::read_to_string(out_a.join("scores.csv")).unwrap();
    assert!(scores.starts_with("task_id,recall,precision,f1,steps\n"));
    assert!(scores.contains("t1,1.0000,1.0000,1.0000,2"));
}

#[test]
fn missing_stage_names_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("identity_theft"), dir.path());

    let out = metalake(dir.path(), &["profile"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metalake ingest"));

    ok(&metalake(dir.path(), &["ingest"]));
    let out = metalake(dir.path(), &["index"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metalake describe"));

    ok(&metalake(dir.path(), &["profile"]));
    let out = metalake(dir.path(), &["index"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metalake describe"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = prepared("identity_theft");
    let out = metalake(
        dir.path(),
        &["select", "--task", "anything", "--policy", "llm"],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = metalake(
        dir.path(),
        &["--provider", "scripted:/no/such/file", "describe"],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = metalake(dir.path(), &["search", "--query", "x", "--kind", "all"]);
    assert_eq!(out.status.code(), Some(2));

    let out = metalake(dir.path(), &["ingest", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    let out = metalake(
        dir.path(),
        &[
            "select",
            "--task",
            "x",
            "--policy",
            "scripted:/no/such/file",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = Command::new(env!("CARGO_BIN_EXE_metalake"))
        .args(["eval", "--help"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--tasks",
        "--mode",
        "--policy",
        "--denominator",
        "--ablation",
        "--budget",
        "--seed",
        "--jobs",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn domain_error_exits_one() {
    let dir = prepared("identity_theft");
    let out = metalake(
        dir.path(),
        &[
            "tool",
            "profile",
            "--table",
            "No_Such_Table",
            "--column",
            "x",
        ],
    );
    assert_eq!(out.status.code(), Some(1));

    let target = tempfile::tempdir().unwrap();
    std::fs::write(target.path().join("keep.txt"), "x").unwrap();
    let clean = fixtures().join("bank_clean");
    let out = metalake(
        target.path(),
        &[
            "synth",
            "--clean",
            clean.to_str().unwrap(),
            "--out",
            target.path().to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tool_prints_json_report() {
    let dir = prepared("identity_theft");
    let stdout = ok(&metalake(
        dir.path(),
        &[
            "tool",
            "find",
            "--table",
            "State_Identity_Theft_Reports",
            "--value",
            "pr",
            "--column",
            "State",
        ],
    ));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["found"], true);

    let stdout = ok(&metalake(
        dir.path(),
        &[
            "--json",
            "tool",
            "join",
            "--left",
            "State_Identity_Theft_Reports.State",
            "--right",
            "State_Fraud_and_Other_Reports.State",
        ],
    ));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["containment_lr"], 1.0);
}

#[test]
fn search_session_file_dedups_across_calls() {
    let dir = prepared("identity_theft");
    let session = dir.path().join("session.json");
    let args = [
        "search",
        "--query",
        "state identity theft reports",
        "--k",
        "2",
        "--session",
        session.to_str().unwrap(),
    ];
    let first = ok(&metalake(dir.path(), &args));
    assert!(!first.contains("Appeared"));
    let second = ok(&metalake(dir.path(), &args));
    assert!(second.contains("(Appeared 2 times)"));
    assert!(second.contains("NO NEW TABLES"));
}

#[test]
fn scripted_select_writes_result() {
    let dir = prepared("identity_theft");
    let script = dir.path().join("policy.txt");
    std::fs::write(
        &script,
        "# replay\n\
         ACTION search query=\"state identity theft reports\"\n\
         ACTION finalize tables=[State_Identity_Theft_Reports,State_Fraud_and_Other_Reports] justification=\"state level tables\"\n",
    )
    .unwrap();
    let out_file = dir.path().join("result.json");
    let policy = format!("scripted:{}", script.display());
    let args = [
        "--json",
        "select",
        "--task",
        "Which states report the most identity theft and fraud?",
        "--policy",
        policy.as_str(),
        "--out",
        out_file.to_str().unwrap(),
    ];
    let stdout = ok(&metalake(dir.path(), &args));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["steps"], 2);
    assert_eq!(v["terminated_by"], "FINALIZE");
    assert_eq!(v["tables"].as_array().unwrap().len(), 2);
    let first = std::fs::read(&out_file).unwrap();
    ok(&metalake(dir.path(), &args));
    assert_eq!(std::fs::read(&out_file).unwrap(), first);
}

#[test]
fn reference_eval_writes_recall_table() {
    let dir = prepared("identity_theft");
    let tasks = dir.path().join("tasks.jsonl");
    std::fs::write(
        &tasks,
        "{\"task_id\":\"a\",\"question\":\"state identity theft reports\",\"ref_tables\":[\"State_Identity_Theft_Reports\"]}\n\
         {\"task_id\":\"b\",\"question\":\"airline delays\",\"ref_tables\":[\"Airline_On_Time_Performance\"]}\n",
    )
    .unwrap();
    let out_dir = dir.path().join("eval");
    let stdout = ok(&metalake(
        dir.path(),
        &[
            "--json",
            "eval",
            "--tasks",
            tasks.to_str().unwrap(),
            "--mode",
            "reference",
            "--k",
            "1",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
    ));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["tasks_scored"], 2);
    let recall = std::fs::read_to_string(out_dir.join("recall_at_k.csv")).unwrap();
    assert_eq!(recall.lines().count(), 1 + 3 * 3);
}

#[test]
fn lineage_eval_requires_synth_output() {
    let dir = prepared("identity_theft");
    let tasks = dir.path().join("tasks.jsonl");
    std::fs::write(
        &tasks,
        "{\"task_id\":\"a\",\"question\":\"q\",\"gold_sql\":\"SELECT * FROM x\"}\n",
    )
    .unwrap();
    let out = metalake(
        dir.path(),
        &[
            "eval",
            "--tasks",
            tasks.to_str().unwrap(),
            "--mode",
            "lineage",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metalake synth"));
}
