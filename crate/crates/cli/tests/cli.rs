//! End-to-end CLI tests: exit codes, checkpoint flow, hand edits, resume,
//! and the eval subcommands.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plotloom"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn run_args(out: &Path, extra: &[&str]) -> Output {
    let novella = fixtures().join("novella.txt");
    let script = fixtures().join("novella.script.json");
    bin()
        .arg("run")
        .arg(&novella)
        .args(["--backend", "mock", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

#[test]
fn full_run_produces_artifact_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t1");
    let output = run_args(&out, &[]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    for artifact in [
        "chapters.json",
        "events.json",
        "arcs.json",
        "edges_raw.json",
        "plot_graph.json",
        "outline.json",
        "scenes/scene_000.json",
        "screenplay.json",
        "screenplay.fountain",
    ] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
}

#[test]
fn write_without_outline_is_exit_2_naming_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2");
    let script = fixtures().join("novella.script.json");
    let output = bin()
        .args(["write", "--backend", "mock", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("missing checkpoint: outline"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn unknown_traversal_is_exit_1_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_args(&dir.path().join("t3"), &["--traversal", "dfs2"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("traversal"));
}

#[test]
fn hand_edited_events_drop_dangling_edges_but_build_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t4");
    let script = fixtures().join("novella.script.json");

    // Run ingest + read to produce events.json.
    for stage in ["ingest", "read"] {
        let mut cmd = bin();
        cmd.arg(stage);
        if stage == "ingest" {
            cmd.arg(fixtures().join("novella.txt"));
        }
        let output = cmd
            .args(["--backend", "mock", "--script"])
            .arg(&script)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(output.status.success(), "stderr: {}", stderr(&output));
    }

    // Operator edit: delete the logbook event that a scripted edge cites.
    let events_path = out.join("events.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&events_path).unwrap()).unwrap();
    let events = doc["events"].as_array_mut().unwrap();
    let before = events.len();
    events.retain(|e| e["id"] != "c01-e01");
    assert_eq!(events.len(), before - 1);
    std::fs::write(&events_path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();

    let output = bin()
        .args(["graph", "--backend", "mock", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(
        stderr(&output).contains("1 unknown-id edges dropped"),
        "stderr: {}",
        stderr(&output)
    );
    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("plot_graph.json")).unwrap())
            .unwrap();
    assert_eq!(graph["acyclic"], serde_json::Value::Bool(true));
    assert_eq!(graph["events"].as_array().unwrap().len(), before - 1);
}

#[test]
fn resume_skips_completed_stages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t5");
    let first = run_args(&out, &[]);
    assert!(first.status.success());
    let second = run_args(&out, &["--resume"]);
    assert!(second.status.success(), "stderr: {}", stderr(&second));
    let log = stderr(&second);
    for stage in ["ingest", "read", "graph", "outline", "write"] {
        assert!(
            log.contains(&format!("{stage}: skipped")),
            "stage {stage} not skipped: {log}"
        );
    }
}

#[test]
fn fingerprint_mismatch_is_refused_then_forced() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t6");
    let script = fixtures().join("novella.script.json");
    let ingest = bin()
        .arg("ingest")
        .arg(fixtures().join("novella.txt"))
        .args(["--backend", "mock", "--seed", "1", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(ingest.status.success());

    let mismatched = bin()
        .args(["read", "--backend", "mock", "--seed", "2", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(mismatched.status.code(), Some(2));
    assert!(stderr(&mismatched).contains("--force"));

    let forced = bin()
        .args(["read", "--backend", "mock", "--seed", "2", "--force", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(forced.status.success(), "stderr: {}", stderr(&forced));
}

fn eval_corpus(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let make = |name: &str, word: &str| {
        let text: String = (0..800)
            .map(|i| format!("The {word} rendition of moment {i} settles across the page evenly."))
            .collect::<Vec<_>>()
            .join(" ");
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path
    };
    (
        make("novel.txt", "original"),
        make("alpha_system.txt", "lamplit"),
        make("beta_system.txt", "plainer"),
    )
}

/// Answer sheet for every questionnaire: mostly A, with the control answered
/// from the sealed key so the rater survives exclusion.
fn judge_script(
    out: &Path,
    favored: &str,
    path: &Path,
) -> Vec<serde_json::Value> {
    let questionnaires: Vec<serde_json::Value> = serde_json::from_str(
        &std::fs::read_to_string(out.join("questionnaires.json")).unwrap(),
    )
    .unwrap();
    let key: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("answer_key.json")).unwrap())
            .unwrap();
    let entries: Vec<serde_json::Value> = questionnaires
        .iter()
        .enumerate()
        .map(|(ordinal, q)| {
            let qid = q["id"].as_str().unwrap();
            let control_expected = key["entries"]
                .as_array()
                .unwrap()
                .iter()
                .find(|e| e["questionnaire_id"] == qid)
                .unwrap()["control_expected"]
                .clone();
            let answers: Vec<serde_json::Value> = q["questions"]
                .as_array()
                .unwrap()
                .iter()
                .map(|question| {
                    let id = question["id"].as_str().unwrap();
                    let answer = if question["control"].as_bool().unwrap() {
                        control_expected.clone()
                    } else {
                        serde_json::Value::String(favored.to_string())
                    };
                    serde_json::json!({"question_id": id, "answer": answer})
                })
                .collect();
            serde_json::json!({
                "tag": "judge",
                "ordinal": ordinal,
                "response": {"answers": answers},
            })
        })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    entries
}

#[test]
fn eval_build_judge_score_kappa_flow() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let (novel, doc_a, doc_b) = eval_corpus(dir.path());

    let build = bin()
        .args(["eval", "build", "--novel"])
        .arg(&novel)
        .arg("--doc-a")
        .arg(&doc_a)
        .arg("--doc-b")
        .arg(&doc_b)
        .args(["-n", "2", "--seed", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(build.status.success(), "stderr: {}", stderr(&build));
    assert!(out.join("questionnaires.json").exists());
    assert!(out.join("answer_key.json").exists());
    assert!(out.join("questionnaire_q000.md").exists());

    // Two raters answer through the scripted judge.
    for (rater, favored) in [("judge-1", "A"), ("judge-2", "B")] {
        let script = dir.path().join(format!("{rater}.script.json"));
        judge_script(&out, favored, &script);
        let judged = bin()
            .args(["eval", "judge", "--rater", rater, "--backend", "mock", "--script"])
            .arg(&script)
            .arg("--out")
            .arg(&out)
            .args(["--parallel", "2"])
            .output()
            .unwrap();
        assert!(judged.status.success(), "stderr: {}", stderr(&judged));
    }
    assert!(out.join("responses.csv").exists());

    let scored = bin()
        .args(["eval", "score", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(scored.status.success(), "stderr: {}", stderr(&scored));
    let table = stdout(&scored);
    assert!(table.contains("Overall"), "table: {table}");
    assert!(table.contains("alpha_system"), "table: {table}");
    assert!(out.join("win_rates.csv").exists());
    assert!(out.join("win_rates.md").exists());

    let kappa = bin()
        .args(["eval", "kappa", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(kappa.status.success(), "stderr: {}", stderr(&kappa));
    let matrix = stdout(&kappa);
    assert!(matrix.contains("judge-1"));
    assert!(matrix.contains("judge-2"));
    assert!(out.join("kappa.csv").exists());
}

#[test]
fn runs_are_byte_identical_under_mock() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    assert!(run_args(&out1, &[]).status.success());
    assert!(run_args(&out2, &[]).status.success());
    let fountain1 = std::fs::read(out1.join("screenplay.fountain")).unwrap();
    let fountain2 = std::fs::read(out2.join("screenplay.fountain")).unwrap();
    assert_eq!(fountain1, fountain2);
    let graph1 = std::fs::read(out1.join("plot_graph.json")).unwrap();
    let graph2 = std::fs::read(out2.join("plot_graph.json")).unwrap();
    assert_eq!(graph1, graph2);
}

#[test]
fn env_seeds_apply_and_flags_override_them() {
    let fingerprint_of = |out: &Path| -> String {
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("chapters.json")).unwrap())
                .unwrap();
        doc["fingerprint"].as_str().unwrap().to_string()
    };
    let ingest = |out: &Path, env_seed: Option<&str>, flag_seed: Option<&str>| {
        let mut cmd = bin();
        cmd.arg("ingest")
            .arg(fixtures().join("novella.txt"))
            .args(["--backend", "mock", "--script"])
            .arg(fixtures().join("novella.script.json"))
            .arg("--out")
            .arg(out);
        cmd.env_remove("PLOTLOOM_SEED");
        if let Some(seed) = env_seed {
            cmd.env("PLOTLOOM_SEED", seed);
        }
        if let Some(seed) = flag_seed {
            cmd.args(["--seed", seed]);
        }
        let output = cmd.output().unwrap();
        assert!(output.status.success(), "stderr: {}", stderr(&output));
    };

    let dir = tempfile::tempdir().unwrap();
    let (a, b, c, d) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
        dir.path().join("d"),
    );
    ingest(&a, Some("11"), None); // env applied
    ingest(&b, None, Some("11")); // same value via flag
    ingest(&c, Some("11"), Some("22")); // flag beats env
    ingest(&d, None, Some("22"));
    assert_eq!(fingerprint_of(&a), fingerprint_of(&b));
    assert_eq!(fingerprint_of(&c), fingerprint_of(&d));
    assert_ne!(fingerprint_of(&a), fingerprint_of(&c));
}

#[test]
fn help_exits_zero() {
    let output = bin().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).contains("plotloom"));
}
