use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semiforge::generation::{build_generation_prompt, PromptTemplate, ReplayClient};

fn semiforge(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_semiforge"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap();
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semiforge(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CODE: &str = "print(sum(map(int, input().split())))";
const COMPLETION: &str = "### Instruction\nPrint the sum of the integers on the input line.\n\n\
### Refined Code\n```python\nprint(sum(int(t) for t in input().split()))\n```\n\n\
### Answer Type\nStandard Input\n\n\
### Test Case Inputs\n#### Input\n1 2\n#### Input\n5\n#### Input\nx\n";

fn setup(dir: &Path) {
    let problem = dir.join("apps/sum");
    fs::create_dir_all(&problem).unwrap();
    fs::write(problem.join("question.txt"), "Sum the numbers.").unwrap();
    fs::write(
        problem.join("solutions.json"),
        serde_json::to_string(&[CODE]).unwrap(),
    )
    .unwrap();
    let prompt = build_generation_prompt(CODE, &PromptTemplate::default()).unwrap();
    ReplayClient::new(dir.join("replay"))
        .record(&prompt, COMPLETION)
        .unwrap();
    fs::write(
        dir.join("semiforge.toml"),
        "corpus_path = \"apps\"\nwork_dir = \"work\"\noutput_path = \"out/data.jsonl\"\nworkers = 1\n\n[client]\nreplay_dir = \"replay\"\n",
    )
    .unwrap();
}

#[test]
fn stage_commands_chain_into_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    for cmd in ["ingest", "generate", "validate", "rank", "emit"] {
        ok(d, &["--config", "semiforge.toml", cmd]);
    }
    let data = fs::read_to_string(d.join("out/data.jsonl")).unwrap();
    assert_eq!(data.lines().count(), 1);
    let record: serde_json::Value = serde_json::from_str(data.lines().next().unwrap()).unwrap();
    assert_eq!(record["difficulty"], 2);
    assert_eq!(record["source"], "semi");

    let text = ok(d, &["--config", "semiforge.toml", "report"]);
    assert!(
        text.contains("after_dedup") && text.contains("100.0%"),
        "{text}"
    );
    let json = ok(d, &["--config", "semiforge.toml", "report", "--json"]);
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed["stages"][4]["count"], 1);
}

#[test]
fn run_with_overrides_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let report = ok(
        d,
        &[
            "-c",
            "semiforge.toml",
            "run",
            "--order",
            "semi-unranked",
            "--seed",
            "9",
        ],
    );
    assert!(report.contains("loaded_codes"), "{report}");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/data.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["order"], "semi-unranked");
    assert_eq!(meta["seed"], 9);

    let first = fs::read(d.join("out/data.jsonl")).unwrap();
    ok(
        d,
        &["-c", "semiforge.toml", "run", "--resume-from", "validate"],
    );
    assert_eq!(fs::read(d.join("out/data.jsonl")).unwrap(), first);
}

#[test]
fn missing_replay_fixture_fails_with_problem_id() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    fs::remove_dir_all(d.join("replay")).unwrap();
    fs::create_dir(d.join("replay")).unwrap();
    let out = semiforge(d, &["-c", "semiforge.toml", "run"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("generate") && err.contains("sum"), "{err}");
}

#[test]
fn show_config_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let text = ok(
        d,
        &[
            "-c",
            "semiforge.toml",
            "show-config",
            "--scale",
            "7",
            "--interpreter",
            "python3.10",
        ],
    );
    let value: toml::Value = toml::from_str(&text).unwrap();
    assert_eq!(value["scale"].as_integer(), Some(7));
    assert_eq!(value["interpreter"].as_str(), Some("python3.10"));
    assert_eq!(value["workers"].as_integer(), Some(1));

    fs::write(d.join("bad.toml"), "colour = \"blue\"\n").unwrap();
    let out = semiforge(d, &["-c", "bad.toml", "show-config"]);
    assert!(!out.status.success());
}

#[test]
fn eval_reports_pass_at_k() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("problems.jsonl"),
        concat!(
            r#"{"problem_id": "inc", "answer_type": {"kind": "call_based", "function_name": "inc"}, "test_cases": [{"input": "(1,)", "expected_output": "2"}, {"input": "(-1,)", "expected_output": "0"}]}"#,
            "\n",
        ),
    )
    .unwrap();
    let good = "def inc(x):\\n    return x + 1";
    let bad = "def inc(x):\\n    return x";
    let lines: Vec<String> = [good, bad, good, bad]
        .iter()
        .map(|c| format!(r#"{{"problem_id": "inc", "candidate_code": "{c}"}}"#))
        .collect();
    fs::write(d.join("candidates.jsonl"), lines.join("\n") + "\n").unwrap();
    let text = ok(
        d,
        &[
            "eval",
            "--problems",
            "problems.jsonl",
            "--candidates",
            "candidates.jsonl",
            "--k",
            "1,2",
        ],
    );
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["pass_at_k"]["1"], 0.5);
    // 1 - C(2,2)/C(4,2)
    let p2 = report["pass_at_k"]["2"].as_f64().unwrap();
    assert!((p2 - 5.0 / 6.0).abs() < 1e-12, "{p2}");
}
