//! Rebuilds `fixtures/mini/completions/` from `fixtures/mini/completions.jsonl`.
//!
//! Each line pairs an original solution with the completion to serve for it;
//! the file name is the sha256 of the prompt rendered with the default template.

use std::fs;
use std::path::Path;

use semiforge::generation::{build_generation_prompt, PromptTemplate, ReplayClient};

#[derive(serde::Deserialize)]
struct Entry {
    code: String,
    completion: String,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let out = root.join("completions");
    if out.exists() {
        fs::remove_dir_all(&out)?;
    }
    let client = ReplayClient::new(&out);
    let template = PromptTemplate::default();
    let text = fs::read_to_string(root.join("completions.jsonl"))?;
    let mut n = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let entry: Entry = serde_json::from_str(line)?;
        let prompt = build_generation_prompt(&entry.code, &template)?;
        client.record(&prompt, &entry.completion)?;
        n += 1;
    }
    println!("recorded {n} completions into {}", out.display());
    Ok(())
}
