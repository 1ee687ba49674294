//! Natural-instruct corpus ingestion and preprocessing.
//!
//! Three on-disk layouts are understood:
//!
//! * `apps`: a directory of per-problem folders, each with `question.txt`,
//!   `solutions.json` (array of code strings) and an optional `metadata.json`
//!   carrying `{"special_judge": bool}`.
//! * `codecontest`: newline-delimited JSON, one problem per line, with
//!   `{"name", "description", "solutions": [{"language", "code", "correct"}]}`.
//! * `generic`: newline-delimited JSON `{"problem_id", "description", "solutions": [...]}`.
//!
//! Preprocessing is a chain of pure list transformations:
//! [`filter_problems`] → [`merge_duplicate_problems`] → [`cap_solutions`].

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

/// Language the corpus is executed in. Solutions tagged with anything else are dropped.
pub const CORPUS_LANGUAGE: &str = "python3";

pub const DEFAULT_MAX_TOKENS: usize = 1000;
pub const DEFAULT_SOLUTION_CAP: usize = 25;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus path {path}: {source}")]
    UnreadablePath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown corpus format `{0}` (expected apps, codecontest or generic)")]
    UnknownFormat(String),
    #[error("corpus at {0} contains no usable problems")]
    EmptyCorpus(PathBuf),
    #[error("solution cap must be at least 1, got {0}")]
    InvalidCap(usize),
    #[error("malformed id map {path}: {reason}")]
    BadIdMap { path: PathBuf, reason: String },
    #[error("corpus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Apps,
    Codecontest,
    Generic,
}

impl std::str::FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "apps" => Ok(Self::Apps),
            "codecontest" | "codecontests" | "code_contest" => Ok(Self::Codecontest),
            "generic" => Ok(Self::Generic),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    Apps,
    Codecontest,
    Other(String),
}

/// How `Solution::token_count` is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCounting {
    /// Whitespace-delimited tokens.
    #[default]
    Whitespace,
    /// `ceil(bytes / 4)`, a tokenizer-free proxy for subword tokens.
    BytesProxy,
}

impl TokenCounting {
    pub fn count(self, code: &str) -> usize {
        match self {
            Self::Whitespace => code.split_whitespace().count(),
            Self::BytesProxy => code.len().div_ceil(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub code: String,
    pub token_count: usize,
    #[serde(default)]
    pub origin: String,
}

impl Solution {
    pub fn new(code: impl Into<String>, origin: impl Into<String>) -> Self {
        Self::with_counting(code, origin, TokenCounting::Whitespace)
    }

    pub fn with_counting(
        code: impl Into<String>,
        origin: impl Into<String>,
        counting: TokenCounting,
    ) -> Self {
        let code = code.into();
        Self {
            token_count: counting.count(&code),
            code,
            origin: origin.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub problem_id: String,
    pub description: String,
    pub source: ProblemSource,
    /// Source order is preserved; [`cap_solutions`] keeps a prefix.
    pub solutions: Vec<Solution>,
    #[serde(default)]
    pub special_judge: bool,
}

impl Problem {
    pub fn solution_count(problems: &[Problem]) -> usize {
        problems.iter().map(|p| p.solutions.len()).sum()
    }
}

/// Maps raw language tags (strings or CodeContests integer enums) onto a canonical name.
fn canonical_language(tag: &serde_json::Value) -> Option<String> {
    match tag {
        serde_json::Value::Number(n) => match n.as_u64()? {
            1 => Some("python2".into()),
            2 => Some("cpp".into()),
            3 => Some(CORPUS_LANGUAGE.into()),
            4 => Some("java".into()),
            _ => None,
        },
        serde_json::Value::String(s) => {
            let s = s.trim().to_ascii_lowercase();
            Some(match s.as_str() {
                "python" | "python3" | "py" | "py3" | "python 3" => CORPUS_LANGUAGE.into(),
                _ => s,
            })
        }
        _ => None,
    }
}

/// Loads a corpus in the given layout. Malformed records are logged and skipped.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    counting: TokenCounting,
) -> Result<Vec<Problem>, CorpusError> {
    let meta = fs::metadata(path).map_err(|source| CorpusError::UnreadablePath {
        path: path.to_path_buf(),
        source,
    })?;
    let problems = match format {
        CorpusFormat::Apps => {
            if !meta.is_dir() {
                return Err(CorpusError::UnknownFormat(format!(
                    "apps corpus must be a directory: {}",
                    path.display()
                )));
            }
            load_apps(path, counting)?
        }
        CorpusFormat::Codecontest | CorpusFormat::Generic => {
            if !meta.is_file() {
                return Err(CorpusError::UnknownFormat(format!(
                    "{format:?} corpus must be a JSONL file: {}",
                    path.display()
                )));
            }
            load_jsonl(path, format, counting)?
        }
    };
    if problems.is_empty() {
        return Err(CorpusError::EmptyCorpus(path.to_path_buf()));
    }
    Ok(problems)
}

#[derive(Deserialize)]
struct AppsMetadata {
    #[serde(default)]
    special_judge: bool,
}

fn load_apps(dir: &Path, counting: TokenCounting) -> Result<Vec<Problem>, CorpusError> {
    let unreadable = |source| CorpusError::UnreadablePath {
        path: dir.to_path_buf(),
        source,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(unreadable)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    // read_dir order is platform-dependent
    entries.sort();

    let mut problems = Vec::with_capacity(entries.len());
    for folder in entries {
        let id = folder
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match load_apps_problem(&folder, &id, counting) {
            Ok(p) => problems.push(p),
            Err(reason) => warn!("skipping APPS problem {id}: {reason}"),
        }
    }
    Ok(problems)
}

fn load_apps_problem(folder: &Path, id: &str, counting: TokenCounting) -> Result<Problem, String> {
    let description = fs::read_to_string(folder.join("question.txt"))
        .map_err(|e| format!("question.txt: {e}"))?;
    let raw = fs::read_to_string(folder.join("solutions.json"))
        .map_err(|e| format!("solutions.json: {e}"))?;
    let codes: Vec<String> =
        serde_json::from_str(&raw).map_err(|e| format!("solutions.json: {e}"))?;
    let special_judge = match fs::read_to_string(folder.join("metadata.json")) {
        Ok(text) => {
            serde_json::from_str::<AppsMetadata>(&text)
                .map_err(|e| format!("metadata.json: {e}"))?
                .special_judge
        }
        Err(_) => false,
    };
    if codes.is_empty() {
        return Err("no solutions".into());
    }
    let solutions = codes
        .into_iter()
        .enumerate()
        .map(|(i, code)| Solution::with_counting(code, format!("{id}/{i}"), counting))
        .collect();
    Ok(Problem {
        problem_id: id.to_string(),
        description,
        source: ProblemSource::Apps,
        solutions,
        special_judge,
    })
}

#[derive(Deserialize)]
struct CodeContestRecord {
    name: String,
    description: String,
    solutions: Vec<CodeContestSolution>,
    #[serde(default)]
    special_judge: bool,
}

#[derive(Deserialize)]
struct CodeContestSolution {
    language: serde_json::Value,
    code: String,
    correct: bool,
    #[serde(default)]
    origin: Option<String>,
}

#[derive(Deserialize)]
struct GenericRecord {
    problem_id: String,
    description: String,
    solutions: Vec<String>,
    #[serde(default)]
    special_judge: bool,
    #[serde(default)]
    source: Option<String>,
}

fn load_jsonl(
    path: &Path,
    format: CorpusFormat,
    counting: TokenCounting,
) -> Result<Vec<Problem>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::UnreadablePath {
        path: path.to_path_buf(),
        source,
    })?;
    let mut problems = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            CorpusFormat::Codecontest => parse_codecontest(&line, counting),
            _ => parse_generic(&line, counting),
        };
        match parsed {
            Ok(Some(p)) => problems.push(p),
            Ok(None) => warn!(
                "line {}: no correct {CORPUS_LANGUAGE} solutions",
                lineno + 1
            ),
            Err(e) => warn!("line {}: skipping malformed record: {e}", lineno + 1),
        }
    }
    Ok(problems)
}

fn parse_codecontest(line: &str, counting: TokenCounting) -> serde_json::Result<Option<Problem>> {
    let rec: CodeContestRecord = serde_json::from_str(line)?;
    let solutions: Vec<Solution> = rec
        .solutions
        .into_iter()
        .enumerate()
        .filter(|(_, s)| {
            s.correct && canonical_language(&s.language).as_deref() == Some(CORPUS_LANGUAGE)
        })
        .map(|(i, s)| {
            let origin = s.origin.unwrap_or_else(|| format!("{}/{i}", rec.name));
            Solution::with_counting(s.code, origin, counting)
        })
        .collect();
    if solutions.is_empty() {
        return Ok(None);
    }
    Ok(Some(Problem {
        problem_id: rec.name,
        description: rec.description,
        source: ProblemSource::Codecontest,
        solutions,
        special_judge: rec.special_judge,
    }))
}

fn parse_generic(line: &str, counting: TokenCounting) -> serde_json::Result<Option<Problem>> {
    let rec: GenericRecord = serde_json::from_str(line)?;
    if rec.solutions.is_empty() {
        return Ok(None);
    }
    let id = rec.problem_id;
    let solutions = rec
        .solutions
        .into_iter()
        .enumerate()
        .map(|(i, code)| Solution::with_counting(code, format!("{id}/{i}"), counting))
        .collect();
    Ok(Some(Problem {
        problem_id: id,
        description: rec.description,
        source: ProblemSource::Other(rec.source.unwrap_or_else(|| "generic".into())),
        solutions,
        special_judge: rec.special_judge,
    }))
}

/// Drops special-judge problems, then solutions longer than `max_tokens`,
/// then problems left without solutions.
pub fn filter_problems(problems: Vec<Problem>, max_tokens: usize) -> Vec<Problem> {
    problems
        .into_iter()
        .filter(|p| !p.special_judge)
        .filter_map(|mut p| {
            p.solutions.retain(|s| s.token_count <= max_tokens);
            (!p.solutions.is_empty()).then_some(p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeKey {
    /// Trimmed description with internal whitespace runs collapsed to one space.
    NormalizedDescription,
    /// `problem_id -> group key`; ids absent from the map are their own group.
    ExplicitIdMap(HashMap<String, String>),
}

impl MergeKey {
    /// Reads a JSON object `{"problem_id": "group", ...}`.
    pub fn load_id_map(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::UnreadablePath {
            path: path.to_path_buf(),
            source,
        })?;
        let map = serde_json::from_str(&text).map_err(|e| CorpusError::BadIdMap {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(Self::ExplicitIdMap(map))
    }

    fn key_for(&self, problem: &Problem) -> String {
        match self {
            Self::NormalizedDescription => normalize_description(&problem.description),
            Self::ExplicitIdMap(map) => map
                .get(&problem.problem_id)
                .cloned()
                .unwrap_or_else(|| format!("\0id:{}", problem.problem_id)),
        }
    }
}

pub fn normalize_description(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Collapses problems sharing a merge key. The first occurrence keeps its id,
/// description and position; later solutions are appended in order.
pub fn merge_duplicate_problems(problems: Vec<Problem>, key: &MergeKey) -> Vec<Problem> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut merged: Vec<Problem> = Vec::with_capacity(problems.len());
    for problem in problems {
        let k = key.key_for(&problem);
        match index.get(&k) {
            Some(&at) => merged[at].solutions.extend(problem.solutions),
            None => {
                index.insert(k, merged.len());
                merged.push(problem);
            }
        }
    }
    merged
}

/// Keeps the first `cap` solutions of every problem.
pub fn cap_solutions(mut problems: Vec<Problem>, cap: usize) -> Result<Vec<Problem>, CorpusError> {
    if cap < 1 {
        return Err(CorpusError::InvalidCap(cap));
    }
    for p in &mut problems {
        p.solutions.truncate(cap);
    }
    Ok(problems)
}

pub fn write_corpus(problems: &[Problem], path: &Path) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for p in problems {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Problem>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::UnreadablePath {
        path: path.to_path_buf(),
        source,
    })?;
    let mut problems = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            problems.push(serde_json::from_str(&line)?);
        }
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn problem(id: &str, desc: &str, sols: &[&str]) -> Problem {
        Problem {
            problem_id: id.into(),
            description: desc.into(),
            source: ProblemSource::Apps,
            solutions: sols.iter().map(|c| Solution::new(*c, "")).collect(),
            special_judge: false,
        }
    }

    #[test]
    fn token_count_is_whitespace_tokens() {
        let s = Solution::new("a = 1\nprint( a )", "");
        assert_eq!(s.token_count, 6);
        assert_eq!(TokenCounting::BytesProxy.count("abcde"), 2);
    }

    #[test]
    fn special_judge_removed() {
        let mut p = problem("p1", "d", &["x"]);
        p.special_judge = true;
        let out = filter_problems(vec![p, problem("p2", "e", &["y"])], 1000);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].problem_id, "p2");
    }

    #[test]
    fn long_solution_removed_sibling_kept() {
        let long = ["t"; 1001].join(" ");
        let short = vec!["t"; 12].join(" ");
        let out = filter_problems(vec![problem("p", "d", &[&long, &short])], 1000);
        assert_eq!(out[0].solutions.len(), 1);
        assert_eq!(out[0].solutions[0].token_count, 12);

        let exactly = vec!["t"; 1000].join(" ");
        let out = filter_problems(vec![problem("p", "d", &[&exactly])], 1000);
        assert_eq!(out[0].solutions.len(), 1);
    }

    #[test]
    fn problem_emptied_by_filter_is_dropped() {
        let long = vec!["t"; 1001].join(" ");
        assert!(filter_problems(vec![problem("p", "d", &[&long])], 1000).is_empty());
    }

    #[test]
    fn filter_identity_on_clean_corpus() {
        let input = vec![problem("a", "x", &["1"]), problem("b", "y", &["2", "3"])];
        assert_eq!(filter_problems(input.clone(), 1000), input);
    }

    #[test]
    fn merge_identical_descriptions() {
        let a = problem("a", "same", &["1", "2", "3"]);
        let b = problem("b", "same", &["4", "5", "6", "7"]);
        let out = merge_duplicate_problems(vec![a, b], &MergeKey::NormalizedDescription);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].problem_id, "a");
        let codes: Vec<_> = out[0].solutions.iter().map(|s| s.code.as_str()).collect();
        assert_eq!(codes, ["1", "2", "3", "4", "5", "6", "7"]);
    }

    #[test]
    fn merge_normalizes_whitespace() {
        let a = problem("a", "  sum two\tnumbers \n", &["1"]);
        let b = problem("b", "sum  two numbers", &["2"]);
        assert_eq!(normalize_description(&a.description), "sum two numbers");
        let out = merge_duplicate_problems(vec![a, b], &MergeKey::NormalizedDescription);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].description, "  sum two\tnumbers \n");
    }

    #[test]
    fn merge_distinct_is_identity() {
        let input = vec![problem("a", "x", &["1"]), problem("b", "y", &["2"])];
        assert_eq!(
            merge_duplicate_problems(input.clone(), &MergeKey::NormalizedDescription),
            input
        );
    }

    #[test]
    fn merge_by_explicit_id_map() {
        let map = HashMap::from([("a".to_string(), "g".to_string()), ("c".into(), "g".into())]);
        let input = vec![
            problem("a", "x", &["1"]),
            problem("b", "x", &["2"]),
            problem("c", "z", &["3"]),
        ];
        let out = merge_duplicate_problems(input, &MergeKey::ExplicitIdMap(map));
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].solutions.len(), 2);
        assert_eq!(out[1].problem_id, "b");
    }

    #[test]
    fn cap_keeps_prefix() {
        let codes: Vec<String> = (0..30).map(|i| i.to_string()).collect();
        let refs: Vec<&str> = codes.iter().map(String::as_str).collect();
        let out = cap_solutions(vec![problem("p", "d", &refs)], 25).unwrap();
        assert_eq!(out[0].solutions.len(), 25);
        assert_eq!(out[0].solutions[24].code, "24");

        let out = cap_solutions(vec![problem("p", "d", &refs[..10])], 25).unwrap();
        assert_eq!(out[0].solutions.len(), 10);
    }

    #[test]
    fn cap_zero_is_invalid() {
        assert!(matches!(
            cap_solutions(vec![], 0),
            Err(CorpusError::InvalidCap(0))
        ));
    }

    #[test]
    fn unknown_format_string() {
        assert!(matches!(
            "leetcode".parse::<CorpusFormat>(),
            Err(CorpusError::UnknownFormat(_))
        ));
    }

    #[test]
    fn empty_directory_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path(), CorpusFormat::Apps, TokenCounting::Whitespace);
        assert!(matches!(err, Err(CorpusError::EmptyCorpus(_))));
    }

    #[test]
    fn missing_path_is_unreadable() {
        let err = load_corpus(
            Path::new("/nonexistent/semiforge"),
            CorpusFormat::Generic,
            TokenCounting::Whitespace,
        );
        assert!(matches!(err, Err(CorpusError::UnreadablePath { .. })));
    }

    #[test]
    fn codecontest_keeps_only_correct_python() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cc.jsonl");
        let rec = serde_json::json!({
            "name": "cc1",
            "description": "Print the sum.",
            "solutions": [
                {"language": "python3", "code": "print(1)", "correct": true},
                {"language": "python3", "code": "print(2)", "correct": false},
                {"language": 3, "code": "print(3)", "correct": true},
                {"language": "cpp", "code": "int main(){}", "correct": true}
            ]
        });
        fs::write(&path, format!("{rec}\nnot json\n")).unwrap();
        let out = load_corpus(&path, CorpusFormat::Codecontest, TokenCounting::Whitespace).unwrap();
        assert_eq!(out.len(), 1);
        let codes: Vec<_> = out[0].solutions.iter().map(|s| s.code.as_str()).collect();
        assert_eq!(codes, ["print(1)", "print(3)"]);
    }

    fn arb_problems() -> impl Strategy<Value = Vec<Problem>> {
        prop::collection::vec(
            (
                "[ab ]{0,6}",
                prop::collection::vec("[xy ]{0,8}", 1..8),
                any::<bool>(),
            ),
            0..12,
        )
        .prop_map(|raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (desc, sols, sj))| Problem {
                    problem_id: format!("p{i}"),
                    description: desc,
                    source: ProblemSource::Apps,
                    solutions: sols.into_iter().map(|c| Solution::new(c, "")).collect(),
                    special_judge: sj,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn funnel_never_grows(problems in arb_problems(), max in 0usize..5, cap in 1usize..4) {
            let n0 = problems.len();
            let s0 = Problem::solution_count(&problems);
            let f = filter_problems(problems, max);
            prop_assert!(f.len() <= n0 && Problem::solution_count(&f) <= s0);
            let (n1, s1) = (f.len(), Problem::solution_count(&f));
            let m = merge_duplicate_problems(f, &MergeKey::NormalizedDescription);
            prop_assert!(m.len() <= n1 && Problem::solution_count(&m) == s1);
            let c = cap_solutions(m.clone(), cap).unwrap();
            prop_assert!(c.len() <= m.len());
            prop_assert!(c.iter().all(|p| p.solutions.len() <= cap));
        }

        #[test]
        fn merge_is_idempotent(problems in arb_problems()) {
            let once = merge_duplicate_problems(problems, &MergeKey::NormalizedDescription);
            let twice = merge_duplicate_problems(once.clone(), &MergeKey::NormalizedDescription);
            prop_assert_eq!(once, twice);
        }
    }
}
