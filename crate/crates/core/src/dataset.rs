//! Output records, JSONL emission and the per-stage funnel report.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::corpus::Problem;
use crate::generation::AnswerType;
use crate::validation::{Provenance, TestCase, ValidatedSample};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset i/o on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {path}:{line}: {source}")]
    Malformed {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("funnel counts are not monotone: {0}")]
    InvalidStats(String),
    #[error("record violates invariant: {0}")]
    InvalidRecord(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Semi,
    Ni,
    Si,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub instruction: String,
    pub code: String,
    pub source: RecordSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test_cases: Option<usize>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_type: Option<AnswerType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_cases: Vec<TestCase>,
}

impl DatasetRecord {
    pub fn from_semi(sample: ValidatedSample) -> Self {
        Self {
            instruction: sample.instruction,
            code: sample.refined_code,
            source: RecordSource::Semi,
            difficulty: Some(sample.difficulty),
            n_test_cases: Some(sample.test_cases.len()),
            provenance: sample.provenance,
            answer_type: Some(sample.answer_type),
            test_cases: sample.test_cases,
        }
    }

    /// One record per solution, with the problem description as the instruction.
    pub fn from_ni(problems: &[Problem]) -> Vec<Self> {
        problems
            .iter()
            .flat_map(|p| {
                p.solutions.iter().enumerate().map(move |(i, s)| Self {
                    instruction: p.description.clone(),
                    code: s.code.clone(),
                    source: RecordSource::Ni,
                    difficulty: None,
                    n_test_cases: None,
                    provenance: Provenance {
                        problem_id: Some(p.problem_id.clone()),
                        solution_index: Some(i),
                        sequence: None,
                    },
                    answer_type: None,
                    test_cases: Vec::new(),
                })
            })
            .collect()
    }

    pub fn check(&self) -> Result<(), DatasetError> {
        if self.source == RecordSource::Semi {
            match (self.difficulty, self.n_test_cases) {
                (Some(d), Some(n)) if d == n && n >= 1 => {}
                other => {
                    return Err(DatasetError::InvalidRecord(format!(
                        "semi record needs equal difficulty and n_test_cases, got {other:?}"
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct SiLine {
    instruction: String,
    #[serde(alias = "output", alias = "response")]
    code: String,
    #[serde(default)]
    sequence: Option<u64>,
}

/// Loads a self-instruct file (`{"instruction", "code", "sequence"?}` per line).
/// Lines without a sequence number get their 0-based line position.
pub fn load_si_records(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| DatasetError::IoFailure {
        path: text.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::IoFailure {
            path: text.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let si: SiLine = serde_json::from_str(&line).map_err(|source| DatasetError::Malformed {
            path: text.clone(),
            line: i + 1,
            source,
        })?;
        out.push(DatasetRecord {
            instruction: si.instruction,
            code: si.code,
            source: RecordSource::Si,
            difficulty: None,
            n_test_cases: None,
            provenance: Provenance {
                problem_id: None,
                solution_index: None,
                sequence: Some(si.sequence.unwrap_or(i as u64)),
            },
            answer_type: None,
            test_cases: Vec::new(),
        });
    }
    Ok(out)
}

/// Writes one JSON object per line in the given order; returns the count.
pub fn emit_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<usize, DatasetError> {
    let io = |source| DatasetError::IoFailure {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(records.len())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let text = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| DatasetError::IoFailure {
        path: text.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::IoFailure {
            path: text.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DatasetError::Malformed {
                path: text.clone(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub const STAGE_NAMES: [&str; 5] = [
    "loaded_codes",
    "generated_ok",
    "with_test_cases",
    "refined_passed",
    "after_dedup",
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelStats {
    pub loaded_codes: u64,
    pub generated_ok: u64,
    pub with_test_cases: u64,
    pub refined_passed: u64,
    pub after_dedup: u64,
    /// stage → reason → count
    #[serde(default)]
    pub drop_reasons: BTreeMap<String, BTreeMap<String, u64>>,
}

impl FunnelStats {
    pub fn counts(&self) -> [u64; 5] {
        [
            self.loaded_codes,
            self.generated_ok,
            self.with_test_cases,
            self.refined_passed,
            self.after_dedup,
        ]
    }

    pub fn from_counts(counts: [u64; 5]) -> Self {
        Self {
            loaded_codes: counts[0],
            generated_ok: counts[1],
            with_test_cases: counts[2],
            refined_passed: counts[3],
            after_dedup: counts[4],
            drop_reasons: BTreeMap::new(),
        }
    }

    pub fn add_drop(&mut self, stage: &str, reason: &str) {
        *self
            .drop_reasons
            .entry(stage.to_string())
            .or_default()
            .entry(reason.to_string())
            .or_default() += 1;
    }

    pub fn check_monotone(&self) -> Result<(), DatasetError> {
        let c = self.counts();
        for i in 1..c.len() {
            if c[i] > c[i - 1] {
                return Err(DatasetError::InvalidStats(format!(
                    "{} = {} exceeds {} = {}",
                    STAGE_NAMES[i],
                    c[i],
                    STAGE_NAMES[i - 1],
                    c[i - 1]
                )));
            }
        }
        Ok(())
    }

    /// Stage-over-stage retention in percent; `None` when the previous stage is empty.
    pub fn retention_percent<T: Float>(&self) -> [Option<T>; 4] {
        let c = self.counts();
        std::array::from_fn(|i| {
            (c[i] > 0).then(|| {
                let hundred = T::from(100.0).expect("float");
                T::from(c[i + 1]).expect("float") / T::from(c[i]).expect("float") * hundred
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Serialize)]
struct JsonStage {
    name: &'static str,
    count: u64,
    retention_pct: Option<f64>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    stages: Vec<JsonStage>,
    drop_reasons: &'a BTreeMap<String, BTreeMap<String, u64>>,
}

pub fn funnel_report(stats: &FunnelStats, format: ReportFormat) -> Result<String, DatasetError> {
    stats.check_monotone()?;
    let counts = stats.counts();
    let ratios = stats.retention_percent::<f64>();
    let retention = |i: usize| if i == 0 { None } else { ratios[i - 1] };
    match format {
        ReportFormat::Json => {
            let stages = (0..5)
                .map(|i| JsonStage {
                    name: STAGE_NAMES[i],
                    count: counts[i],
                    retention_pct: retention(i),
                })
                .collect();
            let report = JsonReport {
                stages,
                drop_reasons: &stats.drop_reasons,
            };
            Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
        }
        ReportFormat::Text => {
            let mut out = format!("{:<18}{:>10}{:>12}\n", "stage", "count", "retention");
            for i in 0..5 {
                let r = match retention(i) {
                    Some(p) => format!("{p:.1}%"),
                    None => "-".to_string(),
                };
                out.push_str(&format!(
                    "{:<18}{:>10}{:>12}\n",
                    STAGE_NAMES[i], counts[i], r
                ));
            }
            if !stats.drop_reasons.is_empty() {
                out.push_str("\ndrop reasons\n");
                for (stage, reasons) in &stats.drop_reasons {
                    for (reason, n) in reasons {
                        out.push_str(&format!("  {stage:<16}{reason:<28}{n:>8}\n"));
                    }
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn semi(instruction: &str, difficulty: usize) -> DatasetRecord {
        DatasetRecord {
            instruction: instruction.into(),
            code: "print(1)".into(),
            source: RecordSource::Semi,
            difficulty: Some(difficulty),
            n_test_cases: Some(difficulty),
            provenance: Provenance::default(),
            answer_type: Some(AnswerType::StandardInput),
            test_cases: Vec::new(),
        }
    }

    #[test]
    fn emit_counts_and_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![semi("a", 1), semi("b", 2), semi("c", 3)];
        let p1 = dir.path().join("one.jsonl");
        let p2 = dir.path().join("two.jsonl");
        assert_eq!(emit_jsonl(&recs, &p1).unwrap(), 3);
        assert_eq!(emit_jsonl(&recs, &p2).unwrap(), 3);
        let a = fs::read(&p1).unwrap();
        assert_eq!(a, fs::read(&p2).unwrap());
        assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 3);
        let back: Vec<DatasetRecord> = read_jsonl(&p1).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn emit_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        assert_eq!(emit_jsonl::<DatasetRecord>(&[], &p).unwrap(), 0);
        assert!(fs::read(&p).unwrap().is_empty());
    }

    #[test]
    fn emit_io_failure() {
        assert!(matches!(
            emit_jsonl(&[semi("a", 1)], Path::new("/nonexistent/dir/x.jsonl")),
            Err(DatasetError::IoFailure { .. })
        ));
    }

    #[test]
    fn semi_invariant() {
        assert!(semi("a", 2).check().is_ok());
        let mut bad = semi("a", 2);
        bad.n_test_cases = Some(3);
        assert!(bad.check().is_err());
        bad.difficulty = None;
        assert!(bad.check().is_err());
    }

    #[test]
    fn funnel_ratios_126_92_69_54_40() {
        let stats = FunnelStats::from_counts([126, 92, 69, 54, 40]);
        let r = stats.retention_percent::<f64>();
        let expected = [73.0, 75.0, 78.3, 74.1];
        for (got, want) in r.iter().zip(expected) {
            assert!((got.unwrap() - want).abs() <= 0.05, "{got:?} vs {want}");
        }
        let text = funnel_report(&stats, ReportFormat::Text).unwrap();
        for s in ["73.0%", "75.0%", "78.3%", "74.1%"] {
            assert!(text.contains(s), "{text}");
        }
    }

    #[test]
    fn flat_funnel_is_all_hundred() {
        let stats = FunnelStats::from_counts([10; 5]);
        assert!(stats
            .retention_percent::<f64>()
            .iter()
            .all(|r| *r == Some(100.0)));
    }

    #[test]
    fn non_monotone_is_invalid() {
        let stats = FunnelStats::from_counts([5, 6, 1, 1, 1]);
        assert!(matches!(
            funnel_report(&stats, ReportFormat::Json),
            Err(DatasetError::InvalidStats(_))
        ));
    }

    #[test]
    fn json_report_shape() {
        let mut stats = FunnelStats::from_counts([4, 3, 2, 1, 0]);
        stats.add_drop("validate", "wrong_output");
        stats.add_drop("validate", "wrong_output");
        let v: serde_json::Value =
            serde_json::from_str(&funnel_report(&stats, ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(v["stages"][1]["count"], 3);
        assert_eq!(v["stages"][0]["retention_pct"], serde_json::Value::Null);
        assert_eq!(v["stages"][1]["retention_pct"], 75.0);
        assert_eq!(v["drop_reasons"]["validate"]["wrong_output"], 2);
        let zero = FunnelStats::default();
        let v: serde_json::Value =
            serde_json::from_str(&funnel_report(&zero, ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(v["stages"][1]["retention_pct"], serde_json::Value::Null);
    }

    #[test]
    fn si_loader_assigns_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("si.jsonl");
        fs::write(
            &p,
            "{\"instruction\":\"a\",\"code\":\"x\",\"sequence\":5}\n{\"instruction\":\"b\",\"output\":\"y\"}\n",
        )
        .unwrap();
        let recs = load_si_records(&p).unwrap();
        assert_eq!(recs[0].provenance.sequence, Some(5));
        assert_eq!(recs[1].provenance.sequence, Some(1));
        assert_eq!(recs[1].code, "y");
    }
}
