//! pass@k estimation and a candidate-evaluation harness.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_jsonl, DatasetError};
use crate::executor::{ResourceLimits, Sandbox};
use crate::generation::AnswerType;
use crate::validation::{validate_refined_code, TestCase, ValidationError};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid pass@k arguments n={n}, c={c}, k={k}")]
    InvalidArgs { n: u64, c: u64, k: u64 },
    #[error("problem {problem_id} has {n} candidate(s), fewer than k={k}")]
    InsufficientSamples {
        problem_id: String,
        n: usize,
        k: usize,
    },
    #[error("problem {0} has no test cases")]
    NoTestCases(String),
    #[error("candidate refers to unknown problem {0}")]
    UnknownProblem(String),
    #[error("no k values requested")]
    NoKs,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Unbiased pass@k: `1 − C(n−c, k) / C(n, k)`.
///
/// Evaluated as `1 − ∏_{i=n−c+1}^{n} (1 − k/i)`, which never forms a binomial
/// coefficient. Exactly 1 when `n − c < k`, exactly `c/n` when `k = 1`.
pub fn pass_at_k<T: Float>(n: u64, c: u64, k: u64) -> Result<T, MetricsError> {
    if k < 1 || k > n || c > n {
        return Err(MetricsError::InvalidArgs { n, c, k });
    }
    let f = |x: u64| T::from(x).expect("u64 fits float");
    if n - c < k {
        return Ok(T::one());
    }
    if k == 1 {
        return Ok(f(c) / f(n));
    }
    let kf = f(k);
    let miss = (n - c + 1..=n).fold(T::one(), |acc, i| acc * (T::one() - kf / f(i)));
    Ok(T::one() - miss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemEval {
    pub n: u64,
    pub c: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKReport<T> {
    /// k → mean pass@k over problems.
    pub pass_at_k: BTreeMap<u64, T>,
    /// problem id → (n, c), in input order.
    pub problems: Vec<(String, ProblemEval)>,
}

/// Averages pass@k over `(n, c)` tables for each k.
pub fn aggregate<T: Float>(
    problems: Vec<(String, ProblemEval)>,
    ks: &[u64],
) -> Result<PassAtKReport<T>, MetricsError> {
    if ks.is_empty() {
        return Err(MetricsError::NoKs);
    }
    let mut pass = BTreeMap::new();
    let count = T::from(problems.len().max(1)).expect("float");
    for &k in ks {
        let mut sum = T::zero();
        for (id, p) in &problems {
            if p.n < k {
                return Err(MetricsError::InsufficientSamples {
                    problem_id: id.clone(),
                    n: p.n as usize,
                    k: k as usize,
                });
            }
            sum = sum + pass_at_k::<T>(p.n, p.c, k)?;
        }
        pass.insert(k, sum / count);
    }
    Ok(PassAtKReport {
        pass_at_k: pass,
        problems,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalProblem {
    pub problem_id: String,
    pub answer_type: AnswerType,
    pub test_cases: Vec<TestCase>,
    pub candidates: Vec<String>,
}

/// Scores every candidate with pass-all semantics and averages pass@k over problems.
pub fn evaluate_candidates(
    sandbox: &Sandbox,
    problems: &[EvalProblem],
    limits: &ResourceLimits,
    ks: &[u64],
) -> Result<PassAtKReport<f64>, MetricsError> {
    let max_k = *ks.iter().max().ok_or(MetricsError::NoKs)? as usize;
    for p in problems {
        if p.test_cases.is_empty() {
            return Err(MetricsError::NoTestCases(p.problem_id.clone()));
        }
        if p.candidates.len() < max_k {
            return Err(MetricsError::InsufficientSamples {
                problem_id: p.problem_id.clone(),
                n: p.candidates.len(),
                k: max_k,
            });
        }
    }
    let jobs: Vec<(usize, &str)> = problems
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.candidates.iter().map(move |c| (i, c.as_str())))
        .collect();
    let verdicts: Vec<(usize, bool)> = jobs
        .par_iter()
        .map(|&(i, code)| {
            validate_refined_code(sandbox, code, &problems[i].test_cases, limits)
                .map(|v| (i, v.passed()))
        })
        .collect::<Result<_, _>>()?;
    let mut passed = vec![0u64; problems.len()];
    for (i, ok) in verdicts {
        passed[i] += ok as u64;
    }
    let table = problems
        .iter()
        .zip(passed)
        .map(|(p, c)| {
            (
                p.problem_id.clone(),
                ProblemEval {
                    n: p.candidates.len() as u64,
                    c,
                },
            )
        })
        .collect();
    aggregate(table, ks)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CaseLine {
    Full(TestCase),
    Raw {
        input: String,
        expected_output: String,
    },
}

#[derive(Deserialize)]
struct ProblemLine {
    problem_id: String,
    answer_type: AnswerType,
    test_cases: Vec<CaseLine>,
}

#[derive(Deserialize)]
struct CandidateLine {
    problem_id: String,
    candidate_code: String,
}

/// Joins a problems file with a candidates file by `problem_id`.
///
/// Test cases may be written either as full `{invocation, expected_output}`
/// objects or as `{input, expected_output}` interpreted through the problem's answer type.
pub fn load_eval_problems(
    problems_path: &Path,
    candidates_path: &Path,
) -> Result<Vec<EvalProblem>, MetricsError> {
    let lines: Vec<ProblemLine> = read_jsonl(problems_path)?;
    let mut problems: Vec<EvalProblem> = lines
        .into_iter()
        .map(|l| {
            let test_cases = l
                .test_cases
                .into_iter()
                .map(|c| match c {
                    CaseLine::Full(tc) => tc,
                    CaseLine::Raw {
                        input,
                        expected_output,
                    } => TestCase {
                        invocation: l.answer_type.invocation(&input),
                        expected_output,
                    },
                })
                .collect();
            EvalProblem {
                problem_id: l.problem_id,
                answer_type: l.answer_type,
                test_cases,
                candidates: Vec::new(),
            }
        })
        .collect();
    let index: HashMap<String, usize> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| (p.problem_id.clone(), i))
        .collect();
    let candidates: Vec<CandidateLine> = read_jsonl(candidates_path)?;
    for c in candidates {
        let i = *index
            .get(&c.problem_id)
            .ok_or_else(|| MetricsError::UnknownProblem(c.problem_id.clone()))?;
        problems[i].candidates.push(c.candidate_code);
    }
    Ok(problems)
}
