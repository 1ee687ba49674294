//! Test-case construction from the original code, pass-all validation of the
//! refined code, and ROUGE-L instruction deduplication.

use std::collections::HashMap;
use std::hash::Hash;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::executor::{
    normalize_output, outputs_match, ExecStatus, ExecutorError, Invocation, ResourceLimits, Sandbox,
};
use crate::generation::{AnswerType, GenerationBundle};

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("every generated input failed on the original code")]
    EmptyTestCases { dropped: Vec<DroppedInput> },
    #[error("cannot validate against an empty test-case list")]
    NoTestCases,
    #[error(transparent)]
    Executor(#[from] ExecutorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub invocation: Invocation,
    /// Normalized stdout of the original code on `invocation`.
    pub expected_output: String,
}

/// Where a sample came from: the corpus problem, the solution within it, and
/// the generation sequence number.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedSample {
    pub instruction: String,
    pub refined_code: String,
    pub original_code: String,
    pub answer_type: AnswerType,
    pub test_cases: Vec<TestCase>,
    /// Always `test_cases.len()`.
    pub difficulty: usize,
    pub provenance: Provenance,
}

impl ValidatedSample {
    /// Builds a sample; `None` when there are no test cases.
    pub fn new(
        bundle: &GenerationBundle,
        original_code: &str,
        test_cases: Vec<TestCase>,
        provenance: Provenance,
    ) -> Option<Self> {
        if test_cases.is_empty() {
            return None;
        }
        Some(Self {
            instruction: bundle.instruction.clone(),
            refined_code: bundle.refined_code.clone(),
            original_code: original_code.to_string(),
            answer_type: bundle.answer_type.clone(),
            difficulty: test_cases.len(),
            test_cases,
            provenance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedInput {
    pub input_index: usize,
    pub status: ExecStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructedCases {
    pub cases: Vec<TestCase>,
    pub dropped: Vec<DroppedInput>,
}

/// Runs the original code on every generated input; successful runs become
/// test cases (in input order), failed ones are recorded and dropped.
pub fn construct_test_cases(
    sandbox: &Sandbox,
    original_code: &str,
    bundle: &GenerationBundle,
    limits: &ResourceLimits,
) -> Result<ConstructedCases, ValidationError> {
    let mut cases = Vec::new();
    let mut dropped = Vec::new();
    for (input_index, invocation) in bundle.invocations().enumerate() {
        let run = sandbox.execute(original_code, &invocation, limits)?;
        if run.status == ExecStatus::Ok {
            cases.push(TestCase {
                invocation,
                expected_output: normalize_output(&run.stdout),
            });
        } else {
            dropped.push(DroppedInput {
                input_index,
                status: run.status,
            });
        }
    }
    if cases.is_empty() {
        return Err(ValidationError::EmptyTestCases { dropped });
    }
    Ok(ConstructedCases { cases, dropped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    WrongOutput,
    RuntimeError,
    Timeout,
}

impl FailReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::WrongOutput => "wrong_output",
            Self::RuntimeError => "runtime_error",
            Self::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail {
        case_index: usize,
        reason: FailReason,
    },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Pass)
    }
}

/// Pass iff every case runs cleanly and matches; stops at the first failure.
pub fn validate_refined_code(
    sandbox: &Sandbox,
    refined_code: &str,
    test_cases: &[TestCase],
    limits: &ResourceLimits,
) -> Result<Verdict, ValidationError> {
    if test_cases.is_empty() {
        return Err(ValidationError::NoTestCases);
    }
    for (case_index, case) in test_cases.iter().enumerate() {
        let run = sandbox.execute(refined_code, &case.invocation, limits)?;
        let reason = match run.status {
            ExecStatus::Ok if outputs_match(&run.stdout, &case.expected_output) => continue,
            ExecStatus::Ok => FailReason::WrongOutput,
            ExecStatus::Timeout => FailReason::Timeout,
            // Output past the cap is treated as a crash: the program was killed.
            ExecStatus::RuntimeError | ExecStatus::OutputOverflow => FailReason::RuntimeError,
        };
        return Ok(Verdict::Fail { case_index, reason });
    }
    Ok(Verdict::Pass)
}

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Bit-parallel LCS automaton over a fixed reference sequence.
///
/// Each reference symbol maps to a bitset of its positions; scanning a
/// candidate updates a state vector `V ← (V + U) | (V − U)` with `U = V & M[c]`,
/// and the LCS length is the number of zero bits in `V`.
#[derive(Debug, Clone)]
pub struct LcsPattern<S: Eq + Hash> {
    len: usize,
    words: usize,
    masks: HashMap<S, Vec<u64>>,
}

impl<S: Eq + Hash + Clone> LcsPattern<S> {
    pub fn new(reference: &[S]) -> Self {
        let words = reference.len().div_ceil(64);
        let mut masks: HashMap<S, Vec<u64>> = HashMap::new();
        for (i, sym) in reference.iter().enumerate() {
            masks.entry(sym.clone()).or_insert_with(|| vec![0; words])[i / 64] |= 1 << (i % 64);
        }
        Self {
            len: reference.len(),
            words,
            masks,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lcs_len(&self, candidate: &[S]) -> usize {
        if self.len == 0 {
            return 0;
        }
        let mut v = vec![u64::MAX; self.words];
        let mut u = vec![0u64; self.words];
        for sym in candidate {
            let Some(mask) = self.masks.get(sym) else {
                continue;
            };
            for ((u, v), m) in u.iter_mut().zip(&v).zip(mask) {
                *u = v & m;
            }
            let mut carry = false;
            let mut borrow = false;
            for (v, &u) in v.iter_mut().zip(&u) {
                let (s1, c1) = v.overflowing_add(u);
                let (sum, c2) = s1.overflowing_add(carry as u64);
                carry = c1 || c2;
                let (d1, b1) = v.overflowing_sub(u);
                let (diff, b2) = d1.overflowing_sub(borrow as u64);
                borrow = b1 || b2;
                *v = sum | diff;
            }
        }
        let ones: usize = v
            .iter()
            .enumerate()
            .map(|(w, bits)| {
                let valid = (self.len - w * 64).min(64);
                let mask = if valid == 64 {
                    u64::MAX
                } else {
                    (1u64 << valid) - 1
                };
                (bits & mask).count_ones() as usize
            })
            .sum();
        self.len - ones
    }

    /// ROUGE-L F1 of `candidate` against this reference.
    pub fn rouge_l<T: Float>(&self, candidate: &[S]) -> T {
        rouge_f1(self.lcs_len(candidate), candidate.len(), self.len)
    }
}

/// F1 from an LCS length: with P = L/|c| and R = L/|r|, 2PR/(P+R) = 2L/(|c|+|r|).
fn rouge_f1<T: Float>(lcs: usize, cand_len: usize, ref_len: usize) -> T {
    if lcs == 0 || cand_len == 0 || ref_len == 0 {
        return T::zero();
    }
    let two_l = T::from(2 * lcs).expect("usize fits float");
    two_l / T::from(cand_len + ref_len).expect("usize fits float")
}

/// LCS-based ROUGE-L F1 between two token sequences; 0 when either is empty.
pub fn rouge_l<T: Float, S: Eq + Hash + Clone>(candidate: &[S], reference: &[S]) -> T {
    LcsPattern::new(reference).rouge_l(candidate)
}

/// ROUGE-L between two raw texts using [`tokenize`].
pub fn rouge_l_text<T: Float>(candidate: &str, reference: &str) -> T {
    rouge_l(&tokenize(candidate), &tokenize(reference))
}

/// Which earlier instructions a new one is compared with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupScope {
    #[default]
    Retained,
    AllSeen,
}

/// Streaming greedy filter over instructions: an item is kept iff its ROUGE-L
/// against every earlier instruction in `scope` is ≤ `threshold`.
/// Returns `(kept, dropped)`, each in input order.
pub fn dedup_by_instruction<I>(
    items: Vec<I>,
    instruction: impl Fn(&I) -> &str,
    threshold: f64,
    scope: DedupScope,
) -> (Vec<I>, Vec<I>) {
    let mut interner: HashMap<String, u32> = HashMap::new();
    let mut intern = |text: &str| -> Vec<u32> {
        tokenize(text)
            .into_iter()
            .map(|t| {
                let next = interner.len() as u32;
                *interner.entry(t).or_insert(next)
            })
            .collect()
    };
    let mut previous: Vec<LcsPattern<u32>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for item in items {
        let tokens = intern(instruction(&item));
        let duplicate = previous
            .iter()
            .any(|p| p.rouge_l::<f64>(&tokens) > threshold);
        if !duplicate || scope == DedupScope::AllSeen {
            previous.push(LcsPattern::new(&tokens));
        }
        if duplicate {
            dropped.push(item);
        } else {
            kept.push(item);
        }
    }
    (kept, dropped)
}

pub fn dedup_instructions(
    samples: Vec<ValidatedSample>,
    threshold: f64,
    scope: DedupScope,
) -> (Vec<ValidatedSample>, Vec<ValidatedSample>) {
    dedup_by_instruction(samples, |s| s.instruction.as_str(), threshold, scope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Full-table quadratic LCS.
    fn lcs_oracle<S: PartialEq>(a: &[S], b: &[S]) -> usize {
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                t[i][j] = if a[i - 1] == b[j - 1] {
                    t[i - 1][j - 1] + 1
                } else {
                    t[i - 1][j].max(t[i][j - 1])
                };
            }
        }
        t[a.len()][b.len()]
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn rouge_examples() {
        let a = toks("the cat sat");
        assert_eq!(rouge_l::<f64, _>(&a, &a), 1.0);
        assert_eq!(rouge_l::<f64, _>(&toks("a b"), &toks("c d")), 0.0);
        let score: f64 = rouge_l(&toks("a c"), &toks("a b c"));
        assert!((score - 0.8).abs() < 1e-15);
        assert_eq!(rouge_l::<f64, String>(&[], &a), 0.0);
        assert_eq!(rouge_l::<f64, String>(&a, &[]), 0.0);
        assert_eq!(rouge_l::<f32, _>(&toks("A c"), &toks("a B C")), 0.8f32);
    }

    #[test]
    fn long_sequences_cross_word_boundaries() {
        let a: Vec<u32> = (0..300).map(|i| (i * 7 % 13) as u32).collect();
        let b: Vec<u32> = (0..257).map(|i| (i * 5 % 11) as u32).collect();
        assert_eq!(LcsPattern::new(&b).lcs_len(&a), lcs_oracle(&a, &b));
        assert_eq!(LcsPattern::new(&a).lcs_len(&b), lcs_oracle(&a, &b));
    }

    proptest! {
        #[test]
        fn lcs_matches_oracle(
            a in prop::collection::vec(0u8..6, 0..140),
            b in prop::collection::vec(0u8..6, 0..140),
        ) {
            prop_assert_eq!(LcsPattern::new(&b).lcs_len(&a), lcs_oracle(&a, &b));
        }

        #[test]
        fn rouge_symmetric_bounded(
            a in prop::collection::vec(0u8..5, 0..40),
            b in prop::collection::vec(0u8..5, 0..40),
        ) {
            let ab: f64 = rouge_l(&a, &b);
            let ba: f64 = rouge_l(&b, &a);
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.is_empty() {
                prop_assert_eq!(rouge_l::<f64, _>(&a, &a), 1.0);
            }
        }

        #[test]
        fn dedup_retained_pairs_below_threshold(
            stream in prop::collection::vec(prop::collection::vec(0u8..4, 1..8), 0..25),
        ) {
            let texts: Vec<String> = stream
                .iter()
                .map(|t| t.iter().map(|x| format!("w{x}")).collect::<Vec<_>>().join(" "))
                .collect();
            let (kept, dropped) =
                dedup_by_instruction(texts.clone(), |s| s.as_str(), 0.7, DedupScope::Retained);
            prop_assert_eq!(kept.len() + dropped.len(), texts.len());
            if let Some(first) = texts.first() {
                prop_assert_eq!(&kept[0], first);
            }
            for i in 0..kept.len() {
                for j in 0..i {
                    prop_assert!(rouge_l_text::<f64>(&kept[i], &kept[j]) <= 0.7);
                }
            }
        }
    }

    #[test]
    fn dedup_identical_keeps_first() {
        let items = vec!["sum two numbers", "Sum two  numbers"];
        let (kept, dropped) = dedup_by_instruction(items, |s| s, 0.7, DedupScope::Retained);
        assert_eq!(kept, ["sum two numbers"]);
        assert_eq!(dropped.len(), 1);
    }

    #[test]
    fn dedup_disjoint_keeps_all() {
        let items = vec!["a b", "c d", "e f"];
        let (kept, _) = dedup_by_instruction(items.clone(), |s| s, 0.7, DedupScope::Retained);
        assert_eq!(kept, items);
    }

    #[test]
    fn dedup_threshold_boundaries() {
        // 4 vs 4 tokens sharing an LCS of 3: 2*3/8 = 0.75
        let first = "w1 w2 w3 w4";
        let near = "w1 w2 w3 x9";
        assert_eq!(lcs_oracle(&toks(first), &toks(near)), 3);
        assert_eq!(rouge_l_text::<f64>(first, near), 0.75);
        let (kept, _) = dedup_by_instruction(vec![first, near], |s| s, 0.7, DedupScope::Retained);
        assert_eq!(kept, [first]);

        // 20 vs 20 tokens sharing 13: 26/40 = 0.65
        let a: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
        let b: Vec<String> = (0..20)
            .map(|i| {
                if i < 13 {
                    format!("t{i}")
                } else {
                    format!("u{i}")
                }
            })
            .collect();
        assert_eq!(lcs_oracle(&a, &b), 13);
        let (a, b) = (a.join(" "), b.join(" "));
        assert_eq!(rouge_l_text::<f64>(&a, &b), 0.65);
        let (kept, _) = dedup_by_instruction(
            vec![a.as_str(), b.as_str()],
            |s| s,
            0.7,
            DedupScope::Retained,
        );
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn dedup_scope_changes_chain_behaviour() {
        // b is close to a, c is close to b but not to a.
        let a = "p q r s t u v w x y";
        let b = "p q r s t u v w m n";
        let c = "k l r s t u v w m n";
        assert!(rouge_l_text::<f64>(a, b) > 0.7);
        assert!(rouge_l_text::<f64>(b, c) > 0.7);
        assert!(rouge_l_text::<f64>(a, c) <= 0.7);
        let (kept, _) = dedup_by_instruction(vec![a, b, c], |s| s, 0.7, DedupScope::Retained);
        assert_eq!(kept, [a, c]);
        let (kept, _) = dedup_by_instruction(vec![a, b, c], |s| s, 0.7, DedupScope::AllSeen);
        assert_eq!(kept, [a]);
    }

    fn sandbox() -> Sandbox {
        Sandbox::new("python3").unwrap()
    }

    fn stdin_bundle(inputs: &[&str]) -> GenerationBundle {
        GenerationBundle {
            instruction: "double".into(),
            refined_code: "print(int(input())*2)".into(),
            answer_type: AnswerType::StandardInput,
            raw_inputs: inputs.iter().map(|s| s.to_string()).collect(),
            raw_completion: String::new(),
        }
    }

    #[test]
    fn construct_drops_crashing_inputs() {
        let got = construct_test_cases(
            &sandbox(),
            "print(int(input())*2)",
            &stdin_bundle(&["3", "7", "x"]),
            &ResourceLimits::default(),
        )
        .unwrap();
        let pairs: Vec<_> = got
            .cases
            .iter()
            .map(|c| (c.invocation.clone(), c.expected_output.as_str()))
            .collect();
        assert_eq!(
            pairs,
            [
                (Invocation::Stdin("3\n".into()), "6"),
                (Invocation::Stdin("7\n".into()), "14")
            ]
        );
        assert_eq!(
            got.dropped,
            [DroppedInput {
                input_index: 2,
                status: ExecStatus::RuntimeError
            }]
        );
    }

    #[test]
    fn construct_all_crash_is_empty() {
        let err = construct_test_cases(
            &sandbox(),
            "print(int(input())*2)",
            &stdin_bundle(&["a", "b", "c"]),
            &ResourceLimits::default(),
        );
        assert!(
            matches!(err, Err(ValidationError::EmptyTestCases { dropped }) if dropped.len() == 3)
        );
    }

    #[test]
    fn construct_call_based() {
        let bundle = GenerationBundle {
            answer_type: AnswerType::CallBased {
                function_name: "add".into(),
            },
            raw_inputs: vec!["(1,2)".into(), "(0,0)".into()],
            ..stdin_bundle(&[])
        };
        let got = construct_test_cases(
            &sandbox(),
            "def add(a,b): return a+b",
            &bundle,
            &ResourceLimits::default(),
        )
        .unwrap();
        let outs: Vec<_> = got
            .cases
            .iter()
            .map(|c| c.expected_output.as_str())
            .collect();
        assert_eq!(outs, ["3", "0"]);
    }

    #[test]
    fn validate_verdicts() {
        let sb = sandbox();
        let limits = ResourceLimits::default();
        let cases = vec![
            TestCase {
                invocation: Invocation::Stdin("3\n".into()),
                expected_output: "6".into(),
            },
            TestCase {
                invocation: Invocation::Stdin("0\n".into()),
                expected_output: "0".into(),
            },
        ];
        let renamed = "number = int(input())\nprint(number * 2)";
        assert_eq!(
            validate_refined_code(&sb, renamed, &cases, &limits).unwrap(),
            Verdict::Pass
        );
        assert_eq!(
            validate_refined_code(&sb, "print(int(input())+2)", &cases, &limits).unwrap(),
            Verdict::Fail {
                case_index: 0,
                reason: FailReason::WrongOutput
            }
        );
        let crash_on_zero = "n = int(input())\nprint(n * 2 // (n // n))";
        assert_eq!(
            validate_refined_code(&sb, crash_on_zero, &cases, &limits).unwrap(),
            Verdict::Fail {
                case_index: 1,
                reason: FailReason::RuntimeError
            }
        );
        assert!(matches!(
            validate_refined_code(&sb, renamed, &[], &limits),
            Err(ValidationError::NoTestCases)
        ));
    }

    #[test]
    fn validate_timeout_reason() {
        let limits = ResourceLimits {
            wall_timeout: std::time::Duration::from_millis(500),
            ..Default::default()
        };
        let cases = vec![TestCase {
            invocation: Invocation::Stdin("1\n".into()),
            expected_output: "1".into(),
        }];
        assert_eq!(
            validate_refined_code(&sandbox(), "while True: pass", &cases, &limits).unwrap(),
            Verdict::Fail {
                case_index: 0,
                reason: FailReason::Timeout
            }
        );
    }
}
