use semiforge::executor::outputs_match;
use semiforge::generation::{AnswerType, GenerationBundle};
use semiforge::validation::{construct_test_cases, validate_refined_code};
use semiforge::{ExecStatus, Invocation, ResourceLimits, Sandbox};

fn bundle(answer_type: AnswerType, inputs: &[&str]) -> GenerationBundle {
    GenerationBundle {
        instruction: String::new(),
        refined_code: String::new(),
        answer_type,
        raw_inputs: inputs.iter().map(|s| s.to_string()).collect(),
        raw_completion: String::new(),
    }
}

#[test]
fn call_and_stdin_forms_agree() {
    let sandbox = Sandbox::new("python3").unwrap();
    let limits = ResourceLimits::default();
    let call_code = "def gap(a, b):\n    return abs(a - b)\n";
    let stdin_code = "a, b = map(int, input().split())\nprint(abs(a - b))\n";
    let pairs = [(3, 8), (10, -2), (0, 0), (-7, -7), (123, 45)];

    let call_inputs: Vec<String> = pairs.iter().map(|(a, b)| format!("({a}, {b})")).collect();
    let stdin_inputs: Vec<String> = pairs.iter().map(|(a, b)| format!("{a} {b}")).collect();
    let call = bundle(
        AnswerType::CallBased {
            function_name: "gap".into(),
        },
        &call_inputs.iter().map(String::as_str).collect::<Vec<_>>(),
    );
    let stdin = bundle(
        AnswerType::StandardInput,
        &stdin_inputs.iter().map(String::as_str).collect::<Vec<_>>(),
    );
    let from_call = construct_test_cases(&sandbox, call_code, &call, &limits).unwrap();
    let from_stdin = construct_test_cases(&sandbox, stdin_code, &stdin, &limits).unwrap();
    let outs = |c: &semiforge::validation::ConstructedCases| {
        c.cases
            .iter()
            .map(|t| t.expected_output.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(outs(&from_call), ["5", "12", "0", "0", "78"]);
    assert_eq!(outs(&from_call), outs(&from_stdin));
}

#[test]
fn derived_outputs_come_from_execution() {
    let sandbox = Sandbox::new("python3").unwrap();
    let limits = ResourceLimits::default();
    let original = "import sys\nn = int(sys.stdin.readline())\nprint(' '.join(str(i * i) for i in range(n)))\n";
    let b = bundle(AnswerType::StandardInput, &["4", "1", "-", "0"]);
    let built = construct_test_cases(&sandbox, original, &b, &limits).unwrap();
    assert_eq!(built.cases.len(), 3);
    assert_eq!(built.dropped.len(), 1);
    assert_eq!(built.dropped[0].input_index, 2);
    assert_eq!(built.dropped[0].status, ExecStatus::RuntimeError);
    for case in &built.cases {
        let rerun = sandbox
            .execute(original, &case.invocation, &limits)
            .unwrap();
        assert!(outputs_match(&rerun.stdout, &case.expected_output));
    }
    assert_eq!(built.cases[0].invocation, Invocation::Stdin("4\n".into()));
    assert_eq!(built.cases[0].expected_output, "0 1 4 9");

    // the original defines correctness, even where another reading would differ
    let refined = "n = int(input())\nprint(*[i * i for i in range(1, n + 1)])\n";
    let verdict = validate_refined_code(&sandbox, refined, &built.cases, &limits).unwrap();
    assert!(!verdict.passed());
}
