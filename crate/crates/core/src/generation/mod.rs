//! Prompt construction and completion parsing for the generation stage.
//!
//! The LLM is asked for four delimited sections:
//!
//! ```text
//! ### Instruction
//! ### Refined Code
//! ### Answer Type        (+ "Function Name: <ident>" when Call-Based)
//! ### Test Case Inputs   (one "#### Input" block per case)
//! ```

mod client;

pub use client::{
    prompt_hash, ClientError, Completion, CompletionClient, CompletionRequest, LiveClient,
    ReplayClient, RetryPolicy, Usage, API_KEY_ENV,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::executor::Invocation;

const DEFAULT_TEMPLATE: &str = include_str!("../../assets/generation_prompt.txt");
pub const TEMPLATE_VERSION: &str = "semiforge-prompt/v1";
pub const DEFAULT_INPUT_COUNT: usize = 8;

const CODE_SLOT: &str = "{{original_code}}";
const COUNT_SLOT: &str = "{{input_count}}";

pub const SECTION_INSTRUCTION: &str = "Instruction";
pub const SECTION_REFINED_CODE: &str = "Refined Code";
pub const SECTION_ANSWER_TYPE: &str = "Answer Type";
pub const SECTION_TEST_INPUTS: &str = "Test Case Inputs";
const SECTIONS: [&str; 4] = [
    SECTION_INSTRUCTION,
    SECTION_REFINED_CODE,
    SECTION_ANSWER_TYPE,
    SECTION_TEST_INPUTS,
];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("original code is empty")]
    EmptyCode,
    #[error("template must contain exactly one {CODE_SLOT} slot, found {0}")]
    CodeSlotCount(usize),
    #[error("template has no {COUNT_SLOT} slot")]
    MissingCountSlot,
    #[error("input_count must be at least 1")]
    ZeroInputs,
    #[error("cannot read template: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    body: String,
    input_count: usize,
    version: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            body: DEFAULT_TEMPLATE.to_string(),
            input_count: DEFAULT_INPUT_COUNT,
            version: TEMPLATE_VERSION.to_string(),
        }
    }
}

impl PromptTemplate {
    /// A template from raw text with `{{original_code}}` and `{{input_count}}` placeholders.
    pub fn from_text(
        body: impl Into<String>,
        input_count: usize,
        version: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let body = body.into();
        let slots = body.matches(CODE_SLOT).count();
        if slots != 1 {
            return Err(TemplateError::CodeSlotCount(slots));
        }
        if !body.contains(COUNT_SLOT) {
            return Err(TemplateError::MissingCountSlot);
        }
        if input_count == 0 {
            return Err(TemplateError::ZeroInputs);
        }
        Ok(Self {
            body,
            input_count,
            version: version.into(),
        })
    }

    /// Assembles a template from a preamble and few-shot exemplar blocks, followed by
    /// the standard task section.
    pub fn from_parts(
        preamble: &str,
        exemplars: &[String],
        input_count: usize,
        version: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let mut body = preamble.trim_end().to_string();
        body.push_str("\n\n");
        for ex in exemplars {
            body.push_str("=== Example ===\n");
            body.push_str(ex.trim_end());
            body.push_str("\n\n");
        }
        body.push_str(&format!(
            "=== Task ===\n### Original Code\n```python\n{CODE_SLOT}\n```\n\n\
             Write the four components for the code above. \
             Produce exactly {COUNT_SLOT} test case inputs.\n"
        ));
        Self::from_text(body, input_count, version)
    }

    pub fn load(path: &Path, input_count: usize) -> Result<Self, TemplateError> {
        let body = std::fs::read_to_string(path)?;
        let version = format!("file:{}", path.display());
        Self::from_text(body, input_count, version)
    }

    pub fn with_input_count(mut self, input_count: usize) -> Result<Self, TemplateError> {
        if input_count == 0 {
            return Err(TemplateError::ZeroInputs);
        }
        self.input_count = input_count;
        Ok(self)
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

/// Renders the prompt for one original code.
pub fn build_generation_prompt(
    original_code: &str,
    template: &PromptTemplate,
) -> Result<String, TemplateError> {
    if original_code.trim().is_empty() {
        return Err(TemplateError::EmptyCode);
    }
    // Count first so that code text containing "{{input_count}}" is left alone.
    let with_count = template
        .body
        .replace(COUNT_SLOT, &template.input_count.to_string());
    Ok(with_count.replacen(CODE_SLOT, original_code.trim_end_matches('\n'), 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerType {
    CallBased { function_name: String },
    StandardInput,
}

impl AnswerType {
    /// Wraps a raw test input into the matching invocation.
    pub fn invocation(&self, raw_input: &str) -> Invocation {
        match self {
            Self::CallBased { function_name } => Invocation::Call {
                function_name: function_name.clone(),
                args: raw_input.to_string(),
            },
            Self::StandardInput => {
                let mut text = raw_input.to_string();
                if !text.ends_with('\n') {
                    text.push('\n');
                }
                Invocation::Stdin(text)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationBundle {
    pub instruction: String,
    pub refined_code: String,
    pub answer_type: AnswerType,
    pub raw_inputs: Vec<String>,
    pub raw_completion: String,
}

impl GenerationBundle {
    pub fn invocations(&self) -> impl Iterator<Item = Invocation> + '_ {
        self.raw_inputs
            .iter()
            .map(|i| self.answer_type.invocation(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("section `{0}` is empty")]
    EmptySection(String),
    #[error("section `{0}` appears more than once")]
    DuplicateSection(String),
    #[error("unknown answer type `{0}`")]
    UnknownAnswerType(String),
    #[error("no test case inputs")]
    NoInputs,
    #[error("call-based answer without a function name")]
    MissingFunctionName,
    #[error("`{0}` is not a valid function name")]
    InvalidFunctionName(String),
}

impl ParseError {
    /// Short machine-readable label used in funnel drop reasons.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::MissingSection(_) => "missing_section",
            Self::EmptySection(_) => "empty_section",
            Self::DuplicateSection(_) => "duplicate_section",
            Self::UnknownAnswerType(_) => "unknown_answer_type",
            Self::NoInputs => "no_inputs",
            Self::MissingFunctionName => "missing_function_name",
            Self::InvalidFunctionName(_) => "invalid_function_name",
        }
    }
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// `### Name` outside a code fence, matched case-insensitively against the known sections.
fn section_header(line: &str) -> Option<&'static str> {
    let rest = line.trim().strip_prefix("###")?;
    if rest.starts_with('#') {
        return None;
    }
    let name = rest.trim().trim_end_matches(':').trim();
    SECTIONS
        .iter()
        .copied()
        .find(|s| s.eq_ignore_ascii_case(name))
}

fn is_input_header(line: &str) -> bool {
    line.trim()
        .strip_prefix("####")
        .map(|rest| {
            let rest = rest.trim().trim_end_matches(':');
            let word = rest.split_whitespace().next().unwrap_or("");
            word.eq_ignore_ascii_case("input")
        })
        .unwrap_or(false)
}

/// Removes surrounding blank lines and a single enclosing code fence.
fn strip_block(lines: &[&str]) -> String {
    let mut lines: Vec<&str> = lines.to_vec();
    while lines.first().is_some_and(|l| l.trim().is_empty()) {
        lines.remove(0);
    }
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.len() >= 2 && is_fence(lines[0]) && lines[lines.len() - 1].trim() == "```" {
        lines = lines[1..lines.len() - 1].to_vec();
    }
    lines.join("\n")
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// A `Function Name: <ident>` line, returning the trimmed value.
fn function_name_line(line: &str) -> Option<&str> {
    let (key, value) = line.split_once(':')?;
    let key: String = key
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    (key == "functionname").then(|| value.trim().trim_matches('`'))
}

fn parse_answer_type(text: &str) -> Result<bool, ParseError> {
    let norm: String = text
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match norm.as_str() {
        "callbased" | "call" => Ok(true),
        "standardinput" | "stdin" => Ok(false),
        _ => Err(ParseError::UnknownAnswerType(text.trim().to_string())),
    }
}

/// Splits a completion into its four sections and builds the bundle.
///
/// Total over arbitrary input: any structural defect is a typed error.
pub fn parse_components(raw: &str) -> Result<GenerationBundle, ParseError> {
    let mut bodies: [Option<Vec<&str>>; 4] = Default::default();
    let mut current: Option<usize> = None;
    let mut in_fence = false;
    for line in raw.lines() {
        if !in_fence {
            if let Some(name) = section_header(line) {
                let idx = SECTIONS.iter().position(|s| *s == name).expect("known");
                if bodies[idx].is_some() {
                    return Err(ParseError::DuplicateSection(name.to_string()));
                }
                bodies[idx] = Some(Vec::new());
                current = Some(idx);
                continue;
            }
        }
        if is_fence(line) {
            in_fence = !in_fence;
        }
        if let Some(idx) = current {
            bodies[idx].as_mut().expect("opened").push(line);
        }
    }
    let mut sections = Vec::with_capacity(4);
    for (idx, body) in bodies.into_iter().enumerate() {
        sections.push(body.ok_or_else(|| ParseError::MissingSection(SECTIONS[idx].to_string()))?);
    }
    let [instruction, refined, answer, inputs]: [Vec<&str>; 4] =
        sections.try_into().expect("four sections");

    let instruction = strip_block(&instruction);
    if instruction.trim().is_empty() {
        return Err(ParseError::EmptySection(SECTION_INSTRUCTION.into()));
    }
    let refined_code = strip_block(&refined);
    if refined_code.trim().is_empty() {
        return Err(ParseError::EmptySection(SECTION_REFINED_CODE.into()));
    }

    let mut function_name = None;
    let mut type_text = None;
    for line in &answer {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(name) = function_name_line(line) {
            function_name.get_or_insert(name.to_string());
        } else if type_text.is_none() {
            type_text = Some(line.trim().trim_matches(['"', '`', '*']).to_string());
        }
    }
    let type_text =
        type_text.ok_or_else(|| ParseError::EmptySection(SECTION_ANSWER_TYPE.into()))?;
    let call_based = parse_answer_type(&type_text)?;

    // Input blocks; a function-name line may also precede the first block.
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut in_fence = false;
    for line in &inputs {
        if !in_fence && is_input_header(line) {
            blocks.push(Vec::new());
            continue;
        }
        if is_fence(line) {
            in_fence = !in_fence;
        }
        match blocks.last_mut() {
            Some(block) => block.push(line),
            None => {
                if let Some(name) = function_name_line(line) {
                    function_name.get_or_insert(name.to_string());
                }
            }
        }
    }
    let raw_inputs: Vec<String> = blocks
        .iter()
        .map(|b| strip_block(b))
        .filter(|s| !s.trim().is_empty())
        .collect();
    if raw_inputs.is_empty() {
        return Err(ParseError::NoInputs);
    }

    let answer_type = if call_based {
        let name = function_name.ok_or(ParseError::MissingFunctionName)?;
        if name.is_empty() {
            return Err(ParseError::MissingFunctionName);
        }
        if !is_identifier(&name) {
            return Err(ParseError::InvalidFunctionName(name));
        }
        AnswerType::CallBased {
            function_name: name,
        }
    } else {
        AnswerType::StandardInput
    };

    Ok(GenerationBundle {
        instruction,
        refined_code,
        answer_type,
        raw_inputs,
        raw_completion: raw.to_string(),
    })
}
