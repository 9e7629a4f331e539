//! Level-1 prompt construction and response parsing.
//!
//! Templates use `{name}` placeholders with `{{`/`}}` escapes. Known names:
//! `image_caption`, `image_ref`, `edit_types`, `max_subs`,
//! `pairs_per_image`, `examples`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Category;
use crate::ir::{EditType, Plan, Violation, MAX_SUBS};
use crate::parser::{parse_plan, ParseError};

pub const PAIRS_PER_IMAGE: usize = 4;

pub const DEFAULT_LEVEL1_TEMPLATE: &str = "\
You write image-editing requests for the attached photo.
Photo description: {image_caption}

Write {pairs_per_image} complex editing requests for this photo. Mix three kinds:
indirect requests that state a goal rather than an action, multi-object requests
that touch several objects, and multi-task requests that chain several edits.

Break each request into between 1 and {max_subs} simple steps. Every step names
one edit type and marks the object or region it changes with angle brackets.
A replace step marks two objects: the one removed, then the one that takes its place.
A style step may omit the marker. Allowed edit types: {edit_types}.

Reply with one block per request, separated by a blank line:
Complex: <the complex request>
Category: indirect | multi-object | multi-task
[edit type] step text with the <object> marked
...

Worked examples:
{examples}
";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_ref: String,
    #[serde(default)]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InContextExample {
    pub category: Category,
    pub complex_instruction: String,
    /// Plan text in bracket syntax.
    pub plan: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template is empty")]
    Empty,
    #[error("placeholder `{{{0}}}` has no value")]
    Unresolved(String),
    #[error("unknown placeholder `{{{0}}}`")]
    UnknownPlaceholder(String),
    #[error("unbalanced brace at byte {0}")]
    UnbalancedBrace(usize),
    #[error("in-context examples do not cover: {0:?}")]
    MissingExampleKinds(Vec<Category>),
}

/// Hand-written examples for the three complex-instruction kinds.
pub fn default_examples() -> Vec<InContextExample> {
    vec![
        InContextExample {
            category: Category::Indirect,
            complex_instruction: "Make this living room ready for a winter holiday".into(),
            plan: "[insertion] Add a decorated pine tree beside the <sofa>\n\
                   [local color change] Turn the <cushions> deep red\n\
                   [background] Show falling snow through the <window>"
                .into(),
        },
        InContextExample {
            category: Category::MultiObject,
            complex_instruction: "Swap the mug for a teapot and paint the chair blue".into(),
            plan: "[replace] Replace the <mug> with a <teapot>\n\
                   [local color change] Paint the <chair> blue"
                .into(),
        },
        InContextExample {
            category: Category::MultiTask,
            complex_instruction: "Clear the clutter off the desk, then give the photo a film look"
                .into(),
            plan: "[remove] Remove the <papers> from the desk\n\
                   [remove] Remove the <cables>\n\
                   [style] Give the photo a vintage film look"
                .into(),
        },
    ]
}

fn render_examples(examples: &[InContextExample]) -> String {
    examples
        .iter()
        .map(|e| {
            format!(
                "Complex: {}\nCategory: {}\n{}",
                e.complex_instruction,
                e.category.name(),
                e.plan.trim()
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders `template` for one image. Deterministic in its inputs.
pub fn build_level1_prompt(
    meta: &ImageMeta,
    template: &str,
    examples: &[InContextExample],
) -> Result<String, TemplateError> {
    if template.trim().is_empty() {
        return Err(TemplateError::Empty);
    }
    let missing: Vec<Category> = [
        Category::Indirect,
        Category::MultiObject,
        Category::MultiTask,
    ]
    .into_iter()
    .filter(|c| !examples.iter().any(|e| e.category == *c))
    .collect();
    if !missing.is_empty() {
        return Err(TemplateError::MissingExampleKinds(missing));
    }
    let edit_types = EditType::ALL
        .iter()
        .map(|t| t.name())
        .collect::<Vec<_>>()
        .join(", ");
    let lookup = |name: &str| -> Result<String, TemplateError> {
        match name {
            "image_caption" => meta
                .caption
                .clone()
                .filter(|c| !c.trim().is_empty())
                .ok_or_else(|| TemplateError::Unresolved(name.into())),
            "image_ref" => Ok(meta.image_ref.clone()),
            "edit_types" => Ok(edit_types.clone()),
            "max_subs" => Ok(MAX_SUBS.to_string()),
            "pairs_per_image" => Ok(PAIRS_PER_IMAGE.to_string()),
            "examples" => Ok(render_examples(examples)),
            other => Err(TemplateError::UnknownPlaceholder(other.into())),
        }
    };

    let mut out = String::with_capacity(template.len() + 512);
    let mut rest = template;
    let mut offset = 0;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let consumed = if tail.starts_with("{{") {
            out.push('{');
            2
        } else if tail.starts_with("}}") {
            out.push('}');
            2
        } else if tail.starts_with('}') {
            return Err(TemplateError::UnbalancedBrace(offset + pos));
        } else {
            let close = tail
                .find('}')
                .ok_or(TemplateError::UnbalancedBrace(offset + pos))?;
            let name = &tail[1..close];
            if name.contains('{') {
                return Err(TemplateError::UnbalancedBrace(offset + pos));
            }
            out.push_str(&lookup(name.trim())?);
            close + 1
        };
        rest = &tail[consumed..];
        offset += pos + consumed;
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub complex_instruction: String,
    pub category: Option<Category>,
    pub plan: Plan,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DropReason {
    #[error("complex instruction is empty")]
    EmptyInstruction,
    #[error("pair has no plan lines")]
    NoPlan,
    #[error(transparent)]
    Parse(ParseError),
    #[error("{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Violations(Vec<Violation>),
    #[error("more than {PAIRS_PER_IMAGE} valid pairs in reply")]
    Surplus,
}

impl DropReason {
    /// Short machine label; for validation failures, the first violation kind.
    pub fn kind(&self) -> &'static str {
        match self {
            DropReason::EmptyInstruction => "empty_instruction",
            DropReason::NoPlan => "no_plan",
            DropReason::Parse(_) => "parse_error",
            DropReason::Violations(v) => v.first().map(Violation::kind).unwrap_or("invalid"),
            DropReason::Surplus => "surplus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedPair {
    /// 1-based position of the block in the reply.
    pub ordinal: usize,
    pub complex_instruction: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Level1Parse {
    pub candidates: Vec<Candidate>,
    pub dropped: Vec<DroppedPair>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Level1Error {
    #[error("no valid instruction pairs in reply ({} dropped)", .dropped.len())]
    NoPairsFound { dropped: Vec<DroppedPair> },
}

fn complex_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:[-*•]\s*|\d+[.)]\s*)?\**\s*complex(?:\s+instruction)?\s*\**\s*:\s*\**\s*(.*?)\s*\**\s*$")
            .expect("valid regex")
    })
}

fn category_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*\**\s*(?:category|type)\s*\**\s*:\s*(.*?)\s*$").expect("valid regex")
    })
}

/// A line such as `Simple instructions:` that introduces the plan lines.
fn is_section_label(line: &str) -> bool {
    let t = line.trim().trim_matches('*').trim();
    t.ends_with(':') && !t.contains(['[', '<'])
}

struct Block {
    complex: String,
    category: Option<Category>,
    lines: Vec<String>,
}

fn split_blocks(text: &str) -> Vec<Block> {
    let mut blocks: Vec<Block> = Vec::new();
    for line in text.lines() {
        if let Some(c) = complex_header().captures(line) {
            blocks.push(Block {
                complex: c[1].trim().to_string(),
                category: None,
                lines: Vec::new(),
            });
            continue;
        }
        let Some(block) = blocks.last_mut() else {
            continue;
        };
        if let Some(c) = category_header().captures(line) {
            block.category = Category::parse(&c[1]);
        } else if !line.trim().is_empty() && !is_section_label(line) {
            block.lines.push(line.to_string());
        }
    }
    blocks
}

/// Extracts up to four valid (complex instruction, plan) pairs from a
/// generator reply. Invalid and surplus pairs are returned with reasons.
pub fn parse_level1_response(text: &str) -> Result<Level1Parse, Level1Error> {
    let mut out = Level1Parse::default();
    for (i, block) in split_blocks(text).into_iter().enumerate() {
        let ordinal = i + 1;
        let verdict = if block.complex.is_empty() {
            Err(DropReason::EmptyInstruction)
        } else if block.lines.is_empty() {
            Err(DropReason::NoPlan)
        } else {
            match parse_plan(&block.lines.join("\n"), &block.complex) {
                Ok(_) if out.candidates.len() >= PAIRS_PER_IMAGE => Err(DropReason::Surplus),
                Ok(plan) => Ok(plan),
                Err(ParseError::Validation(v)) => Err(DropReason::Violations(v)),
                Err(e) => Err(DropReason::Parse(e)),
            }
        };
        match verdict {
            Ok(plan) => out.candidates.push(Candidate {
                complex_instruction: block.complex,
                category: block.category,
                plan,
            }),
            Err(reason) => {
                log::info!("dropping pair {ordinal}: {reason}");
                out.dropped.push(DroppedPair {
                    ordinal,
                    complex_instruction: block.complex,
                    reason,
                });
            }
        }
    }
    if out.candidates.is_empty() {
        return Err(Level1Error::NoPairsFound {
            dropped: out.dropped,
        });
    }
    Ok(out)
}
