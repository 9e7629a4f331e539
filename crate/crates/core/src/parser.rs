//! Reader and writer for planner output text.
//!
//! Grammar, one sub-instruction per line (blank lines ignored):
//!
//! ```text
//! canonical := "[" edit_type "]" [ "<" f "," f "," f "," f ">" ] SP body
//! alternate := edit_type ":" SP body
//! body      := text with inline "<anchor>" tokens
//!            | text ";" SP "Anchor" ["s"] ":" SP "<anchor>" { SP "<anchor>" }
//! ```
//!
//! A `<...>` token holding exactly four comma-separated decimal literals is a
//! box; every other token is an anchor phrase. The reader also tolerates a
//! leading list marker (`-`, `*`, `1.`, `2)`), case and `_`/space variations in
//! the edit type, and a box token anywhere on the line. The writer always
//! emits the canonical bracket form.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::ir::{validate_plan, EditType, Plan, SubInstruction, Violation};
use crate::mask::{BoxError, NormBox};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineFault {
    #[error("unknown edit type `{0}`")]
    UnknownEditType(String),
    #[error("missing edit type")]
    MissingEditType,
    #[error("malformed box token: {0}")]
    MalformedBox(String),
    #[error("more than one box token")]
    MultipleBoxes,
    #[error("unbalanced angle brackets")]
    UnbalancedBrackets,
    #[error("unterminated `[` edit type")]
    UnterminatedEditType,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no plan lines found")]
    EmptyPlan,
    #[error("line {line}: {fault}")]
    Line { line: usize, fault: LineFault },
    #[error("plan failed validation: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("cannot serialize invalid plan: {}", join_violations(.0))]
    InvalidPlan(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Result of classifying one `<...>` token.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlToken {
    /// Raw coordinates in `[0, 1]`; ordering is checked by [`NormBox::new`].
    Box([f64; 4]),
    Anchor(String),
}

impl ControlToken {
    pub fn into_box(self) -> Option<Result<NormBox, BoxError>> {
        match self {
            ControlToken::Box(c) => Some(NormBox::try_from(c)),
            ControlToken::Anchor(_) => None,
        }
    }
}

fn decimal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)$").unwrap())
}

fn anchor_suffix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i);\s*anchors?\s*:\s*((?:<[^<>]*>\s*)+)$").unwrap())
}

fn list_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:[-*•]\s+|\d+[.)]\s+)").unwrap())
}

fn decimals(inner: &str) -> Option<[f64; 4]> {
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 4 || !parts.iter().all(|p| decimal_re().is_match(p)) {
        return None;
    }
    let mut out = [0.0; 4];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().ok()?;
    }
    Some(out)
}

/// True when `inner` (without delimiters) is four comma-separated decimals.
pub fn looks_like_box(inner: &str) -> bool {
    decimals(inner).is_some()
}

/// Classifies a `<...>` token. Total: anything that is not four in-range
/// decimals is an anchor.
pub fn parse_control_token(token: &str) -> ControlToken {
    let t = token.trim();
    let inner = t
        .strip_prefix('<')
        .and_then(|s| s.strip_suffix('>'))
        .unwrap_or(t);
    match decimals(inner) {
        Some(c) if c.iter().all(|v| (0.0..=1.0).contains(v)) => ControlToken::Box(c),
        _ => ControlToken::Anchor(inner.trim().to_string()),
    }
}

enum Segment<'a> {
    Text(&'a str),
    Token(&'a str),
}

fn segments(body: &str) -> Result<Vec<Segment<'_>>, LineFault> {
    let mut out = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        match (rest.find('<'), rest.find('>')) {
            (None, None) => {
                out.push(Segment::Text(rest));
                break;
            }
            (Some(open), close) => {
                if close.is_some_and(|c| c < open) {
                    return Err(LineFault::UnbalancedBrackets);
                }
                let after = &rest[open + 1..];
                let end = after.find('>').ok_or(LineFault::UnbalancedBrackets)?;
                if after[..end].contains('<') {
                    return Err(LineFault::UnbalancedBrackets);
                }
                if open > 0 {
                    out.push(Segment::Text(&rest[..open]));
                }
                out.push(Segment::Token(&after[..end]));
                rest = &after[end + 1..];
            }
            (None, Some(_)) => return Err(LineFault::UnbalancedBrackets),
        }
    }
    Ok(out)
}

fn box_from_token(inner: &str) -> Result<NormBox, LineFault> {
    let [x1, y1, x2, y2] = decimals(inner).expect("caller checked shape");
    let (bx, moved) = NormBox::clamped(x1, y1, x2, y2)
        .map_err(|e| LineFault::MalformedBox(format!("<{inner}>: {e}")))?;
    if moved {
        log::warn!("box <{inner}> clamped to {:?}", bx.coords());
    }
    Ok(bx)
}

fn split_edit_type(line: &str) -> Result<(EditType, &str), LineFault> {
    if let Some(rest) = line.strip_prefix('[') {
        let close = rest.find(']').ok_or(LineFault::UnterminatedEditType)?;
        let tag = &rest[..close];
        let edit_type = tag
            .parse()
            .map_err(|_| LineFault::UnknownEditType(tag.trim().to_string()))?;
        return Ok((edit_type, &rest[close + 1..]));
    }
    let colon = line.find(':').ok_or(LineFault::MissingEditType)?;
    let tag = &line[..colon];
    let edit_type = tag
        .parse()
        .map_err(|_| LineFault::UnknownEditType(tag.trim().to_string()))?;
    Ok((edit_type, &line[colon + 1..]))
}

/// Parses one non-blank line into an unindexed sub-instruction.
pub fn parse_line(line: &str) -> Result<SubInstruction, LineFault> {
    let line = line.trim();
    let line = list_marker_re()
        .find(line)
        .map_or(line, |m| &line[m.end()..]);
    let (edit_type, mut body) = split_edit_type(line)?;

    let mut suffix_anchors = Vec::new();
    if let Some(caps) = anchor_suffix_re().captures(body) {
        let whole = caps.get(0).unwrap();
        for seg in segments(caps.get(1).unwrap().as_str())? {
            if let Segment::Token(inner) = seg {
                suffix_anchors.push(inner.trim().to_string());
            }
        }
        body = &body[..whole.start()];
    }

    let mut text = String::new();
    let mut anchors = Vec::new();
    let mut bbox = None;
    let mut dropped_token = false;
    for seg in segments(body)? {
        match seg {
            Segment::Text(t) => {
                if dropped_token && text.ends_with(char::is_whitespace) {
                    text.push_str(t.trim_start());
                } else {
                    text.push_str(t);
                }
                dropped_token = false;
            }
            Segment::Token(inner) if looks_like_box(inner) => {
                if bbox.is_some() {
                    return Err(LineFault::MultipleBoxes);
                }
                bbox = Some(box_from_token(inner)?);
                dropped_token = true;
            }
            Segment::Token(inner) => {
                let phrase = inner.trim();
                text.push_str(phrase);
                anchors.push(phrase.to_string());
                dropped_token = false;
            }
        }
    }
    anchors.extend(suffix_anchors);
    Ok(SubInstruction {
        index: 0,
        edit_type,
        text: text.trim().to_string(),
        anchors,
        bbox,
    })
}

/// Parses planner output into a validated plan. Line order is preserved.
pub fn parse_plan(text: &str, source_instruction: &str) -> Result<Plan, ParseError> {
    let mut subs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sub = parse_line(line).map_err(|fault| ParseError::Line { line: i + 1, fault })?;
        subs.push(sub);
    }
    if subs.is_empty() {
        return Err(ParseError::EmptyPlan);
    }
    let plan = Plan::new(source_instruction, subs);
    let violations = validate_plan(&plan);
    if violations.is_empty() {
        Ok(plan)
    } else {
        Err(ParseError::Validation(violations))
    }
}

fn format_box(bx: &NormBox) -> String {
    let [a, b, c, d] = bx.coords();
    format!("<{a},{b},{c},{d}>")
}

/// Wraps each anchor at its next occurrence in `text`, in order.
fn inline_body(text: &str, anchors: &[String]) -> Option<String> {
    let mut out = String::with_capacity(text.len() + anchors.len() * 2);
    let mut cursor = 0;
    for anchor in anchors {
        let at = cursor + text[cursor..].find(anchor.as_str())?;
        out.push_str(&text[cursor..at]);
        out.push('<');
        out.push_str(anchor);
        out.push('>');
        cursor = at + anchor.len();
    }
    out.push_str(&text[cursor..]);
    Some(out)
}

fn suffix_body(text: &str, anchors: &[String]) -> String {
    let label = if anchors.len() == 1 {
        "Anchor"
    } else {
        "Anchors"
    };
    let tokens: Vec<String> = anchors.iter().map(|a| format!("<{a}>")).collect();
    format!("{text}; {label}: {}", tokens.join(" "))
}

fn render_line(sub: &SubInstruction) -> String {
    let head = match &sub.bbox {
        Some(bx) => format!("[{}]{}", sub.edit_type.name(), format_box(bx)),
        None => format!("[{}]", sub.edit_type.name()),
    };
    let reads_back =
        |line: &str| parse_line(line).is_ok_and(|p| p.text == sub.text && p.anchors == sub.anchors);
    if sub.anchors.is_empty() {
        return format!("{head} {}", sub.text);
    }
    if let Some(body) = inline_body(&sub.text, &sub.anchors) {
        let line = format!("{head} {body}");
        if reads_back(&line) {
            return line;
        }
    }
    format!("{head} {}", suffix_body(&sub.text, &sub.anchors))
}

/// Canonical bracket-syntax text, one line per sub-instruction.
pub fn serialize_plan(plan: &Plan) -> Result<String, ParseError> {
    let violations = validate_plan(plan);
    if !violations.is_empty() {
        return Err(ParseError::InvalidPlan(violations));
    }
    Ok(plan
        .subs
        .iter()
        .map(render_line)
        .collect::<Vec<_>>()
        .join("\n"))
}
