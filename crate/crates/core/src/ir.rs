//! Validated intermediate representation of a decomposed edit program.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::NormBox;

/// Most sub-instructions a single complex instruction may decompose into.
pub const MAX_SUBS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditType {
    Insertion,
    Remove,
    Replace,
    LocalTexture,
    LocalColorChange,
    ShapeChange,
    Background,
    Style,
}

impl EditType {
    pub const ALL: [EditType; 8] = [
        EditType::Insertion,
        EditType::Remove,
        EditType::Replace,
        EditType::LocalTexture,
        EditType::LocalColorChange,
        EditType::ShapeChange,
        EditType::Background,
        EditType::Style,
    ];

    /// Name as written inside plan text, e.g. `local texture`.
    pub fn name(self) -> &'static str {
        match self {
            EditType::Insertion => "insertion",
            EditType::Remove => "remove",
            EditType::Replace => "replace",
            EditType::LocalTexture => "local texture",
            EditType::LocalColorChange => "local color change",
            EditType::ShapeChange => "shape change",
            EditType::Background => "background",
            EditType::Style => "style",
        }
    }

    /// Name used in machine records, e.g. `local_texture`.
    pub fn tag(self) -> &'static str {
        match self {
            EditType::Insertion => "insertion",
            EditType::Remove => "remove",
            EditType::Replace => "replace",
            EditType::LocalTexture => "local_texture",
            EditType::LocalColorChange => "local_color_change",
            EditType::ShapeChange => "shape_change",
            EditType::Background => "background",
            EditType::Style => "style",
        }
    }

    /// How many anchors a sub-instruction of this type carries.
    pub fn arity(self) -> Arity {
        match self {
            EditType::Replace => Arity { min: 2, max: 2 },
            EditType::Style => Arity { min: 0, max: 1 },
            _ => Arity { min: 1, max: 1 },
        }
    }
}

impl fmt::Display for EditType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown edit type `{0}`")]
pub struct UnknownEditType(pub String);

impl FromStr for EditType {
    type Err = UnknownEditType;

    /// Case-insensitive; `_`, `-` and runs of whitespace are interchangeable.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s
            .trim()
            .to_lowercase()
            .replace(['_', '-'], " ")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        EditType::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| UnknownEditType(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arity {
    pub min: usize,
    pub max: usize,
}

impl Arity {
    pub fn admits(&self, n: usize) -> bool {
        (self.min..=self.max).contains(&n)
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.min == self.max {
            write!(f, "{}", self.min)
        } else {
            write!(f, "{}..={}", self.min, self.max)
        }
    }
}

/// One atomic edit. `text` holds the instruction with anchor markup removed;
/// `anchors` lists the grounded phrases in order of appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubInstruction {
    pub index: usize,
    pub edit_type: EditType,
    pub text: String,
    pub anchors: Vec<String>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<NormBox>,
}

impl SubInstruction {
    pub fn new(index: usize, edit_type: EditType, text: impl Into<String>) -> Self {
        Self {
            index,
            edit_type,
            text: text.into(),
            anchors: Vec::new(),
            bbox: None,
        }
    }

    pub fn with_anchors<I, S>(mut self, anchors: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.anchors = anchors.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_box(mut self, bbox: NormBox) -> Self {
        self.bbox = Some(bbox);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub source_instruction: String,
    pub subs: Vec<SubInstruction>,
}

impl Plan {
    /// Builds a plan, renumbering sub indices to 0..n-1.
    pub fn new(source_instruction: impl Into<String>, subs: Vec<SubInstruction>) -> Self {
        let subs = subs
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.index = i;
                s
            })
            .collect();
        Self {
            source_instruction: source_instruction.into(),
            subs,
        }
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn violations(&self) -> Vec<Violation> {
        validate_plan(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    #[error("plan has no sub-instructions")]
    NoSubs,
    #[error("plan has {0} sub-instructions, at most {max} allowed", max = MAX_SUBS)]
    TooManySubs(usize),
    #[error("sub at position {position} has index {found}")]
    IndexGap { position: usize, found: usize },
    #[error("sub {index}: {edit_type} takes {want} anchor(s), got {got}")]
    AnchorArity {
        index: usize,
        edit_type: EditType,
        got: usize,
        want: String,
    },
    #[error("sub {index}: instruction text is empty")]
    EmptyText { index: usize },
    #[error(
        "sub {index}: instruction text contains markup, line breaks or surrounding whitespace"
    )]
    MalformedText { index: usize },
    #[error("sub {index}: anchor {anchor:?} is empty, padded, or contains markup")]
    MalformedAnchor { index: usize, anchor: String },
    #[error("sub {index}: anchor {anchor:?} would read back as a box")]
    AmbiguousAnchor { index: usize, anchor: String },
    #[error("sub {index}: {edit_type} edits do not take a box")]
    UnexpectedBox { index: usize, edit_type: EditType },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::NoSubs => "no_subs",
            Violation::TooManySubs(_) => "too_many_subs",
            Violation::IndexGap { .. } => "index_gap",
            Violation::AnchorArity { .. } => "anchor_arity",
            Violation::EmptyText { .. } => "empty_text",
            Violation::MalformedText { .. } => "malformed_text",
            Violation::MalformedAnchor { .. } => "malformed_anchor",
            Violation::AmbiguousAnchor { .. } => "ambiguous_anchor",
            Violation::UnexpectedBox { .. } => "unexpected_box",
        }
    }
}

fn text_is_clean(s: &str) -> bool {
    s == s.trim() && !s.contains(['<', '>', '\n', '\r'])
}

/// Every well-formedness violation of `plan`; empty iff admissible.
pub fn validate_plan(plan: &Plan) -> Vec<Violation> {
    let mut out = Vec::new();
    match plan.subs.len() {
        0 => out.push(Violation::NoSubs),
        n if n > MAX_SUBS => out.push(Violation::TooManySubs(n)),
        _ => {}
    }
    for (position, sub) in plan.subs.iter().enumerate() {
        let index = sub.index;
        if index != position {
            out.push(Violation::IndexGap {
                position,
                found: index,
            });
        }
        let arity = sub.edit_type.arity();
        if !arity.admits(sub.anchors.len()) {
            out.push(Violation::AnchorArity {
                index,
                edit_type: sub.edit_type,
                got: sub.anchors.len(),
                want: arity.to_string(),
            });
        }
        if sub.text.trim().is_empty() {
            out.push(Violation::EmptyText { index });
        } else if !text_is_clean(&sub.text) {
            out.push(Violation::MalformedText { index });
        }
        for anchor in &sub.anchors {
            if anchor.is_empty() || !text_is_clean(anchor) {
                out.push(Violation::MalformedAnchor {
                    index,
                    anchor: anchor.clone(),
                });
            } else if crate::parser::looks_like_box(anchor) {
                out.push(Violation::AmbiguousAnchor {
                    index,
                    anchor: anchor.clone(),
                });
            }
        }
        if sub.bbox.is_some() && sub.edit_type != EditType::Insertion {
            out.push(Violation::UnexpectedBox {
                index,
                edit_type: sub.edit_type,
            });
        }
    }
    out
}
