//! Three-level dataset factory: instruction pairs, refined masks, insertion
//! boxes, plus source sampling, simple-pair mixing, persistence and stats.

mod jsonl;
mod levels;
mod prompt;
mod sampling;
mod stats;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::BackendError;
use crate::ir::{validate_plan, EditType, Plan, SubInstruction, Violation};
use crate::mask::NormBox;
use crate::refine::RefineError;

pub use jsonl::{append_jsonl, read_records, JsonlError, RecordWriter};
pub use levels::{
    annotate_level2, parse_box_reply, pseudolabel_level3, BoxParseError, DirMaskStore, Level2Input,
    MaskStore, MemoryMaskStore, StoreError,
};
pub use prompt::{
    build_level1_prompt, default_examples, parse_level1_response, Candidate, DropReason,
    DroppedPair, ImageMeta, InContextExample, Level1Error, Level1Parse, TemplateError,
    DEFAULT_LEVEL1_TEMPLATE, PAIRS_PER_IMAGE,
};
pub use sampling::{
    mix_simple_pairs, sample_category, sample_source, CategoryMix, SimpleFractions, SourceSampler,
    SourceWeights, WeightsError, DEFAULT_SOURCES,
};
pub use stats::{category_report, dataset_stats, CategoryRow, DatasetStats, Facet};

pub const RECORD_SCHEMA: &str = "compie_record_v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    ComplexSimple,
    SimpleSimple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Val,
}

/// Complex-instruction flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    General,
    Indirect,
    MultiObject,
    MultiTask,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::General,
        Category::Indirect,
        Category::MultiObject,
        Category::MultiTask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::General => "general",
            Category::Indirect => "indirect",
            Category::MultiObject => "multi-object",
            Category::MultiTask => "multi-task",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        match norm.as_str() {
            "general" => Some(Category::General),
            "indirect" => Some(Category::Indirect),
            "multiobject" => Some(Category::MultiObject),
            "multitask" => Some(Category::MultiTask),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSub {
    pub edit_type: EditType,
    pub text: String,
    #[serde(default)]
    pub anchors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<NormBox>,
}

impl From<&SubInstruction> for RecordSub {
    fn from(s: &SubInstruction) -> Self {
        Self {
            edit_type: s.edit_type,
            text: s.text.clone(),
            anchors: s.anchors.clone(),
            mask_ref: None,
            bbox: s.bbox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema: String,
    pub record_id: String,
    pub source_tag: String,
    pub image_ref: String,
    pub complex_instruction: String,
    pub subs: Vec<RecordSub>,
    pub pair_kind: PairKind,
    pub split: Split,
    /// Highest annotation level completed (1, 2 or 3).
    pub level: u8,
    #[serde(default)]
    pub approved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

#[derive(Serialize)]
struct IdSub<'a> {
    edit_type: EditType,
    text: &'a str,
    anchors: &'a [String],
}

#[derive(Serialize)]
struct IdPayload<'a> {
    source_tag: &'a str,
    image_ref: &'a str,
    complex_instruction: &'a str,
    pair_kind: PairKind,
    subs: Vec<IdSub<'a>>,
}

impl DatasetRecord {
    /// Level-1 record with a content-derived id.
    pub fn from_plan(
        source_tag: impl Into<String>,
        image_ref: impl Into<String>,
        complex_instruction: impl Into<String>,
        plan: &Plan,
    ) -> Self {
        let mut rec = Self {
            schema: RECORD_SCHEMA.to_string(),
            record_id: String::new(),
            source_tag: source_tag.into(),
            image_ref: image_ref.into(),
            complex_instruction: complex_instruction.into(),
            subs: plan.subs.iter().map(RecordSub::from).collect(),
            pair_kind: PairKind::ComplexSimple,
            split: Split::Train,
            level: 1,
            approved: false,
            category: None,
        };
        rec.record_id = rec.content_id();
        rec
    }

    pub fn with_category(mut self, category: Option<Category>) -> Self {
        self.category = category;
        self
    }

    /// Hash over the level-1 content. Mask refs, boxes, split and level are
    /// excluded so the id survives later annotation.
    pub fn content_id(&self) -> String {
        let payload = IdPayload {
            source_tag: &self.source_tag,
            image_ref: &self.image_ref,
            complex_instruction: &self.complex_instruction,
            pair_kind: self.pair_kind,
            subs: self
                .subs
                .iter()
                .map(|s| IdSub {
                    edit_type: s.edit_type,
                    text: &s.text,
                    anchors: &s.anchors,
                })
                .collect(),
        };
        let bytes = serde_json::to_vec(&payload).expect("id payload serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }

    pub fn plan(&self) -> Plan {
        Plan::new(
            self.complex_instruction.clone(),
            self.subs
                .iter()
                .enumerate()
                .map(|(i, s)| SubInstruction {
                    index: i,
                    edit_type: s.edit_type,
                    text: s.text.clone(),
                    anchors: s.anchors.clone(),
                    bbox: s.bbox,
                })
                .collect(),
        )
    }

    /// Deterministic split from the record id.
    pub fn assign_split(&mut self, val_fraction: f64) {
        let head =
            u64::from_str_radix(&self.record_id[..16.min(self.record_id.len())], 16).unwrap_or(0);
        let u = head as f64 / u64::MAX as f64;
        self.split = if u < val_fraction {
            Split::Val
        } else {
            Split::Train
        };
    }

    /// Problems that would stop this record from being emitted at its level.
    pub fn issues(&self) -> Vec<RecordIssue> {
        let mut out: Vec<RecordIssue> = validate_plan(&self.plan())
            .into_iter()
            .map(RecordIssue::Plan)
            .collect();
        if self.level >= 2 {
            for (i, s) in self.subs.iter().enumerate() {
                if s.mask_ref.is_none() {
                    out.push(RecordIssue::MissingMaskRef { index: i });
                }
            }
        }
        if self.level >= 3 {
            for (i, s) in self.subs.iter().enumerate() {
                if s.edit_type == EditType::Insertion && s.bbox.is_none() {
                    out.push(RecordIssue::MissingBox { index: i });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordIssue {
    #[error(transparent)]
    Plan(Violation),
    #[error("sub {index} has no mask reference")]
    MissingMaskRef { index: usize },
    #[error("insertion sub {index} has no box")]
    MissingBox { index: usize },
}

/// Why a record was quarantined.
#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("record is at level {got}, level {need} required")]
    LevelOrder { need: u8, got: u8 },
    #[error("record failed validation: {0:?}")]
    Invalid(Vec<RecordIssue>),
    #[error("sub {index}: segmentation failed: {source}")]
    Segment {
        index: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error("sub {index}: planner request failed: {source}")]
    Planner {
        index: usize,
        #[source]
        source: BackendError,
    },
    #[error("sub {index}: {source}")]
    BoxParse {
        index: usize,
        #[source]
        source: BoxParseError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A record that failed a level, kept with its reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub stage: String,
    pub reason: String,
    pub record: DatasetRecord,
}

impl QuarantineEntry {
    pub fn new(stage: &str, err: &AnnotateError, record: DatasetRecord) -> Self {
        Self {
            stage: stage.to_string(),
            reason: err.to_string(),
            record,
        }
    }
}
