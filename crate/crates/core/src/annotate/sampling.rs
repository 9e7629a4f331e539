//! Source sampling, simple-pair mixing and benchmark category targets.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Category, DatasetRecord, PairKind};

/// Training mixture in draw order. The tenth weight has no named corpus and
/// is kept as a placeholder so the ratio stays intact.
pub const DEFAULT_SOURCES: [(&str, u32); 10] = [
    ("semantic_segm", 1),
    ("refcoco_gcg", 3),
    ("psg_gcg", 3),
    ("flickr_gcg", 3),
    ("grandf_gcg", 1),
    ("mulan_gcg", 3),
    ("unnamed_source", 3),
    ("instructpix2pix_gcg", 9),
    ("ultraedit_gcg", 9),
    ("seedx_gcg", 9),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("no sources configured")]
    Empty,
    #[error("source `{0}` has weight 0")]
    ZeroWeight(String),
    #[error("source `{0}` listed twice")]
    DuplicateTag(String),
    #[error("fraction {value} for `{tag}` outside [0, 1]")]
    Fraction { tag: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceWeight {
    pub tag: String,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SourceWeight>", into = "Vec<SourceWeight>")]
pub struct SourceWeights {
    entries: Vec<SourceWeight>,
}

impl SourceWeights {
    pub fn new<S: Into<String>>(
        entries: impl IntoIterator<Item = (S, u32)>,
    ) -> Result<Self, WeightsError> {
        let entries: Vec<SourceWeight> = entries
            .into_iter()
            .map(|(tag, weight)| SourceWeight {
                tag: tag.into(),
                weight,
            })
            .collect();
        Self::try_from(entries)
    }

    pub fn entries(&self) -> &[SourceWeight] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.weight as u64).sum()
    }

    /// `weight / total` per tag, in configured order.
    pub fn expected_frequencies(&self) -> Vec<(String, f64)> {
        let total = self.total() as f64;
        self.entries
            .iter()
            .map(|e| (e.tag.clone(), e.weight as f64 / total))
            .collect()
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.entries.iter().any(|e| e.tag == tag)
    }
}

impl Default for SourceWeights {
    fn default() -> Self {
        Self::new(DEFAULT_SOURCES).expect("default weights are valid")
    }
}

impl TryFrom<Vec<SourceWeight>> for SourceWeights {
    type Error = WeightsError;
    fn try_from(entries: Vec<SourceWeight>) -> Result<Self, WeightsError> {
        if entries.is_empty() {
            return Err(WeightsError::Empty);
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if e.weight == 0 {
                return Err(WeightsError::ZeroWeight(e.tag.clone()));
            }
            if !seen.insert(e.tag.as_str()) {
                return Err(WeightsError::DuplicateTag(e.tag.clone()));
            }
        }
        Ok(Self { entries })
    }
}

impl From<SourceWeights> for Vec<SourceWeight> {
    fn from(w: SourceWeights) -> Self {
        w.entries
    }
}

/// Categorical sampler over source tags.
#[derive(Debug, Clone)]
pub struct SourceSampler {
    tags: Vec<String>,
    dist: WeightedIndex<u32>,
}

impl SourceSampler {
    pub fn new(weights: &SourceWeights) -> Self {
        let dist = WeightedIndex::new(weights.entries.iter().map(|e| e.weight))
            .expect("validated weights");
        Self {
            tags: weights.entries.iter().map(|e| e.tag.clone()).collect(),
            dist,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.tags[self.dist.sample(rng)]
    }
}

/// One draw from `weights`. Build a [`SourceSampler`] for repeated draws.
pub fn sample_source<'w, R: Rng + ?Sized>(weights: &'w SourceWeights, rng: &mut R) -> &'w str {
    let dist =
        WeightedIndex::new(weights.entries.iter().map(|e| e.weight)).expect("validated weights");
    &weights.entries[dist.sample(rng)].tag
}

/// Per-source probability of turning a record into a simple-simple pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleFractions {
    #[serde(default)]
    pub default: f64,
    #[serde(default)]
    pub per_source: BTreeMap<String, f64>,
}

impl Default for SimpleFractions {
    fn default() -> Self {
        Self {
            default: 0.0,
            per_source: BTreeMap::from([
                ("instructpix2pix_gcg".to_string(), 0.40),
                ("mulan_gcg".to_string(), 1.0),
            ]),
        }
    }
}

impl SimpleFractions {
    pub fn uniform(fraction: f64) -> Self {
        Self {
            default: fraction,
            per_source: BTreeMap::new(),
        }
    }

    pub fn fraction(&self, source_tag: &str) -> f64 {
        self.per_source
            .get(source_tag)
            .copied()
            .unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        let bad = |tag: &str, value: f64| WeightsError::Fraction {
            tag: tag.to_string(),
            value,
        };
        if !(0.0..=1.0).contains(&self.default) {
            return Err(bad("default", self.default));
        }
        for (tag, &v) in &self.per_source {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(tag, v));
            }
        }
        Ok(())
    }
}

/// Tags each complex-simple record as simple-simple with its source's
/// probability, one Bernoulli draw per eligible record.
///
/// A simple-simple record keeps its first sub-instruction and uses that
/// sub's text as the input instruction, so the pair maps a simple request
/// to itself. Its id is recomputed. Apply before Level 2.
pub fn mix_simple_pairs<R: Rng + ?Sized>(
    records: Vec<DatasetRecord>,
    fractions: &SimpleFractions,
    rng: &mut R,
) -> Vec<DatasetRecord> {
    records
        .into_iter()
        .map(|mut r| {
            if r.pair_kind != PairKind::ComplexSimple || r.subs.is_empty() {
                return r;
            }
            let p = fractions.fraction(&r.source_tag).clamp(0.0, 1.0);
            if rng.gen_bool(p) {
                r.subs.truncate(1);
                r.complex_instruction = r.subs[0].text.clone();
                r.pair_kind = PairKind::SimpleSimple;
                r.record_id = r.content_id();
            }
            r
        })
        .collect()
}

/// Target shares of complex-instruction kinds for benchmark building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMix {
    pub targets: BTreeMap<Category, f64>,
}

impl Default for CategoryMix {
    fn default() -> Self {
        Self {
            targets: BTreeMap::from([
                (Category::General, 0.50),
                (Category::Indirect, 0.30),
                (Category::MultiObject, 0.15),
                (Category::MultiTask, 0.05),
            ]),
        }
    }
}

impl CategoryMix {
    pub fn target(&self, c: Category) -> f64 {
        self.targets.get(&c).copied().unwrap_or(0.0)
    }
}

/// Draws the category to request for the next benchmark item.
pub fn sample_category<R: Rng + ?Sized>(mix: &CategoryMix, rng: &mut R) -> Category {
    let cats: Vec<Category> = mix.targets.keys().copied().collect();
    let dist =
        WeightedIndex::new(mix.targets.values().copied()).expect("positive category targets");
    cats[dist.sample(rng)]
}
