//! Dataset distribution report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Category, CategoryMix, DatasetRecord, PairKind};
use crate::ir::{EditType, MAX_SUBS};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Facet {
    pub count: usize,
    pub percent: f64,
}

fn facets<K: Ord + Clone>(counts: BTreeMap<K, usize>, total: usize) -> BTreeMap<K, Facet> {
    counts
        .into_iter()
        .map(|(k, count)| {
            let percent = if total == 0 {
                0.0
            } else {
                count as f64 * 100.0 / total as f64
            };
            (k, Facet { count, percent })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub schema: String,
    pub records: usize,
    pub subs: usize,
    pub per_source: BTreeMap<String, Facet>,
    /// Share of all sub-instructions, every edit type listed.
    pub per_edit_type: BTreeMap<EditType, Facet>,
    /// Records by number of sub-instructions, 1 through 5 always listed.
    pub subs_histogram: BTreeMap<usize, Facet>,
    pub pair_kind: BTreeMap<PairKind, Facet>,
    pub category: BTreeMap<String, Facet>,
}

pub fn dataset_stats(records: &[DatasetRecord]) -> DatasetStats {
    let mut per_source = BTreeMap::new();
    let mut per_type: BTreeMap<EditType, usize> = EditType::ALL.iter().map(|t| (*t, 0)).collect();
    let mut hist: BTreeMap<usize, usize> = (1..=MAX_SUBS).map(|n| (n, 0)).collect();
    let mut kinds: BTreeMap<PairKind, usize> =
        [(PairKind::ComplexSimple, 0), (PairKind::SimpleSimple, 0)].into();
    let mut cats: BTreeMap<String, usize> = BTreeMap::new();
    let mut subs = 0;
    for r in records {
        *per_source.entry(r.source_tag.clone()).or_insert(0) += 1;
        *hist.entry(r.subs.len()).or_insert(0) += 1;
        *kinds.entry(r.pair_kind).or_insert(0) += 1;
        let cat = r.category.map(Category::name).unwrap_or("unlabeled");
        *cats.entry(cat.to_string()).or_insert(0) += 1;
        for s in &r.subs {
            *per_type.entry(s.edit_type).or_insert(0) += 1;
            subs += 1;
        }
    }
    let n = records.len();
    DatasetStats {
        schema: "stats_v1".to_string(),
        records: n,
        subs,
        per_source: facets(per_source, n),
        per_edit_type: facets(per_type, subs),
        subs_histogram: facets(hist, n),
        pair_kind: facets(kinds, n),
        category: facets(cats, n),
    }
}

impl DatasetStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "records: {}   sub-instructions: {}",
            self.records, self.subs
        );
        let mut section = |title: &str, rows: Vec<(String, Facet)>| {
            let _ = writeln!(out, "\n{title}");
            let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max(8);
            for (k, f) in rows {
                let _ = writeln!(out, "  {k:<width$}  {:>8}  {:>6.1}%", f.count, f.percent);
            }
        };
        section(
            "edit type",
            self.per_edit_type
                .iter()
                .map(|(k, f)| (k.name().to_string(), *f))
                .collect(),
        );
        section(
            "sub-instructions per record",
            self.subs_histogram
                .iter()
                .map(|(k, f)| (k.to_string(), *f))
                .collect(),
        );
        section(
            "source",
            self.per_source
                .iter()
                .map(|(k, f)| (k.clone(), *f))
                .collect(),
        );
        section(
            "pair kind",
            self.pair_kind
                .iter()
                .map(|(k, f)| {
                    let name = match k {
                        PairKind::ComplexSimple => "complex_simple",
                        PairKind::SimpleSimple => "simple_simple",
                    };
                    (name.to_string(), *f)
                })
                .collect(),
        );
        section(
            "category",
            self.category.iter().map(|(k, f)| (k.clone(), *f)).collect(),
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    pub target: f64,
    pub actual: f64,
    pub count: usize,
}

/// Observed category shares against the benchmark targets. Unlabeled
/// records count toward the denominator only.
pub fn category_report(records: &[DatasetRecord], mix: &CategoryMix) -> Vec<CategoryRow> {
    let n = records.len();
    Category::ALL
        .iter()
        .map(|&c| {
            let count = records.iter().filter(|r| r.category == Some(c)).count();
            CategoryRow {
                category: c,
                target: mix.target(c),
                actual: if n == 0 { 0.0 } else { count as f64 / n as f64 },
                count,
            }
        })
        .collect()
}
