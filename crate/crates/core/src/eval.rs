//! Evaluation metrics and benchmark reports.
//!
//! Pixel distances average over every channel value scaled to `[0, 1]`.
//! Localization takes the best of the first K predictions per sample; AP50
//! is the share of samples whose best IoU reaches the threshold.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{embed_remote, score_remote, BackendError, Embedder, Verifier, MAX_SCORE};
use crate::image::ImageBuffer;
use crate::ir::Plan;
use crate::mask::{box_iou, NormBox};
use crate::orchestrator::{execute_plan, Backends, ExecOptions, VerifyPolicy};
use crate::router::RoutingTable;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("embedding lengths differ: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("score {0} outside 0..=4")]
    OutOfRange(i64),
    #[error("no scores to normalize")]
    EmptyList,
    #[error("sample `{0}` has fewer predictions than K")]
    InsufficientPredictions(String),
    #[error("no samples")]
    EmptySamples,
    #[error("K must be at least 1")]
    InvalidK,
    #[error("IoU threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("benchmark dataset is empty")]
    EmptyDataset,
    #[error("all {0} benchmark rows failed")]
    AllRowsFailed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PixelDistance<T: Scalar = f64> {
    pub l1: T,
    pub l2: T,
}

/// Mean absolute and mean squared difference over all channel values,
/// each divided by 255 first.
pub fn pixel_distance<T: Scalar>(
    a: &ImageBuffer,
    b: &ImageBuffer,
) -> Result<PixelDistance<T>, EvalError> {
    if a.dims() != b.dims() {
        return Err(EvalError::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    let (mut abs, mut sq) = (0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x.abs_diff(y) as u64;
        abs += d;
        sq += d * d;
    }
    let n = a.data().len();
    if n == 0 {
        return Ok(PixelDistance {
            l1: T::zero(),
            l2: T::zero(),
        });
    }
    let n = T::of_count(n);
    let full = T::of(255.0);
    Ok(PixelDistance {
        l1: T::of_count(abs as usize) / (n * full),
        l2: T::of_count(sq as usize) / (n * full * full),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Similarity<T: Scalar = f64> {
    pub cosine: T,
    /// Set when either vector is zero; `cosine` is then 0.
    pub degenerate: bool,
}

pub fn embedding_similarity<T: Scalar>(va: &[T], vb: &[T]) -> Result<Similarity<T>, EvalError> {
    if va.len() != vb.len() {
        return Err(EvalError::DimMismatch {
            left: va.len(),
            right: vb.len(),
        });
    }
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in va.iter().zip(vb) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return Ok(Similarity {
            cosine: T::zero(),
            degenerate: true,
        });
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    Ok(Similarity {
        cosine: c.max(-T::one()).min(T::one()),
        degenerate: false,
    })
}

/// Mean score divided by the maximum score of 4.
pub fn normalize_mllm_score<T: Scalar>(scores: &[i64]) -> Result<T, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyList);
    }
    if let Some(&bad) = scores
        .iter()
        .find(|&&s| !(0..=MAX_SCORE as i64).contains(&s))
    {
        return Err(EvalError::OutOfRange(bad));
    }
    let sum: i64 = scores.iter().sum();
    Ok(T::of(sum as f64) / T::of_count(scores.len() * MAX_SCORE as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationConfig {
    pub k: usize,
    pub iou_threshold: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            k: 1,
            iou_threshold: 0.5,
        }
    }
}

impl LocalizationConfig {
    pub fn new(k: usize, iou_threshold: f64) -> Result<Self, EvalError> {
        if k == 0 {
            return Err(EvalError::InvalidK);
        }
        if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
            return Err(EvalError::InvalidThreshold(iou_threshold));
        }
        Ok(Self { k, iou_threshold })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LocalizationSample<T: Scalar = f64> {
    pub id: String,
    pub gt: NormBox<T>,
    pub preds: Vec<NormBox<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Localization<T: Scalar = f64> {
    pub k: usize,
    pub iou_at_k: T,
    pub ap50_at_k: T,
    pub samples: usize,
}

pub fn box_localization_at_k<T: Scalar>(
    samples: &[LocalizationSample<T>],
    cfg: &LocalizationConfig,
) -> Result<Localization<T>, EvalError> {
    if cfg.k == 0 {
        return Err(EvalError::InvalidK);
    }
    if samples.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    // Absorbs rounding so an IoU exactly at the threshold counts as a hit.
    let threshold = T::of(cfg.iou_threshold) - T::epsilon() * T::of(64.0);
    let mut iou_sum = T::zero();
    let mut hits = 0usize;
    for s in samples {
        if s.preds.len() < cfg.k {
            return Err(EvalError::InsufficientPredictions(s.id.clone()));
        }
        let best = s.preds[..cfg.k]
            .iter()
            .map(|p| box_iou(p, &s.gt))
            .fold(T::zero(), T::max);
        iou_sum = iou_sum + best;
        hits += (best >= threshold) as usize;
    }
    let n = T::of_count(samples.len());
    Ok(Localization {
        k: cfg.k,
        iou_at_k: iou_sum / n,
        ap50_at_k: T::of_count(hits) / n,
        samples: samples.len(),
    })
}

/// Text-to-image alignment scorer.
pub trait TextImageScorer: Send + Sync {
    fn similarity(&self, image: &ImageBuffer, text: &str) -> Result<f64, BackendError>;
}

/// Instruction sent to the verifier when it rates source/edit similarity.
pub const MLLM_IMAGE_SIMILARITY_INSTRUCTION: &str =
    "Keep the edited image as close to the source image as possible";

/// One benchmark item.
#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub id: String,
    pub image: ImageBuffer,
    pub plan: Plan,
    /// Text describing the intended result, for text-image similarity.
    pub target_caption: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub sim_im: bool,
    pub sim_out: bool,
    pub dino: bool,
    pub mllm_ti: bool,
    pub mllm_im: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            sim_im: true,
            sim_out: true,
            dino: true,
            mllm_ti: true,
            mllm_im: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub policy: VerifyPolicy,
    pub routing: RoutingTable,
    pub seed0: u64,
    pub options: ExecOptions,
}

/// Clients used by the benchmark. Missing optional scorers leave their
/// columns empty.
#[derive(Clone)]
pub struct EvalBackends {
    pub exec: Backends,
    pub embedder: Option<Arc<dyn Embedder>>,
    pub dino: Option<Arc<dyn Embedder>>,
    pub text_scorer: Option<Arc<dyn TextImageScorer>>,
    pub judge: Option<Arc<dyn Verifier>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub sim_im: Option<f64>,
    pub sim_out: Option<f64>,
    pub dino_like: Option<f64>,
    pub mllm_ti: Option<f64>,
    pub mllm_im: Option<f64>,
    /// Requested metrics that could not be computed, with reasons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_digest: Option<String>,
}

impl MetricRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregates {
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub sim_im: Option<f64>,
    pub sim_out: Option<f64>,
    pub dino_like: Option<f64>,
    pub mllm_ti: Option<f64>,
    pub mllm_im: Option<f64>,
    pub rows_ok: usize,
    pub rows_failed: usize,
}

fn mean_of(rows: &[MetricRow], f: impl Fn(&MetricRow) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter_map(f).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

impl Aggregates {
    /// Means over the rows where each metric is present.
    pub fn from_rows(rows: &[MetricRow]) -> Self {
        Self {
            l1: mean_of(rows, |r| r.l1),
            l2: mean_of(rows, |r| r.l2),
            sim_im: mean_of(rows, |r| r.sim_im),
            sim_out: mean_of(rows, |r| r.sim_out),
            dino_like: mean_of(rows, |r| r.dino_like),
            mllm_ti: mean_of(rows, |r| r.mllm_ti),
            mllm_im: mean_of(rows, |r| r.mllm_im),
            rows_ok: rows.iter().filter(|r| !r.failed()).count(),
            rows_failed: rows.iter().filter(|r| r.failed()).count(),
        }
    }
}

pub const REPORT_SCHEMA: &str = "report_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: String,
    pub fingerprint: String,
    pub notes: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub aggregate: Aggregates,
}

/// SHA-256 of the JSON form of `value`.
pub fn config_fingerprint<S: Serialize + ?Sized>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>, fingerprint: String) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            fingerprint,
            notes: vec![
                "l1/l2: mean over all channel values scaled to [0,1]".into(),
                "mllm: mean score / 4".into(),
            ],
            aggregate: Aggregates::from_rows(&rows),
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aggregate table with the columns L1, CLIP_im, CLIP_out, DINO,
    /// MLLM_ti, MLLM_im.
    pub fn render_table(&self) -> String {
        let a = &self.aggregate;
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "", "L1", "CLIP_im", "CLIP_out", "DINO", "MLLM_ti", "MLLM_im"
        );
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "mean",
            cell(a.l1),
            cell(a.sim_im),
            cell(a.sim_out),
            cell(a.dino_like),
            cell(a.mllm_ti),
            cell(a.mllm_im)
        );
        let _ = writeln!(
            out,
            "rows: {} ok, {} failed   fingerprint: {}",
            a.rows_ok,
            a.rows_failed,
            &self.fingerprint[..12.min(self.fingerprint.len())]
        );
        out
    }
}

fn optional_metric(
    enabled: bool,
    name: &str,
    missing: &mut Vec<String>,
    run: impl FnOnce() -> Option<Result<f64, String>>,
) -> Option<f64> {
    if !enabled {
        return None;
    }
    match run() {
        Some(Ok(v)) => Some(v),
        Some(Err(e)) => {
            missing.push(format!("{name}: {e}"));
            None
        }
        None => {
            missing.push(format!("{name}: no backend configured"));
            None
        }
    }
}

fn cosine_of(embedder: &dyn Embedder, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, String> {
    let va = embed_remote(embedder, a).map_err(|e| e.to_string())?;
    let vb = embed_remote(embedder, b).map_err(|e| e.to_string())?;
    let va: Vec<f64> = va.into_iter().map(f64::from).collect();
    let vb: Vec<f64> = vb.into_iter().map(f64::from).collect();
    embedding_similarity(&va, &vb)
        .map(|s| s.cosine)
        .map_err(|e| e.to_string())
}

fn judged(
    judge: &dyn Verifier,
    a: &ImageBuffer,
    b: &ImageBuffer,
    text: &str,
) -> Result<f64, String> {
    let s = score_remote(judge, a, b, text).map_err(|e| e.to_string())?;
    normalize_mllm_score(&[s.score() as i64]).map_err(|e| e.to_string())
}

/// Executes one case and computes the configured metrics. Execution
/// failures produce a row with `error` set.
pub fn evaluate_case(
    case: &BenchmarkCase,
    pipeline: &PipelineConfig,
    metrics: &MetricsConfig,
    backends: &EvalBackends,
) -> MetricRow {
    let mut row = MetricRow {
        id: case.id.clone(),
        ..MetricRow::default()
    };
    let edited = match execute_plan(
        &case.image,
        &case.plan,
        &pipeline.policy,
        &pipeline.routing,
        pipeline.seed0,
        &backends.exec,
        &pipeline.options,
    ) {
        Ok((img, _)) => img,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.output_digest = Some(edited.digest());
    let d: PixelDistance<f64> = pixel_distance(&case.image, &edited).expect("executor keeps dims");
    row.l1 = Some(d.l1);
    row.l2 = Some(d.l2);
    let src = &case.image;
    let mut missing = Vec::new();
    row.sim_im = optional_metric(metrics.sim_im, "sim_im", &mut missing, || {
        backends
            .embedder
            .as_deref()
            .map(|e| cosine_of(e, src, &edited))
    });
    row.dino_like = optional_metric(metrics.dino, "dino_like", &mut missing, || {
        backends.dino.as_deref().map(|e| cosine_of(e, src, &edited))
    });
    row.sim_out = optional_metric(metrics.sim_out, "sim_out", &mut missing, || {
        let text = case
            .target_caption
            .as_deref()
            .unwrap_or(&case.plan.source_instruction);
        backends
            .text_scorer
            .as_deref()
            .map(|s| s.similarity(&edited, text).map_err(|e| e.to_string()))
    });
    row.mllm_ti = optional_metric(metrics.mllm_ti, "mllm_ti", &mut missing, || {
        backends
            .judge
            .as_deref()
            .map(|j| judged(j, src, &edited, &case.plan.source_instruction))
    });
    row.mllm_im = optional_metric(metrics.mllm_im, "mllm_im", &mut missing, || {
        backends
            .judge
            .as_deref()
            .map(|j| judged(j, src, &edited, MLLM_IMAGE_SIMILARITY_INSTRUCTION))
    });
    row.missing = missing;
    row
}

/// Runs every case and assembles the report. Individual failures are kept
/// as rows; the run aborts only when every row fails.
pub fn run_benchmark(
    dataset: &[BenchmarkCase],
    pipeline: &PipelineConfig,
    metrics: &MetricsConfig,
    backends: &EvalBackends,
) -> Result<MetricReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let rows: Vec<MetricRow> = dataset
        .iter()
        .map(|c| evaluate_case(c, pipeline, metrics, backends))
        .collect();
    finish_report(rows, pipeline, metrics)
}

/// Builds the report from rows computed elsewhere, e.g. in parallel.
pub fn finish_report(
    rows: Vec<MetricRow>,
    pipeline: &PipelineConfig,
    metrics: &MetricsConfig,
) -> Result<MetricReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if rows.iter().all(MetricRow::failed) {
        return Err(EvalError::AllRowsFailed(rows.len()));
    }
    let fingerprint = config_fingerprint(&(pipeline, metrics));
    Ok(MetricReport::from_rows(rows, fingerprint))
}
