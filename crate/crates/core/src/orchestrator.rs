//! Step-by-step plan execution with verification and retry.
//!
//! Each step segments its anchors on the current intermediate image, refines
//! the control region, routes to an editor and, when verification is on,
//! re-generates with a fresh seed until the verifier score reaches the
//! threshold or the retry budget runs out. The accepted output feeds the next
//! step.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::hash::derive_seed;
use crate::backend::{
    edit_remote, score_remote, segment_remote, BackendError, EditRequest, Editor, EditorRegistry,
    Segmenter, Verifier, VerifierScore, MAX_SCORE,
};
use crate::image::ImageBuffer;
use crate::ir::{validate_plan, EditType, Plan, SubInstruction, Violation};
use crate::mask::full_mask;
use crate::refine::{refine_control, AnchorMasks, ControlInput, RefineError, RefineParams};
use crate::router::{route_edit, RouteError, RoutingTable};

pub const TRACE_SCHEMA: &str = "trace_v1";
pub const DEFAULT_THRESHOLD: u8 = 3;
pub const DEFAULT_MAX_RETRIES: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyPolicy {
    pub enabled: bool,
    pub threshold: u8,
    pub max_retries: u32,
}

impl Default for VerifyPolicy {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: DEFAULT_THRESHOLD,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("verify threshold {0} outside 0..=4")]
pub struct PolicyError(pub u8);

impl VerifyPolicy {
    pub fn new(enabled: bool, threshold: u8, max_retries: u32) -> Result<Self, PolicyError> {
        if threshold > MAX_SCORE {
            return Err(PolicyError(threshold));
        }
        Ok(Self {
            enabled,
            threshold,
            max_retries,
        })
    }

    pub fn enabled(threshold: u8, max_retries: u32) -> Result<Self, PolicyError> {
        Self::new(true, threshold, max_retries)
    }

    pub fn max_attempts(&self) -> usize {
        if self.enabled {
            1 + self.max_retries as usize
        } else {
            1
        }
    }
}

/// Which control region the editor receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Per-edit-type refined region.
    #[default]
    Refined,
    /// Whole image for every step; no segmentation.
    FullImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<VerifierScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub sub: SubInstruction,
    pub control: ControlInput,
    pub backend_id: String,
    pub attempts: Vec<Attempt>,
    pub accepted_attempt: usize,
    pub output_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub schema: String,
    pub plan: Plan,
    pub seed0: u64,
    pub policy: VerifyPolicy,
    pub region_mode: RegionMode,
    pub source_image_digest: String,
    pub steps: Vec<StepTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_image_digest: Option<String>,
    /// Milliseconds per step. Not part of the reproducible outcome.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wall_times_ms: Vec<f64>,
}

impl ExecutionTrace {
    /// Copy with timing data removed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        Self {
            wall_times_ms: Vec::new(),
            ..self.clone()
        }
    }

    pub fn is_complete(&self) -> bool {
        self.steps.len() == self.plan.subs.len() && self.final_image_digest.is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("segmentation failed: {0}")]
    Segment(#[source] BackendError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("edit request invalid: {0}")]
    Request(#[source] BackendError),
    #[error("all {} attempt(s) failed: {}", .0.len(), .0.join("; "))]
    AllAttemptsFailed(Vec<String>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("plan is not executable: {0:?}")]
    InvalidPlan(Vec<Violation>),
    #[error("verification enabled but no verifier configured")]
    NoVerifier,
    #[error("step {index} failed: {cause}")]
    StepFailed {
        index: usize,
        cause: StepError,
        trace: Box<ExecutionTrace>,
    },
}

impl ExecError {
    pub fn partial_trace(&self) -> Option<&ExecutionTrace> {
        match self {
            ExecError::StepFailed { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// Service clients used during execution.
#[derive(Clone)]
pub struct Backends {
    pub segmenter: Arc<dyn Segmenter>,
    pub editors: EditorRegistry,
    pub verifier: Option<Arc<dyn Verifier>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExecOptions {
    pub refine: RefineParams,
    pub region_mode: RegionMode,
}

/// Result of the attempt loop for one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub attempts: Vec<Attempt>,
    pub accepted_attempt: usize,
    pub image: ImageBuffer,
}

/// Runs the edit/verify/retry loop for one step.
///
/// Accepts the first attempt scoring at least `policy.threshold`. When the
/// budget is exhausted, keeps the highest-scoring successful attempt (ties go
/// to the earliest; an unscored success ranks below any score). Editor and
/// verifier errors consume an attempt.
#[allow(clippy::too_many_arguments)]
pub fn execute_step_with_verification(
    image: &ImageBuffer,
    sub: &SubInstruction,
    control: &ControlInput,
    backend_id: &str,
    policy: &VerifyPolicy,
    seeds: impl Fn(usize) -> u64,
    editor: &dyn Editor,
    verifier: Option<&dyn Verifier>,
) -> Result<StepOutcome, StepError> {
    let verifier = if policy.enabled { verifier } else { None };
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut candidates: Vec<(usize, Option<u8>, ImageBuffer)> = Vec::new();

    for k in 0..policy.max_attempts() {
        let seed = seeds(k);
        let req = EditRequest::new(
            image.clone(),
            sub.text.clone(),
            control.clone(),
            seed,
            backend_id,
        )
        .map_err(StepError::Request)?;
        let out = match edit_remote(editor, &req) {
            Ok(out) => out,
            Err(e) => {
                log::warn!("step {} attempt {k}: editor error: {e}", sub.index);
                attempts.push(Attempt {
                    seed,
                    score: None,
                    error: Some(format!("edit: {e}")),
                    output_digest: None,
                });
                continue;
            }
        };
        let digest = out.digest();
        let Some(verifier) = verifier else {
            attempts.push(Attempt {
                seed,
                score: None,
                error: None,
                output_digest: Some(digest),
            });
            return Ok(StepOutcome {
                accepted_attempt: attempts.len() - 1,
                attempts,
                image: out,
            });
        };
        match score_remote(verifier, image, &out, &sub.text) {
            Ok(score) => {
                let value = score.score();
                attempts.push(Attempt {
                    seed,
                    score: Some(score),
                    error: None,
                    output_digest: Some(digest),
                });
                if value >= policy.threshold {
                    return Ok(StepOutcome {
                        accepted_attempt: k,
                        attempts,
                        image: out,
                    });
                }
                candidates.push((k, Some(value), out));
            }
            Err(e) => {
                log::warn!("step {} attempt {k}: verifier error: {e}", sub.index);
                attempts.push(Attempt {
                    seed,
                    score: None,
                    error: Some(format!("score: {e}")),
                    output_digest: Some(digest),
                });
                candidates.push((k, None, out));
            }
        }
    }

    // Highest score wins; `max_by_key` keeps the last maximum, so reverse to
    // keep the earliest.
    match candidates
        .into_iter()
        .rev()
        .max_by_key(|(_, score, _)| *score)
    {
        Some((k, _, image)) => Ok(StepOutcome {
            attempts,
            accepted_attempt: k,
            image,
        }),
        None => Err(StepError::AllAttemptsFailed(
            attempts.into_iter().filter_map(|a| a.error).collect(),
        )),
    }
}

fn stage1_masks(
    segmenter: &dyn Segmenter,
    image: &ImageBuffer,
    sub: &SubInstruction,
) -> Result<AnchorMasks, StepError> {
    if sub.edit_type == EditType::Style {
        return Ok(AnchorMasks::default());
    }
    let masks = sub
        .anchors
        .iter()
        .map(|a| segment_remote(segmenter, image, a))
        .collect::<Result<Vec<_>, _>>()
        .map_err(StepError::Segment)?;
    Ok(AnchorMasks::new(masks))
}

/// Executes `plan` on `image` in order. Attempt `k` of step `i` uses seed
/// `H(seed0, i, k)`.
pub fn execute_plan(
    image: &ImageBuffer,
    plan: &Plan,
    policy: &VerifyPolicy,
    table: &RoutingTable,
    seed0: u64,
    backends: &Backends,
    options: &ExecOptions,
) -> Result<(ImageBuffer, ExecutionTrace), ExecError> {
    let violations = validate_plan(plan);
    if !violations.is_empty() {
        return Err(ExecError::InvalidPlan(violations));
    }
    if policy.enabled && backends.verifier.is_none() {
        return Err(ExecError::NoVerifier);
    }
    let mut trace = ExecutionTrace {
        schema: TRACE_SCHEMA.to_string(),
        plan: plan.clone(),
        seed0,
        policy: *policy,
        region_mode: options.region_mode,
        source_image_digest: image.digest(),
        steps: Vec::with_capacity(plan.len()),
        final_image_digest: None,
        wall_times_ms: Vec::with_capacity(plan.len()),
    };
    let mut current = image.clone();

    for (i, sub) in plan.subs.iter().enumerate() {
        let started = Instant::now();
        let step = (|| -> Result<(StepTrace, ImageBuffer), StepError> {
            let control = match options.region_mode {
                RegionMode::Refined => {
                    let masks = stage1_masks(backends.segmenter.as_ref(), &current, sub)?;
                    refine_control(sub, &masks, current.dims(), &options.refine)?
                }
                RegionMode::FullImage => ControlInput::from_mask(
                    full_mask(current.width(), current.height()).map_err(RefineError::from)?,
                ),
            };
            let backend_id = route_edit(sub.edit_type, table, |id| backends.editors.contains(id))?;
            let editor = backends.editors.get(backend_id).expect("route checked");
            let outcome = execute_step_with_verification(
                &current,
                sub,
                &control,
                backend_id,
                policy,
                |k| derive_seed(seed0, i, k),
                editor.as_ref(),
                backends.verifier.as_deref(),
            )?;
            let st = StepTrace {
                sub: sub.clone(),
                control,
                backend_id: backend_id.to_string(),
                attempts: outcome.attempts,
                accepted_attempt: outcome.accepted_attempt,
                output_digest: outcome.image.digest(),
            };
            Ok((st, outcome.image))
        })();
        trace
            .wall_times_ms
            .push(started.elapsed().as_secs_f64() * 1000.0);
        match step {
            Ok((st, out)) => {
                trace.steps.push(st);
                current = out;
            }
            Err(cause) => {
                return Err(ExecError::StepFailed {
                    index: i,
                    cause,
                    trace: Box::new(trace),
                })
            }
        }
    }
    trace.final_image_digest = Some(current.digest());
    Ok((current, trace))
}
