//! Plan compiler and execution engine for complex instruction-based image
//! editing.
//!
//! A planner decomposes a complex instruction into at most five typed
//! sub-instructions. This crate parses that output into a [`Plan`], derives
//! a spatial control region per step from anchor masks and boxes, routes each
//! step to an editing backend, runs a verify-and-retry loop, and evaluates
//! the result. The [`annotate`] module manufactures training records from the
//! same rules.
//!
//! Geometry and metrics are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the common instantiations.

pub mod annotate;
pub mod backend;
pub mod eval;
pub mod image;
pub mod ir;
pub mod mask;
pub mod orchestrator;
pub mod parser;
pub mod refine;
pub mod router;
pub mod scalar;

pub use crate::annotate::{DatasetRecord, SourceWeights};
pub use crate::eval::{
    box_localization_at_k, embedding_similarity, normalize_mllm_score, pixel_distance, MetricReport,
};
pub use crate::image::{ImageBuffer, ImageError};
pub use crate::ir::{validate_plan, EditType, Plan, SubInstruction, Violation, MAX_SUBS};
pub use crate::mask::{BinaryMask, MaskError, NormBox};
pub use crate::orchestrator::{
    execute_plan, Backends, ExecOptions, ExecutionTrace, RegionMode, VerifyPolicy,
};
pub use crate::parser::{
    parse_control_token, parse_plan, serialize_plan, ControlToken, ParseError,
};
pub use crate::refine::{refine_control, AnchorMasks, ControlInput, RefineError, RefineParams};
pub use crate::router::{route_edit, RoutingProfile, RoutingTable};
pub use crate::scalar::Scalar;

pub type NormBoxF32 = NormBox<f32>;
pub type NormBoxF64 = NormBox<f64>;
pub type OverlapMetricsF32 = mask::OverlapMetrics<f32>;
pub type OverlapMetricsF64 = mask::OverlapMetrics<f64>;
pub type PixelDistanceF32 = eval::PixelDistance<f32>;
pub type PixelDistanceF64 = eval::PixelDistance<f64>;
pub type LocalizationF32 = eval::Localization<f32>;
pub type LocalizationF64 = eval::Localization<f64>;
