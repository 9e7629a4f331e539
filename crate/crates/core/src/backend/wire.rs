//! JSON bodies for the HTTP envelope. Images and masks travel as
//! base64-encoded PNG; boxes as `[x1, y1, x2, y2]`.
//!
//! | endpoint   | request                                   | response        |
//! |------------|-------------------------------------------|-----------------|
//! | `/plan`    | `image_png_b64`, `instruction`            | `plan`          |
//! | `/edit`    | image, `mask_png_b64`, `box`, `seed`, ... | `image_png_b64` |
//! | `/segment` | `image_png_b64`, `anchor`                 | `mask_png_b64`  |
//! | `/score`   | `image_png_b64`, `edited_png_b64`, ...    | `score`         |
//! | `/embed`   | `image_png_b64`                           | `embedding`     |

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendError, EditRequest, VerifierScore};
use crate::image::ImageBuffer;
use crate::mask::{decode_mask_png, encode_mask_png, BinaryMask, NormBox};
use crate::refine::ControlInput;

pub const ENDPOINT_PLAN: &str = "/plan";
pub const ENDPOINT_EDIT: &str = "/edit";
pub const ENDPOINT_SEGMENT: &str = "/segment";
pub const ENDPOINT_SCORE: &str = "/score";
pub const ENDPOINT_EMBED: &str = "/embed";

fn decode_err(e: impl std::fmt::Display) -> BackendError {
    BackendError::Decode(e.to_string())
}

pub fn image_to_b64(image: &ImageBuffer) -> Result<String, BackendError> {
    Ok(STANDARD.encode(image.encode_png().map_err(decode_err)?))
}

pub fn image_from_b64(s: &str) -> Result<ImageBuffer, BackendError> {
    let bytes = STANDARD.decode(s).map_err(decode_err)?;
    ImageBuffer::decode_png(&bytes).map_err(decode_err)
}

pub fn mask_to_b64(mask: &BinaryMask) -> Result<String, BackendError> {
    Ok(STANDARD.encode(encode_mask_png(mask).map_err(decode_err)?))
}

pub fn mask_from_b64(s: &str) -> Result<BinaryMask, BackendError> {
    let bytes = STANDARD.decode(s).map_err(decode_err)?;
    decode_mask_png(&bytes).map_err(decode_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequestBody {
    pub image_png_b64: String,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponseBody {
    pub plan: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRequestBody {
    pub image_png_b64: String,
    /// Combined control region.
    pub mask_png_b64: String,
    /// Stage-1 mask before any box was merged in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_mask_png_b64: Option<String>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    pub instruction: String,
    pub seed: u64,
    pub backend_id: String,
}

impl EditRequestBody {
    pub fn from_request(req: &EditRequest) -> Result<Self, BackendError> {
        let anchor_mask = if req.control.mask == req.control.region {
            None
        } else {
            Some(mask_to_b64(&req.control.mask)?)
        };
        Ok(Self {
            image_png_b64: image_to_b64(&req.image)?,
            mask_png_b64: mask_to_b64(&req.control.region)?,
            anchor_mask_png_b64: anchor_mask,
            bbox: req.control.bbox.map(|b| b.coords()),
            instruction: req.instruction.clone(),
            seed: req.seed,
            backend_id: req.backend_id.clone(),
        })
    }

    pub fn into_request(self) -> Result<EditRequest, BackendError> {
        let image = image_from_b64(&self.image_png_b64)?;
        let region = mask_from_b64(&self.mask_png_b64)?;
        let mask = match &self.anchor_mask_png_b64 {
            Some(m) => mask_from_b64(m)?,
            None => region.clone(),
        };
        let bbox = self
            .bbox
            .map(NormBox::try_from)
            .transpose()
            .map_err(decode_err)?;
        EditRequest::new(
            image,
            self.instruction,
            ControlInput { mask, bbox, region },
            self.seed,
            self.backend_id,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponseBody {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequestBody {
    pub image_png_b64: String,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponseBody {
    pub mask_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequestBody {
    pub image_png_b64: String,
    pub edited_png_b64: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponseBody {
    /// Kept wide so out-of-range replies can be reported rather than truncated.
    pub score: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl ScoreResponseBody {
    pub fn into_score(self) -> Result<VerifierScore, BackendError> {
        let s = VerifierScore::new(self.score)?;
        Ok(match self.rationale {
            Some(r) => s.with_rationale(r),
            None => s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequestBody {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponseBody {
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
