//! Per-edit-type control regions.
//!
//! | edit type                                      | region                                   |
//! |------------------------------------------------|------------------------------------------|
//! | local texture, local color change, background  | anchor mask as segmented                 |
//! | shape change, remove                           | anchor mask dilated                      |
//! | replace                                        | pre ∪ post anchor masks, else dilated pre |
//! | style                                          | whole image                              |
//! | insertion                                      | anchor mask ∪ raster of the enlarged box |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{EditType, SubInstruction};
use crate::mask::{
    box_to_mask, dilate_mask, enlarge_small_box, full_mask, BinaryMask, MaskError, NormBox,
    DEFAULT_MIN_BOX_AREA,
};

pub const DEFAULT_DILATION: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Growth of the mask's equivalent diameter for dilating edit types.
    pub dilation_percent: f64,
    /// Insertion boxes below this image fraction are enlarged to it.
    pub min_box_area: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            dilation_percent: DEFAULT_DILATION,
            min_box_area: DEFAULT_MIN_BOX_AREA,
        }
    }
}

/// Stage-1 segmentation for one sub-instruction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorMasks {
    /// One mask per anchor, aligned with `SubInstruction::anchors`.
    pub anchors: Vec<BinaryMask>,
    /// Mask of the replacement object segmented on a post-edit image.
    pub post_edit: Option<BinaryMask>,
}

impl AnchorMasks {
    pub fn new(anchors: Vec<BinaryMask>) -> Self {
        Self {
            anchors,
            post_edit: None,
        }
    }

    pub fn with_post_edit(mut self, mask: BinaryMask) -> Self {
        self.post_edit = Some(mask);
        self
    }
}

/// Spatial guidance handed to an editor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub mask: BinaryMask,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<NormBox>,
    /// `mask ∪ raster(bbox)` when a box is present, otherwise `mask`.
    pub region: BinaryMask,
}

impl ControlInput {
    pub fn from_mask(mask: BinaryMask) -> Self {
        Self {
            region: mask.clone(),
            mask,
            bbox: None,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.region.dims()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("sub {index}: insertion has no box")]
    MissingBox { index: usize },
    #[error("sub {index}: stage-1 mask for {edit_type} is empty")]
    MissingMask { index: usize, edit_type: EditType },
    #[error("sub {index}: expected {expected} anchor mask(s), got {got}")]
    MaskCount {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Mask(#[from] MaskError),
}

fn check_dims(mask: &BinaryMask, dims: (usize, usize)) -> Result<(), MaskError> {
    if mask.dims() != dims {
        return Err(MaskError::DimensionMismatch {
            left: mask.dims(),
            right: dims,
        });
    }
    Ok(())
}

/// Maps a sub-instruction and its stage-1 masks to the final control input.
pub fn refine_control(
    sub: &SubInstruction,
    masks: &AnchorMasks,
    dims: (usize, usize),
    params: &RefineParams,
) -> Result<ControlInput, RefineError> {
    let (w, h) = dims;
    if w == 0 || h == 0 {
        return Err(MaskError::Dimension {
            width: w,
            height: h,
        }
        .into());
    }
    for m in masks.anchors.iter().chain(&masks.post_edit) {
        check_dims(m, dims)?;
    }

    if sub.edit_type == EditType::Style {
        return Ok(ControlInput::from_mask(full_mask(w, h)?));
    }

    if masks.anchors.len() != sub.anchors.len() {
        return Err(RefineError::MaskCount {
            index: sub.index,
            expected: sub.anchors.len(),
            got: masks.anchors.len(),
        });
    }
    let primary =
        masks
            .anchors
            .first()
            .filter(|m| !m.is_empty())
            .ok_or(RefineError::MissingMask {
                index: sub.index,
                edit_type: sub.edit_type,
            })?;
    let dilation = params.dilation_percent;

    let control = match sub.edit_type {
        EditType::LocalTexture | EditType::LocalColorChange | EditType::Background => {
            ControlInput::from_mask(primary.clone())
        }
        EditType::ShapeChange | EditType::Remove => {
            ControlInput::from_mask(dilate_mask(primary, dilation)?)
        }
        EditType::Replace => match masks.post_edit.as_ref().filter(|m| !m.is_empty()) {
            Some(post) => ControlInput::from_mask(primary.union(post)?),
            None => ControlInput::from_mask(dilate_mask(primary, dilation)?),
        },
        EditType::Insertion => {
            let raw = sub
                .bbox
                .ok_or(RefineError::MissingBox { index: sub.index })?;
            let bbox = enlarge_small_box(&raw, params.min_box_area);
            let region = primary.union(&box_to_mask(&bbox, w, h)?)?;
            ControlInput {
                mask: primary.clone(),
                bbox: Some(bbox),
                region,
            }
        }
        EditType::Style => unreachable!("handled above"),
    };
    Ok(control)
}
