//! Level 2 (mask annotation) and Level 3 (insertion box pseudo-labels).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use thiserror::Error;

use super::{AnnotateError, DatasetRecord};
use crate::backend::{plan_remote, segment_remote, Planner, Segmenter};
use crate::image::ImageBuffer;
use crate::ir::{EditType, Plan};
use crate::mask::{
    box_to_mask, enlarge_small_box, read_mask_png, write_mask_png, BinaryMask, BoxError, MaskError,
    NormBox,
};
use crate::parser::serialize_plan;
use crate::refine::{refine_control, AnchorMasks, RefineError, RefineParams};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("mask store I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("no mask stored under `{0}`")]
    NotFound(String),
}

/// Persists refined masks and hands back a reference string.
pub trait MaskStore: Send + Sync {
    /// Stores `mask` under `key`, replacing any previous mask, and returns
    /// its reference. Equal keys give equal references.
    fn put(&self, key: &str, mask: &BinaryMask) -> Result<String, StoreError>;
    fn get(&self, mask_ref: &str) -> Result<BinaryMask, StoreError>;
}

/// PNG files under `<root>/masks/`, referenced by path relative to `root`.
#[derive(Debug, Clone)]
pub struct DirMaskStore {
    root: PathBuf,
}

impl DirMaskStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, mask_ref: &str) -> PathBuf {
        self.root.join(mask_ref)
    }
}

impl MaskStore for DirMaskStore {
    fn put(&self, key: &str, mask: &BinaryMask) -> Result<String, StoreError> {
        let mask_ref = format!("masks/{key}.png");
        let path = self.path_of(&mask_ref);
        let dir = path.parent().expect("mask path has a parent");
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let tmp = path.with_extension("png.tmp");
        write_mask_png(mask, &tmp)?;
        std::fs::rename(&tmp, &path).map_err(|source| StoreError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(mask_ref)
    }

    fn get(&self, mask_ref: &str) -> Result<BinaryMask, StoreError> {
        let path = self.path_of(mask_ref);
        if !path.exists() {
            return Err(StoreError::NotFound(mask_ref.to_string()));
        }
        Ok(read_mask_png(path)?)
    }
}

#[derive(Debug, Default)]
pub struct MemoryMaskStore {
    masks: Mutex<HashMap<String, BinaryMask>>,
}

impl MemoryMaskStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.masks.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl MaskStore for MemoryMaskStore {
    fn put(&self, key: &str, mask: &BinaryMask) -> Result<String, StoreError> {
        let mask_ref = format!("mem:{key}");
        self.masks
            .lock()
            .unwrap()
            .insert(mask_ref.clone(), mask.clone());
        Ok(mask_ref)
    }

    fn get(&self, mask_ref: &str) -> Result<BinaryMask, StoreError> {
        self.masks
            .lock()
            .unwrap()
            .get(mask_ref)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(mask_ref.to_string()))
    }
}

/// Images available to Level 2 for one record.
#[derive(Debug, Clone, Copy)]
pub struct Level2Input<'a> {
    pub image: &'a ImageBuffer,
    /// Edited image, when the source corpus ships one.
    pub post_image: Option<&'a ImageBuffer>,
}

fn mask_key(record: &DatasetRecord, index: usize) -> String {
    format!("{}_{index}", record.record_id)
}

/// Computes a refined mask for every sub and stores them.
///
/// Style subs get the full image without a segmenter call. Replace subs use
/// the second anchor segmented on the post-edit image when one is given.
/// Insertion subs without a box keep their anchor mask until Level 3. No
/// mask is written unless every sub succeeds. Records already at Level 2 or
/// beyond are returned unchanged.
pub fn annotate_level2(
    mut record: DatasetRecord,
    segmenter: &dyn Segmenter,
    input: Level2Input<'_>,
    store: &dyn MaskStore,
    params: &RefineParams,
) -> Result<DatasetRecord, AnnotateError> {
    if record.level < 1 {
        return Err(AnnotateError::LevelOrder {
            need: 1,
            got: record.level,
        });
    }
    if record.level >= 2 {
        return Ok(record);
    }
    let issues = record.issues();
    if !issues.is_empty() {
        return Err(AnnotateError::Invalid(issues));
    }
    let dims = input.image.dims();
    let plan = record.plan();
    let mut refined = Vec::with_capacity(plan.len());
    for sub in &plan.subs {
        let index = sub.index;
        let masks = if sub.edit_type == EditType::Style {
            AnchorMasks::default()
        } else {
            let anchors = sub
                .anchors
                .iter()
                .map(|a| segment_remote(segmenter, input.image, a))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| AnnotateError::Segment { index, source })?;
            let mut masks = AnchorMasks::new(anchors);
            if sub.edit_type == EditType::Replace {
                if let (Some(post), Some(target)) = (input.post_image, sub.anchors.get(1)) {
                    let m = segment_remote(segmenter, post, target)
                        .map_err(|source| AnnotateError::Segment { index, source })?;
                    masks = masks.with_post_edit(m);
                }
            }
            masks
        };
        if sub.edit_type == EditType::Insertion && sub.bbox.is_none() {
            let primary = masks
                .anchors
                .first()
                .filter(|m| !m.is_empty())
                .cloned()
                .ok_or(RefineError::MissingMask {
                    index,
                    edit_type: sub.edit_type,
                })?;
            refined.push((primary, None));
        } else {
            let control = refine_control(sub, &masks, dims, params)?;
            refined.push((control.region, control.bbox));
        }
    }
    for (i, (mask, bbox)) in refined.into_iter().enumerate() {
        let mask_ref = store.put(&mask_key(&record, i), &mask)?;
        record.subs[i].mask_ref = Some(mask_ref);
        if bbox.is_some() {
            record.subs[i].bbox = bbox;
        }
    }
    record.level = 2;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxParseError {
    #[error("reply has no box token: {0:?}")]
    NoBox(String),
    #[error("box token `{token}` is invalid: {source}")]
    Invalid {
        token: String,
        #[source]
        source: BoxError,
    },
}

fn box_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*";
        Regex::new(&format!(r"<{num},{num},{num},{num}>")).expect("valid regex")
    })
}

/// First `<x1,y1,x2,y2>` token in a planner reply, strictly validated.
pub fn parse_box_reply(text: &str) -> Result<NormBox, BoxParseError> {
    let caps = box_token()
        .captures(text)
        .ok_or_else(|| BoxParseError::NoBox(text.chars().take(80).collect()))?;
    let v: Vec<f64> = (1..=4)
        .map(|i| caps[i].parse().expect("regex matched a number"))
        .collect();
    NormBox::new(v[0], v[1], v[2], v[3]).map_err(|source| BoxParseError::Invalid {
        token: caps[0].to_string(),
        source,
    })
}

/// Requests a box for every insertion sub that lacks one, enlarges it and
/// merges its raster into the stored mask.
pub fn pseudolabel_level3(
    mut record: DatasetRecord,
    planner: &dyn Planner,
    image: &ImageBuffer,
    store: &dyn MaskStore,
    params: &RefineParams,
) -> Result<DatasetRecord, AnnotateError> {
    if record.level < 2 {
        return Err(AnnotateError::LevelOrder {
            need: 2,
            got: record.level,
        });
    }
    let plan = record.plan();
    let mut updates = Vec::new();
    for sub in &plan.subs {
        if sub.edit_type != EditType::Insertion || sub.bbox.is_some() {
            continue;
        }
        let index = sub.index;
        let request = serialize_plan(&Plan::new(sub.text.clone(), vec![sub.clone()]))
            .map_err(|_| AnnotateError::Invalid(record.issues()))?;
        let reply = plan_remote(planner, image, &request)
            .map_err(|source| AnnotateError::Planner { index, source })?;
        let raw =
            parse_box_reply(&reply).map_err(|source| AnnotateError::BoxParse { index, source })?;
        let bbox = enlarge_small_box(&raw, params.min_box_area);
        let mask_ref = record.subs[index]
            .mask_ref
            .clone()
            .ok_or_else(|| AnnotateError::Invalid(record.issues()))?;
        let stage1 = store.get(&mask_ref)?;
        let (w, h) = stage1.dims();
        let region = stage1
            .union(&box_to_mask(&bbox, w, h).map_err(StoreError::from)?)
            .map_err(StoreError::from)?;
        updates.push((index, bbox, region));
    }
    for (index, bbox, region) in updates {
        store.put(&mask_key(&record, index), &region)?;
        record.subs[index].bbox = Some(bbox);
    }
    record.level = 3;
    Ok(record)
}
