//! Contracts for the external model services and the checks applied at the
//! client boundary.
//!
//! Five services sit behind traits: a planner (text out), editors (one per
//! backend id), a segmenter, a verifier scoring 0..=4, and an embedder. The
//! `*_remote` functions wrap a trait call with the response checks every
//! caller relies on, so a misbehaving backend cannot push an out-of-range
//! score or a wrongly sized image further into the pipeline.

pub mod hash;
pub mod mock;
pub mod wire;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageBuffer;
use crate::mask::BinaryMask;
use crate::refine::ControlInput;

pub const MAX_SCORE: u8 = 4;

/// Rubric sent to a remote verifier. `{instruction}` is substituted.
pub const DEFAULT_VERIFIER_PROMPT: &str = "You are judging one step of an image edit. \
Compare the edited image with the source image and rate how well the edit carries out this \
instruction: \"{instruction}\". Consider whether the requested change is present and whether \
content outside the edit is left alone. Answer with a single integer from 0 (very poor) to 4 \
(excellent).";

pub fn render_verifier_prompt(template: &str, instruction: &str) -> String {
    template.replace("{instruction}", instruction)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport failure{}: {message}", .status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        message: String,
    },
    #[error("request timed out")]
    Timeout,
    #[error("backend rejected the request: {0}")]
    BackendRejected(String),
    #[error("response dimensions {got:?} do not match request {expected:?}")]
    DimsMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("anchor text is empty")]
    EmptyAnchor,
    #[error("score {0} outside 0..=4")]
    OutOfRange(i64),
    #[error("embedding dimension changed from {expected} to {got}")]
    DimDrift { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFiniteEmbedding,
    #[error("no client registered for backend `{0}`")]
    Unregistered(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl BackendError {
    pub fn transport(message: impl Into<String>) -> Self {
        BackendError::Transport {
            status: None,
            message: message.into(),
        }
    }

    /// Whether retrying the same request could succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout => true,
            BackendError::Transport { status, .. } => {
                status.is_none_or(|s| s >= 500 || s == 429 || s == 408)
            }
            _ => false,
        }
    }
}

/// Verifier output, always within `0..=4`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VerifierScore {
    score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rationale: Option<String>,
}

impl VerifierScore {
    pub fn new(score: i64) -> Result<Self, BackendError> {
        if (0..=MAX_SCORE as i64).contains(&score) {
            Ok(Self {
                score: score as u8,
                rationale: None,
            })
        } else {
            Err(BackendError::OutOfRange(score))
        }
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }

    pub fn score(&self) -> u8 {
        self.score
    }

    pub fn rationale(&self) -> Option<&str> {
        self.rationale.as_deref()
    }
}

/// One editor call.
#[derive(Debug, Clone, PartialEq)]
pub struct EditRequest {
    pub image: ImageBuffer,
    pub instruction: String,
    pub control: ControlInput,
    pub seed: u64,
    pub backend_id: String,
}

impl EditRequest {
    pub fn new(
        image: ImageBuffer,
        instruction: impl Into<String>,
        control: ControlInput,
        seed: u64,
        backend_id: impl Into<String>,
    ) -> Result<Self, BackendError> {
        if control.dims() != image.dims() {
            return Err(BackendError::DimsMismatch {
                expected: image.dims(),
                got: control.dims(),
            });
        }
        Ok(Self {
            image,
            instruction: instruction.into(),
            control,
            seed,
            backend_id: backend_id.into(),
        })
    }
}

pub trait Planner: Send + Sync {
    /// Raw planner text for `instruction` on `image`.
    fn plan(&self, image: &ImageBuffer, instruction: &str) -> Result<String, BackendError>;
}

pub trait Editor: Send + Sync {
    fn edit(&self, req: &EditRequest) -> Result<ImageBuffer, BackendError>;
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, image: &ImageBuffer, anchor: &str) -> Result<BinaryMask, BackendError>;
}

pub trait Verifier: Send + Sync {
    fn score(
        &self,
        source: &ImageBuffer,
        edited: &ImageBuffer,
        instruction: &str,
    ) -> Result<VerifierScore, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, image: &ImageBuffer) -> Result<Vec<f32>, BackendError>;
}

pub fn plan_remote(
    planner: &dyn Planner,
    image: &ImageBuffer,
    complex_instruction: &str,
) -> Result<String, BackendError> {
    planner.plan(image, complex_instruction)
}

/// Edits and checks the response has the request's dimensions.
pub fn edit_remote(editor: &dyn Editor, req: &EditRequest) -> Result<ImageBuffer, BackendError> {
    let out = editor.edit(req)?;
    if out.dims() != req.image.dims() {
        return Err(BackendError::DimsMismatch {
            expected: req.image.dims(),
            got: out.dims(),
        });
    }
    Ok(out)
}

/// Segments `anchor`; an absent object yields an empty mask.
pub fn segment_remote(
    segmenter: &dyn Segmenter,
    image: &ImageBuffer,
    anchor: &str,
) -> Result<BinaryMask, BackendError> {
    if anchor.trim().is_empty() {
        return Err(BackendError::EmptyAnchor);
    }
    let mask = segmenter.segment(image, anchor)?;
    if mask.dims() != image.dims() {
        return Err(BackendError::DimsMismatch {
            expected: image.dims(),
            got: mask.dims(),
        });
    }
    Ok(mask)
}

pub fn score_remote(
    verifier: &dyn Verifier,
    source: &ImageBuffer,
    edited: &ImageBuffer,
    instruction: &str,
) -> Result<VerifierScore, BackendError> {
    if source.dims() != edited.dims() {
        return Err(BackendError::DimsMismatch {
            expected: source.dims(),
            got: edited.dims(),
        });
    }
    verifier.score(source, edited, instruction)
}

pub fn embed_remote(
    embedder: &dyn Embedder,
    image: &ImageBuffer,
) -> Result<Vec<f32>, BackendError> {
    let v = embedder.embed(image)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BackendError::NonFiniteEmbedding);
    }
    Ok(v)
}

/// Embedder wrapper that pins the vector dimension on first use.
pub struct EmbedSession {
    inner: Arc<dyn Embedder>,
    dim: Mutex<Option<usize>>,
}

impl EmbedSession {
    pub fn new(inner: Arc<dyn Embedder>) -> Self {
        Self {
            inner,
            dim: Mutex::new(None),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().unwrap()
    }

    pub fn embed(&self, image: &ImageBuffer) -> Result<Vec<f32>, BackendError> {
        let v = embed_remote(self.inner.as_ref(), image)?;
        let mut dim = self.dim.lock().unwrap();
        match *dim {
            Some(d) if d != v.len() => Err(BackendError::DimDrift {
                expected: d,
                got: v.len(),
            }),
            Some(_) => Ok(v),
            None => {
                *dim = Some(v.len());
                Ok(v)
            }
        }
    }
}

/// Editor clients keyed by backend id.
#[derive(Clone, Default)]
pub struct EditorRegistry {
    editors: BTreeMap<String, Arc<dyn Editor>>,
}

impl EditorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(mut self, id: impl Into<String>, editor: Arc<dyn Editor>) -> Self {
        self.editors.insert(id.into(), editor);
        self
    }

    pub fn insert(&mut self, id: impl Into<String>, editor: Arc<dyn Editor>) {
        self.editors.insert(id.into(), editor);
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn Editor>> {
        self.editors.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.editors.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.editors.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for EditorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.editors.keys()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;

    fn img(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::filled(w, h, [10, 20, 30]).unwrap()
    }

    #[test]
    fn score_range_enforced() {
        assert!(VerifierScore::new(4).is_ok());
        assert_eq!(VerifierScore::new(5), Err(BackendError::OutOfRange(5)));
        assert_eq!(VerifierScore::new(-1), Err(BackendError::OutOfRange(-1)));
    }

    #[test]
    fn edit_request_dims_checked() {
        let control = ControlInput::from_mask(BinaryMask::full(4, 4).unwrap());
        assert!(matches!(
            EditRequest::new(img(4, 5), "x", control, 0, "default"),
            Err(BackendError::DimsMismatch { .. })
        ));
    }

    struct Shrinker;
    impl Editor for Shrinker {
        fn edit(&self, _req: &EditRequest) -> Result<ImageBuffer, BackendError> {
            Ok(img(2, 2))
        }
    }

    #[test]
    fn edit_response_dims_checked() {
        let control = ControlInput::from_mask(BinaryMask::full(4, 4).unwrap());
        let req = EditRequest::new(img(4, 4), "x", control, 0, "default").unwrap();
        assert_eq!(
            edit_remote(&Shrinker, &req),
            Err(BackendError::DimsMismatch {
                expected: (4, 4),
                got: (2, 2)
            })
        );
    }

    #[test]
    fn segment_checks() {
        let seg = MockSegmenter::new().with_fixture("cat", BinaryMask::full(3, 3).unwrap());
        assert_eq!(
            segment_remote(&seg, &img(4, 4), " "),
            Err(BackendError::EmptyAnchor)
        );
        assert!(matches!(
            segment_remote(&seg, &img(4, 4), "cat"),
            Err(BackendError::DimsMismatch { .. })
        ));
        assert!(segment_remote(&seg, &img(4, 4), "dog").unwrap().is_empty());
        assert_eq!(segment_remote(&seg, &img(3, 3), "Cat").unwrap().area(), 9);
    }

    struct Growing(Mutex<usize>);
    impl Embedder for Growing {
        fn embed(&self, _image: &ImageBuffer) -> Result<Vec<f32>, BackendError> {
            let mut n = self.0.lock().unwrap();
            *n += 1;
            Ok(vec![1.0; *n])
        }
    }

    #[test]
    fn embed_dim_drift() {
        let s = EmbedSession::new(Arc::new(Growing(Mutex::new(1))));
        assert_eq!(s.embed(&img(2, 2)).unwrap().len(), 2);
        assert_eq!(
            s.embed(&img(2, 2)),
            Err(BackendError::DimDrift {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn embed_deterministic() {
        let s = EmbedSession::new(Arc::new(MockEmbedder::default()));
        let image = ImageBuffer::from_fn(8, 8, |x, y| [x as u8 * 30, y as u8 * 30, 0]).unwrap();
        assert_eq!(s.embed(&image).unwrap(), s.embed(&image).unwrap());
        let zero = s
            .embed(&ImageBuffer::filled(8, 8, [0, 0, 0]).unwrap())
            .unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transient_classification() {
        assert!(BackendError::Timeout.is_transient());
        assert!(BackendError::transport("refused").is_transient());
        assert!(!BackendError::Transport {
            status: Some(400),
            message: String::new()
        }
        .is_transient());
        assert!(!BackendError::OutOfRange(9).is_transient());
    }

    #[test]
    fn verifier_prompt_substitution() {
        let p = render_verifier_prompt(DEFAULT_VERIFIER_PROMPT, "Add a hat");
        assert!(p.contains("\"Add a hat\""));
        assert!(!p.contains("{instruction}"));
    }
}
