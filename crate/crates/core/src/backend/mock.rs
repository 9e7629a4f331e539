//! Deterministic in-process backends for hermetic runs.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::hash::Fnv1a;
use super::{
    BackendError, EditRequest, Editor, Embedder, Planner, Segmenter, Verifier, VerifierScore,
};
use crate::image::ImageBuffer;
use crate::ir::EditType;
use crate::mask::BinaryMask;
use crate::parser::parse_line;

/// Rewrites region pixels with `H(instruction ‖ seed ‖ x ‖ y)` bytes and
/// leaves every other pixel untouched.
#[derive(Debug, Default)]
pub struct MockEditor {
    fail_next: AtomicUsize,
    calls: AtomicUsize,
}

impl MockEditor {
    pub fn new() -> Self {
        Self::default()
    }

    /// The next `n` calls fail with a transport error.
    pub fn failing_first(n: usize) -> Self {
        Self {
            fail_next: AtomicUsize::new(n),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Output of the mock editor contract as a pure function.
pub fn mock_edit(req: &EditRequest) -> ImageBuffer {
    let mut out = req.image.clone();
    let prefix = Fnv1a::default()
        .update(req.instruction.as_bytes())
        .u64(req.seed);
    for (x, y) in req.control.region.iter_set() {
        let h = prefix.u32(x as u32).u32(y as u32).finish();
        let b = h.to_le_bytes();
        out.set_pixel(x, y, [b[0], b[1], b[2]]);
    }
    out
}

impl Editor for MockEditor {
    fn edit(&self, req: &EditRequest) -> Result<ImageBuffer, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let pending = self.fail_next.load(Ordering::SeqCst);
        if pending > 0 {
            self.fail_next.store(pending - 1, Ordering::SeqCst);
            return Err(BackendError::transport("injected failure"));
        }
        Ok(mock_edit(req))
    }
}

/// Anchor → mask fixtures. Unknown anchors segment to an empty mask.
#[derive(Debug, Default)]
pub struct MockSegmenter {
    fixtures: HashMap<String, BinaryMask>,
    calls: AtomicUsize,
}

impl MockSegmenter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixture(mut self, anchor: &str, mask: BinaryMask) -> Self {
        self.fixtures.insert(anchor.trim().to_lowercase(), mask);
        self
    }

    pub fn insert(&mut self, anchor: &str, mask: BinaryMask) {
        self.fixtures.insert(anchor.trim().to_lowercase(), mask);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Segmenter for MockSegmenter {
    fn segment(&self, image: &ImageBuffer, anchor: &str) -> Result<BinaryMask, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.fixtures.get(&anchor.trim().to_lowercase()) {
            Some(mask) => Ok(mask.clone()),
            None => BinaryMask::empty(image.width(), image.height())
                .map_err(|e| BackendError::Decode(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedScore {
    Score(i64),
    Fail,
}

/// Returns scripted scores in order, then a default score of 4.
#[derive(Debug, Default)]
pub struct MockVerifier {
    script: Mutex<VecDeque<ScriptedScore>>,
    calls: AtomicUsize,
}

impl MockVerifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scripted(scores: impl IntoIterator<Item = i64>) -> Self {
        Self::with_script(scores.into_iter().map(ScriptedScore::Score))
    }

    pub fn with_script(entries: impl IntoIterator<Item = ScriptedScore>) -> Self {
        Self {
            script: Mutex::new(entries.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Verifier for MockVerifier {
    fn score(
        &self,
        _source: &ImageBuffer,
        _edited: &ImageBuffer,
        _instruction: &str,
    ) -> Result<VerifierScore, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.script.lock().unwrap().pop_front() {
            Some(ScriptedScore::Score(s)) => VerifierScore::new(s),
            Some(ScriptedScore::Fail) => Err(BackendError::transport("scripted verifier failure")),
            None => VerifierScore::new(super::MAX_SCORE as i64),
        }
    }
}

/// Mean RGB over a `grid × grid` partition, scaled to `[0, 1]`.
/// An all-black image embeds to the zero vector.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    grid: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self { grid: 4 }
    }
}

impl MockEmbedder {
    pub fn with_grid(grid: usize) -> Self {
        Self { grid: grid.max(1) }
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, image: &ImageBuffer) -> Result<Vec<f32>, BackendError> {
        let g = self.grid;
        let (w, h) = image.dims();
        let mut sums = vec![0f64; g * g * 3];
        let mut counts = vec![0usize; g * g];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * g / h) * g + x * g / w;
                counts[cell] += 1;
                for (c, v) in image.pixel(x, y).iter().enumerate() {
                    sums[cell * 3 + c] += *v as f64;
                }
            }
        }
        Ok(sums
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = counts[i / 3];
                if n == 0 {
                    0.0
                } else {
                    (s / (n as f64 * 255.0)) as f32
                }
            })
            .collect())
    }
}

/// What the mock planner does for an instruction without a fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannerFallback {
    Reject,
    /// One-line plan of the given type that keeps the instruction verbatim.
    PassThrough(EditType),
}

/// Fixture-driven planner.
///
/// A request that is itself a single insertion line (as sent when asking
/// for an insertion box) is answered with that line plus a box derived from
/// a hash of the text.
#[derive(Debug)]
pub struct MockPlanner {
    fixtures: HashMap<String, String>,
    fallback: PlannerFallback,
}

impl Default for MockPlanner {
    fn default() -> Self {
        Self {
            fixtures: HashMap::new(),
            fallback: PlannerFallback::Reject,
        }
    }
}

impl MockPlanner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixture(mut self, instruction: &str, response: &str) -> Self {
        self.fixtures
            .insert(instruction.trim().to_string(), response.to_string());
        self
    }

    pub fn with_fallback(mut self, fallback: PlannerFallback) -> Self {
        self.fallback = fallback;
        self
    }
}

/// Deterministic box for `text`, sized between 2% and 30% of the image.
pub fn hashed_box(text: &str) -> [f64; 4] {
    let h = Fnv1a::default().update(text.as_bytes()).finish();
    let unit = |shift: u32| ((h >> shift) & 0xffff) as f64 / 65535.0;
    let w = 0.15 + 0.4 * unit(0);
    let hgt = 0.15 + 0.4 * unit(16);
    let x1 = (1.0 - w) * unit(32);
    let y1 = (1.0 - hgt) * unit(48);
    let r = |v: f64| (v * 1000.0).round() / 1000.0;
    [r(x1), r(y1), r(x1 + w), r(y1 + hgt)]
}

impl Planner for MockPlanner {
    fn plan(&self, _image: &ImageBuffer, instruction: &str) -> Result<String, BackendError> {
        let key = instruction.trim();
        if let Some(resp) = self.fixtures.get(key) {
            return Ok(resp.clone());
        }
        if !key.contains('\n') {
            if let Ok(sub) = parse_line(key) {
                if sub.edit_type == EditType::Insertion && sub.bbox.is_none() {
                    let [a, b, c, d] = hashed_box(key);
                    let rest = key
                        .trim_start_matches(|ch: char| ch != ']' && ch != ':')
                        .trim_start_matches([']', ':']);
                    return Ok(format!("[insertion]<{a},{b},{c},{d}> {}", rest.trim()));
                }
            }
        }
        match &self.fallback {
            PlannerFallback::Reject => Err(BackendError::BackendRejected(format!(
                "no planner fixture for {key:?}"
            ))),
            PlannerFallback::PassThrough(t) => Ok(format!("[{}] {}", t.name(), key)),
        }
    }
}

/// Every call fails with a transport error.
#[derive(Debug, Default, Clone, Copy)]
pub struct Unreachable;

impl Unreachable {
    fn err() -> BackendError {
        BackendError::transport("connection refused")
    }
}

impl Planner for Unreachable {
    fn plan(&self, _: &ImageBuffer, _: &str) -> Result<String, BackendError> {
        Err(Self::err())
    }
}
impl Editor for Unreachable {
    fn edit(&self, _: &EditRequest) -> Result<ImageBuffer, BackendError> {
        Err(Self::err())
    }
}
impl Segmenter for Unreachable {
    fn segment(&self, _: &ImageBuffer, _: &str) -> Result<BinaryMask, BackendError> {
        Err(Self::err())
    }
}
impl Verifier for Unreachable {
    fn score(
        &self,
        _: &ImageBuffer,
        _: &ImageBuffer,
        _: &str,
    ) -> Result<VerifierScore, BackendError> {
        Err(Self::err())
    }
}
impl Embedder for Unreachable {
    fn embed(&self, _: &ImageBuffer) -> Result<Vec<f32>, BackendError> {
        Err(Self::err())
    }
}
