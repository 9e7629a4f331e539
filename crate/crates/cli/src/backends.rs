//! Backend construction from configuration, plus the deterministic demo
//! backends used by `--mock` and `mock-serve`.

use std::sync::Arc;
use std::time::Duration;

use xplan_core::backend::mock::{
    hashed_box, MockEditor, MockEmbedder, MockPlanner, MockVerifier, PlannerFallback,
};
use xplan_core::backend::{BackendError, EditorRegistry, Embedder, Planner, Segmenter, Verifier};
use xplan_core::eval::EvalBackends;
use xplan_core::mask::box_to_mask;
use xplan_core::parser::parse_line;
use xplan_core::router::{DEFAULT_BACKEND, GLOBAL_BACKEND, INPAINT_BACKEND};
use xplan_core::{parse_plan, Backends, BinaryMask, EditType, ImageBuffer, NormBox};

use crate::config::Config;
use crate::http::{
    HttpClient, HttpEditor, HttpEmbedder, HttpPlanner, HttpSegmenter, HttpVerifier, RetryPolicy,
};

/// Canned Level-1 reply covering every instruction kind and a box-less
/// insertion, so all three annotation levels have work to do.
pub const DEMO_LEVEL1_REPLY: &str = "\
Complex: Make the scene feel like a winter morning
Category: indirect
[background] Turn the <background> into a snowy field
[local color change] Make the <main object> pale blue

Complex: Swap the main object for a lamp and remove the small item
Category: multi-object
[replace] Replace the <main object> with a <lamp>
[remove] Remove the <small item>

Complex: Put a hat on the main object and paint the picture in watercolor
Category: multi-task
[insertion] Add a red hat on the <main object>
[style] Make the image look like a watercolor painting

Complex: Give the main object a wooden texture
Category: general
[local texture] Make the <main object> look like carved wood
";

/// Planner that answers Level-1 prompts with [`DEMO_LEVEL1_REPLY`], echoes
/// instructions that already are valid plans, boxes single insertion lines
/// and otherwise returns a one-step style plan.
#[derive(Debug)]
pub struct DemoPlanner {
    inner: MockPlanner,
}

impl Default for DemoPlanner {
    fn default() -> Self {
        Self {
            inner: MockPlanner::new().with_fallback(PlannerFallback::PassThrough(EditType::Style)),
        }
    }
}

impl Planner for DemoPlanner {
    fn plan(&self, image: &ImageBuffer, instruction: &str) -> Result<String, BackendError> {
        if instruction.contains("\nComplex:") {
            return Ok(DEMO_LEVEL1_REPLY.to_string());
        }
        let text = instruction.trim();
        let needs_box = !text.contains('\n')
            && parse_line(text)
                .is_ok_and(|s| s.edit_type == EditType::Insertion && s.bbox.is_none());
        if needs_box {
            return self.inner.plan(image, text);
        }
        if parse_plan(text, text).is_ok() {
            return Ok(text.to_string());
        }
        let flat: String = text
            .chars()
            .filter(|c| *c != '<' && *c != '>')
            .map(|c| if c.is_whitespace() { ' ' } else { c })
            .collect();
        self.inner.plan(image, &flat)
    }
}

/// Segments any anchor to a rectangle derived from a hash of its text.
#[derive(Debug, Default, Clone, Copy)]
pub struct DemoSegmenter;

impl Segmenter for DemoSegmenter {
    fn segment(&self, image: &ImageBuffer, anchor: &str) -> Result<BinaryMask, BackendError> {
        let [a, b, c, d] = hashed_box(anchor.trim());
        let bx = NormBox::new(a, b, c, d).map_err(|e| BackendError::Decode(e.to_string()))?;
        let (w, h) = image.dims();
        box_to_mask(&bx, w, h).map_err(|e| BackendError::Decode(e.to_string()))
    }
}

pub struct Demo {
    pub planner: Arc<dyn Planner>,
    pub editor: Arc<MockEditor>,
    pub segmenter: Arc<dyn Segmenter>,
    pub verifier: Arc<dyn Verifier>,
    pub embedder: Arc<dyn Embedder>,
    pub dino: Arc<dyn Embedder>,
}

impl Default for Demo {
    fn default() -> Self {
        Self {
            planner: Arc::new(DemoPlanner::default()),
            editor: Arc::new(MockEditor::new()),
            segmenter: Arc::new(DemoSegmenter),
            verifier: Arc::new(MockVerifier::new()),
            embedder: Arc::new(MockEmbedder::default()),
            dino: Arc::new(MockEmbedder::with_grid(8)),
        }
    }
}

/// Every client a command may need. Missing services are `None`.
pub struct Clients {
    pub planner: Option<Arc<dyn Planner>>,
    pub segmenter: Option<Arc<dyn Segmenter>>,
    pub editors: EditorRegistry,
    pub verifier: Option<Arc<dyn Verifier>>,
    pub embedder: Option<Arc<dyn Embedder>>,
    pub dino: Option<Arc<dyn Embedder>>,
}

impl Clients {
    pub fn demo() -> Self {
        let d = Demo::default();
        Self {
            planner: Some(d.planner),
            segmenter: Some(d.segmenter),
            editors: EditorRegistry::new()
                .register(DEFAULT_BACKEND, d.editor.clone())
                .register(INPAINT_BACKEND, d.editor.clone())
                .register(GLOBAL_BACKEND, d.editor),
            verifier: Some(d.verifier),
            embedder: Some(d.embedder),
            dino: Some(d.dino),
        }
    }

    pub fn from_config(cfg: &Config) -> Self {
        let s = &cfg.services;
        let retry = RetryPolicy {
            retries: s.retries,
            base: Duration::from_millis(s.backoff_ms),
        };
        let timeout = Duration::from_secs(s.timeout_secs);
        let client = |url: &Option<String>| {
            url.as_ref()
                .map(|u| HttpClient::new(u.clone(), timeout, retry))
        };

        let mut editors = EditorRegistry::new();
        let editor_url = |own: &Option<String>| own.clone().or_else(|| s.editor.clone());
        for (id, url) in [
            (DEFAULT_BACKEND, s.editor.clone()),
            (INPAINT_BACKEND, editor_url(&s.inpaint)),
            (GLOBAL_BACKEND, editor_url(&s.global)),
        ] {
            if let Some(c) = client(&url) {
                editors.insert(id, Arc::new(HttpEditor(c)));
            }
        }
        Self {
            planner: client(&s.planner).map(|c| Arc::new(HttpPlanner(c)) as Arc<dyn Planner>),
            segmenter: client(&s.segmenter)
                .map(|c| Arc::new(HttpSegmenter(c)) as Arc<dyn Segmenter>),
            editors,
            verifier: client(&s.verifier).map(|c| {
                Arc::new(HttpVerifier {
                    client: c,
                    prompt_template: s.verifier_prompt.clone(),
                }) as Arc<dyn Verifier>
            }),
            embedder: client(&s.embedder).map(|c| Arc::new(HttpEmbedder(c)) as Arc<dyn Embedder>),
            dino: client(&s.dino).map(|c| Arc::new(HttpEmbedder(c)) as Arc<dyn Embedder>),
        }
    }

    pub fn build(cfg: &Config, mock: bool) -> Self {
        if mock {
            Self::demo()
        } else {
            Self::from_config(cfg)
        }
    }

    /// Execution backends. A missing segmenter only matters once a step
    /// needs one, so it is replaced by a client that always fails.
    pub fn exec(&self) -> Backends {
        Backends {
            segmenter: self
                .segmenter
                .clone()
                .unwrap_or_else(|| Arc::new(Missing("segmenter"))),
            editors: self.editors.clone(),
            verifier: self.verifier.clone(),
        }
    }

    pub fn eval(&self) -> EvalBackends {
        EvalBackends {
            exec: self.exec(),
            embedder: self.embedder.clone(),
            dino: self.dino.clone(),
            text_scorer: None,
            judge: self.verifier.clone(),
        }
    }
}

/// Placeholder for a service with no configured endpoint.
#[derive(Debug, Clone, Copy)]
pub struct Missing(pub &'static str);

impl Segmenter for Missing {
    fn segment(&self, _image: &ImageBuffer, _anchor: &str) -> Result<BinaryMask, BackendError> {
        Err(BackendError::Unregistered(self.0.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use xplan_core::annotate::parse_level1_response;

    #[test]
    fn demo_reply_is_four_valid_pairs() {
        let p = parse_level1_response(DEMO_LEVEL1_REPLY).unwrap();
        assert_eq!(p.candidates.len(), 4);
        assert!(p.dropped.is_empty());
    }

    #[test]
    fn demo_planner_modes() {
        let img = ImageBuffer::filled(8, 8, [1, 2, 3]).unwrap();
        let p = DemoPlanner::default();
        let plan = "[remove] Remove the <cup>\n[style] Make it sepia";
        assert_eq!(p.plan(&img, plan).unwrap(), plan);
        let boxed = p.plan(&img, "[insertion] Add a <hat>").unwrap();
        assert!(boxed.starts_with("[insertion]<"), "{boxed}");
        let free = p.plan(&img, "make it <nice>\nplease").unwrap();
        assert_eq!(free, "[style] make it nice please");
    }

    #[test]
    fn demo_segmenter_is_deterministic_and_nonempty() {
        let img = ImageBuffer::filled(20, 10, [0, 0, 0]).unwrap();
        let a = DemoSegmenter.segment(&img, "cat").unwrap();
        assert_eq!(a, DemoSegmenter.segment(&img, "cat").unwrap());
        assert!(!a.is_empty());
        assert_eq!(a.dims(), (20, 10));
    }
}
