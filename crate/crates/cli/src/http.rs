//! Blocking JSON-over-HTTP clients for the backend envelope.

use std::error::Error as _;
use std::io::ErrorKind;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use xplan_core::backend::wire::{
    image_from_b64, image_to_b64, mask_from_b64, EditRequestBody, EmbedRequestBody,
    EmbedResponseBody, ErrorBody, ImageResponseBody, PlanRequestBody, PlanResponseBody,
    ScoreRequestBody, ScoreResponseBody, SegmentRequestBody, SegmentResponseBody, ENDPOINT_EDIT,
    ENDPOINT_EMBED, ENDPOINT_PLAN, ENDPOINT_SCORE, ENDPOINT_SEGMENT,
};
use xplan_core::backend::{
    render_verifier_prompt, BackendError, EditRequest, Editor, Embedder, Planner, Segmenter,
    Verifier, VerifierScore,
};
use xplan_core::{BinaryMask, ImageBuffer};

/// Retry schedule for transient transport failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base * 2u32.saturating_pow(attempt)
    }
}

#[derive(Clone)]
pub struct HttpClient {
    base_url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            retry,
        }
    }

    pub fn post<Q: Serialize, R: DeserializeOwned>(
        &self,
        endpoint: &str,
        body: &Q,
    ) -> Result<R, BackendError> {
        let url = format!("{}{endpoint}", self.base_url);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_transient() && attempt < self.retry.retries => {
                    let wait = self.retry.delay(attempt);
                    log::warn!("{url}: {e}; retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn post_once<Q: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &Q,
    ) -> Result<R, BackendError> {
        match self.agent.post(url).send_json(body) {
            Ok(resp) => resp
                .into_json::<R>()
                .map_err(|e| BackendError::Decode(e.to_string())),
            Err(ureq::Error::Status(code, resp)) => {
                let message = resp
                    .into_json::<ErrorBody>()
                    .map(|b| b.error)
                    .unwrap_or_else(|_| format!("HTTP {code}"));
                if matches!(code, 400 | 422) {
                    Err(BackendError::BackendRejected(message))
                } else {
                    Err(BackendError::Transport {
                        status: Some(code),
                        message,
                    })
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let timed_out = t
                    .source()
                    .and_then(|s| s.downcast_ref::<std::io::Error>())
                    .is_some_and(|io| {
                        matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock)
                    });
                if timed_out {
                    Err(BackendError::Timeout)
                } else {
                    Err(BackendError::transport(t.to_string()))
                }
            }
        }
    }
}

pub struct HttpPlanner(pub HttpClient);

impl Planner for HttpPlanner {
    fn plan(&self, image: &ImageBuffer, instruction: &str) -> Result<String, BackendError> {
        let body = PlanRequestBody {
            image_png_b64: image_to_b64(image)?,
            instruction: instruction.to_string(),
        };
        let r: PlanResponseBody = self.0.post(ENDPOINT_PLAN, &body)?;
        Ok(r.plan)
    }
}

pub struct HttpEditor(pub HttpClient);

impl Editor for HttpEditor {
    fn edit(&self, req: &EditRequest) -> Result<ImageBuffer, BackendError> {
        let r: ImageResponseBody = self
            .0
            .post(ENDPOINT_EDIT, &EditRequestBody::from_request(req)?)?;
        image_from_b64(&r.image_png_b64)
    }
}

pub struct HttpSegmenter(pub HttpClient);

impl Segmenter for HttpSegmenter {
    fn segment(&self, image: &ImageBuffer, anchor: &str) -> Result<BinaryMask, BackendError> {
        let body = SegmentRequestBody {
            image_png_b64: image_to_b64(image)?,
            anchor: anchor.to_string(),
        };
        let r: SegmentResponseBody = self.0.post(ENDPOINT_SEGMENT, &body)?;
        mask_from_b64(&r.mask_png_b64)
    }
}

pub struct HttpVerifier {
    pub client: HttpClient,
    pub prompt_template: String,
}

impl Verifier for HttpVerifier {
    fn score(
        &self,
        source: &ImageBuffer,
        edited: &ImageBuffer,
        instruction: &str,
    ) -> Result<VerifierScore, BackendError> {
        let body = ScoreRequestBody {
            image_png_b64: image_to_b64(source)?,
            edited_png_b64: image_to_b64(edited)?,
            instruction: instruction.to_string(),
            prompt: Some(render_verifier_prompt(&self.prompt_template, instruction)),
        };
        let r: ScoreResponseBody = self.client.post(ENDPOINT_SCORE, &body)?;
        r.into_score()
    }
}

pub struct HttpEmbedder(pub HttpClient);

impl Embedder for HttpEmbedder {
    fn embed(&self, image: &ImageBuffer) -> Result<Vec<f32>, BackendError> {
        let body = EmbedRequestBody {
            image_png_b64: image_to_b64(image)?,
        };
        let r: EmbedResponseBody = self.0.post(ENDPOINT_EMBED, &body)?;
        Ok(r.embedding)
    }
}
