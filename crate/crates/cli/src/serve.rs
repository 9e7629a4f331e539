//! `mock-serve`: the demo backends behind the HTTP envelope.

use std::net::SocketAddr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use xplan_core::backend::wire::{
    image_from_b64, image_to_b64, mask_to_b64, EditRequestBody, EmbedRequestBody,
    EmbedResponseBody, ErrorBody, ImageResponseBody, PlanRequestBody, PlanResponseBody,
    ScoreRequestBody, ScoreResponseBody, SegmentRequestBody, SegmentResponseBody, ENDPOINT_EDIT,
    ENDPOINT_EMBED, ENDPOINT_PLAN, ENDPOINT_SCORE, ENDPOINT_SEGMENT,
};
use xplan_core::backend::{
    edit_remote, embed_remote, plan_remote, score_remote, segment_remote, BackendError,
};

use crate::backends::Demo;

pub struct MockServer {
    server: Server,
    demo: Demo,
}

enum Failure {
    BadRequest(String),
    NotFound,
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        Failure::BadRequest(e.to_string())
    }
}

fn parse<T: DeserializeOwned>(body: &str) -> Result<T, Failure> {
    serde_json::from_str(body).map_err(|e| Failure::BadRequest(format!("invalid body: {e}")))
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string(v).expect("response serializes"))
}

impl MockServer {
    pub fn bind(addr: &str) -> anyhow::Result<Self> {
        let server = Server::http(addr).map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
        Ok(Self {
            server,
            demo: Demo::default(),
        })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.server.server_addr().to_ip()
    }

    /// Serves requests on `workers` threads until the process exits.
    pub fn run(&self, workers: usize) {
        std::thread::scope(|s| {
            for _ in 0..workers.max(1) {
                s.spawn(|| {
                    while let Ok(req) = self.server.recv() {
                        self.handle(req);
                    }
                });
            }
        });
    }

    fn handle(&self, mut req: Request) {
        let mut body = String::new();
        let outcome = if *req.method() != Method::Post {
            Err(Failure::NotFound)
        } else if let Err(e) = req.as_reader().read_to_string(&mut body) {
            Err(Failure::BadRequest(e.to_string()))
        } else {
            self.dispatch(req.url(), &body)
        };
        let (status, text) = match outcome {
            Ok(t) => (200, t),
            Err(Failure::BadRequest(m)) => (400, json(&ErrorBody { error: m }).unwrap_or_default()),
            Err(Failure::NotFound) => (
                404,
                json(&ErrorBody {
                    error: format!("no endpoint {} {}", req.method(), req.url()),
                })
                .unwrap_or_default(),
            ),
        };
        log::debug!("{} {} -> {status}", req.method(), req.url());
        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
        let resp = Response::from_string(text)
            .with_status_code(status)
            .with_header(header);
        if let Err(e) = req.respond(resp) {
            log::warn!("failed to send response: {e}");
        }
    }

    fn dispatch(&self, url: &str, body: &str) -> Result<String, Failure> {
        let d = &self.demo;
        match url {
            ENDPOINT_PLAN => {
                let b: PlanRequestBody = parse(body)?;
                let image = image_from_b64(&b.image_png_b64)?;
                json(&PlanResponseBody {
                    plan: plan_remote(d.planner.as_ref(), &image, &b.instruction)?,
                })
            }
            ENDPOINT_EDIT => {
                let req = parse::<EditRequestBody>(body)?.into_request()?;
                let out = edit_remote(d.editor.as_ref(), &req)?;
                json(&ImageResponseBody {
                    image_png_b64: image_to_b64(&out)?,
                })
            }
            ENDPOINT_SEGMENT => {
                let b: SegmentRequestBody = parse(body)?;
                let image = image_from_b64(&b.image_png_b64)?;
                let mask = segment_remote(d.segmenter.as_ref(), &image, &b.anchor)?;
                json(&SegmentResponseBody {
                    mask_png_b64: mask_to_b64(&mask)?,
                })
            }
            ENDPOINT_SCORE => {
                let b: ScoreRequestBody = parse(body)?;
                let src = image_from_b64(&b.image_png_b64)?;
                let edited = image_from_b64(&b.edited_png_b64)?;
                let s = score_remote(d.verifier.as_ref(), &src, &edited, &b.instruction)?;
                json(&ScoreResponseBody {
                    score: s.score() as i64,
                    rationale: s.rationale().map(str::to_string),
                })
            }
            ENDPOINT_EMBED => {
                let b: EmbedRequestBody = parse(body)?;
                let image = image_from_b64(&b.image_png_b64)?;
                json(&EmbedResponseBody {
                    embedding: embed_remote(d.embedder.as_ref(), &image)?,
                })
            }
            _ => Err(Failure::NotFound),
        }
    }
}
