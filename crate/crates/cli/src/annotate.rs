//! `annotate`: the three-level record factory over a captioned corpus.
//!
//! Every level appends to its own JSONL file and skips work already on disk,
//! so an interrupted run can be restarted with the same arguments.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use xplan_core::annotate::{
    annotate_level2, append_jsonl, build_level1_prompt, default_examples, mix_simple_pairs,
    parse_level1_response, pseudolabel_level3, read_records, sample_source, DatasetRecord,
    DirMaskStore, ImageMeta, Level2Input, QuarantineEntry, RecordWriter,
};
use xplan_core::backend::hash::Fnv1a;
use xplan_core::backend::{plan_remote, Planner, Segmenter};
use xplan_core::{ImageBuffer, RefineParams};

use crate::backends::Clients;
use crate::config::Config;
use crate::{CliError, CliResult, LevelArg};

pub const LEVEL1_FILE: &str = "level1.jsonl";
pub const LEVEL2_FILE: &str = "level2.jsonl";
pub const LEVEL3_FILE: &str = "level3.jsonl";
pub const QUARANTINE_FILE: &str = "quarantine.jsonl";
pub const LEVEL1_FAILURES_FILE: &str = "level1_failures.jsonl";

#[derive(Debug, Clone, Deserialize)]
struct CorpusEntry {
    image_ref: String,
    #[serde(default)]
    caption: Option<String>,
    #[serde(default)]
    source_tag: Option<String>,
    #[serde(default)]
    post_image_ref: Option<String>,
}

/// A Level-1 problem: a whole image that produced nothing, or one dropped pair.
#[derive(Debug, Serialize)]
struct Level1Failure {
    image_ref: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    ordinal: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    complex_instruction: Option<String>,
    kind: String,
    reason: String,
}

impl Level1Failure {
    fn image(image_ref: &str, kind: &str, reason: impl ToString) -> Self {
        Self {
            image_ref: image_ref.to_string(),
            ordinal: None,
            complex_instruction: None,
            kind: kind.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Default)]
struct Level1Out {
    records: Vec<DatasetRecord>,
    failures: Vec<Level1Failure>,
    image_failed: bool,
}

fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn load(root: &Path, image_ref: &str) -> Result<ImageBuffer, String> {
    ImageBuffer::read_png(root.join(image_ref)).map_err(|e| format!("{image_ref}: {e}"))
}

fn image_seed(seed: u64, image_ref: &str) -> u64 {
    Fnv1a::default()
        .u64(seed)
        .update(image_ref.as_bytes())
        .finish()
}

fn level1_image(
    cfg: &Config,
    planner: &dyn Planner,
    root: &Path,
    entry: &CorpusEntry,
) -> Level1Out {
    let mut out = Level1Out::default();
    let r = &entry.image_ref;
    let mut fail = |kind: &str, reason: String| {
        out.failures.push(Level1Failure::image(r, kind, reason));
        out.image_failed = true;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, r));
    let source_tag = entry
        .source_tag
        .clone()
        .unwrap_or_else(|| sample_source(&cfg.annotate.sources, &mut rng).to_string());
    let meta = ImageMeta {
        image_ref: r.clone(),
        caption: entry.caption.clone(),
    };
    let prompt =
        match build_level1_prompt(&meta, &cfg.annotate.level1_template, &default_examples()) {
            Ok(p) => p,
            Err(e) => {
                fail("template", e.to_string());
                return out;
            }
        };
    let image = match load(root, r) {
        Ok(i) => i,
        Err(e) => {
            fail("image", e);
            return out;
        }
    };
    let reply = match plan_remote(planner, &image, &prompt) {
        Ok(t) => t,
        Err(e) => {
            fail("planner", e.to_string());
            return out;
        }
    };
    let parsed = match parse_level1_response(&reply) {
        Ok(p) => p,
        Err(e) => {
            fail("no_pairs", e.to_string());
            return out;
        }
    };
    out.failures
        .extend(parsed.dropped.iter().map(|d| Level1Failure {
            image_ref: r.clone(),
            ordinal: Some(d.ordinal),
            complex_instruction: Some(d.complex_instruction.clone()),
            kind: d.reason.kind().to_string(),
            reason: d.reason.to_string(),
        }));
    let records = parsed
        .candidates
        .iter()
        .map(|c| {
            DatasetRecord::from_plan(
                source_tag.clone(),
                r.clone(),
                c.complex_instruction.clone(),
                &c.plan,
            )
            .with_category(c.category)
        })
        .collect();
    out.records = mix_simple_pairs(records, &cfg.annotate.simple_fractions, &mut rng)
        .into_iter()
        .map(|mut rec| {
            rec.assign_split(cfg.annotate.val_fraction);
            rec
        })
        .collect();
    out
}

#[derive(Debug, Default)]
struct Tally {
    written: usize,
    skipped: usize,
    failed: usize,
}

fn level1(
    cfg: &Config,
    clients: &Clients,
    corpus: &[CorpusEntry],
    out_dir: &Path,
    root: &Path,
) -> Result<Tally, CliError> {
    let planner = clients.planner.as_deref().ok_or_else(|| {
        CliError::Input("level 1 needs a planner; set services.planner or use --mock".into())
    })?;
    let path = out_dir.join(LEVEL1_FILE);
    let mut writer = RecordWriter::open(&path).map_err(anyhow::Error::from)?;
    let done: HashSet<String> = read_records(&path)
        .map_err(anyhow::Error::from)?
        .into_iter()
        .map(|r| r.image_ref)
        .collect();
    let todo: Vec<&CorpusEntry> = corpus
        .iter()
        .filter(|e| !done.contains(&e.image_ref))
        .collect();
    let mut tally = Tally {
        skipped: corpus.len() - todo.len(),
        ..Tally::default()
    };
    let results: Vec<Level1Out> = todo
        .par_iter()
        .map(|e| level1_image(cfg, planner, root, e))
        .collect();
    let failures = out_dir.join(LEVEL1_FAILURES_FILE);
    for res in results {
        for f in &res.failures {
            append_jsonl(&failures, f).map_err(anyhow::Error::from)?;
        }
        tally.failed += res.image_failed as usize;
        for rec in &res.records {
            writer.write(rec).map_err(anyhow::Error::from)?;
        }
    }
    tally.written = writer.written();
    Ok(tally)
}

/// Records at `prev` that are neither at `next` nor quarantined at `stage`.
fn pending(
    out_dir: &Path,
    prev: &str,
    next: &RecordWriter,
    stage: &str,
) -> Result<Vec<DatasetRecord>, CliError> {
    let prev_path = out_dir.join(prev);
    if !prev_path.exists() {
        return Err(CliError::Input(format!(
            "{} not found; run the previous level first",
            prev_path.display()
        )));
    }
    let quarantined: HashSet<String> = read_quarantine(out_dir)?
        .into_iter()
        .filter(|q| q.stage == stage)
        .map(|q| q.record.record_id)
        .collect();
    Ok(read_records(&prev_path)
        .map_err(anyhow::Error::from)?
        .into_iter()
        .filter(|r| !next.contains(&r.record_id) && !quarantined.contains(&r.record_id))
        .collect())
}

fn read_quarantine(out_dir: &Path) -> Result<Vec<QuarantineEntry>, CliError> {
    let path = out_dir.join(QUARANTINE_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect())
}

fn finish_stage(
    stage: &str,
    out_dir: &Path,
    writer: &mut RecordWriter,
    results: Vec<(DatasetRecord, Result<DatasetRecord, String>)>,
) -> Result<Tally, CliError> {
    let mut tally = Tally::default();
    for (input, res) in results {
        match res {
            Ok(rec) => {
                writer.write(&rec).map_err(anyhow::Error::from)?;
            }
            Err(e) => {
                log::warn!("{stage}: quarantined {}: {e}", input.record_id);
                let q = QuarantineEntry {
                    stage: stage.to_string(),
                    reason: e,
                    record: input,
                };
                append_jsonl(out_dir.join(QUARANTINE_FILE), &q).map_err(anyhow::Error::from)?;
                tally.failed += 1;
            }
        }
    }
    tally.written = writer.written();
    Ok(tally)
}

fn level2(
    segmenter: &dyn Segmenter,
    params: &RefineParams,
    post_refs: &HashMap<String, String>,
    out_dir: &Path,
    root: &Path,
) -> Result<Tally, CliError> {
    let mut writer = RecordWriter::open(out_dir.join(LEVEL2_FILE)).map_err(anyhow::Error::from)?;
    let todo = pending(out_dir, LEVEL1_FILE, &writer, "level2")?;
    let store = DirMaskStore::new(out_dir);
    let results = todo
        .into_par_iter()
        .map(|rec| {
            let res = (|| {
                let image = load(root, &rec.image_ref)?;
                let post = post_refs
                    .get(&rec.image_ref)
                    .map(|p| load(root, p))
                    .transpose()?;
                let input = Level2Input {
                    image: &image,
                    post_image: post.as_ref(),
                };
                annotate_level2(rec.clone(), segmenter, input, &store, params)
                    .map_err(|e| e.to_string())
            })();
            (rec, res)
        })
        .collect();
    finish_stage("level2", out_dir, &mut writer, results)
}

fn level3(
    planner: &dyn Planner,
    params: &RefineParams,
    out_dir: &Path,
    root: &Path,
) -> Result<Tally, CliError> {
    let mut writer = RecordWriter::open(out_dir.join(LEVEL3_FILE)).map_err(anyhow::Error::from)?;
    let todo = pending(out_dir, LEVEL2_FILE, &writer, "level3")?;
    let store = DirMaskStore::new(out_dir);
    let results = todo
        .into_par_iter()
        .map(|rec| {
            let res = load(root, &rec.image_ref).and_then(|image| {
                pseudolabel_level3(rec.clone(), planner, &image, &store, params)
                    .map_err(|e| e.to_string())
            });
            (rec, res)
        })
        .collect();
    finish_stage("level3", out_dir, &mut writer, results)
}

pub fn run(
    cfg: &Config,
    clients: &Clients,
    corpus_path: &Path,
    out_dir: &Path,
    root: &Path,
    level: LevelArg,
) -> CliResult {
    let corpus = read_corpus(corpus_path)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let params = cfg.exec_options().refine;
    let post_refs: HashMap<String, String> = corpus
        .iter()
        .filter_map(|e| e.post_image_ref.clone().map(|p| (e.image_ref.clone(), p)))
        .collect();
    let wants = |l: LevelArg| level == l || level == LevelArg::All;
    let mut failed = 0;
    let mut report = |name: &str, t: Tally| {
        println!(
            "{name}: {} written, {} skipped, {} failed",
            t.written, t.skipped, t.failed
        );
        failed += t.failed;
    };

    if wants(LevelArg::One) {
        report("level1", level1(cfg, clients, &corpus, out_dir, root)?);
    }
    if wants(LevelArg::Two) {
        let segmenter = clients.exec().segmenter;
        report(
            "level2",
            level2(segmenter.as_ref(), &params, &post_refs, out_dir, root)?,
        );
    }
    if wants(LevelArg::Three) {
        let planner = clients.planner.as_deref().ok_or_else(|| {
            CliError::Input("level 3 needs a planner; set services.planner or use --mock".into())
        })?;
        report("level3", level3(planner, &params, out_dir, root)?);
    }
    if failed > 0 {
        return Err(CliError::Partial(format!(
            "{failed} item(s) failed; see {} and {}",
            out_dir.join(QUARANTINE_FILE).display(),
            out_dir.join(LEVEL1_FAILURES_FILE).display()
        )));
    }
    Ok(())
}
