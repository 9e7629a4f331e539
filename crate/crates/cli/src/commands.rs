use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use xplan_core::annotate::{category_report, dataset_stats, read_records};
use xplan_core::backend::plan_remote;
use xplan_core::eval::{
    evaluate_case, finish_report, BenchmarkCase, LocalizationConfig, LocalizationSample, MetricRow,
    PipelineConfig,
};
use xplan_core::mask::{read_mask_png, write_mask_png};
use xplan_core::orchestrator::ExecError;
use xplan_core::{
    box_localization_at_k, execute_plan, parse_plan, refine_control, serialize_plan, AnchorMasks,
    ControlInput, EditType, ImageBuffer, Plan,
};

use crate::backends::Clients;
use crate::config::Config;
use crate::serve::MockServer;
use crate::{CliError, CliResult, PlanSource};

fn read_image(path: &Path) -> Result<ImageBuffer, CliError> {
    ImageBuffer::read_png(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn plan_from_file(path: &Path) -> Result<Plan, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let source = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    parse_plan(&text, &source).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Reads the plan file, or asks the planner.
pub fn obtain_plan(
    clients: &Clients,
    image: &ImageBuffer,
    source: &PlanSource,
) -> Result<Plan, CliError> {
    if let Some(path) = &source.plan_file {
        return plan_from_file(path);
    }
    let instruction = source.instruction.as_deref().unwrap_or_default();
    let planner = clients.planner.as_deref().ok_or_else(|| {
        CliError::Input("no planner configured; set services.planner or use --plan-file".into())
    })?;
    let reply = plan_remote(planner, image, instruction).map_err(anyhow::Error::from)?;
    parse_plan(&reply, instruction)
        .map_err(|e| CliError::Other(anyhow::anyhow!("planner reply rejected: {e}\n{reply}")))
}

pub fn plan(clients: &Clients, image: &Path, source: &PlanSource, json: bool) -> CliResult {
    let img = read_image(image)?;
    let plan = obtain_plan(clients, &img, source)?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&plan).map_err(anyhow::Error::from)?
        );
    } else {
        println!("{}", serialize_plan(&plan).map_err(anyhow::Error::from)?);
    }
    Ok(())
}

fn parse_mask_overrides(specs: &[String]) -> Result<HashMap<String, PathBuf>, CliError> {
    specs
        .iter()
        .map(|s| {
            let (anchor, path) = s
                .split_once('=')
                .filter(|(a, p)| !a.trim().is_empty() && !p.is_empty())
                .ok_or_else(|| CliError::Input(format!("--mask expects ANCHOR=PNG, got `{s}`")))?;
            Ok((anchor.trim().to_string(), PathBuf::from(path)))
        })
        .collect()
}

#[derive(Serialize)]
struct StepControl<'a> {
    index: usize,
    edit_type: EditType,
    region_png: String,
    region_area: usize,
    control: &'a ControlInput,
}

pub fn refine(
    cfg: &Config,
    clients: &Clients,
    image: &Path,
    plan_file: &Path,
    out_dir: &Path,
    mask_specs: &[String],
) -> CliResult {
    let img = read_image(image)?;
    let plan = plan_from_file(plan_file)?;
    let overrides = parse_mask_overrides(mask_specs)?;
    let segmenter = clients.exec().segmenter;
    let params = cfg.exec_options().refine;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut controls = Vec::with_capacity(plan.len());
    for sub in &plan.subs {
        let masks = if sub.edit_type == EditType::Style {
            AnchorMasks::default()
        } else {
            let mut anchors = Vec::with_capacity(sub.anchors.len());
            for a in &sub.anchors {
                let m = match overrides.get(a) {
                    Some(p) => read_mask_png(p)
                        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
                    None => segmenter
                        .segment(&img, a)
                        .with_context(|| format!("segmenting `{a}`"))?,
                };
                anchors.push(m);
            }
            AnchorMasks::new(anchors)
        };
        let control = refine_control(sub, &masks, img.dims(), &params)
            .map_err(|e| CliError::Other(e.into()))?;
        let name = format!("step{}_region.png", sub.index);
        write_mask_png(&control.region, out_dir.join(&name)).map_err(anyhow::Error::from)?;
        println!(
            "step {} [{}] region {} px -> {name}",
            sub.index,
            sub.edit_type.name(),
            control.region.area()
        );
        controls.push((sub.index, sub.edit_type, name, control));
    }
    let out: Vec<StepControl<'_>> = controls
        .iter()
        .map(|(index, edit_type, name, control)| StepControl {
            index: *index,
            edit_type: *edit_type,
            region_png: name.clone(),
            region_area: control.region.area(),
            control,
        })
        .collect();
    write_file(
        &out_dir.join("controls.json"),
        &serde_json::to_string_pretty(&out).map_err(anyhow::Error::from)?,
    )
}

pub fn edit(
    cfg: &Config,
    clients: &Clients,
    image: &Path,
    source: &PlanSource,
    out: &Path,
    trace_path: Option<&Path>,
) -> CliResult {
    let img = read_image(image)?;
    let plan = obtain_plan(clients, &img, source)?;
    let result = execute_plan(
        &img,
        &plan,
        &cfg.policy(),
        &cfg.routing_table(),
        cfg.seed,
        &clients.exec(),
        &cfg.exec_options(),
    );
    match result {
        Ok((edited, trace)) => {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            edited.write_png(out).map_err(anyhow::Error::from)?;
            if let Some(p) = trace_path {
                write_file(p, &trace.to_json())?;
            }
            for s in &trace.steps {
                println!(
                    "step {} [{}] -> {} after {} attempt(s)",
                    s.sub.index,
                    s.sub.edit_type.name(),
                    s.backend_id,
                    s.attempts.len()
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Err(e) => {
            if let (Some(p), Some(trace)) = (trace_path, e.partial_trace()) {
                write_file(p, &trace.to_json())?;
            }
            Err(match e {
                ExecError::InvalidPlan(_) | ExecError::NoVerifier => CliError::Input(e.to_string()),
                ExecError::StepFailed { .. } => CliError::Partial(e.to_string()),
            })
        }
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn eval(
    cfg: &Config,
    clients: &Clients,
    records_path: &Path,
    image_root: &Path,
    out: Option<&Path>,
    boxes: Option<&Path>,
    k: usize,
) -> CliResult {
    let records = read_records(records_path).map_err(|e| CliError::Input(e.to_string()))?;
    if records.is_empty() {
        return Err(CliError::Input(format!(
            "{} has no records",
            records_path.display()
        )));
    }
    let pipeline = PipelineConfig {
        policy: cfg.policy(),
        routing: cfg.routing_table(),
        seed0: cfg.seed,
        options: cfg.exec_options(),
    };
    let backends = clients.eval();
    let rows: Vec<MetricRow> = records
        .par_iter()
        .map(
            |r| match ImageBuffer::read_png(image_root.join(&r.image_ref)) {
                Ok(image) => {
                    let case = BenchmarkCase {
                        id: r.record_id.clone(),
                        image,
                        plan: r.plan(),
                        target_caption: None,
                    };
                    evaluate_case(&case, &pipeline, &cfg.metrics, &backends)
                }
                Err(e) => MetricRow {
                    id: r.record_id.clone(),
                    error: Some(format!("{}: {e}", r.image_ref)),
                    ..MetricRow::default()
                },
            },
        )
        .collect();
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.id)))
        .collect();
    let report = finish_report(rows, &pipeline, &cfg.metrics).map_err(anyhow::Error::from)?;
    if let Some(p) = out {
        write_file(p, &report.to_json())?;
    }
    print!("{}", report.render_table());

    if let Some(path) = boxes {
        let samples: Vec<LocalizationSample<f64>> = read_jsonl(path)?;
        let lc = LocalizationConfig::new(k, 0.5).map_err(|e| CliError::Input(e.to_string()))?;
        let loc =
            box_localization_at_k(&samples, &lc).map_err(|e| CliError::Input(e.to_string()))?;
        println!(
            "localization k={}: IoU {:.4}  AP50 {:.4}  ({} samples)",
            loc.k, loc.iou_at_k, loc.ap50_at_k, loc.samples
        );
    }

    if failed.is_empty() {
        Ok(())
    } else {
        for f in &failed {
            eprintln!("failed: {f}");
        }
        Err(CliError::Partial(format!(
            "{} of {} rows failed",
            failed.len(),
            records.len()
        )))
    }
}

pub fn stats(cfg: &Config, path: &Path, json: bool, categories: bool) -> CliResult {
    let records = read_records(path).map_err(|e| CliError::Input(e.to_string()))?;
    let s = dataset_stats(&records);
    let mut stdout = std::io::stdout().lock();
    if json {
        writeln!(stdout, "{}", s.to_json()).map_err(anyhow::Error::from)?;
    } else {
        write!(stdout, "{}", s.render_text()).map_err(anyhow::Error::from)?;
    }
    if categories {
        writeln!(
            stdout,
            "{:<14} {:>8} {:>8} {:>6}",
            "category", "target", "actual", "count"
        )
        .map_err(anyhow::Error::from)?;
        for row in category_report(&records, &cfg.annotate.category_mix) {
            writeln!(
                stdout,
                "{:<14} {:>8.3} {:>8.3} {:>6}",
                row.category.name(),
                row.target,
                row.actual,
                row.count
            )
            .map_err(anyhow::Error::from)?;
        }
    }
    Ok(())
}

pub fn mock_serve(addr: &str, workers: usize) -> CliResult {
    let server = MockServer::bind(addr).map_err(|e| CliError::Input(e.to_string()))?;
    match server.local_addr() {
        Some(a) => println!("listening on http://{a}"),
        None => println!("listening on {addr}"),
    }
    std::io::stdout().flush().map_err(anyhow::Error::from)?;
    server.run(workers);
    Ok(())
}
