//! Acceptance suite. Runs every criterion against independent oracles,
//! prints one PASS/FAIL line each and exits non-zero on any failure.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use xplan_core::annotate::{
    mix_simple_pairs, parse_level1_response, DropReason, SimpleFractions, SourceSampler,
    DEFAULT_SOURCES,
};
use xplan_core::backend::mock::{MockEditor, MockVerifier, ScriptedScore};
use xplan_core::backend::EditorRegistry;
use xplan_core::eval::{
    run_benchmark, BenchmarkCase, EvalBackends, LocalizationConfig, LocalizationSample,
    MetricsConfig, PipelineConfig,
};
use xplan_core::mask::{box_iou, enlarge_small_box, full_mask, mask_overlap_metrics};
use xplan_core::orchestrator::execute_step_with_verification;
use xplan_core::router::{DEFAULT_BACKEND, GLOBAL_BACKEND, INPAINT_BACKEND};
use xplan_core::*;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn editors() -> EditorRegistry {
    let ed: Arc<MockEditor> = Arc::new(MockEditor::new());
    EditorRegistry::new()
        .register(DEFAULT_BACKEND, ed.clone())
        .register(INPAINT_BACKEND, ed.clone())
        .register(GLOBAL_BACKEND, ed)
}

// 1 -------------------------------------------------------------------------

fn parser_fidelity() -> Check {
    let plan = parse_plan(
        "[insertion]<0.59,0.71,0.95,0.93> Add Christmas ornaments around the <cat>",
        "decorate for the holidays",
    )
    .map_err(|e| e.to_string())?;
    let want = SubInstruction::new(
        0,
        EditType::Insertion,
        "Add Christmas ornaments around the cat",
    )
    .with_anchors(["cat"])
    .with_box(NormBox::new(0.59, 0.71, 0.95, 0.93).unwrap());
    ensure!(
        plan.subs == vec![want.clone()],
        "insertion line parsed to {:?}",
        plan.subs
    );

    let plan = parse_plan("local texture: Make <tree> to be in cyberpunk", "x")
        .map_err(|e| e.to_string())?;
    let want = SubInstruction::new(0, EditType::LocalTexture, "Make tree to be in cyberpunk")
        .with_anchors(["tree"]);
    ensure!(
        plan.subs == vec![want],
        "texture line parsed to {:?}",
        plan.subs
    );

    let mut rng = rng(1);
    for i in 0..1000 {
        let p = random_plan(&mut rng);
        ensure!(
            validate_plan(&p).is_empty(),
            "generator produced invalid plan {p:?}"
        );
        let text = serialize_plan(&p).map_err(|e| format!("plan {i}: {e}"))?;
        let back = parse_plan(&text, &p.source_instruction)
            .map_err(|e| format!("plan {i}: {e}\n{text}"))?;
        ensure!(
            back == p,
            "plan {i} changed on round trip:\n{text}\n{p:?}\n{back:?}"
        );
    }
    Ok(())
}

// 2 -------------------------------------------------------------------------

fn identity_preservation() -> Check {
    let mut rng = rng(2);
    for case in 0..200 {
        let fx = random_exec_fixture(&mut rng, true, 5, 0.5);
        let verify = rng.gen_bool(0.5);
        let (policy, verifier) = if verify {
            let script: Vec<i64> = (0..10).map(|_| rng.gen_range(0..=4)).collect();
            (
                VerifyPolicy::enabled(3, rng.gen_range(1..=4)).unwrap(),
                Some(Arc::new(MockVerifier::scripted(script)) as Arc<dyn backend::Verifier>),
            )
        } else {
            (VerifyPolicy::default(), None)
        };
        let profile = *[RoutingProfile::BagOfModels, RoutingProfile::SingleModel]
            .choose(&mut rng)
            .unwrap();
        let backends = Backends {
            segmenter: Arc::new(fx.segmenter),
            editors: editors(),
            verifier,
        };
        let (out, trace) = execute_plan(
            &fx.image,
            &fx.plan,
            &policy,
            &RoutingTable::from_profile(profile),
            rng.gen(),
            &backends,
            &ExecOptions::default(),
        )
        .map_err(|e| format!("case {case}: {e}"))?;

        let (w, h) = fx.image.dims();
        let mut union = Grid::new(w, h);
        for step in &trace.steps {
            union = union.or(&Grid::from_mask(&step.control.region));
        }
        let mut changed_inside = 0;
        for y in 0..h {
            for x in 0..w {
                let same = out.pixel(x, y) == fx.image.pixel(x, y);
                if union.bits[y * w + x] {
                    changed_inside += (!same) as usize;
                } else {
                    ensure!(
                        same,
                        "case {case}: pixel ({x},{y}) outside every region changed"
                    );
                }
            }
        }
        ensure!(
            changed_inside > 0,
            "case {case}: no in-region pixel changed"
        );
    }
    Ok(())
}

// 3 -------------------------------------------------------------------------

fn refine_rule_table() -> Check {
    let params = RefineParams::default();
    let mut rng = rng(3);
    for t in EditType::ALL {
        for case in 0..60 {
            let w = rng.gen_range(1..=64);
            let h = rng.gen_range(1..=64);
            let primary = random_mask(&mut rng, w, h, 0.6);
            let pg = Grid::from_mask(&primary);
            let mut sub = SubInstruction::new(0, t, "edit");
            let mut masks = AnchorMasks::new(vec![primary.clone()]);
            let mut post = None;
            match t {
                EditType::Replace => {
                    sub = sub.with_anchors(["a", "b"]);
                    masks.anchors.push(random_mask(&mut rng, w, h, 0.6));
                    if rng.gen_bool(0.5) {
                        let m = random_mask(&mut rng, w, h, 0.6);
                        post = Some(Grid::from_mask(&m));
                        masks = masks.with_post_edit(m);
                    }
                }
                EditType::Style => {
                    sub = sub.with_anchors(Vec::<String>::new());
                    masks = AnchorMasks::default();
                }
                EditType::Insertion => {
                    sub = sub.with_anchors(["a"]).with_box(random_box(&mut rng));
                }
                _ => sub = sub.with_anchors(["a"]),
            }
            let ctl = refine_control(&sub, &masks, (w, h), &params)
                .map_err(|e| format!("{} case {case}: {e}", t.name()))?;
            let region = Grid::from_mask(&ctl.region);
            let tag = format!("{} case {case} ({w}x{h})", t.name());
            match t {
                EditType::Style => {
                    ensure!(
                        region.area() == w * h,
                        "{tag}: style region is not the full image"
                    );
                }
                EditType::Replace => {
                    let want = match &post {
                        Some(p) => pg.or(p),
                        None => brute_dilate(&pg, oracle_radius(pg.area(), 0.20)),
                    };
                    ensure!(
                        region.bits == want.bits,
                        "{tag}: replace region differs from oracle"
                    );
                }
                EditType::ShapeChange | EditType::Remove => {
                    let want = brute_dilate(&pg, oracle_radius(pg.area(), 0.20));
                    ensure!(
                        region.bits == want.bits,
                        "{tag}: dilation differs from disc oracle"
                    );
                    if pg.area() < w * h {
                        ensure!(
                            region.area() > pg.area(),
                            "{tag}: region is not a strict superset"
                        );
                    }
                }
                EditType::Insertion => {
                    let bx = ctl.bbox.ok_or(format!("{tag}: no box"))?;
                    ensure!(
                        bx.area() >= 0.05 * (1.0 - 1e-9),
                        "{tag}: box area {} < 0.05",
                        bx.area()
                    );
                    let raster = oracle_raster(&bx, w, h);
                    ensure!(
                        region.bits.iter().zip(&raster.bits).all(|(r, b)| *r || !*b),
                        "{tag}: region misses part of the enlarged box raster"
                    );
                    ensure!(
                        region.bits == pg.or(&raster).bits,
                        "{tag}: region != mask ∪ raster"
                    );
                }
                _ => {
                    ensure!(
                        region.bits == pg.bits,
                        "{tag}: region should equal the anchor mask"
                    );
                }
            }
        }
    }
    Ok(())
}

// 4 -------------------------------------------------------------------------

fn box_enlargement() -> Check {
    let mut rng = rng(4);
    let min = 0.05;
    let mut unbound = 0;
    for i in 0..1000 {
        let area: f64 = rng.gen_range(1e-5..0.0499);
        let aspect: f64 = rng.gen_range(-2.5f64..2.5).exp();
        let bw = (area * aspect).sqrt().min(0.999);
        let bh = area / bw;
        if bh >= 1.0 {
            continue;
        }
        let x1 = rng.gen_range(0.0..1.0 - bw);
        let y1 = rng.gen_range(0.0..1.0 - bh);
        let bx = NormBox::new(x1, y1, x1 + bw, y1 + bh).unwrap();
        let (cx, cy) = bx.center();
        let s = (min / bx.area()).sqrt();
        let (nw, nh) = (bx.width() * s, bx.height() * s);
        let binds = nw > 1.0
            || nh > 1.0
            || cx - nw / 2.0 < 0.0
            || cx + nw / 2.0 > 1.0
            || cy - nh / 2.0 < 0.0
            || cy + nh / 2.0 > 1.0;
        let out = enlarge_small_box(&bx, min);
        if !binds {
            unbound += 1;
            ensure!(
                (out.area() - min).abs() <= 1e-9,
                "box {i}: area {}",
                out.area()
            );
            let (ox, oy) = out.center();
            ensure!(
                (ox - cx).abs() <= 1e-12 && (oy - cy).abs() <= 1e-12,
                "box {i}: centre moved by ({}, {})",
                ox - cx,
                oy - cy
            );
        }
        ensure!(
            enlarge_small_box(&out, min) == out,
            "box {i}: not idempotent"
        );
        let big = random_box(&mut rng);
        if big.area() >= min {
            ensure!(enlarge_small_box(&big, min) == big, "large box {i} changed");
        }
    }
    ensure!(unbound >= 500, "only {unbound} non-binding boxes generated");
    Ok(())
}

// 5 -------------------------------------------------------------------------

/// Expected (attempt count, accepted index) for a fully-succeeding editor.
/// `None` marks a verifier failure; entries past the script score 4.
fn retry_oracle(script: &[Option<u8>], threshold: u8, max_retries: usize) -> (usize, usize) {
    let n = max_retries + 1;
    let score = |k: usize| script.get(k).copied().unwrap_or(Some(4));
    for k in 0..n {
        if matches!(score(k), Some(s) if s >= threshold) {
            return (k + 1, k);
        }
    }
    let mut best: Option<(u8, usize)> = None;
    for k in 0..n {
        if let Some(s) = score(k) {
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, k));
            }
        }
    }
    (n, best.map_or(0, |(_, k)| k))
}

fn run_script(script: &[Option<u8>], max_retries: u32) -> Result<(usize, usize, usize), String> {
    let img = random_image(&mut rng(50), 6, 6);
    let sub = SubInstruction::new(0, EditType::LocalColorChange, "recolor");
    let ctl = ControlInput::from_mask(full_mask(6, 6).unwrap());
    let verifier = MockVerifier::with_script(script.iter().map(|s| match s {
        Some(v) => ScriptedScore::Score(*v as i64),
        None => ScriptedScore::Fail,
    }));
    let policy = VerifyPolicy::enabled(3, max_retries).unwrap();
    let out = execute_step_with_verification(
        &img,
        &sub,
        &ctl,
        DEFAULT_BACKEND,
        &policy,
        |k| 100 + k as u64,
        &MockEditor::new(),
        Some(&verifier),
    )
    .map_err(|e| e.to_string())?;
    Ok((out.attempts.len(), out.accepted_attempt, verifier.calls()))
}

fn verify_retry() -> Check {
    let f = None;
    let s = Some;
    // script, (attempts, accepted) with max_retries 1, then with 4.
    #[rustfmt::skip]
    let table: Vec<(Vec<Option<u8>>, (usize, usize), (usize, usize))> = vec![
        (vec![s(4), s(0), s(0), s(0), s(0)], (1, 0), (1, 0)),
        (vec![s(3), s(0), s(0), s(0), s(0)], (1, 0), (1, 0)),
        (vec![s(2), s(4), s(0), s(0), s(0)], (2, 1), (2, 1)),
        (vec![s(2), s(3), s(0), s(0), s(0)], (2, 1), (2, 1)),
        (vec![s(2), s(2), s(2), s(2), s(2)], (2, 0), (5, 0)),
        (vec![s(1), s(2), s(1), s(2), s(1)], (2, 1), (5, 1)),
        (vec![s(0), s(0), s(0), s(0), s(0)], (2, 0), (5, 0)),
        (vec![s(0), s(1), s(2), s(1), s(0)], (2, 1), (5, 2)),
        (vec![s(2), s(1), s(0), s(0), s(3)], (2, 0), (5, 4)),
        (vec![s(1), s(1), s(1), s(3), s(4)], (2, 0), (4, 3)),
        (vec![s(0), s(2), s(2), s(2), s(4)], (2, 1), (5, 4)),
        (vec![s(2), s(0), s(0), s(2), s(0)], (2, 0), (5, 0)),
        (vec![s(1), s(0), s(2), s(0), s(2)], (2, 0), (5, 2)),
        (vec![s(0), s(0), s(4), s(0), s(0)], (2, 0), (3, 2)),
        (vec![s(2), s(2), s(3), s(0), s(0)], (2, 0), (3, 2)),
        (vec![s(1), s(2), s(0), s(0), s(1)], (2, 1), (5, 1)),
        (vec![s(0), s(1), s(0), s(1), s(0)], (2, 1), (5, 1)),
        (vec![s(2), s(1), s(2), s(1), s(2)], (2, 0), (5, 0)),
        (vec![s(1), s(2), s(2), s(0), s(2)], (2, 1), (5, 1)),
        (vec![s(0), s(0), s(0), s(3), s(3)], (2, 0), (4, 3)),
        (vec![s(1), s(0), s(0), s(0), s(2)], (2, 0), (5, 4)),
        (vec![s(0), s(3), s(4), s(4), s(4)], (2, 1), (2, 1)),
        (vec![s(2), s(1), s(1), s(1), s(1)], (2, 0), (5, 0)),
        (vec![s(1), s(1), s(1), s(1), s(1)], (2, 0), (5, 0)),
        (vec![f, s(3), s(0), s(0), s(0)], (2, 1), (2, 1)),
        (vec![f, f, f, f, f], (2, 0), (5, 0)),
        (vec![f, s(1), f, s(2), f], (2, 1), (5, 3)),
        (vec![s(0), f, f, f, s(3)], (2, 0), (5, 4)),
    ];
    for (i, (script, want1, want4)) in table.iter().enumerate() {
        for (mr, want) in [(1u32, want1), (4u32, want4)] {
            ensure!(
                retry_oracle(script, 3, mr as usize) == *want,
                "table row {i}: hand value disagrees with oracle"
            );
            let (n, acc, calls) = run_script(script, mr)?;
            ensure!(
                (n, acc) == *want,
                "row {i} retries {mr}: got ({n}, {acc}), want {want:?}"
            );
            ensure!(
                calls == n,
                "row {i} retries {mr}: {calls} verifier calls for {n} attempts"
            );
        }
    }
    // Every score script of length 5.
    for code in 0..5usize.pow(5) {
        let script: Vec<Option<u8>> = (0..5)
            .map(|d| Some((code / 5usize.pow(d) % 5) as u8))
            .collect();
        for mr in [1u32, 4] {
            let (n, acc, _) = run_script(&script, mr)?;
            let want = retry_oracle(&script, 3, mr as usize);
            ensure!(
                (n, acc) == want,
                "script {script:?} retries {mr}: got ({n}, {acc}), want {want:?}"
            );
        }
    }
    Ok(())
}

// 6 -------------------------------------------------------------------------

fn metric_oracles() -> Check {
    let mut rng = rng(6);
    for i in 0..1500 {
        let w = rng.gen_range(1..=32);
        let h = rng.gen_range(1..=32);
        let density = rng.gen_range(0.05..0.9);
        let mut gt = random_grid(&mut rng, w, h, density);
        gt.bits[rng.gen_range(0..w * h)] = true;
        let pred = if i % 10 == 0 {
            Grid::new(w, h)
        } else {
            let density = rng.gen_range(0.0..1.0);
            random_grid(&mut rng, w, h, density)
        };
        let (mut inter, mut union, mut p, mut g) = (0u32, 0u32, 0u32, 0u32);
        for (a, b) in pred.bits.iter().zip(&gt.bits) {
            inter += (*a && *b) as u32;
            union += (*a || *b) as u32;
            p += *a as u32;
            g += *b as u32;
        }
        let m = mask_overlap_metrics::<f64>(&pred.to_mask(), &gt.to_mask())
            .map_err(|e| e.to_string())?;
        let precision = if p == 0 { 1.0 } else { inter as f64 / p as f64 };
        ensure!(
            (m.iou - inter as f64 / union as f64).abs() <= 1e-12,
            "mask {i}: iou {}",
            m.iou
        );
        ensure!(
            (m.precision - precision).abs() <= 1e-12,
            "mask {i}: precision {}",
            m.precision
        );
        ensure!(
            (m.recall - inter as f64 / g as f64).abs() <= 1e-12,
            "mask {i}: recall {}",
            m.recall
        );
        ensure!(m.empty_prediction == (p == 0), "mask {i}: empty flag");
    }

    for i in 0..1500 {
        let (a, b) = (random_grid_box(&mut rng), random_grid_box(&mut rng));
        let (inter, union) = int_box_overlap(a, b);
        let got = box_iou(&grid_box(a), &grid_box(b));
        ensure!(
            (got - inter as f64 / union as f64).abs() <= 1e-12,
            "box pair {i}: iou {got}"
        );
    }

    // AP50@K against exact integer comparisons.
    for set in 0..1000 {
        let n = rng.gen_range(1..=12);
        let raw: Vec<([u64; 4], Vec<[u64; 4]>)> = (0..n)
            .map(|_| {
                let gt = random_grid_box(&mut rng);
                let preds = (0..5)
                    .map(|_| {
                        if rng.gen_bool(0.3) {
                            gt
                        } else {
                            random_grid_box(&mut rng)
                        }
                    })
                    .collect();
                (gt, preds)
            })
            .collect();
        let samples: Vec<LocalizationSample> = raw
            .iter()
            .enumerate()
            .map(|(j, (gt, preds))| LocalizationSample {
                id: format!("s{j}"),
                gt: grid_box(*gt),
                preds: preds.iter().map(|p| grid_box(*p)).collect(),
            })
            .collect();
        let mut prev = (0.0f64, 0.0f64);
        for k in 1..=5 {
            let mut hits = 0usize;
            let mut iou_sum = 0.0;
            for (gt, preds) in &raw {
                let best = preds[..k]
                    .iter()
                    .map(|p| int_box_overlap(*p, *gt))
                    .max_by(|x, y| (x.0 * y.1).cmp(&(y.0 * x.1)))
                    .unwrap();
                hits += (2 * best.0 >= best.1) as usize;
                iou_sum += best.0 as f64 / best.1 as f64;
            }
            let got = box_localization_at_k(&samples, &LocalizationConfig::new(k, 0.5).unwrap())
                .map_err(|e| e.to_string())?;
            let ap = hits as f64 / n as f64;
            ensure!(
                (got.ap50_at_k - ap).abs() <= 1e-12,
                "set {set} k={k}: ap {} vs {ap}",
                got.ap50_at_k
            );
            ensure!(
                (got.iou_at_k - iou_sum / n as f64).abs() <= 1e-12,
                "set {set} k={k}: iou@k {}",
                got.iou_at_k
            );
            if set < 100 {
                ensure!(
                    got.iou_at_k >= prev.0 && got.ap50_at_k >= prev.1,
                    "set {set}: metrics decreased at k={k}"
                );
                prev = (got.iou_at_k, got.ap50_at_k);
            }
        }
    }
    Ok(())
}

// 7 -------------------------------------------------------------------------

fn routing() -> Check {
    let bag = RoutingTable::from_profile(RoutingProfile::BagOfModels);
    let single = RoutingTable::from_profile(RoutingProfile::SingleModel);
    for t in EditType::ALL {
        let want = match t {
            EditType::Remove => INPAINT_BACKEND,
            EditType::Style => GLOBAL_BACKEND,
            _ => DEFAULT_BACKEND,
        };
        let got = route_edit(t, &bag, |_| true).map_err(|e| e.to_string())?;
        ensure!(got == want, "bag-of-models routes {} to {got}", t.name());
        let got = route_edit(t, &single, |_| true).map_err(|e| e.to_string())?;
        ensure!(
            got == DEFAULT_BACKEND,
            "single-model routes {} to {got}",
            t.name()
        );
    }
    Ok(())
}

// 8 -------------------------------------------------------------------------

fn adversarial_block(rng: &mut impl Rng, i: usize) -> (String, &'static str) {
    let colon = rng.gen_bool(0.5);
    let line = |t: EditType, body: &str| {
        if colon {
            format!("{}: {body}", t.name())
        } else {
            format!("[{}] {body}", t.name())
        }
    };
    if i.is_multiple_of(2) {
        let n = rng.gen_range(6..=10);
        let lines: Vec<String> = (0..n)
            .map(|j| {
                line(
                    EditType::LocalColorChange,
                    &format!("Paint the <item{j}> teal"),
                )
            })
            .collect();
        (
            format!("Complex: recolor everything {i}\n{}", lines.join("\n")),
            "too_many_subs",
        )
    } else {
        let body = match i % 6 {
            1 => "Replace the <cat> with a small fox".to_string(),
            3 => "Replace the <cat> with a <fox> next to the <lamp>".to_string(),
            _ => "Replace the cat with a fox".to_string(),
        };
        let mut lines = vec![line(EditType::Replace, &body)];
        if rng.gen_bool(0.5) {
            lines.insert(0, line(EditType::Remove, "Remove the <cup>"));
        }
        (
            format!("Complex: swap the pet {i}\n{}", lines.join("\n")),
            "anchor_arity",
        )
    }
}

fn annotation_constants() -> Check {
    let weights = SourceWeights::default();
    let got: Vec<u32> = weights.entries().iter().map(|e| e.weight).collect();
    ensure!(
        got == [1, 3, 3, 3, 1, 3, 3, 9, 9, 9],
        "default weights {got:?}"
    );
    let sampler = SourceSampler::new(&weights);
    let mut rng = rng(8);
    let n = 100_000;
    let mut counts = vec![0usize; DEFAULT_SOURCES.len()];
    for _ in 0..n {
        let tag = sampler.sample(&mut rng);
        let idx = DEFAULT_SOURCES.iter().position(|(t, _)| *t == tag).unwrap();
        counts[idx] += 1;
    }
    let total: u32 = DEFAULT_SOURCES.iter().map(|(_, w)| w).sum();
    for ((tag, w), c) in DEFAULT_SOURCES.iter().zip(&counts) {
        let (freq, want) = (*c as f64 / n as f64, *w as f64 / total as f64);
        ensure!(
            (freq - want).abs() <= 0.01,
            "{tag}: frequency {freq:.4} vs {want:.4}"
        );
    }

    let plan = Plan::new(
        "c",
        vec![
            SubInstruction::new(0, EditType::Remove, "Remove the cup").with_anchors(["cup"]),
            SubInstruction::new(1, EditType::Style, "Make it sepia"),
        ],
    );
    let records: Vec<DatasetRecord> = (0..10_000)
        .map(|i| DatasetRecord::from_plan("any", format!("img/{i}.png"), "tidy and age it", &plan))
        .collect();
    let mixed = mix_simple_pairs(records, &SimpleFractions::uniform(0.40), &mut rng);
    let simple = mixed
        .iter()
        .filter(|r| r.pair_kind == annotate::PairKind::SimpleSimple)
        .count();
    let share = simple as f64 / mixed.len() as f64;
    ensure!((0.38..=0.42).contains(&share), "simple share {share}");

    let valid = "Complex: tidy the desk\n[remove] Remove the <cup>\n[local color change] Make the <lamp> red";
    for i in 0..50 {
        let (bad, kind) = adversarial_block(&mut rng, i);
        let reply = if i % 3 == 0 {
            format!("{valid}\n\n{bad}")
        } else {
            format!("{bad}\n\n{valid}")
        };
        let parsed = parse_level1_response(&reply).map_err(|e| format!("case {i}: {e}"))?;
        ensure!(
            parsed.candidates.len() == 1,
            "case {i}: adversarial pair accepted\n{reply}"
        );
        ensure!(parsed.dropped.len() == 1, "case {i}: expected one drop");
        match &parsed.dropped[0].reason {
            DropReason::Violations(v) => ensure!(
                v.iter().any(|v| v.kind() == kind),
                "case {i}: dropped for {v:?}, expected {kind}"
            ),
            other => return Err(format!("case {i}: dropped for {other}, expected {kind}")),
        }
    }
    Ok(())
}

// 9 -------------------------------------------------------------------------

fn mask_ablation() -> Check {
    let mut rng = rng(9);
    let mut cases = Vec::new();
    let mut segmenter = backend::mock::MockSegmenter::new();
    for i in 0..100 {
        let (image, plan) =
            random_scene(&mut rng, &mut segmenter, &format!("c{i}_"), false, 3, 0.35);
        cases.push(BenchmarkCase {
            id: format!("case{i}"),
            image,
            plan,
            target_caption: None,
        });
    }
    let backends = EvalBackends {
        exec: Backends {
            segmenter: Arc::new(segmenter),
            editors: editors(),
            verifier: None,
        },
        embedder: None,
        dino: None,
        text_scorer: None,
        judge: None,
    };
    let metrics = MetricsConfig {
        sim_im: false,
        sim_out: false,
        dino: false,
        mllm_ti: false,
        mllm_im: false,
    };
    let pipeline = |mode| PipelineConfig {
        policy: VerifyPolicy::default(),
        routing: RoutingTable::from_profile(RoutingProfile::BagOfModels),
        seed0: 99,
        options: ExecOptions {
            refine: RefineParams::default(),
            region_mode: mode,
        },
    };
    let refined = run_benchmark(&cases, &pipeline(RegionMode::Refined), &metrics, &backends)
        .map_err(|e| e.to_string())?;
    let full = run_benchmark(
        &cases,
        &pipeline(RegionMode::FullImage),
        &metrics,
        &backends,
    )
    .map_err(|e| e.to_string())?;
    for (r, f) in refined.rows.iter().zip(&full.rows) {
        ensure!(
            r.error.is_none() && f.error.is_none(),
            "{}: run failed",
            r.id
        );
        let (rl, fl) = (r.l1.unwrap(), f.l1.unwrap());
        ensure!(
            rl < fl,
            "{}: refined L1 {rl} not below full-image L1 {fl}",
            r.id
        );
    }
    Ok(())
}

// 10 ------------------------------------------------------------------------

fn mllm_normalization() -> Check {
    let table: &[(&[i64], f64)] = &[
        (&[4], 1.0),
        (&[0], 0.0),
        (&[2, 3], 0.625),
        (&[1], 0.25),
        (&[3], 0.75),
        (&[4, 4, 4], 1.0),
        (&[0, 4], 0.5),
        (&[1, 2, 3, 4], 0.625),
        (&[2, 2, 2, 2, 2], 0.5),
        (&[3, 4], 0.875),
    ];
    for (scores, want) in table {
        let got: f64 = normalize_mllm_score(scores).map_err(|e| e.to_string())?;
        ensure!(got == *want, "{scores:?} -> {got}, want {want}");
        let got32: f32 = normalize_mllm_score(scores).map_err(|e| e.to_string())?;
        ensure!(got32 == *want as f32, "{scores:?} -> {got32} (f32)");
    }
    ensure!(
        normalize_mllm_score::<f64>(&[]).is_err(),
        "empty list accepted"
    );
    ensure!(
        normalize_mllm_score::<f64>(&[5]).is_err(),
        "score 5 accepted"
    );
    ensure!(
        normalize_mllm_score::<f64>(&[-1]).is_err(),
        "score -1 accepted"
    );
    Ok(())
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    bound: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            name: "parser fidelity",
            bound: Duration::from_secs(1),
            run: parser_fidelity,
        },
        Criterion {
            name: "identity preservation",
            bound: Duration::from_secs(10),
            run: identity_preservation,
        },
        Criterion {
            name: "refinement rule table",
            bound: Duration::from_secs(30),
            run: refine_rule_table,
        },
        Criterion {
            name: "box enlargement",
            bound: Duration::from_secs(1),
            run: box_enlargement,
        },
        Criterion {
            name: "verify-retry loop",
            bound: Duration::from_secs(1),
            run: verify_retry,
        },
        Criterion {
            name: "metric oracles",
            bound: Duration::from_secs(30),
            run: metric_oracles,
        },
        Criterion {
            name: "routing",
            bound: Duration::from_secs(1),
            run: routing,
        },
        Criterion {
            name: "annotation constants",
            bound: Duration::from_secs(10),
            run: annotation_constants,
        },
        Criterion {
            name: "mask ablation",
            bound: Duration::from_secs(10),
            run: mask_ablation,
        },
        Criterion {
            name: "score normalization",
            bound: Duration::from_secs(1),
            run: mllm_normalization,
        },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let verdict = match result {
            Ok(()) if elapsed <= c.bound => Ok(()),
            Ok(()) => Err(format!("took {elapsed:?}, bound {:?}", c.bound)),
            Err(e) => Err(e),
        };
        let ms = elapsed.as_secs_f64() * 1e3;
        match verdict {
            Ok(()) => println!("criterion {:>2} {:<24} PASS ({ms:.0} ms)", i + 1, c.name),
            Err(e) => {
                failed += 1;
                println!(
                    "criterion {:>2} {:<24} FAIL ({ms:.0} ms): {e}",
                    i + 1,
                    c.name
                );
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
