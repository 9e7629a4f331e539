//! Fixture generators and brute-force oracles shared by integration tests.
//! The oracles work on plain `Vec<bool>` grids and integer arithmetic and
//! never call the library code they check.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xplan_core::backend::mock::MockSegmenter;
use xplan_core::{BinaryMask, EditType, ImageBuffer, NormBox, Plan, SubInstruction};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Grid {
    pub w: usize,
    pub h: usize,
    pub bits: Vec<bool>,
}

impl Grid {
    pub fn new(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            bits: vec![false; w * h],
        }
    }

    pub fn from_mask(m: &BinaryMask) -> Self {
        let (w, h) = m.dims();
        let mut g = Self::new(w, h);
        for y in 0..h {
            for x in 0..w {
                g.bits[y * w + x] = m.get(x, y);
            }
        }
        g
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.w, self.h, |x, y| self.bits[y * self.w + x]).unwrap()
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn or(&self, other: &Grid) -> Grid {
        Grid {
            w: self.w,
            h: self.h,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }
}

/// Radius from the equivalent-disc diameter: round(percent · sqrt(area/π)), at least 1.
pub fn oracle_radius(area: usize, percent: f64) -> i64 {
    let r = (percent * (area as f64 / std::f64::consts::PI).sqrt()).round() as i64;
    r.max(1)
}

/// Paints a Euclidean disc of radius `r` around every set pixel.
pub fn brute_dilate(g: &Grid, r: i64) -> Grid {
    let mut out = Grid::new(g.w, g.h);
    for y in 0..g.h as i64 {
        for x in 0..g.w as i64 {
            if !g.bits[(y as usize) * g.w + x as usize] {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy > r * r {
                        continue;
                    }
                    let (u, v) = (x + dx, y + dy);
                    if u >= 0 && v >= 0 && (u as usize) < g.w && (v as usize) < g.h {
                        out.bits[v as usize * g.w + u as usize] = true;
                    }
                }
            }
        }
    }
    out
}

fn oracle_span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let round = |v: f64| ((v * n as f64 + 0.5).floor() as usize).min(n);
    let (mut a, b) = (round(lo), round(hi));
    if b > a {
        return (a, b);
    }
    if a >= n {
        a = n - 1;
    }
    (a, a + 1)
}

/// Pixel rectangle of a normalized box, rounding half up, at least one pixel.
pub fn oracle_raster(b: &NormBox, w: usize, h: usize) -> Grid {
    let mut g = Grid::new(w, h);
    let (x0, x1) = oracle_span(b.x1(), b.x2(), w);
    let (y0, y1) = oracle_span(b.y1(), b.y2(), h);
    for y in y0..y1 {
        for x in x0..x1 {
            g.bits[y * w + x] = true;
        }
    }
    g
}

/// Non-empty rectangle with sides up to `max_frac` of the image plus noise
/// pixels inside its bounding area.
pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, max_frac: f64) -> BinaryMask {
    let mw = ((w as f64 * max_frac) as usize).max(1);
    let mh = ((h as f64 * max_frac) as usize).max(1);
    let rw = rng.gen_range(1..=mw);
    let rh = rng.gen_range(1..=mh);
    let x0 = rng.gen_range(0..=w - rw);
    let y0 = rng.gen_range(0..=h - rh);
    let noisy = rng.gen_bool(0.5);
    let seed: u64 = rng.gen();
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Grid::new(w, h);
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            g.bits[y * w + x] = !noisy || inner.gen_bool(0.7);
        }
    }
    g.bits[y0 * w + x0] = true;
    g.to_mask()
}

pub fn random_grid(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> Grid {
    let mut g = Grid::new(w, h);
    for b in g.bits.iter_mut() {
        *b = rng.gen_bool(density);
    }
    g
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> ImageBuffer {
    let mut data = vec![0u8; w * h * 3];
    rng.fill(&mut data[..]);
    ImageBuffer::new(w, h, data).unwrap()
}

/// Box with `0 ≤ x1 < x2 ≤ 1`, sometimes on a two-decimal grid.
pub fn random_box(rng: &mut impl Rng) -> NormBox {
    let coarse = rng.gen_bool(0.3);
    let pick = |rng: &mut dyn rand::RngCore| -> (f64, f64) {
        loop {
            let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
            if coarse {
                a = (a * 100.0).round() / 100.0;
                b = (b * 100.0).round() / 100.0;
            }
            if a != b {
                return (a.min(b), a.max(b));
            }
        }
    };
    let (x1, x2) = pick(rng);
    let (y1, y2) = pick(rng);
    NormBox::new(x1, y1, x2, y2).unwrap()
}

const WORDS: &[&str] = &[
    "make",
    "the",
    "red",
    "car",
    "tree",
    "sky",
    "into",
    "a",
    "cyberpunk",
    "style",
    "1950's",
    "mid-century",
    "café",
    "bright",
    "soft",
    "glow",
    "around",
    "cat",
    "dog",
    "with",
    "lamp",
    "window",
    "snowy",
    "x2",
    "0.5",
    "note:",
    "big",
    "blue",
    "hat",
    "table",
    "(old)",
    "rug",
];

const OBJECTS: &[&str] = &[
    "cat",
    "dog",
    "tree",
    "red car",
    "sky",
    "lamp",
    "wooden table",
    "hat",
    "window",
    "rug",
    "1950's poster",
    "café sign",
];

fn random_text(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..=8);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn anchor_count(rng: &mut impl Rng, t: EditType) -> usize {
    match t {
        EditType::Replace => 2,
        EditType::Style => rng.gen_range(0..=1),
        _ => 1,
    }
}

/// Valid plan with 1 to 5 subs. Anchors are embedded in the text or left
/// out of it at random, so both writer forms are exercised.
pub fn random_plan(rng: &mut impl Rng) -> Plan {
    let n = rng.gen_range(1..=5);
    let subs = (0..n)
        .map(|i| {
            let t = *EditType::ALL.choose(rng).unwrap();
            let anchors: Vec<String> = (0..anchor_count(rng, t))
                .map(|_| OBJECTS.choose(rng).unwrap().to_string())
                .collect();
            let mut text = random_text(rng);
            if rng.gen_bool(0.6) {
                for a in &anchors {
                    text = format!("{text} {a} {}", random_text(rng));
                }
            }
            let mut sub = SubInstruction::new(i, t, text).with_anchors(anchors);
            if t == EditType::Insertion && rng.gen_bool(0.8) {
                sub = sub.with_box(random_box(rng));
            }
            sub
        })
        .collect();
    Plan::new(random_text(rng), subs)
}

/// An executable scenario: image, plan, and a segmenter that knows every
/// anchor the plan uses.
pub struct ExecFixture {
    pub image: ImageBuffer,
    pub plan: Plan,
    pub segmenter: MockSegmenter,
}

pub fn random_exec_fixture(
    rng: &mut impl Rng,
    allow_style: bool,
    max_steps: usize,
    mask_frac: f64,
) -> ExecFixture {
    let mut segmenter = MockSegmenter::new();
    let (image, plan) = random_scene(rng, &mut segmenter, "", allow_style, max_steps, mask_frac);
    ExecFixture {
        image,
        plan,
        segmenter,
    }
}

/// Like [`random_exec_fixture`] but registers masks in a shared segmenter,
/// prefixing anchor names so several scenes can coexist.
pub fn random_scene(
    rng: &mut impl Rng,
    segmenter: &mut MockSegmenter,
    prefix: &str,
    allow_style: bool,
    max_steps: usize,
    mask_frac: f64,
) -> (ImageBuffer, Plan) {
    let w = rng.gen_range(8..=40);
    let h = rng.gen_range(8..=40);
    let image = random_image(rng, w, h);
    let types: Vec<EditType> = EditType::ALL
        .into_iter()
        .filter(|t| allow_style || *t != EditType::Style)
        .collect();
    let n = rng.gen_range(1..=max_steps);
    let subs = (0..n)
        .map(|i| {
            let t = *types.choose(rng).unwrap();
            let anchors: Vec<String> = (0..anchor_count(rng, t))
                .map(|j| format!("{prefix}obj{i}x{j}"))
                .collect();
            for a in &anchors {
                segmenter.insert(a, random_mask(rng, w, h, mask_frac));
            }
            let mut sub =
                SubInstruction::new(i, t, format!("step {i} {}", t.name())).with_anchors(anchors);
            if t == EditType::Insertion {
                let cx: f64 = rng.gen_range(0.1..0.9);
                let cy: f64 = rng.gen_range(0.1..0.9);
                let half: f64 = rng.gen_range(0.01..0.1);
                let bx = NormBox::new(
                    (cx - half).max(0.0),
                    (cy - half).max(0.0),
                    (cx + half).min(1.0),
                    (cy + half).min(1.0),
                )
                .unwrap();
                sub = sub.with_box(bx);
            }
            sub
        })
        .collect();
    (image, Plan::new("random fixture", subs))
}

/// Box on the 1/1000 grid as integer corners.
pub fn random_grid_box(rng: &mut impl Rng) -> [u64; 4] {
    let pick = |rng: &mut dyn rand::RngCore| loop {
        let a = rng.gen_range(0..=1000u64);
        let b = rng.gen_range(0..=1000u64);
        if a != b {
            return (a.min(b), a.max(b));
        }
    };
    let (x1, x2) = pick(rng);
    let (y1, y2) = pick(rng);
    [x1, y1, x2, y2]
}

pub fn grid_box(c: [u64; 4]) -> NormBox {
    NormBox::new(
        c[0] as f64 / 1000.0,
        c[1] as f64 / 1000.0,
        c[2] as f64 / 1000.0,
        c[3] as f64 / 1000.0,
    )
    .unwrap()
}

/// Exact (intersection, union) areas in grid units².
pub fn int_box_overlap(a: [u64; 4], b: [u64; 4]) -> (u64, u64) {
    let iw = a[2].min(b[2]).saturating_sub(a[0].max(b[0]));
    let ih = a[3].min(b[3]).saturating_sub(a[1].max(b[1]));
    let inter = iw * ih;
    let area = |c: [u64; 4]| (c[2] - c[0]) * (c[3] - c[1]);
    (inter, area(a) + area(b) - inter)
}
