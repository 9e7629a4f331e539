use super::{BinaryMask, MaskError};
use crate::scalar::Scalar;

/// Disc-shaped structuring element. A pixel at offset `(dx, dy)` is inside
/// when `dx² + dy² <= radius²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    radius_px: u32,
}

impl StructuringElement {
    pub fn disc(radius_px: u32) -> Option<Self> {
        (radius_px >= 1).then_some(Self { radius_px })
    }

    pub fn radius(&self) -> u32 {
        self.radius_px
    }

    pub fn contains(&self, dx: i64, dy: i64) -> bool {
        let r = self.radius_px as i64;
        dx * dx + dy * dy <= r * r
    }
}

/// Disc radius that grows the mask's equivalent diameter by `percent`.
///
/// `d_eq = 2·sqrt(area/π)`, `r = max(1, round(percent/2 · d_eq))`.
pub fn dilation_radius<T: Scalar>(area: usize, percent: T) -> u32 {
    let area = T::of_count(area);
    let d_eq = T::of(2.0) * (area / T::of(std::f64::consts::PI)).sqrt();
    let r = (percent / T::of(2.0) * d_eq).round();
    r.to_u32().unwrap_or(u32::MAX).max(1)
}

/// Dilates by a disc sized from the mask's own area. Empty input stays empty.
pub fn dilate_mask<T: Scalar>(mask: &BinaryMask, percent: T) -> Result<BinaryMask, MaskError> {
    if mask.is_empty() {
        return Ok(mask.clone());
    }
    let radius = dilation_radius(mask.area(), percent);
    dilate_with_radius(mask, StructuringElement::disc(radius).expect("radius >= 1"))
}

/// Exact Euclidean disc dilation via a squared distance transform.
pub fn dilate_with_radius(
    mask: &BinaryMask,
    element: StructuringElement,
) -> Result<BinaryMask, MaskError> {
    let (w, h) = mask.dims();
    if mask.is_empty() || mask.is_full() {
        return Ok(mask.clone());
    }
    let dist = squared_distance_transform(mask);
    let r = element.radius() as i64;
    let r2 = r * r;
    let mut out = BinaryMask::empty(w, h)?;
    for (i, d) in dist.iter().enumerate() {
        if *d <= r2 {
            out.bits.set(i, true);
        }
    }
    Ok(out)
}

/// Squared Euclidean distance from every pixel to the nearest set pixel
/// (Meijster, Roerdink & Hesselink, separable, exact in integers).
/// The mask must have at least one set pixel.
fn squared_distance_transform(mask: &BinaryMask) -> Vec<i64> {
    let (w, h) = mask.dims();
    let inf = (w + h) as i64;

    // Phase 1: per-column distance to the nearest set pixel.
    let mut g = vec![0i64; w * h];
    for x in 0..w {
        g[x] = if mask.get_index(x) { 0 } else { inf };
        for y in 1..h {
            let i = y * w + x;
            g[i] = if mask.get_index(i) { 0 } else { g[i - w] + 1 };
        }
        for y in (0..h.saturating_sub(1)).rev() {
            let i = y * w + x;
            if g[i + w] < g[i] {
                g[i] = g[i + w] + 1;
            }
        }
    }

    // Phase 2: per-row lower envelope of parabolas.
    let mut dt = vec![0i64; w * h];
    let mut s = vec![0usize; w];
    let mut t = vec![0i64; w];
    for y in 0..h {
        let row = &g[y * w..(y + 1) * w];
        let f = |x: i64, i: usize| -> i64 {
            let gi = row[i];
            (x - i as i64) * (x - i as i64) + gi * gi
        };
        let sep = |i: usize, u: usize| -> i64 {
            let (iu, ii) = (u as i64, i as i64);
            let num = iu * iu - ii * ii + row[u] * row[u] - row[i] * row[i];
            num.div_euclid(2 * (iu - ii))
        };
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let sw = 1 + sep(s[q as usize], u);
                if sw < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = sw;
                }
            }
        }
        for u in (0..w).rev() {
            dt[y * w + u] = f(u as i64, s[q as usize]);
            if u as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }
    dt
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Marks a pixel iff any input pixel lies within Euclidean distance r.
    fn brute_dilate(mask: &BinaryMask, r: i64) -> BinaryMask {
        let (w, h) = mask.dims();
        let set: Vec<(usize, usize)> = mask.iter_set().collect();
        BinaryMask::from_fn(w, h, |x, y| {
            set.iter().any(|&(sx, sy)| {
                let dx = x as i64 - sx as i64;
                let dy = y as i64 - sy as i64;
                dx * dx + dy * dy <= r * r
            })
        })
        .unwrap()
    }

    fn brute_sqdist(mask: &BinaryMask) -> Vec<i64> {
        let (w, h) = mask.dims();
        let set: Vec<(usize, usize)> = mask.iter_set().collect();
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let d = set
                    .iter()
                    .map(|&(sx, sy)| {
                        let dx = x as i64 - sx as i64;
                        let dy = y as i64 - sy as i64;
                        dx * dx + dy * dy
                    })
                    .min()
                    .unwrap();
                out.push(d);
            }
        }
        out
    }

    #[test]
    fn empty_and_full_fixed_points() {
        let empty = BinaryMask::empty(16, 16).unwrap();
        assert_eq!(dilate_mask(&empty, 0.2).unwrap(), empty);
        let full = BinaryMask::full(16, 16).unwrap();
        assert_eq!(dilate_mask(&full, 0.2).unwrap(), full);
    }

    #[test]
    fn centered_square_matches_oracle() {
        let blob = BinaryMask::from_fn(32, 32, |x, y| {
            (12..20).contains(&x) && (12..20).contains(&y)
        })
        .unwrap();
        // area 64, d_eq = 2*sqrt(64/pi) = 9.027, r = round(0.1 * 9.027) = 1
        assert_eq!(dilation_radius(64, 0.2), 1);
        let out = dilate_mask(&blob, 0.2).unwrap();
        assert_eq!(out, brute_dilate(&blob, 1));
        // 8x8 square plus a 1-pixel ring on each side (corners excluded).
        assert_eq!(out.area(), 64 + 4 * 8);
    }

    #[test]
    fn radius_formula() {
        // area 10000 → d_eq ≈ 112.84, 10% of that ≈ 11.28
        assert_eq!(dilation_radius(10_000, 0.2), 11);
        assert_eq!(dilation_radius(1, 0.0), 1);
        assert_eq!(dilation_radius(400, 0.2f32), 2);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let w = 1 + (next() % 24) as usize;
            let h = 1 + (next() % 24) as usize;
            let density = 1 + next() % 20;
            let mut m = BinaryMask::from_fn(w, h, |_, _| false).unwrap();
            for y in 0..h {
                for x in 0..w {
                    if next() % 100 < density {
                        m.set(x, y, true);
                    }
                }
            }
            if m.is_empty() {
                m.set(0, 0, true);
            }
            assert_eq!(squared_distance_transform(&m), brute_sqdist(&m), "{w}x{h}");
            let r = 1 + (next() % 6) as u32;
            assert_eq!(
                dilate_with_radius(&m, StructuringElement::disc(r).unwrap()).unwrap(),
                brute_dilate(&m, r as i64)
            );
        }
    }

    #[test]
    fn disc_element() {
        assert!(StructuringElement::disc(0).is_none());
        let d = StructuringElement::disc(2).unwrap();
        assert!(d.contains(2, 0) && !d.contains(2, 1));
    }
}
