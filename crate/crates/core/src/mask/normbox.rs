use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

/// Boxes covering less than this fraction of the image are grown to it.
pub const DEFAULT_MIN_BOX_AREA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoxError {
    #[error("box coordinate is not finite")]
    NonFinite,
    #[error("box coordinate {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("box is inverted or degenerate: ({x1}, {y1}, {x2}, {y2})")]
    Inverted { x1: f64, y1: f64, x2: f64, y2: f64 },
}

/// Axis-aligned box in coordinates normalized by image width and height.
///
/// Always satisfies `0 <= x1 < x2 <= 1` and `0 <= y1 < y2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBox<T: Scalar = f64> {
    x1: T,
    y1: T,
    x2: T,
    y2: T,
}

impl<T: Scalar> NormBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self, BoxError> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(BoxError::NonFinite);
        }
        if let Some(c) = coords.iter().find(|&&c| c < T::zero() || c > T::one()) {
            return Err(BoxError::OutOfRange(c.to_f64_lossy()));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(BoxError::Inverted {
                x1: x1.to_f64_lossy(),
                y1: y1.to_f64_lossy(),
                x2: x2.to_f64_lossy(),
                y2: y2.to_f64_lossy(),
            });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Clamps each coordinate into `[0, 1]` before validating ordering.
    /// Returns the box and whether any coordinate was moved.
    pub fn clamped(x1: T, y1: T, x2: T, y2: T) -> Result<(Self, bool), BoxError> {
        let clamp = |v: T| v.max(T::zero()).min(T::one());
        let raw = [x1, y1, x2, y2];
        if raw.iter().any(|c| !c.is_finite()) {
            return Err(BoxError::NonFinite);
        }
        let [a, b, c, d] = raw.map(clamp);
        let moved = [a, b, c, d] != raw;
        Self::new(a, b, c, d).map(|bx| (bx, moved))
    }

    pub fn full() -> Self {
        Self {
            x1: T::zero(),
            y1: T::zero(),
            x2: T::one(),
            y2: T::one(),
        }
    }

    pub fn x1(&self) -> T {
        self.x1
    }
    pub fn y1(&self) -> T {
        self.y1
    }
    pub fn x2(&self) -> T {
        self.x2
    }
    pub fn y2(&self) -> T {
        self.y2
    }

    pub fn coords(&self) -> [T; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        let two = T::of(2.0);
        ((self.x1 + self.x2) / two, (self.y1 + self.y2) / two)
    }

    pub fn cast<U: Scalar>(&self) -> NormBox<U> {
        NormBox {
            x1: U::of(self.x1.to_f64_lossy()),
            y1: U::of(self.y1.to_f64_lossy()),
            x2: U::of(self.x2.to_f64_lossy()),
            y2: U::of(self.y2.to_f64_lossy()),
        }
    }
}

impl<T: Scalar> TryFrom<[T; 4]> for NormBox<T> {
    type Error = BoxError;
    fn try_from(c: [T; 4]) -> Result<Self, BoxError> {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl<T: Scalar> Serialize for NormBox<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for NormBox<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let c = <[T; 4]>::deserialize(d)?;
        Self::try_from(c).map_err(serde::de::Error::custom)
    }
}

/// Places an interval of length `len` centred on `center` inside `[0, 1]`,
/// translating it when it would cross an edge.
fn fit_interval<T: Scalar>(center: T, len: T) -> (T, T) {
    let half = len / T::of(2.0);
    let mut lo = center - half;
    let mut hi = center + half;
    if lo < T::zero() {
        lo = T::zero();
        hi = len;
    } else if hi > T::one() {
        hi = T::one();
        lo = T::one() - len;
    }
    (lo.max(T::zero()), hi.min(T::one()))
}

/// Grows a box whose area is below `min_area` to exactly `min_area`.
///
/// Width and height are scaled by `sqrt(min_area / area)` about the centre.
/// A side that would exceed the frame is capped at 1 and the other side
/// absorbs the remaining area; a box that would cross an edge is translated
/// back inside. The result is therefore at the target area (up to rounding),
/// which makes the operation idempotent.
pub fn enlarge_small_box<T: Scalar>(bx: &NormBox<T>, min_area: T) -> NormBox<T> {
    let area = bx.area();
    // Re-applying to an output must be a no-op even when rounding left the
    // area a few ulps short of the target.
    let slack = T::one() - T::epsilon() * T::of(64.0);
    if min_area <= T::zero() || area >= min_area * slack {
        return *bx;
    }
    let target = min_area.min(T::one());
    let scale = (target / area).sqrt();
    let mut w = bx.width() * scale;
    let mut h = bx.height() * scale;
    if w > T::one() {
        w = T::one();
        h = (target / w).min(T::one());
    } else if h > T::one() {
        h = T::one();
        w = (target / h).min(T::one());
    }
    let (cx, cy) = bx.center();
    let (x1, x2) = fit_interval(cx, w);
    let (y1, y2) = fit_interval(cy, h);
    NormBox::new(x1, y1, x2, y2).unwrap_or(*bx)
}
