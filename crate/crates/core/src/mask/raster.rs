use super::{BinaryMask, MaskError, NormBox};
use crate::scalar::Scalar;

/// Every pixel on. The absorbing element of [`BinaryMask::union`].
pub fn full_mask(width: usize, height: usize) -> Result<BinaryMask, MaskError> {
    BinaryMask::full(width, height)
}

/// Round-half-up of a scaled coordinate, clamped to `[0, extent]`.
fn scale_round<T: Scalar>(v: T, extent: usize) -> usize {
    let scaled = (v * T::of_count(extent) + T::of(0.5)).floor();
    scaled.to_usize().unwrap_or(0).min(extent)
}

/// Half-open pixel interval for a normalized interval. Never empty.
fn pixel_span<T: Scalar>(lo: T, hi: T, extent: usize) -> (usize, usize) {
    let mut a = scale_round(lo, extent);
    let mut b = scale_round(hi, extent);
    if b <= a {
        if a >= extent {
            a = extent - 1;
        }
        b = a + 1;
    }
    (a, b)
}

/// Rasterizes a box to the pixel rectangle
/// `[round(x1·w), round(x2·w)) × [round(y1·h), round(y2·h))`.
pub fn box_to_mask<T: Scalar>(
    bx: &NormBox<T>,
    width: usize,
    height: usize,
) -> Result<BinaryMask, MaskError> {
    let mut mask = BinaryMask::empty(width, height)?;
    let (x0, x1) = pixel_span(bx.x1(), bx.x2(), width);
    let (y0, y1) = pixel_span(bx.y1(), bx.y2(), height);
    for y in y0..y1 {
        let row = y * width;
        mask.bits[row + x0..row + x1].fill(true);
    }
    Ok(mask)
}

/// Tight normalized bounding box of the set pixels.
pub fn mask_to_box<T: Scalar>(mask: &BinaryMask) -> Result<NormBox<T>, MaskError> {
    let (w, h) = mask.dims();
    let mut min_x = usize::MAX;
    let mut min_y = usize::MAX;
    let mut max_x = 0;
    let mut max_y = 0;
    for (x, y) in mask.iter_set() {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    if min_x == usize::MAX {
        return Err(MaskError::EmptyMask);
    }
    let (fw, fh) = (T::of_count(w), T::of_count(h));
    NormBox::new(
        T::of_count(min_x) / fw,
        T::of_count(min_y) / fh,
        T::of_count(max_x + 1) / fw,
        T::of_count(max_y + 1) / fh,
    )
    .map_err(|e| MaskError::Codec(e.to_string()))
}
