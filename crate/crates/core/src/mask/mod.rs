//! Binary masks, normalized boxes and the exact geometry between them.
//!
//! A [`BinaryMask`] is a row-major bit grid over image pixels. All set
//! operations require identical dimensions; nothing here resamples.

mod metrics;
mod morphology;
mod normbox;
mod png;
mod raster;

use bitvec::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use metrics::{box_iou, mask_overlap_metrics, OverlapMetrics};
pub use morphology::{dilate_mask, dilate_with_radius, dilation_radius, StructuringElement};
pub use normbox::{enlarge_small_box, BoxError, NormBox, DEFAULT_MIN_BOX_AREA};
pub use png::{decode_mask_png, encode_mask_png, read_mask_png, write_mask_png};
pub use raster::{box_to_mask, full_mask, mask_to_box};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask dimensions must be at least 1x1, got {width}x{height}")]
    Dimension { width: usize, height: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("bit count {got} does not match {width}x{height}")]
    BitLength {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("ground-truth mask has no set pixels")]
    EmptyGroundTruth,
    #[error("mask codec: {0}")]
    Codec(String),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: BitVec<u64, Lsb0>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), MaskError> {
    if width == 0 || height == 0 {
        Err(MaskError::Dimension { width, height })
    } else {
        Ok(())
    }
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            bits: bitvec![u64, Lsb0; 0; width * height],
        })
    }

    pub fn full(width: usize, height: usize) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            bits: bitvec![u64, Lsb0; 1; width * height],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        let mut mask = Self::empty(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.bits.set(y * width + x, true);
                }
            }
        }
        Ok(mask)
    }

    /// Builds a mask from row-major booleans.
    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(MaskError::BitLength {
                width,
                height,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits: bits.iter().copied().collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn is_full(&self) -> bool {
        self.bits.all()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        self.bits.set(y * self.width + x, on);
    }

    pub(crate) fn get_index(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// Coordinates of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits.iter_ones().map(move |i| (i % w, i / w))
    }

    pub fn same_dims(&self, other: &Self) -> Result<(), MaskError> {
        if self.dims() != other.dims() {
            Err(MaskError::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            })
        } else {
            Ok(())
        }
    }

    /// Pixelwise OR.
    pub fn union(&self, other: &Self) -> Result<Self, MaskError> {
        self.same_dims(other)?;
        let mut out = self.clone();
        out.bits |= other.bits.as_bitslice();
        Ok(out)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self, MaskError> {
        self.same_dims(other)?;
        let mut out = self.clone();
        out.bits &= other.bits.as_bitslice();
        Ok(out)
    }

    pub fn intersection_area(&self, other: &Self) -> Result<usize, MaskError> {
        Ok(self.intersection(other)?.area())
    }

    /// `self ⊆ other`. Dimension mismatch is never a subset.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.bits.iter_ones().all(|i| other.bits[i])
    }

    /// Row-major runs alternating off/on, starting with an off run (which may be 0).
    pub fn to_runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for bit in self.bits.iter().by_vals() {
            if bit == current {
                len += 1;
            } else {
                runs.push(len);
                current = bit;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_runs(width: usize, height: usize, runs: &[usize]) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        let total: usize = runs.iter().sum();
        if total != width * height {
            return Err(MaskError::BitLength {
                width,
                height,
                got: total,
            });
        }
        let mut bits = BitVec::<u64, Lsb0>::with_capacity(total);
        let mut on = false;
        for &run in runs {
            bits.resize(bits.len() + run, on);
            on = !on;
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// SHA-256 over dimensions and bits.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update((self.height as u64).to_le_bytes());
        let mut byte = 0u8;
        for (i, bit) in self.bits.iter().by_vals().enumerate() {
            if bit {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                hasher.update([byte]);
                byte = 0;
            }
        }
        if !self.bits.len().is_multiple_of(8) {
            hasher.update([byte]);
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: usize,
    height: usize,
    runs: Vec<usize>,
}

impl Serialize for BinaryMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MaskRepr {
            width: self.width,
            height: self.height,
            runs: self.to_runs(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MaskRepr::deserialize(d)?;
        BinaryMask::from_runs(repr.width, repr.height, &repr.runs).map_err(serde::de::Error::custom)
    }
}
