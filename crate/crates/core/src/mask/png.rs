//! 8-bit single-channel PNG masks: 0 = off, 255 = on. Values >= 128 read as on.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use super::{BinaryMask, MaskError};

fn codec(e: impl std::fmt::Display) -> MaskError {
    MaskError::Codec(e.to_string())
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>, MaskError> {
    let (w, h) = mask.dims();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) {
            255
        } else {
            0
        }])
    });
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(codec)?;
    Ok(buf.into_inner())
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask, MaskError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(codec)?
        .into_luma8();
    let (w, h) = img.dimensions();
    BinaryMask::from_fn(w as usize, h as usize, |x, y| {
        img.get_pixel(x as u32, y as u32).0[0] >= 128
    })
}

pub fn write_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), MaskError> {
    std::fs::write(path, encode_mask_png(mask)?).map_err(codec)
}

pub fn read_mask_png(path: impl AsRef<Path>) -> Result<BinaryMask, MaskError> {
    decode_mask_png(&std::fs::read(path).map_err(codec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip() {
        let m = BinaryMask::from_fn(9, 5, |x, y| (x + y) % 3 == 0).unwrap();
        let bytes = encode_mask_png(&m).unwrap();
        assert_eq!(decode_mask_png(&bytes).unwrap(), m);
    }

    #[test]
    fn threshold_at_128() {
        let img = GrayImage::from_raw(4, 1, vec![0, 127, 128, 255]).unwrap();
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        let m = decode_mask_png(buf.get_ref()).unwrap();
        assert_eq!(
            (0..4).map(|x| m.get(x, 0)).collect::<Vec<_>>(),
            vec![false, false, true, true]
        );
    }
}
