//! Label images and PNG encoding for masks, ID maps, color and depth renders.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageBuffer, ImageFormat, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::camera::Vec2;
use crate::error::{Error, Result};

/// Row-major H×W image of integer labels (0 = background).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32) -> Self {
        LabelMap {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> u16) -> Self {
        let mut m = LabelMap::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[(y * width + x) as usize] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u16) {
        self.data[(y * self.width + x) as usize] = v;
    }

    /// Label of the pixel containing sub-pixel point `p`; `None` outside the image.
    #[inline]
    pub fn at_point(&self, p: &Vec2) -> Option<u16> {
        let (u, v) = (p.x.round(), p.y.round());
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some(self.get(u as u32, v as u32))
        } else {
            None
        }
    }

    pub fn count(&self, label: u16) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }

    pub fn max_label(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Binary map of pixels equal to `label`.
    pub fn select(&self, label: u16) -> LabelMap {
        LabelMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| u16::from(v == label)).collect(),
        }
    }

    pub fn check_dims(&self, width: u32, height: u32) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                actual_w: self.width,
                actual_h: self.height,
            });
        }
        Ok(())
    }
}

fn save(img: impl Fn(&Path) -> image::ImageResult<()>, path: &Path) -> Result<()> {
    img(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })
}

/// Binary mask as 8-bit grayscale, nonzero labels written as 255.
pub fn write_mask_png(mask: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let img = GrayImage::from_fn(mask.width, mask.height, |x, y| {
        Luma([if mask.get(x, y) != 0 { 255 } else { 0 }])
    });
    save(|p| img.save_with_format(p, ImageFormat::Png), path.as_ref())
}

/// Multi-label mask as 8-bit grayscale with pixel value = label.
pub fn write_label_png8(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    save(
        |p| label_gray8(labels).save_with_format(p, ImageFormat::Png),
        path.as_ref(),
    )
}

fn label_gray8(labels: &LabelMap) -> GrayImage {
    GrayImage::from_fn(labels.width, labels.height, |x, y| {
        Luma([labels.get(x, y).min(255) as u8])
    })
}

/// ID map as 16-bit grayscale.
pub fn write_id_png16(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(labels.width, labels.height, |x, y| Luma([labels.get(x, y)]));
    save(|p| img.save_with_format(p, ImageFormat::Png), path.as_ref())
}

/// Decodes an 8- or 16-bit grayscale PNG into labels.
///
/// An 8-bit image whose only values are 0 and 255 is read as a binary mask
/// (255 → 1).
pub fn decode_label_png(bytes: &[u8]) -> Result<LabelMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (width, height) = (img.width(), img.height());
    let data: Vec<u16> = match img {
        image::DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => {
            let gray = other.into_luma8().into_raw();
            let binary = gray.iter().all(|&v| v == 0 || v == 255);
            gray.into_iter()
                .map(|v| if binary && v == 255 { 1 } else { v as u16 })
                .collect()
        }
    };
    Ok(LabelMap {
        width,
        height,
        data,
    })
}

pub fn read_label_png(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_png(&bytes)
}

/// 8-bit label PNG in memory.
pub fn encode_label_png8(labels: &LabelMap) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    label_gray8(labels).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Binary 0/255 mask PNG in memory.
pub fn encode_mask_png(mask: &LabelMap) -> Result<Vec<u8>> {
    let img = GrayImage::from_fn(mask.width, mask.height, |x, y| {
        Luma([if mask.get(x, y) != 0 { 255 } else { 0 }])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

fn rgb_image(rgb: &[[f64; 3]], width: u32, height: u32) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let c = rgb[(y * width + x) as usize];
        Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

pub fn encode_rgb_png(rgb: &[[f64; 3]], width: u32, height: u32) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    rgb_image(rgb, width, height).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_rgb_png(
    rgb: &[[f64; 3]],
    width: u32,
    height: u32,
    path: impl AsRef<Path>,
) -> Result<()> {
    save(
        |p| rgb_image(rgb, width, height).save_with_format(p, ImageFormat::Png),
        path.as_ref(),
    )
}

/// Fixed-point encoding of a scalar image stored as 16-bit PNG:
/// `value = pixel * scale + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub scale: f64,
    pub offset: f64,
}

impl FixedPoint {
    /// Covers `[0, max]` with the full 16-bit range.
    pub fn for_range(max: f64) -> Self {
        FixedPoint {
            scale: if max > 0.0 { max / 65535.0 } else { 1.0 },
            offset: 0.0,
        }
    }

    fn encode(&self, v: f64) -> u16 {
        ((v - self.offset) / self.scale).round().clamp(0.0, 65535.0) as u16
    }
}

pub fn encode_scalar_png16(
    values: &[f64],
    width: u32,
    height: u32,
    fp: FixedPoint,
) -> Result<Vec<u8>> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(width, height, |x, y| {
        Luma([fp.encode(values[(y * width + x) as usize])])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Writes a depth (or alpha) image as 16-bit PNG plus `<path>.json` holding
/// the fixed-point scale.
pub fn write_scalar_png16(
    values: &[f64],
    width: u32,
    height: u32,
    fp: FixedPoint,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_scalar_png16(values, width, height, fp)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = path.with_extension("json");
    let json = serde_json::to_vec_pretty(&fp)?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
}
