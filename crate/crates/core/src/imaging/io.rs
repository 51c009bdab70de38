//! Raster and flow file I/O.
//!
//! Images are read as 8-bit (scaled by 1/255) or 16-bit (scaled by 1/65535) PNG
//! or PPM/PGM. Flow fields are stored as a 16-bit gray+alpha PNG holding the
//! `u` and `v` displacements in fixed point (`value = round(d·64) + 32768`, so the
//! quantum is 1/64 px and the range ±512 px) next to an 8-bit validity mask.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, LumaA, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::{FlowField, Raster};

pub const FLOW_QUANTUM: f64 = 1.0 / 64.0;
const FLOW_ZERO: f64 = 32768.0;

/// File extensions accepted as images.
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::format(path, e))?;
    let raster = match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Raster::new(w as usize, h as usize, 1, g.into_raw().iter().map(|&v| v as f32 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(g) => {
            let (w, h) = g.dimensions();
            Raster::new(w as usize, h as usize, 1, g.into_raw().iter().map(|&v| v as f32 / 65535.0).collect())
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let g = img.to_luma16();
            let (w, h) = g.dimensions();
            Raster::new(w as usize, h as usize, 1, g.into_raw().iter().map(|&v| v as f32 / 65535.0).collect())
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let rgb = img.to_rgb16();
            let (w, h) = rgb.dimensions();
            Raster::new(w as usize, h as usize, 3, rgb.into_raw().iter().map(|&v| v as f32 / 65535.0).collect())
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            Raster::new(w as usize, h as usize, 3, rgb.into_raw().iter().map(|&v| v as f32 / 255.0).collect())
        }
    };
    raster.map_err(|e| Error::format(path, e))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit image; the format follows the file extension.
pub fn save_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let bytes: Vec<u8> = raster.data().iter().map(|&v| to_u8(v)).collect();
    let result = if raster.channels() == 1 {
        GrayImage::from_raw(w, h, bytes).expect("buffer size").save(path)
    } else {
        RgbImage::from_raw(w, h, bytes).expect("buffer size").save(path)
    };
    result.map_err(|e| Error::format(path, e))
}

fn encode_displacement(d: f32) -> u16 {
    (d as f64 / FLOW_QUANTUM + FLOW_ZERO).round().clamp(0.0, 65535.0) as u16
}

fn decode_displacement(q: u16) -> f32 {
    ((q as f64 - FLOW_ZERO) * FLOW_QUANTUM) as f32
}

/// Writes the fixed-point displacement PNG and the validity mask PNG.
pub fn save_flow(flow: &FlowField, flow_path: impl AsRef<Path>, valid_path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (flow.width() as u32, flow.height() as u32);
    let mut raw = Vec::with_capacity(flow.u().len() * 2);
    for (&u, &v) in flow.u().iter().zip(flow.v()) {
        raw.push(encode_displacement(u));
        raw.push(encode_displacement(v));
    }
    let img: ImageBuffer<LumaA<u16>, Vec<u16>> = ImageBuffer::from_raw(w, h, raw).expect("buffer size");
    let flow_path = flow_path.as_ref();
    img.save(flow_path).map_err(|e| Error::format(flow_path, e))?;
    let mask: Vec<u8> = flow.validity().iter().map(|&ok| if ok { 255 } else { 0 }).collect();
    let valid_path = valid_path.as_ref();
    GrayImage::from_raw(w, h, mask)
        .expect("buffer size")
        .save(valid_path)
        .map_err(|e| Error::format(valid_path, e))
}

pub fn load_flow(flow_path: impl AsRef<Path>, valid_path: impl AsRef<Path>) -> Result<FlowField> {
    let flow_path = flow_path.as_ref();
    let valid_path = valid_path.as_ref();
    let uv = image::open(flow_path)
        .map_err(|e| Error::format(flow_path, e))?
        .into_luma_alpha16();
    let mask = image::open(valid_path)
        .map_err(|e| Error::format(valid_path, e))?
        .into_luma8();
    if uv.dimensions() != mask.dimensions() {
        return Err(Error::Shape(format!(
            "flow image {:?} and validity mask {:?} differ in size",
            uv.dimensions(),
            mask.dimensions()
        )));
    }
    let (w, h) = uv.dimensions();
    let raw = uv.into_raw();
    let u = raw.chunks(2).map(|px| decode_displacement(px[0])).collect();
    let v = raw.chunks(2).map(|px| decode_displacement(px[1])).collect();
    let valid = mask.into_raw().iter().map(|&m| m >= 128).collect();
    FlowField::new(w as usize, h as usize, u, v, valid)
}
