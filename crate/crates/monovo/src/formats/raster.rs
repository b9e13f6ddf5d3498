use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use monovo_core::image::{GrayImage, Image};
use monovo_core::photometry::VignetteMap;

use crate::error::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(Error::image(path))
}

fn buffer<P: image::Pixel>(
    path: &Path,
    w: usize,
    h: usize,
    data: Vec<P::Subpixel>,
) -> Result<ImageBuffer<P, Vec<P::Subpixel>>> {
    let (w, h) = (
        u32::try_from(w).map_err(|_| Error::invalid(path, "image too wide"))?,
        u32::try_from(h).map_err(|_| Error::invalid(path, "image too tall"))?,
    );
    ImageBuffer::from_raw(w, h, data).ok_or_else(|| Error::invalid(path, "pixel buffer size mismatch"))
}

/// Reads an 8-bit grayscale image; other pixel formats are rejected rather
/// than silently converted.
pub fn read_gray8(path: &Path) -> Result<GrayImage> {
    match open(path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Image::from_vec(w as usize, h as usize, img.into_raw()).map_err(Error::core(path))
        }
        other => Err(Error::invalid(
            path,
            format!("expected 8-bit grayscale, found {:?}", other.color()),
        )),
    }
}

pub fn write_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    buffer::<Luma<u8>>(path, img.width(), img.height(), img.as_slice().to_vec())?
        .save(path)
        .map_err(Error::image(path))
}

/// Reads a vignette stored as 16-bit gray (65535 is `V = 1`); 8-bit files are
/// accepted with 255 as `V = 1`.
pub fn read_vignette(path: &Path) -> Result<VignetteMap> {
    let (w, h, data): (u32, u32, Vec<f64>) = match open(path)? {
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            (w, h, img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            (w, h, img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        }
        other => {
            return Err(Error::invalid(
                path,
                format!("expected grayscale vignette, found {:?}", other.color()),
            ))
        }
    };
    let factors = Image::from_vec(w as usize, h as usize, data).map_err(Error::core(path))?;
    VignetteMap::new(factors).map_err(Error::core(path))
}

pub fn write_vignette(path: &Path, vignette: &VignetteMap) -> Result<()> {
    let f = vignette.factors();
    let data = f
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    buffer::<Luma<u16>>(path, f.width(), f.height(), data)?
        .save(path)
        .map_err(Error::image(path))
}

/// Validity mask as 8-bit gray, 255 for valid.
pub fn write_mask(path: &Path, mask: &Image<bool>) -> Result<()> {
    write_gray8(path, &mask.map(|v| if *v { 255 } else { 0 }))
}

pub fn read_mask(path: &Path) -> Result<Image<bool>> {
    Ok(read_gray8(path)?.map(|v| *v != 0))
}

/// Writes a single-channel little-endian PFM. Missing values become NaN.
pub fn write_pfm(path: &Path, img: &Image<Option<f64>>) -> Result<()> {
    let (w, h) = img.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    // PFM rows run bottom to top
    for y in (0..h).rev() {
        for x in 0..w {
            let v = img.get(x, y).map_or(f32::NAN, |v| v as f32);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(Error::io(path))?;
    f.write_all(&out).map_err(Error::io(path))
}

/// Reads a single-channel PFM of either byte order. NaN becomes `None`.
pub fn read_pfm(path: &Path) -> Result<Image<Option<f32>>> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::invalid(path, "truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the data
    pos += 1;
    if fields[0] != "Pf" {
        return Err(Error::invalid(path, "only single-channel PFM ('Pf') is supported"));
    }
    let bad = |what: &str| Error::invalid(path, format!("invalid PFM {what}"));
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("scale"))?;
    let little = scale < 0.0;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != w * h * 4 {
        return Err(Error::invalid(
            path,
            format!("expected {} data bytes, found {}", w * h * 4, body.len()),
        ));
    }
    let mut data = vec![None; w * h];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, y) = (i % w, h - 1 - i / w);
        data[y * w + x] = (!v.is_nan()).then_some(v);
    }
    Image::from_vec(w, h, data).map_err(Error::core(path))
}
