//! Image formation `I(x) = G(t V(x) B(x))` and its inversion.
//!
//! The inverse response `U = G^-1` is the stored object; `G` is evaluated
//! from it by binary search and linear interpolation between table entries.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};

/// Pixel values at or above this are treated as overexposed.
pub const DEFAULT_OVEREXPOSED: u8 = 255;

/// Irradiance per pixel; `None` marks pixels with no usable value.
pub type IrradianceImage = Image<Option<f64>>;

/// 256-entry inverse camera response `U`, strictly increasing with `U(255) = 255`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseLut {
    values: [f64; 256],
}

impl ResponseLut {
    pub fn new(values: [f64; 256]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidResponse("values must be finite"));
        }
        if !is_strictly_increasing(&values) {
            return Err(Error::InvalidResponse("values must be strictly increasing"));
        }
        if (values[255] - 255.0).abs() > 1e-9 {
            return Err(Error::InvalidResponse("U(255) must equal 255"));
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; 256] = values
            .try_into()
            .map_err(|_| Error::InvalidResponse("expected exactly 256 values"))?;
        Self::new(arr)
    }

    pub fn identity() -> Self {
        Self {
            values: core::array::from_fn(|k| k as f64),
        }
    }

    /// `U(k) = 255 (k / 255)^gamma`, i.e. `G(e) = 255 (e / 255)^(1 / gamma)`.
    pub fn gamma(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidResponse("gamma must be positive"));
        }
        Self::new(core::array::from_fn(|k| 255.0 * libm::pow(k as f64 / 255.0, gamma)))
    }

    pub fn values(&self) -> &[f64; 256] {
        &self.values
    }

    /// Inverse response `U(k)`.
    #[inline]
    pub fn irradiance(&self, k: u8) -> f64 {
        self.values[k as usize]
    }

    /// Response `G(e)` as a continuous gray value in `[0, 255]`.
    pub fn response(&self, energy: f64) -> f64 {
        apply_response(&self.values, energy)
    }
}

pub(crate) fn is_strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

fn apply_response(u: &[f64; 256], energy: f64) -> f64 {
    if !(energy > u[0]) {
        return 0.0;
    }
    if energy >= u[255] {
        return 255.0;
    }
    // first index with u[k] > energy; k >= 1 here
    let hi = u.partition_point(|&v| v <= energy);
    let lo = hi - 1;
    lo as f64 + (energy - u[lo]) / (u[hi] - u[lo])
}

/// Rounds half away from zero and clamps to the 8-bit range.
#[inline]
pub fn quantize(value: f64) -> u8 {
    libm::round(value).clamp(0.0, 255.0) as u8
}

/// Dense attenuation factors in `[0, 1]` with maximum exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VignetteMap {
    factors: Image<f64>,
}

impl VignetteMap {
    pub fn new(factors: Image<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidVignette("empty map"));
        }
        let mut max = 0.0f64;
        for &v in factors.as_slice() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidVignette("values must lie in [0, 1]"));
            }
            max = max.max(v);
        }
        if max != 1.0 {
            return Err(Error::InvalidVignette("maximum must equal 1"));
        }
        Ok(Self { factors })
    }

    /// Rescales non-negative factors so that the maximum becomes 1.
    pub fn normalized(factors: Image<f64>) -> Result<Self> {
        let max = factors.as_slice().iter().copied().fold(0.0f64, f64::max);
        if !(max > 0.0) || factors.as_slice().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidVignette(
                "factors must be non-negative with a positive maximum",
            ));
        }
        let mut factors = factors.map(|v| v / max);
        // guard against rounding leaving the maximum a hair off 1
        for v in factors.as_mut_slice() {
            *v = v.min(1.0);
        }
        let argmax = factors.as_slice().iter().position(|v| *v >= 1.0 - 1e-15).unwrap_or(0);
        factors.as_mut_slice()[argmax] = 1.0;
        Self::new(factors)
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            factors: Image::filled(width, height, 1.0),
        }
    }

    /// Natural `cos^4` falloff of a pinhole lens with focal length `focal`
    /// centred in the image, normalized so the brightest pixel is 1.
    pub fn cos4(width: usize, height: usize, focal: f64) -> Result<Self> {
        let cx = 0.5 * (width as f64 - 1.0);
        let cy = 0.5 * (height as f64 - 1.0);
        let raw = Image::from_fn(width, height, |x, y| {
            let dx = (x as f64 - cx) / focal;
            let dy = (y as f64 - cy) / focal;
            let cos2 = 1.0 / (1.0 + dx * dx + dy * dy);
            cos2 * cos2
        });
        Self::normalized(raw)
    }

    pub fn factors(&self) -> &Image<f64> {
        &self.factors
    }

    pub fn dims(&self) -> (usize, usize) {
        self.factors.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        *self.factors.get(x, y)
    }
}

/// Per-frame exposure times in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureLog {
    times_ms: Vec<f64>,
}

impl ExposureLog {
    pub fn new(times_ms: Vec<f64>) -> Result<Self> {
        if let Some(&t) = times_ms.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            return Err(Error::NonPositiveExposure(t));
        }
        Ok(Self { times_ms })
    }

    pub fn times_ms(&self) -> &[f64] {
        &self.times_ms
    }

    pub fn len(&self) -> usize {
        self.times_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ms.is_empty()
    }

    /// Frame `i` takes the exposure logged for frame `i + shift`; frames whose
    /// source falls off either end keep the nearest logged value.
    pub fn shifted(&self, shift: isize) -> Self {
        let n = self.times_ms.len() as isize;
        let times_ms = (0..n)
            .map(|i| self.times_ms[(i + shift).clamp(0, n - 1) as usize])
            .collect();
        Self { times_ms }
    }
}

fn check_exposure(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::NonPositiveExposure(t));
    }
    Ok(())
}

/// Renders `I(x) = G(t V(x) B(x))`, quantized to 8 bits. Energies at or above
/// `U(255)` saturate to 255, as do pixels without irradiance.
pub fn forward_model(
    irradiance: &IrradianceImage,
    response: &ResponseLut,
    vignette: &VignetteMap,
    exposure_ms: f64,
) -> Result<GrayImage> {
    check_exposure(exposure_ms)?;
    irradiance.ensure_dims(vignette.dims())?;
    let data = irradiance
        .as_slice()
        .iter()
        .zip(vignette.factors().as_slice())
        .map(|(b, v)| match b {
            Some(b) => quantize(response.response(exposure_ms * v * b)),
            None => 255,
        })
        .collect();
    Image::from_vec(irradiance.width(), irradiance.height(), data)
}

/// Recovers `B(x) = U(I(x)) / (t V(x))`. Overexposed pixels and pixels with
/// zero attenuation factor come back as `None`.
pub fn photometric_correct(
    image: &GrayImage,
    response: &ResponseLut,
    vignette: &VignetteMap,
    exposure_ms: f64,
) -> Result<IrradianceImage> {
    photometric_correct_with(image, response, vignette, exposure_ms, DEFAULT_OVEREXPOSED)
}

/// Like [`photometric_correct`] with a custom overexposure threshold (e.g. 254
/// for data with compression artefacts near saturation).
pub fn photometric_correct_with(
    image: &GrayImage,
    response: &ResponseLut,
    vignette: &VignetteMap,
    exposure_ms: f64,
    overexposed: u8,
) -> Result<IrradianceImage> {
    correct_raw(response.values(), image, vignette, exposure_ms, overexposed)
}

fn correct_raw(
    u: &[f64; 256],
    image: &GrayImage,
    vignette: &VignetteMap,
    exposure_ms: f64,
    overexposed: u8,
) -> Result<IrradianceImage> {
    check_exposure(exposure_ms)?;
    image.ensure_dims(vignette.dims())?;
    let data = image
        .as_slice()
        .iter()
        .zip(vignette.factors().as_slice())
        .map(|(&i, &v)| {
            if i >= overexposed || v <= 0.0 {
                None
            } else {
                Some(u[i as usize] / (exposure_ms * v))
            }
        })
        .collect();
    Image::from_vec(image.width(), image.height(), data)
}
