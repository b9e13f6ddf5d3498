//! FOV fisheye camera model, its closed-form inverse, and pinhole rectification.
//!
//! The FOV model applies a pinhole projection followed by the radial mapping
//! `r_d = atan(2 r_u tan(omega / 2)) / omega`, which has the closed-form inverse
//! `r_u = tan(r_d omega) / (2 tan(omega / 2))`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::image::Image;

/// Radii and distortion coefficients below this use the analytic limits.
const SINGULAR_EPS: f64 = 1e-8;

/// Pinhole intrinsics combined with the single-parameter FOV distortion model.
///
/// All values are in absolute pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Distortion coefficient in radians, `0 <= omega < pi`. Zero is the pinhole limit.
    pub omega: f64,
    pub width: usize,
    pub height: usize,
}

impl FovIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, omega: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            omega,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be positive"));
        }
        if !(self.omega >= 0.0 && self.omega < PI) {
            return Err(Error::InvalidIntrinsics("omega must lie in [0, pi)"));
        }
        Ok(())
    }

    /// Ratio `r_d / r_u` of the FOV mapping.
    fn distortion_factor(&self, r_u: f64) -> f64 {
        let w = self.omega;
        if w < SINGULAR_EPS {
            return 1.0;
        }
        let tan_half = libm::tan(0.5 * w);
        if r_u < SINGULAR_EPS {
            // limit of atan(2 r tan(w/2)) / (r w) as r -> 0
            return 2.0 * tan_half / w;
        }
        libm::atan(2.0 * r_u * tan_half) / (r_u * w)
    }

    /// Ratio `r_u / r_d` of the inverse mapping.
    fn undistortion_factor(&self, r_d: f64) -> Result<f64> {
        let w = self.omega;
        if w < SINGULAR_EPS {
            return Ok(1.0);
        }
        if r_d * w >= FRAC_PI_2 {
            return Err(Error::OutsideField(r_d * w));
        }
        let tan_half = libm::tan(0.5 * w);
        if r_d < SINGULAR_EPS {
            return Ok(w / (2.0 * tan_half));
        }
        Ok(libm::tan(r_d * w) / (2.0 * r_d * tan_half))
    }

    /// Projects a point given in the camera frame to distorted pixel coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        let xn = p.x / p.z;
        let yn = p.y / p.z;
        let r_u = libm::sqrt(xn * xn + yn * yn);
        let factor = self.distortion_factor(r_u);
        Ok(Vector2::new(
            factor * self.fx * xn + self.cx,
            factor * self.fy * yn + self.cy,
        ))
    }

    /// Back-projects a distorted pixel to the 3D point at depth `depth` along z.
    pub fn unproject(&self, px: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        let ud = (px.x - self.cx) / self.fx;
        let vd = (px.y - self.cy) / self.fy;
        let r_d = libm::sqrt(ud * ud + vd * vd);
        let factor = self.undistortion_factor(r_d)?;
        Ok(Vector3::new(depth * factor * ud, depth * factor * vd, depth))
    }

    /// Whether a sub-pixel coordinate lies inside `[0, w-1] x [0, h-1]`.
    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        in_frame(px, self.width, self.height)
    }
}

/// Undistorted target camera for rectification (square pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::InvalidIntrinsics("focal length must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be positive"));
        }
        Ok(Self {
            f,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Pinhole camera centred in an image of the given size.
    pub fn centered(f: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            f,
            0.5 * (width as f64 - 1.0),
            0.5 * (height as f64 - 1.0),
            width,
            height,
        )
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok(Vector2::new(self.f * p.x / p.z + self.cx, self.f * p.y / p.z + self.cy))
    }

    /// Ray through the pixel, normalized to `z = 1`.
    pub fn ray(&self, px: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.f, (px.y - self.cy) / self.f, 1.0)
    }
}

fn in_frame(px: &Vector2<f64>, width: usize, height: usize) -> bool {
    px.x >= 0.0 && px.y >= 0.0 && px.x <= (width - 1) as f64 && px.y <= (height - 1) as f64
}

/// For every pixel of a pinhole target image, the source coordinate in the
/// distorted image, or `None` when it falls outside the source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RectificationMap {
    width: usize,
    height: usize,
    src_width: usize,
    src_height: usize,
    coords: Vec<Option<Vector2<f64>>>,
}

impl RectificationMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<Vector2<f64>> {
        self.coords[y * self.width + x]
    }

    pub fn valid_fraction(&self) -> f64 {
        let valid = self.coords.iter().filter(|c| c.is_some()).count();
        valid as f64 / self.coords.len() as f64
    }

    /// Resamples `src` with bilinear interpolation. Pixels without a source are
    /// set to zero and reported as invalid in the returned mask.
    pub fn remap<T: Copy + Into<f64>>(&self, src: &Image<T>) -> Result<(Image<f64>, Image<bool>)> {
        src.ensure_dims((self.src_width, self.src_height))?;
        let mut out = Image::filled(self.width, self.height, 0.0);
        let mut valid = Image::filled(self.width, self.height, false);
        for (i, c) in self.coords.iter().enumerate() {
            if let Some(c) = c {
                out.as_mut_slice()[i] = bilinear(src, c.x, c.y);
                valid.as_mut_slice()[i] = true;
            }
        }
        Ok((out, valid))
    }
}

/// Bilinear sample at an in-frame sub-pixel position.
pub fn bilinear<T: Copy + Into<f64>>(img: &Image<T>, x: f64, y: f64) -> f64 {
    let x0 = (libm::floor(x) as usize).min(img.width() - 1);
    let y0 = (libm::floor(y) as usize).min(img.height() - 1);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let ax = x - x0 as f64;
    let ay = y - y0 as f64;
    let v00: f64 = (*img.get(x0, y0)).into();
    let v10: f64 = (*img.get(x1, y0)).into();
    let v01: f64 = (*img.get(x0, y1)).into();
    let v11: f64 = (*img.get(x1, y1)).into();
    (1.0 - ay) * ((1.0 - ax) * v00 + ax * v10) + ay * ((1.0 - ax) * v01 + ax * v11)
}

/// Builds the lookup that rectifies images of `src` into the pinhole camera `dst`.
pub fn build_rectification_map(src: &FovIntrinsics, dst: &PinholeIntrinsics) -> RectificationMap {
    let mut coords = Vec::with_capacity(dst.width * dst.height);
    for v in 0..dst.height {
        for u in 0..dst.width {
            let ray = dst.ray(&Vector2::new(u as f64, v as f64));
            let c = src.project(&ray).ok().filter(|c| in_frame(c, src.width, src.height));
            coords.push(c);
        }
    }
    RectificationMap {
        width: dst.width,
        height: dst.height,
        src_width: src.width,
        src_height: src.height,
        coords,
    }
}
