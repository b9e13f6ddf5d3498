//! Seeded generators for scenes with known ground truth.
//!
//! Every generator is bit-reproducible from its seed and parameters and
//! returns the truth it rendered from.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::evaluation::{GtPose, SegmentGroundTruth, Trajectory};
use crate::homography::Homography;
use crate::image::{GrayImage, Image};
use crate::photometry::{forward_model, quantize, ResponseLut, VignetteMap};
use crate::response::ExposureSweep;
use crate::vignette::PlaneObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Log-spaced ramp over the scene's irradiance range.
    Gradient,
    /// Seeded smooth texture in the same range.
    Texture,
    /// Geometric mean of the range everywhere.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub pattern: Pattern,
    /// Irradiance bounds `(lo, hi)` of the pattern.
    pub range: (f64, f64),
    pub response: ResponseLut,
    pub vignette: VignetteMap,
    /// Additive Gaussian noise in gray levels, applied before quantization.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticScene {
    pub fn new(
        pattern: Pattern,
        range: (f64, f64),
        response: ResponseLut,
        vignette: VignetteMap,
        seed: u64,
    ) -> Result<Self> {
        if !(range.0 > 0.0 && range.1 >= range.0 && range.1.is_finite()) {
            return Err(Error::InvalidArgument(
                "irradiance range must satisfy 0 < lo <= hi".into(),
            ));
        }
        Ok(Self {
            pattern,
            range,
            response,
            vignette,
            noise_sigma: 0.0,
            seed,
        })
    }

    /// Gamma-2.2 response, `cos^4` vignette with focal length 60 on an
    /// 80x60 sensor, and a log gradient wide enough to cover every gray level
    /// during the default sweep.
    pub fn default_sweep(seed: u64) -> Result<Self> {
        Self::new(
            Pattern::Gradient,
            (1e-3, 1e4),
            ResponseLut::gamma(2.2)?,
            VignetteMap::cos4(80, 60, 60.0)?,
            seed,
        )
    }

    /// Same camera looking at a smooth textured wall.
    pub fn default_plane(seed: u64) -> Result<Self> {
        Self::new(
            Pattern::Texture,
            (20.0, 60.0),
            ResponseLut::gamma(2.2)?,
            VignetteMap::cos4(80, 60, 60.0)?,
            seed,
        )
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.vignette.dims()
    }

    fn mid(&self) -> f64 {
        libm::sqrt(self.range.0 * self.range.1)
    }

    /// Log-interpolates the range at `s` (unclamped).
    fn log_lerp(&self, s: f64) -> f64 {
        self.range.0 * libm::pow(self.range.1 / self.range.0, s)
    }

    fn texture_terms(&self) -> [(f64, f64, f64, f64); 3] {
        let mut rng = stream(self.seed, 0);
        core::array::from_fn(|_| {
            (
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
            )
        })
    }

    fn texture(&self, terms: &[(f64, f64, f64, f64); 3], u: f64, v: f64) -> f64 {
        let s: f64 = terms
            .iter()
            .map(|(fu, fv, pu, pv)| libm::sin(2.0 * PI * fu * u + pu) * libm::cos(2.0 * PI * fv * v + pv))
            .sum();
        // s / 3 lies in [-1, 1]
        self.log_lerp(0.5 + s / 6.0)
    }

    /// Sensor irradiance `B` of the sweep scene.
    pub fn sensor_irradiance(&self) -> Image<f64> {
        let (w, h) = self.dims();
        let n = (w * h).max(2) - 1;
        let terms = self.texture_terms();
        Image::from_fn(w, h, |x, y| match self.pattern {
            Pattern::Gradient => self.log_lerp((y * w + x) as f64 / n as f64),
            Pattern::Texture => self.texture(&terms, x as f64 / w as f64 * 4.0, y as f64 / h as f64 * 4.0),
            Pattern::Constant => self.mid(),
        })
    }

    /// Irradiance `C` of the infinite calibration wall at plane point `q`.
    pub fn plane_irradiance(&self, q: &Vector2<f64>) -> f64 {
        match self.pattern {
            Pattern::Gradient => self.log_lerp(0.5 * (q.x + q.y)),
            Pattern::Texture => self.texture(&self.texture_terms(), q.x, q.y),
            Pattern::Constant => self.mid(),
        }
    }

    fn render(&self, irradiance: &Image<f64>, exposure_ms: f64, noise_stream: u64) -> Result<GrayImage> {
        if self.noise_sigma <= 0.0 {
            return forward_model(
                &irradiance.map(|b| Some(*b)),
                &self.response,
                &self.vignette,
                exposure_ms,
            );
        }
        let normal = Normal::new(0.0, self.noise_sigma)
            .map_err(|_| Error::InvalidArgument("noise sigma must be finite".into()))?;
        let mut rng = stream(self.seed, noise_stream);
        let clean = forward_model(
            &irradiance.map(|b| Some(*b)),
            &self.response,
            &self.vignette,
            exposure_ms,
        )?;
        let data = irradiance
            .as_slice()
            .iter()
            .zip(self.vignette.factors().as_slice())
            .zip(clean.as_slice())
            .map(|((b, v), c)| {
                let g = self.response.response(exposure_ms * v * b);
                // keep saturation sticky so the overexposure rule stays meaningful
                if *c == 255 {
                    255
                } else {
                    quantize(g + normal.sample(&mut rng)).min(254)
                }
            })
            .collect();
        Image::from_vec(irradiance.width(), irradiance.height(), data)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Exposure schedule `t_i = t_min * ratio^i`.
pub fn exposure_schedule(n: usize, t_min_ms: f64, ratio: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least 2 exposures".into()));
    }
    if !(ratio > 1.0) || !(t_min_ms > 0.0) || !ratio.is_finite() || !t_min_ms.is_finite() {
        return Err(Error::InvalidArgument("need t_min > 0 and ratio > 1".into()));
    }
    Ok((0..n).map(|i| t_min_ms * libm::pow(ratio, i as f64)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTruth {
    pub irradiance: Image<f64>,
    pub exposures_ms: Vec<f64>,
    pub response: ResponseLut,
    pub vignette: VignetteMap,
}

/// Renders a static scene at geometrically increasing exposures.
pub fn gen_exposure_sweep(
    scene: &SyntheticScene,
    n_exposures: usize,
    t_min_ms: f64,
    ratio: f64,
) -> Result<(ExposureSweep, SweepTruth)> {
    let exposures = exposure_schedule(n_exposures, t_min_ms, ratio)?;
    let irradiance = scene.sensor_irradiance();
    let frames = exposures
        .iter()
        .enumerate()
        .map(|(i, &t)| Ok((scene.render(&irradiance, t, i as u64 + 1)?, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        ExposureSweep::new(frames)?,
        SweepTruth {
            irradiance,
            exposures_ms: exposures,
            response: scene.response.clone(),
            vignette: scene.vignette.clone(),
        },
    ))
}

/// Random camera poses in front of the wall `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSampler {
    /// Pinhole focal length of the rendering camera in pixels.
    pub focal: f64,
    /// Range of camera distances to the wall.
    pub distance: (f64, f64),
    /// Range of the optical-axis footprint on the wall, per coordinate.
    pub center: (f64, f64),
    /// Largest tilt of the optical axis away from the wall normal.
    pub max_tilt_deg: f64,
    pub exposure_ms: (f64, f64),
    /// Rounds exposures to whole milliseconds.
    pub integer_exposures: bool,
}

impl Default for PoseSampler {
    fn default() -> Self {
        Self {
            focal: 60.0,
            distance: (0.35, 0.5),
            center: (0.3, 0.7),
            max_tilt_deg: 10.0,
            exposure_ms: (1.0, 4.0),
            integer_exposures: false,
        }
    }
}

impl PoseSampler {
    /// Plane-to-image homography `K [r1 r2 t]` of one random pose.
    fn sample(&self, rng: &mut ChaCha8Rng, width: usize, height: usize) -> Result<Homography> {
        let d = rng.random_range(self.distance.0..=self.distance.1);
        let c = Vector3::new(
            rng.random_range(self.center.0..=self.center.1),
            rng.random_range(self.center.0..=self.center.1),
            0.0,
        );
        let spin = rng.random_range(0.0..2.0 * PI);
        let tilt_dir = rng.random_range(0.0..2.0 * PI);
        let tilt = rng.random_range(0.0..=self.max_tilt_deg).to_radians();

        // camera frame: looks along +z at the wall, optical axis hits `c`
        let spin = Rotation3::from_axis_angle(&Vector3::z_axis(), spin);
        let tilt_axis = Unit::new_normalize(Vector3::new(libm::cos(tilt_dir), libm::sin(tilt_dir), 0.0));
        let world_from_cam = Rotation3::from_axis_angle(&tilt_axis, tilt) * spin;
        let center = c - world_from_cam * Vector3::z() * d;

        let r = world_from_cam.inverse();
        let t = -(r * center);
        let k = Matrix3::new(
            self.focal,
            0.0,
            0.5 * (width as f64 - 1.0),
            0.0,
            self.focal,
            0.5 * (height as f64 - 1.0),
            0.0,
            0.0,
            1.0,
        );
        let rm = r.matrix();
        let m = Matrix3::from_columns(&[rm.column(0).into_owned(), rm.column(1).into_owned(), t]);
        Homography::new(k * m)
    }
}

/// Renders `n_poses` views of the scene's wall. The wall extends infinitely,
/// so every pixel receives light; calibration grids see only part of it.
pub fn gen_plane_observations(
    scene: &SyntheticScene,
    n_poses: usize,
    seed: u64,
    sampler: &PoseSampler,
) -> Result<Vec<PlaneObservation>> {
    if n_poses == 0 {
        return Err(Error::InvalidArgument("need at least one pose".into()));
    }
    let (w, h) = scene.dims();
    let mut rng = stream(seed, 0);
    let terms = scene.texture_terms();
    let mut out = Vec::with_capacity(n_poses);
    for i in 0..n_poses {
        let hom = sampler.sample(&mut rng, w, h)?;
        let mut t = rng.random_range(sampler.exposure_ms.0..=sampler.exposure_ms.1);
        if sampler.integer_exposures {
            t = libm::round(t).max(1.0);
        }
        let inv = hom.inverse();
        let irradiance = Image::from_fn(w, h, |x, y| match inv.apply(&Vector2::new(x as f64, y as f64)) {
            Some(q) => match scene.pattern {
                Pattern::Texture => scene.texture(&terms, q.x, q.y),
                _ => scene.plane_irradiance(&q),
            },
            None => 0.0,
        });
        let noisy = SyntheticScene {
            seed: seed ^ scene.seed,
            ..scene.clone()
        };
        let image = noisy.render(&irradiance, t, i as u64 + 1)?;
        out.push(PlaneObservation::new(image, t, hom)?);
    }
    Ok(out)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Sampling interval of generated trajectories, in seconds.
pub const TRAJECTORY_DT: f64 = 0.05;

/// A closed 3D path starting and ending at the origin: small loopy motion
/// throughout, with one large loop confined to the middle 80%. The first and
/// last `max(3, n/10)` poses form the start and end segments, and the ground
/// truth is an exact copy of the tracked positions.
pub fn gen_loop_trajectory(n_points: usize, seed: u64) -> Result<(Trajectory, SegmentGroundTruth)> {
    if n_points < 20 {
        return Err(Error::InvalidArgument(
            "a loop trajectory needs at least 20 points".into(),
        ));
    }
    let mut rng = stream(seed, 0);
    let radius = rng.random_range(8.0..12.0);
    let wiggle = rng.random_range(0.8..1.2);
    let turns = rng.random_range(6..=10) as f64;
    let lift = rng.random_range(1.0..3.0);
    let phase = rng.random_range(0.0..2.0 * PI);

    let n = n_points - 1;
    let positions: Vec<Vector3<f64>> = (0..n_points)
        .map(|i| {
            let s = i as f64 / n as f64;
            let phi = 2.0 * PI * smoothstep((s - 0.1) / 0.8);
            let a = 2.0 * PI * turns * s;
            let big = Vector3::new(
                radius * (1.0 - libm::cos(phi)),
                radius * libm::sin(phi),
                lift * libm::sin(0.5 * phi),
            );
            let small = Vector3::new(
                libm::cos(a) - 1.0,
                libm::sin(a),
                0.5 * (libm::sin(2.0 * a + phase) - libm::sin(phase)),
            ) * wiggle;
            big + small
        })
        .collect();
    let stamps: Vec<f64> = (0..n_points).map(|i| i as f64 * TRAJECTORY_DT).collect();

    let m = (n_points / 10).max(3);
    let gt = |range: core::ops::Range<usize>| {
        range
            .map(|i| GtPose {
                stamp: stamps[i],
                position: positions[i],
            })
            .collect::<Vec<_>>()
    };
    let segments = SegmentGroundTruth::new(gt(0..m), gt(n_points - m..n_points))?;
    Ok((Trajectory::new(stamps, positions)?, segments))
}
