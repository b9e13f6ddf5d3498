//! Dense vignette calibration from posed images of a planar Lambertian scene.
//!
//! The plane is discretized into a square grid of cells `x` with unknown
//! irradiance `C(x)`. Each observation `i` maps a cell centre through its
//! homography and rounds to the nearest pixel `p`, giving the residual
//! `t_i V(p) C(x) - U(I_i(p))`. Fixing `V` decouples all `C(x)` and vice versa,
//! so both block updates are closed-form weighted least squares.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::homography::Homography;
use crate::image::{GrayImage, Image};
use crate::observability::{BipartiteResidualGraph, Connectivity};
use crate::photometry::{is_strictly_increasing, ResponseLut, VignetteMap, DEFAULT_OVEREXPOSED};
use crate::sum::CompensatedSum;

/// Placement of the square calibration grid in plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLayout {
    /// Cells per side.
    pub resolution: usize,
    /// Plane coordinate of the grid corner.
    pub origin: [f64; 2],
    /// Side length in plane units.
    pub size: f64,
}

impl GridLayout {
    pub fn new(resolution: usize, origin: [f64; 2], size: f64) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
        }
        if !(size > 0.0) || !size.is_finite() {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        Ok(Self {
            resolution,
            origin,
            size,
        })
    }

    /// Unit square anchored at the origin.
    pub fn unit(resolution: usize) -> Result<Self> {
        Self::new(resolution, [0.0, 0.0], 1.0)
    }

    pub fn cells(&self) -> usize {
        self.resolution * self.resolution
    }

    /// Plane coordinate of the centre of cell `(col, row)`.
    pub fn cell_center(&self, col: usize, row: usize) -> Vector2<f64> {
        let step = self.size / self.resolution as f64;
        Vector2::new(
            self.origin[0] + (col as f64 + 0.5) * step,
            self.origin[1] + (row as f64 + 0.5) * step,
        )
    }
}

/// Estimated plane irradiance per grid cell; `None` for unobserved cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneGrid {
    pub layout: GridLayout,
    pub values: Image<Option<f64>>,
}

/// One image of the plane with its exposure and plane-to-image homography.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneObservation {
    pub image: GrayImage,
    pub exposure_ms: f64,
    pub homography: Homography,
}

impl PlaneObservation {
    pub fn new(image: GrayImage, exposure_ms: f64, homography: Homography) -> Result<Self> {
        if !(exposure_ms > 0.0) || !exposure_ms.is_finite() {
            return Err(Error::NonPositiveExposure(exposure_ms));
        }
        Ok(Self {
            image,
            exposure_ms,
            homography,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VignetteOptions {
    pub grid: GridLayout,
    pub tol: f64,
    pub max_iters: usize,
    pub overexposed: u8,
}

impl VignetteOptions {
    pub fn new(grid: GridLayout) -> Self {
        Self {
            grid,
            tol: 1e-6,
            max_iters: 100,
            overexposed: DEFAULT_OVEREXPOSED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VignetteWarning {
    /// The residual graph has several components; each was normalized to its
    /// own maximum because their relative scale is unobservable.
    Disconnected { components: usize },
    /// Pixels never hit by any valid sample.
    UnobservedPixels(usize),
}

#[derive(Debug, Clone)]
pub struct VignetteCalibration {
    /// Max-normalized attenuation; unobserved pixels are 0.
    pub vignette: VignetteMap,
    pub observed: Image<bool>,
    pub plane: PlaneGrid,
    /// Energy after the initial `C` update and after every block update,
    /// before the final normalization.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub connectivity: Connectivity,
    pub warnings: Vec<VignetteWarning>,
}

/// One valid residual term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub cell: u32,
    pub pixel: u32,
    pub exposure_ms: f64,
    /// `U(I_i(p))`
    pub target: f64,
}

/// Nearest pixel of a sub-pixel position, rounding halves away from zero.
pub fn round_pixel(p: &Vector2<f64>, width: usize, height: usize) -> Option<(usize, usize)> {
    let x = libm::round(p.x);
    let y = libm::round(p.y);
    if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
        return None;
    }
    Some((x as usize, y as usize))
}

fn common_dims(obs: &[PlaneObservation]) -> Result<(usize, usize)> {
    let first = obs.first().ok_or(Error::NoValidObservations)?;
    let dims = first.image.dims();
    for o in obs {
        o.image.ensure_dims(dims)?;
    }
    Ok(dims)
}

/// Enumerates all visible, non-overexposed residual terms in a fixed order
/// (observation-major, then cell-major).
pub fn collect_samples(
    obs: &[PlaneObservation],
    response: &ResponseLut,
    grid: &GridLayout,
    overexposed: u8,
) -> Result<Vec<Sample>> {
    let (w, h) = common_dims(obs)?;
    let mut samples = Vec::new();
    for o in obs {
        for row in 0..grid.resolution {
            for col in 0..grid.resolution {
                let Some(p) = o.homography.apply(&grid.cell_center(col, row)) else {
                    continue;
                };
                let Some((px, py)) = round_pixel(&p, w, h) else {
                    continue;
                };
                let k = *o.image.get(px, py);
                if k >= overexposed {
                    continue;
                }
                samples.push(Sample {
                    cell: (row * grid.resolution + col) as u32,
                    pixel: (py * w + px) as u32,
                    exposure_ms: o.exposure_ms,
                    target: response.irradiance(k),
                });
            }
        }
    }
    Ok(samples)
}

/// Residual graph between grid cells (`A`) and image pixels (`B`).
pub fn residual_graph(samples: &[Sample], cells: usize, pixels: usize) -> Result<BipartiteResidualGraph> {
    BipartiteResidualGraph::with_edges(cells, pixels, samples.iter().map(|s| (s.cell, s.pixel)).collect())
}

/// `C(x) = sum t V U / sum (t V)^2` for every cell; 0 where undetermined.
pub fn update_plane(samples: &[Sample], vignette: &[f64], cells: usize) -> (Vec<f64>, Vec<bool>) {
    let mut num = vec![0.0; cells];
    let mut den = vec![0.0; cells];
    for s in samples {
        let a = s.exposure_ms * vignette[s.pixel as usize];
        num[s.cell as usize] += a * s.target;
        den[s.cell as usize] += a * a;
    }
    solve_ratio(&num, &den)
}

/// `V(p) = sum t C U / sum (t C)^2` for every pixel; 0 where undetermined.
pub fn update_vignette(samples: &[Sample], plane: &[f64], pixels: usize) -> (Vec<f64>, Vec<bool>) {
    let mut num = vec![0.0; pixels];
    let mut den = vec![0.0; pixels];
    for s in samples {
        let a = s.exposure_ms * plane[s.cell as usize];
        num[s.pixel as usize] += a * s.target;
        den[s.pixel as usize] += a * a;
    }
    solve_ratio(&num, &den)
}

fn solve_ratio(num: &[f64], den: &[f64]) -> (Vec<f64>, Vec<bool>) {
    num.iter()
        .zip(den)
        .map(|(n, d)| if *d > 0.0 { (n / d, true) } else { (0.0, false) })
        .unzip()
}

/// Energy over precollected samples, with `C` indexed by cell and `V` by pixel.
pub fn sample_energy(samples: &[Sample], plane: &[f64], vignette: &[f64]) -> f64 {
    let mut e = CompensatedSum::default();
    for s in samples {
        let r = s.exposure_ms * vignette[s.pixel as usize] * plane[s.cell as usize] - s.target;
        e.add(r * r);
    }
    e.value()
}

/// Exact energy `sum_i sum_x (t_i V([pi_i(x)]) C(x) - U(I_i(pi_i(x))))^2`
/// over visible, non-overexposed samples. Unobserved cells count as `C = 0`.
pub fn energy_vignette(
    plane: &PlaneGrid,
    vignette: &Image<f64>,
    obs: &[PlaneObservation],
    response: &ResponseLut,
    overexposed: u8,
) -> Result<f64> {
    let dims = common_dims(obs)?;
    vignette.ensure_dims(dims)?;
    let r = plane.layout.resolution;
    plane.values.ensure_dims((r, r))?;
    let samples = collect_samples(obs, response, &plane.layout, overexposed)?;
    let c: Vec<f64> = plane.values.as_slice().iter().map(|v| v.unwrap_or(0.0)).collect();
    Ok(sample_energy(&samples, &c, vignette.as_slice()))
}

/// Estimates the dense vignette `V` and plane irradiance `C` by alternating
/// closed-form updates, then scales so that `max(V) = 1`.
pub fn calibrate_vignette(
    obs: &[PlaneObservation],
    response: &ResponseLut,
    opts: &VignetteOptions,
) -> Result<VignetteCalibration> {
    if !is_strictly_increasing(response.values()) {
        return Err(Error::InvalidResponse("values must be strictly increasing"));
    }
    let (w, h) = common_dims(obs)?;
    let cells = opts.grid.cells();
    let pixels = w * h;
    let samples = collect_samples(obs, response, &opts.grid, opts.overexposed)?;
    if samples.is_empty() {
        return Err(Error::NoValidObservations);
    }
    let graph = residual_graph(&samples, cells, pixels)?;
    let connectivity = graph.active_connectivity();

    let mut v = vec![1.0; pixels];
    let (mut c, mut c_seen) = update_plane(&samples, &v, cells);
    let mut v_seen = vec![false; pixels];
    for s in &samples {
        v_seen[s.pixel as usize] = true;
    }
    let mut energy = sample_energy(&samples, &c, &v);
    let mut trace = vec![energy];
    let mut iterations = 0;
    let mut converged = false;

    // Rounding can make an exact block update raise the energy by an ulp at
    // the fixed point; such a step is rejected and ends the loop.
    while iterations < opts.max_iters {
        iterations += 1;
        let (nv, vs) = update_vignette(&samples, &c, pixels);
        let e_v = sample_energy(&samples, &c, &nv);
        if e_v > energy {
            converged = true;
            break;
        }
        v = nv;
        v_seen = vs;
        trace.push(e_v);

        let (nc, cs) = update_plane(&samples, &v, cells);
        let next = sample_energy(&samples, &nc, &v);
        if next > e_v {
            converged = true;
            break;
        }
        c = nc;
        c_seen = cs;
        trace.push(next);

        let done = next == 0.0 || energy - next < opts.tol * energy;
        energy = next;
        if done {
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    if !connectivity.is_connected() {
        warnings.push(VignetteWarning::Disconnected {
            components: connectivity.components,
        });
    }
    let unobserved = v_seen.iter().filter(|s| !**s).count();
    if unobserved > 0 {
        warnings.push(VignetteWarning::UnobservedPixels(unobserved));
    }

    normalize_components(&graph, &mut c, &mut v, cells);
    for (x, seen) in v.iter_mut().zip(&v_seen) {
        *x = if *seen { x.clamp(0.0, 1.0) } else { 0.0 };
    }
    let vignette = VignetteMap::normalized(Image::from_vec(w, h, v)?)?;
    let plane_values = c.iter().zip(&c_seen).map(|(c, s)| s.then_some(*c)).collect();

    Ok(VignetteCalibration {
        vignette,
        observed: Image::from_vec(w, h, v_seen)?,
        plane: PlaneGrid {
            layout: opts.grid,
            values: Image::from_vec(opts.grid.resolution, opts.grid.resolution, plane_values)?,
        },
        energy_trace: trace,
        iterations,
        converged,
        connectivity,
        warnings,
    })
}

/// Scales every connected component so that its largest `V` is 1, moving the
/// inverse factor into `C`. Leaves the energy unchanged.
fn normalize_components(graph: &BipartiteResidualGraph, c: &mut [f64], v: &mut [f64], cells: usize) {
    let labels = graph.component_labels();
    let mut max = vec![0.0f64; labels.len()];
    for (p, &x) in v.iter().enumerate() {
        let l = labels[cells + p];
        max[l] = max[l].max(x);
    }
    for (p, x) in v.iter_mut().enumerate() {
        let m = max[labels[cells + p]];
        if m > 0.0 {
            *x /= m;
        }
    }
    for (cell, x) in c.iter_mut().enumerate() {
        let m = max[labels[cell]];
        if m > 0.0 {
            *x *= m;
        }
    }
}
