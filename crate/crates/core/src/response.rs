//! Non-parametric response calibration from a static-scene exposure sweep.
//!
//! Minimizes `E(U, B') = sum_i sum_x (U(I_i(x)) - t_i B'(x))^2` by alternating
//! the two closed-form block updates:
//!
//! * `U(k) = mean of t_i B'(x)` over all observations with `I_i(x) = k`
//! * `B'(x) = sum_i t_i U(I_i(x)) / sum_i t_i^2`
//!
//! Overexposed observations take part in neither update. No smoothness prior
//! is used, so every intensity bin is estimated from its own observations.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};
use crate::observability::BipartiteResidualGraph;
use crate::photometry::{is_strictly_increasing, IrradianceImage, ResponseLut, DEFAULT_OVEREXPOSED};
use crate::sum::CompensatedSum;

/// Images of one static scene at known exposure times (ms).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSweep {
    frames: Vec<(GrayImage, f64)>,
}

impl ExposureSweep {
    pub fn new(frames: Vec<(GrayImage, f64)>) -> Result<Self> {
        let Some((first, _)) = frames.first() else {
            return Err(Error::InvalidSweep("no frames".into()));
        };
        let dims = first.dims();
        for (img, t) in &frames {
            img.ensure_dims(dims)?;
            if !(*t > 0.0) || !t.is_finite() {
                return Err(Error::NonPositiveExposure(*t));
            }
        }
        let t0 = frames[0].1;
        if frames.iter().all(|(_, t)| *t == t0) {
            return Err(Error::InvalidSweep("need at least two distinct exposure times".into()));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[(GrayImage, f64)] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].0.dims()
    }

    /// Multiplies every exposure time by `factor`.
    pub fn scaled_exposures(&self, factor: f64) -> Result<Self> {
        Self::new(self.frames.iter().map(|(img, t)| (img.clone(), t * factor)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseOptions {
    /// Stop once the relative energy decrease of a full iteration drops below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Use every `stride`-th pixel in x and y.
    pub stride: usize,
    pub overexposed: u8,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50,
            stride: 1,
            overexposed: DEFAULT_OVEREXPOSED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseWarning {
    /// The converged table was not strictly increasing and was projected onto
    /// the increasing tables (pool-adjacent-violators).
    MonotonicityRepaired,
    /// Intensity ranges without observations, filled by interpolation or
    /// linear extrapolation.
    UnobservedIntensities(Vec<(u8, u8)>),
}

#[derive(Debug, Clone)]
pub struct ResponseCalibration {
    pub response: ResponseLut,
    /// `B' = V B`, scaled consistently with the normalized response. Pixels
    /// that were skipped or never validly observed are `None`.
    pub irradiance: IrradianceImage,
    /// Energy after the initial `B'` update and after every subsequent block
    /// update, before the final normalization.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<ResponseWarning>,
}

fn used_pixel(x: usize, y: usize, stride: usize) -> bool {
    x.is_multiple_of(stride) && y.is_multiple_of(stride)
}

/// One `B'` block update for a fixed (raw, unnormalized) response table.
pub fn update_irradiance(u: &[f64; 256], sweep: &ExposureSweep, opts: &ResponseOptions) -> IrradianceImage {
    let (w, h) = sweep.dims();
    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    for (img, t) in sweep.frames() {
        for (i, &k) in img.as_slice().iter().enumerate() {
            if k < opts.overexposed && used_pixel(i % w, i / w, opts.stride) {
                num[i] += t * u[k as usize];
                den[i] += t * t;
            }
        }
    }
    let data = num
        .iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { Some(n / d) } else { None })
        .collect();
    Image::from_vec(w, h, data).expect("dims match")
}

/// One `U` block update. Returns the per-bin means (bins without observations
/// keep `previous`) and the observation count of every bin.
pub fn update_response(
    previous: &[f64; 256],
    irradiance: &IrradianceImage,
    sweep: &ExposureSweep,
    opts: &ResponseOptions,
) -> ([f64; 256], [usize; 256]) {
    let mut sum = [0.0; 256];
    let mut count = [0usize; 256];
    let b = irradiance.as_slice();
    for (img, t) in sweep.frames() {
        for (i, &k) in img.as_slice().iter().enumerate() {
            if k >= opts.overexposed {
                continue;
            }
            if let Some(b) = b[i] {
                sum[k as usize] += t * b;
                count[k as usize] += 1;
            }
        }
    }
    let mut u = *previous;
    for k in 0..256 {
        if count[k] > 0 {
            u[k] = sum[k] / count[k] as f64;
        }
    }
    (u, count)
}

/// Exact sum of squared residuals over all non-overexposed observations of
/// pixels that carry an irradiance value.
pub fn energy_response(
    u: &[f64; 256],
    irradiance: &IrradianceImage,
    sweep: &ExposureSweep,
    overexposed: u8,
) -> Result<f64> {
    irradiance.ensure_dims(sweep.dims())?;
    let b = irradiance.as_slice();
    let mut e = CompensatedSum::default();
    for (img, t) in sweep.frames() {
        for (i, &k) in img.as_slice().iter().enumerate() {
            if k >= overexposed {
                continue;
            }
            if let Some(b) = b[i] {
                let r = u[k as usize] - t * b;
                e.add(r * r);
            }
        }
    }
    Ok(e.value())
}

/// Estimates the inverse response `U` and the irradiance `B'` from a sweep.
pub fn calibrate_response(sweep: &ExposureSweep, opts: &ResponseOptions) -> Result<ResponseCalibration> {
    if opts.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    check_observability(sweep, opts)?;

    let mut u: [f64; 256] = core::array::from_fn(|k| k as f64);
    let mut b = update_irradiance(&u, sweep, opts);
    let mut energy = energy_response(&u, &b, sweep, opts.overexposed)?;
    let mut trace = vec![energy];
    let mut counts = [0usize; 256];
    let mut iterations = 0;
    let mut converged = false;

    // Each half-step is an exact block minimizer, so the energy can only rise
    // through rounding once converged; such a step is rejected and ends the loop.
    while iterations < opts.max_iters {
        iterations += 1;
        let (next_u, c) = update_response(&u, &b, sweep, opts);
        counts = c;
        let e_u = energy_response(&next_u, &b, sweep, opts.overexposed)?;
        if e_u > energy {
            converged = true;
            break;
        }
        u = next_u;
        trace.push(e_u);

        let next_b = update_irradiance(&u, sweep, opts);
        let next = energy_response(&u, &next_b, sweep, opts.overexposed)?;
        if next > e_u {
            converged = true;
            break;
        }
        b = next_b;
        trace.push(next);

        let decrease = energy - next;
        let done = next == 0.0 || decrease < opts.tol * energy;
        energy = next;
        if done {
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    let gaps = fill_unobserved(&mut u, &counts, opts.overexposed)?;
    if !gaps.is_empty() {
        warnings.push(ResponseWarning::UnobservedIntensities(gaps));
    }
    // U(255) is never observed directly
    u[255] = 2.0 * u[254] - u[253];
    if !is_strictly_increasing(&u) {
        make_increasing(&mut u, &counts);
        warnings.push(ResponseWarning::MonotonicityRepaired);
    }
    if !(u[255] > 0.0) {
        return Err(Error::Degenerate("estimated U(255) is not positive"));
    }
    let scale = 255.0 / u[255];
    let normalized: [f64; 256] = core::array::from_fn(|k| if k == 255 { 255.0 } else { u[k] * scale });
    let response = ResponseLut::new(normalized)?;
    let irradiance = b.map(|v| v.map(|v| v * scale));

    Ok(ResponseCalibration {
        response,
        irradiance,
        energy_trace: trace,
        iterations,
        converged,
        warnings,
    })
}

/// Rejects sweeps whose bin/pixel residual graph splits into several
/// components, since their relative scale is then unobservable.
fn check_observability(sweep: &ExposureSweep, opts: &ResponseOptions) -> Result<()> {
    let (w, h) = sweep.dims();
    let mut graph = BipartiteResidualGraph::new(256, w * h);
    let mut seen = vec![[0u64; 4]; w * h];
    let mut observed = [false; 256];
    for (img, _) in sweep.frames() {
        for (i, &k) in img.as_slice().iter().enumerate() {
            if k >= opts.overexposed || !used_pixel(i % w, i / w, opts.stride) {
                continue;
            }
            let (word, bit) = (k as usize / 64, k as usize % 64);
            if seen[i][word] & (1 << bit) == 0 {
                seen[i][word] |= 1 << bit;
                graph.add_edge(k as usize, i)?;
                observed[k as usize] = true;
            }
        }
    }
    if graph.edges().is_empty() {
        return Err(Error::NoValidObservations);
    }
    if !graph.active_connectivity().is_connected() {
        let lo = observed.iter().position(|o| *o).unwrap_or(0);
        let hi = observed.iter().rposition(|o| *o).unwrap_or(0);
        let ranges = unobserved_runs(&observed[lo..=hi])
            .into_iter()
            .map(|(a, b)| ((a + lo) as u8, (b + lo) as u8))
            .collect();
        return Err(Error::UnobservedIntensities { ranges });
    }
    Ok(())
}

fn unobserved_runs(observed: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &o) in observed.iter().enumerate() {
        match (o, start) {
            (false, None) => start = Some(k),
            (true, Some(s)) => {
                runs.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, observed.len() - 1));
    }
    runs
}

/// Fills bins `0..255` that have no observations: linear interpolation between
/// observed neighbours, linear extrapolation beyond the observed span.
/// Returns the filled ranges.
fn fill_unobserved(u: &mut [f64; 256], counts: &[usize; 256], overexposed: u8) -> Result<Vec<(u8, u8)>> {
    let observed: Vec<usize> = (0..255).filter(|&k| counts[k] > 0).collect();
    if observed.len() < 2 {
        return Err(Error::Degenerate("fewer than two intensity levels observed"));
    }
    let mut flags = [false; 255];
    for &k in &observed {
        flags[k] = true;
    }
    let runs = unobserved_runs(&flags);
    for &(a, b) in &runs {
        let (k0, k1) = if a == 0 {
            (observed[0], observed[1])
        } else if b == 254 {
            (observed[observed.len() - 2], observed[observed.len() - 1])
        } else {
            (a - 1, b + 1)
        };
        let slope = (u[k1] - u[k0]) / (k1 - k0) as f64;
        for k in a..=b {
            u[k] = u[k0] + slope * (k as f64 - k0 as f64);
        }
    }
    // bins at or above the overexposure threshold are expected to be empty
    let gaps = runs
        .into_iter()
        .filter(|&(a, _)| a < overexposed as usize)
        .map(|(a, b)| (a as u8, b.min(overexposed as usize - 1) as u8))
        .collect();
    Ok(gaps)
}

/// Weighted isotonic regression (pool adjacent violators) followed by a tiny
/// ramp that turns flat pooled blocks into strictly increasing ones.
fn make_increasing(u: &mut [f64; 256], counts: &[usize; 256]) {
    // blocks of (mean, weight, len)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(256);
    for k in 0..256 {
        let w = counts[k].max(1) as f64;
        blocks.push((u[k], w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 < blocks[n - 1].0 {
                break;
            }
            let (m2, w2, l2) = blocks.pop().unwrap();
            let (m1, w1, l1) = blocks.pop().unwrap();
            blocks.push(((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, l1 + l2));
        }
    }
    let mut k = 0;
    for (m, _, len) in blocks {
        for _ in 0..len {
            u[k] = m;
            k += 1;
        }
    }
    let span = (u[255] - u[0]).abs().max(1e-12);
    let step = span * 1e-9;
    for k in 1..256 {
        if u[k] <= u[k - 1] {
            u[k] = u[k - 1] + step;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sweep() -> ExposureSweep {
        // 4 pixels, identity response, irradiance 10, 20, 30, 40
        let frames = [1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .map(|&t| {
                let data = [10.0, 20.0, 30.0, 40.0]
                    .iter()
                    .map(|b: &f64| crate::photometry::quantize(t * b))
                    .collect();
                (Image::from_vec(4, 1, data).unwrap(), t)
            })
            .collect();
        ExposureSweep::new(frames).unwrap()
    }

    #[test]
    fn sweep_validation() {
        let img = Image::filled(2, 2, 10u8);
        assert!(ExposureSweep::new(vec![]).is_err());
        assert!(matches!(
            ExposureSweep::new(vec![(img.clone(), 1.0), (img.clone(), 1.0)]),
            Err(Error::InvalidSweep(_))
        ));
        assert!(ExposureSweep::new(vec![(img.clone(), 1.0), (img.clone(), -1.0)]).is_err());
        assert!(ExposureSweep::new(vec![(img.clone(), 1.0), (Image::filled(3, 2, 0u8), 2.0)]).is_err());
        assert!(ExposureSweep::new(vec![(img.clone(), 1.0), (img, 2.0)]).is_ok());
    }

    #[test]
    fn fully_overexposed_sweep_has_no_observations() {
        let img = Image::filled(3, 3, 255u8);
        let sweep = ExposureSweep::new(vec![(img.clone(), 1.0), (img, 2.0)]).unwrap();
        assert_eq!(
            calibrate_response(&sweep, &ResponseOptions::default()).unwrap_err(),
            Error::NoValidObservations
        );
    }

    #[test]
    fn disconnected_intensity_ranges_are_reported() {
        // pixel 0 only ever shows 10/20, pixel 1 only 200/210: no pixel links the two groups
        let a = Image::from_vec(2, 1, vec![10u8, 200]).unwrap();
        let b = Image::from_vec(2, 1, vec![20u8, 210]).unwrap();
        let sweep = ExposureSweep::new(vec![(a, 1.0), (b, 2.0)]).unwrap();
        match calibrate_response(&sweep, &ResponseOptions::default()) {
            Err(Error::UnobservedIntensities { ranges }) => {
                assert_eq!(ranges, vec![(11, 19), (21, 199), (201, 209)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn consistent_state_has_zero_energy() {
        let sweep = tiny_sweep();
        let u: [f64; 256] = core::array::from_fn(|k| k as f64);
        let b = Image::from_vec(4, 1, vec![Some(10.0), Some(20.0), Some(30.0), Some(40.0)]).unwrap();
        assert_eq!(energy_response(&u, &b, &sweep, 255).unwrap(), 0.0);
    }

    #[test]
    fn perturbing_one_irradiance_matches_recomputation() {
        let sweep = tiny_sweep();
        let u = ResponseLut::gamma(1.3).unwrap();
        let b = update_irradiance(u.values(), &sweep, &ResponseOptions::default());
        let e0 = energy_response(u.values(), &b, &sweep, 255).unwrap();
        let delta = 0.37;
        let mut bp = b.clone();
        *bp.get_mut(2, 0) = Some(b.get(2, 0).unwrap() + delta);
        let e1 = energy_response(u.values(), &bp, &sweep, 255).unwrap();
        // sum_i (r_i - t_i delta)^2 - r_i^2 = sum_i (t_i delta)^2 - 2 t_i delta r_i
        let mut expected = 0.0;
        for (img, t) in sweep.frames() {
            let k = *img.get(2, 0);
            if k == 255 {
                continue;
            }
            let r = u.irradiance(k) - t * b.get(2, 0).unwrap();
            expected += (t * delta) * (t * delta) - 2.0 * t * delta * r;
        }
        assert!((e1 - e0 - expected).abs() < 1e-9 * e1.max(1.0));
    }

    #[test]
    fn bin_update_is_brute_force_mean() {
        let sweep = tiny_sweep();
        let opts = ResponseOptions::default();
        let u0: [f64; 256] = core::array::from_fn(|k| k as f64);
        let b = update_irradiance(&u0, &sweep, &opts);
        let (u, counts) = update_response(&u0, &b, &sweep, &opts);
        for k in 0..255usize {
            let mut vals = Vec::new();
            for (img, t) in sweep.frames() {
                for (i, &v) in img.as_slice().iter().enumerate() {
                    if v as usize == k {
                        vals.push(t * b.as_slice()[i].unwrap());
                    }
                }
            }
            assert_eq!(counts[k], vals.len());
            if !vals.is_empty() {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((u[k] - mean).abs() < 1e-12);
            } else {
                assert_eq!(u[k], u0[k]);
            }
        }
    }

    #[test]
    fn pav_repairs_non_monotone_tables() {
        let mut u: [f64; 256] = core::array::from_fn(|k| k as f64);
        u[100] = 90.0;
        u[101] = 85.0;
        let counts = [1usize; 256];
        make_increasing(&mut u, &counts);
        assert!(is_strictly_increasing(&u));
        assert!((u[100] - u[99]).abs() < 1e-6 || u[100] > u[99]);
    }

    #[test]
    fn runs_of_unobserved_bins() {
        assert_eq!(
            unobserved_runs(&[true, false, false, true, false]),
            vec![(1, 2), (4, 4)]
        );
        assert!(unobserved_runs(&[true, true]).is_empty());
    }
}
