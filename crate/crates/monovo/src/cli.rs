//! `monovo` subcommands. Each one fronts a single library operation; checks
//! against ground truth print `PASS`/`FAIL` lines and fail the process with
//! [`EXIT_CHECK_FAILED`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use monovo_core::camera::FovIntrinsics;
use monovo_core::camera::{build_rectification_map, PinholeIntrinsics};
use monovo_core::evaluation::{
    cumulative_distribution, evaluate_sequence, inject_drift, DriftKind, DriftReport, EvalOptions,
};
use monovo_core::nalgebra::Vector3;
use monovo_core::observability::{connectivity_probability, random_graph_connected, random_graph_edges};
use monovo_core::photometry::{photometric_correct_with, quantize, ResponseLut, VignetteMap};
use monovo_core::response::{calibrate_response, ResponseOptions};
use monovo_core::synthetic::{
    gen_exposure_sweep, gen_loop_trajectory, gen_plane_observations, Pattern, PoseSampler, SyntheticScene,
    TRAJECTORY_DT,
};
use monovo_core::vignette::{calibrate_vignette, collect_samples, residual_graph, GridLayout, VignetteOptions};

use crate::dataset::{load_sequence, write_sequence, LoadOptions, IMAGES_DIR};
use crate::formats::{
    read_camera, read_gray8, read_ground_truth, read_manifest, read_reports, read_response, read_trajectory,
    read_vignette, write_cumulative, write_energy_trace, write_gray8, write_ground_truth, write_manifest, write_mask,
    write_pfm, write_reports, write_response, write_trajectory, write_vignette, ExposureRecord, ManifestEntry, Units,
};

/// Process exit code when a `--truth` or `--expect` check fails.
pub const EXIT_CHECK_FAILED: u8 = 3;

/// Overrides the number of worker threads for Monte-Carlo trials.
pub const WORKERS_ENV: &str = "MONOVO_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "monovo",
    version,
    about = "Photometric calibration and loop-drift evaluation for monocular VO"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the inverse response U from an exposure sweep.
    CalibrateResponse(CalibrateResponseArgs),
    /// Estimate the dense vignette from posed images of a plane.
    CalibrateVignette(CalibrateVignetteArgs),
    /// Random-graph connectivity, or connectivity of a vignette problem.
    CheckObservability(CheckObservabilityArgs),
    /// Resample a FOV-distorted image to a pinhole image.
    Rectify(RectifyArgs),
    /// Convert frames to irradiance using response and vignette.
    Correct(CorrectArgs),
    /// Loop-closure drift metrics for one trajectory.
    Evaluate(EvaluateArgs),
    /// Apply a scale, rotation or translation jump to a trajectory.
    InjectDrift(InjectDriftArgs),
    /// Generate synthetic data with ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Cumulative error distributions over a directory of reports.
    Cumdist(CumdistArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Relative energy decrease below which iteration stops.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateResponseArgs {
    /// Sequence directory (images/ and times.txt).
    pub dataset: PathBuf,
    /// Output response file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Use every n-th pixel in x and y.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Pixels at or above this value are ignored.
    #[arg(long, default_value_t = 255)]
    pub overexposed: u8,
    /// Shift logged exposures by this many frames.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub exposure_shift: isize,
    /// Write the energy trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Reference response to compare against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Largest allowed |U - U_true| as a fraction of 255.
    #[arg(long, default_value_t = 0.02)]
    pub max_error: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateVignetteArgs {
    /// Observation manifest: image exposure_ms h11 .. h33 per line.
    pub manifest: PathBuf,
    /// Inverse response used to linearize the images.
    #[arg(long)]
    pub response: PathBuf,
    /// Output 16-bit vignette.
    #[arg(long)]
    pub out: PathBuf,
    /// Output mask of observed pixels.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Grid cells per side.
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
    /// Plane coordinates of the grid corner.
    #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
    pub grid_origin: Vec<f64>,
    /// Grid side length in plane units.
    #[arg(long, default_value_t = 1.0)]
    pub grid_size: f64,
    #[arg(long, default_value_t = 255)]
    pub overexposed: u8,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Reference vignette to compare against on observed pixels.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Largest allowed absolute vignette error.
    #[arg(long, default_value_t = 0.02)]
    pub max_error: f64,
}

#[derive(Debug, Args)]
pub struct CheckObservabilityArgs {
    /// Check this vignette problem instead of sampling random graphs.
    #[arg(long, requires = "response")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
    /// Nodes per random graph.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Edge-count offset: edges = floor(n (ln n + c)).
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail unless the sampled fraction is this close to the limit law.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RectifyArgs {
    /// FOV calibration file.
    pub camera: PathBuf,
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Validity mask output.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Pinhole focal length; defaults to the source fx.
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub units: Option<Units>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    pub dataset: PathBuf,
    /// Output directory for one PFM per frame.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the dataset's pcalib.txt.
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Overrides the dataset's vignette.png; uniform if neither exists.
    #[arg(long)]
    pub vignette: Option<PathBuf>,
    #[arg(long, default_value_t = 255)]
    pub overexposed: u8,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub exposure_shift: isize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub trajectory: PathBuf,
    /// Ground truth with S/E segment tags.
    pub groundtruth: PathBuf,
    /// Association window in seconds.
    #[arg(long, default_value_t = 0.01)]
    pub window: f64,
    /// Rescale ground truth so that this length becomes 100.
    #[arg(long)]
    pub reference_length: Option<f64>,
    /// Append-free CSV report output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Sequence name used in the report.
    #[arg(long)]
    pub name: Option<String>,
    /// Expected metric values, e.g. `e_align=0`.
    #[arg(long, value_parser = parse_expectation)]
    pub expect: Vec<(Metric, f64)>,
    #[arg(long, default_value_t = 1e-6)]
    pub expect_tol: f64,
}

#[derive(Debug, Args)]
pub struct InjectDriftArgs {
    pub trajectory: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Last unchanged pose.
    #[arg(long)]
    pub index: usize,
    #[arg(long, group = "kind")]
    pub scale: Option<f64>,
    /// Rotation in degrees about --axis.
    #[arg(long, group = "kind", allow_negative_numbers = true)]
    pub rotation: Option<f64>,
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], default_values_t = [0.0, 0.0, 1.0], allow_negative_numbers = true)]
    pub axis: Vec<f64>,
    #[arg(long, group = "kind", num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    pub translation: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Static scene at geometrically increasing exposures.
    Sweep(SynthSweepArgs),
    /// Posed views of a textured wall.
    Plane(SynthPlaneArgs),
    /// Loop trajectory with start/end ground truth.
    Loop(SynthLoopArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PatternArg {
    Gradient,
    Texture,
    Constant,
}

impl From<PatternArg> for Pattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Gradient => Pattern::Gradient,
            PatternArg::Texture => Pattern::Texture,
            PatternArg::Constant => Pattern::Constant,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    #[arg(long, default_value_t = 80)]
    pub width: usize,
    #[arg(long, default_value_t = 60)]
    pub height: usize,
    /// Focal length of the cos^4 vignette and the rendering camera.
    #[arg(long, default_value_t = 60.0)]
    pub focal: f64,
    /// Gamma of the true response.
    #[arg(long, default_value_t = 2.2)]
    pub gamma: f64,
    /// Gaussian noise in gray levels.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthSweepArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long, default_value_t = 120)]
    pub exposures: usize,
    /// Shortest exposure in ms.
    #[arg(long, default_value_t = 0.05)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1.05)]
    pub ratio: f64,
    #[arg(long, value_enum, default_value_t = PatternArg::Gradient)]
    pub pattern: PatternArg,
}

#[derive(Debug, Args)]
pub struct SynthPlaneArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long, default_value_t = 50)]
    pub poses: usize,
    #[arg(long, value_enum, default_value_t = PatternArg::Texture)]
    pub pattern: PatternArg,
    /// Round exposures to whole milliseconds.
    #[arg(long)]
    pub integer_exposures: bool,
}

#[derive(Debug, Args)]
pub struct SynthLoopArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CumdistArgs {
    /// Directory of report CSV files.
    pub reports: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    ES,
    ESSym,
    ER,
    ET,
    EAlign,
    ERmse,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Self::ES, Self::ESSym, Self::ER, Self::ET, Self::EAlign, Self::ERmse];

    pub fn name(self) -> &'static str {
        match self {
            Self::ES => "e_s",
            Self::ESSym => "e_s_sym",
            Self::ER => "e_r",
            Self::ET => "e_t",
            Self::EAlign => "e_align",
            Self::ERmse => "e_rmse",
        }
    }

    pub fn of(self, r: &DriftReport) -> f64 {
        match self {
            Self::ES => r.e_s,
            Self::ESSym => r.e_s_sym(),
            Self::ER => r.e_r,
            Self::ET => r.e_t,
            Self::EAlign => r.e_align,
            Self::ERmse => r.e_rmse,
        }
    }
}

fn parse_expectation(s: &str) -> Result<(Metric, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected METRIC=VALUE")?;
    let metric = Metric::ALL
        .into_iter()
        .find(|m| m.name() == k)
        .ok_or_else(|| format!("unknown metric '{k}'"))?;
    let value = v.parse().map_err(|_| format!("invalid value '{v}'"))?;
    Ok((metric, value))
}

/// Whether all requested checks passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_checks(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

fn check_line(out: &mut impl Write, ok: bool, what: &str, value: f64, limit: f64) -> Result<bool> {
    let tag = if ok { "PASS" } else { "FAIL" };
    writeln!(out, "{tag} {what} = {} (limit {})", num(value), num(limit))?;
    Ok(ok)
}

fn response_options(s: &SolverArgs, stride: usize, overexposed: u8) -> ResponseOptions {
    let d = ResponseOptions::default();
    ResponseOptions {
        tol: s.tol.unwrap_or(d.tol),
        max_iters: s.max_iters.unwrap_or(d.max_iters),
        stride,
        overexposed,
    }
}

fn calibrate_response_cmd(a: &CalibrateResponseArgs, out: &mut impl Write) -> Result<Outcome> {
    let ds = load_sequence(
        &a.dataset,
        &LoadOptions {
            units: None,
            exposure_shift: a.exposure_shift,
        },
    )?;
    let sweep = ds.exposure_sweep()?;
    let cal = calibrate_response(&sweep, &response_options(&a.solver, a.stride, a.overexposed))?;
    for w in &cal.warnings {
        warn!("{w:?}");
    }
    write_response(&a.out, &cal.response)?;
    if let Some(t) = &a.trace {
        write_energy_trace(t, &cal.energy_trace)?;
    }
    writeln!(
        out,
        "frames {} iterations {} converged {} energy {}",
        sweep.len(),
        cal.iterations,
        cal.converged,
        cal.energy_trace.last().copied().unwrap_or(f64::NAN)
    )?;
    let Some(truth) = &a.truth else {
        return Ok(Outcome::Pass);
    };
    let truth = read_response(truth)?;
    let err = cal
        .response
        .values()
        .iter()
        .zip(truth.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let limit = a.max_error * 255.0;
    let ok = check_line(out, err < limit, "response max |U - U_true|", err, limit)?;
    Ok(Outcome::from_checks(ok))
}

fn grid_layout(grid: usize, origin: &[f64], size: f64) -> Result<GridLayout> {
    ensure!(origin.len() == 2, "--grid-origin takes two values");
    Ok(GridLayout::new(grid, [origin[0], origin[1]], size)?)
}

fn calibrate_vignette_cmd(a: &CalibrateVignetteArgs, out: &mut impl Write) -> Result<Outcome> {
    let obs = read_manifest(&a.manifest)?;
    let response = read_response(&a.response)?;
    let d = VignetteOptions::new(grid_layout(a.grid, &a.grid_origin, a.grid_size)?);
    let opts = VignetteOptions {
        tol: a.solver.tol.unwrap_or(d.tol),
        max_iters: a.solver.max_iters.unwrap_or(d.max_iters),
        overexposed: a.overexposed,
        ..d
    };
    let cal = calibrate_vignette(&obs, &response, &opts)?;
    for w in &cal.warnings {
        warn!("{w:?}");
    }
    write_vignette(&a.out, &cal.vignette)?;
    if let Some(m) = &a.mask {
        write_mask(m, &cal.observed)?;
    }
    if let Some(t) = &a.trace {
        write_energy_trace(t, &cal.energy_trace)?;
    }
    let observed = cal.observed.as_slice().iter().filter(|v| **v).count();
    writeln!(
        out,
        "observations {} iterations {} converged {} components {} observed_pixels {}/{}",
        obs.len(),
        cal.iterations,
        cal.converged,
        cal.connectivity.components,
        observed,
        cal.observed.len()
    )?;
    let Some(truth) = &a.truth else {
        return Ok(Outcome::Pass);
    };
    let truth = read_vignette(truth)?;
    ensure!(
        truth.dims() == cal.vignette.dims(),
        "truth vignette size differs from the images"
    );
    let err = cal
        .vignette
        .factors()
        .as_slice()
        .iter()
        .zip(truth.factors().as_slice())
        .zip(cal.observed.as_slice())
        .filter(|(_, seen)| **seen)
        .map(|((x, y), _)| (x - y).abs())
        .fold(0.0, f64::max);
    let ok = check_line(out, err < a.max_error, "vignette max |V - V_true|", err, a.max_error)?;
    Ok(Outcome::from_checks(ok))
}

fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Connected fraction over `trials` graphs, split across worker threads. Trial
/// `i` always draws from the same stream, so the result is independent of the
/// worker count.
pub fn parallel_connectivity(n: usize, c: f64, trials: usize, seed: u64, workers: usize) -> Result<f64> {
    ensure!(n >= 2 && trials > 0, "need n >= 2 and at least one trial");
    let edges = random_graph_edges(n, c);
    let workers = workers.clamp(1, trials);
    let connected: usize = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..trials)
                        .step_by(workers)
                        .filter(|&t| random_graph_connected(n, edges, seed, t as u64))
                        .count()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).sum()
    });
    Ok(connected as f64 / trials as f64)
}

fn check_observability_cmd(a: &CheckObservabilityArgs, out: &mut impl Write) -> Result<Outcome> {
    if let Some(manifest) = &a.manifest {
        let obs = read_manifest(manifest)?;
        let response = read_response(
            a.response
                .as_deref()
                .context("--response is required with --manifest")?,
        )?;
        let grid = GridLayout::unit(a.grid)?;
        let (w, h) = obs.first().context("empty manifest")?.image.dims();
        let samples = collect_samples(&obs, &response, &grid, 255)?;
        let c = residual_graph(&samples, grid.cells(), w * h)?.active_connectivity();
        writeln!(
            out,
            "residuals {} components {} largest {} ({})",
            samples.len(),
            c.components,
            c.largest,
            c.largest_fraction
        )?;
        let tag = if c.is_connected() { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} residual graph connected")?;
        return Ok(Outcome::from_checks(c.is_connected()));
    }
    let p = connectivity_probability(a.c);
    let workers = workers();
    let frac = parallel_connectivity(a.n, a.c, a.trials, a.seed, workers)?;
    writeln!(
        out,
        "n {} c {} edges {} trials {} workers {} connected_fraction {} limit {}",
        a.n,
        a.c,
        random_graph_edges(a.n, a.c),
        a.trials,
        workers,
        frac,
        p
    )?;
    match a.tolerance {
        Some(tol) => {
            let ok = check_line(
                out,
                (frac - p).abs() <= tol,
                "|fraction - limit|",
                (frac - p).abs(),
                tol,
            )?;
            Ok(Outcome::from_checks(ok))
        }
        None => Ok(Outcome::Pass),
    }
}

fn rectify_cmd(a: &RectifyArgs, out: &mut impl Write) -> Result<Outcome> {
    let cam = read_camera(&a.camera, a.units)?;
    let img = read_gray8(&a.input)?;
    ensure!(
        img.dims() == (cam.width, cam.height),
        "{}: image is {}x{} but calibration is {}x{}",
        a.input.display(),
        img.width(),
        img.height(),
        cam.width,
        cam.height
    );
    let w = a.width.unwrap_or(cam.width);
    let h = a.height.unwrap_or(cam.height);
    let pin = PinholeIntrinsics::centered(a.focal.unwrap_or(cam.fx), w, h)?;
    let map = build_rectification_map(&cam, &pin);
    let (rect, valid) = map.remap(&img)?;
    write_gray8(&a.out, &rect.map(|v| quantize(*v)))?;
    if let Some(m) = &a.mask {
        write_mask(m, &valid)?;
    }
    writeln!(out, "rectified {}x{} valid_fraction {}", w, h, map.valid_fraction())?;
    Ok(Outcome::Pass)
}

fn correct_cmd(a: &CorrectArgs, out: &mut impl Write) -> Result<Outcome> {
    let ds = load_sequence(
        &a.dataset,
        &LoadOptions {
            units: None,
            exposure_shift: a.exposure_shift,
        },
    )?;
    let response = match &a.response {
        Some(p) => read_response(p)?,
        None => ds
            .response
            .clone()
            .context("no response given and the dataset has no pcalib.txt")?,
    };
    let vignette = match &a.vignette {
        Some(p) => read_vignette(p)?,
        None => ds.vignette.clone().unwrap_or_else(|| {
            warn!("no vignette given; assuming none");
            let (w, h) = ds.dims();
            VignetteMap::uniform(w, h)
        }),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("{}: cannot create directory", a.out.display()))?;
    let mut valid = 0usize;
    let mut total = 0usize;
    for (i, frame) in ds.prefetch(4) {
        let img = frame?;
        let t = ds.exposures()[i].exposure_ms;
        let b = photometric_correct_with(&img, &response, &vignette, t, a.overexposed)?;
        valid += b.as_slice().iter().filter(|v| v.is_some()).count();
        total += b.len();
        let stem = ds.frame_paths()[i]
            .file_stem()
            .map_or_else(|| format!("{i:05}"), |s| s.to_string_lossy().into());
        write_pfm(&a.out.join(format!("{stem}.pfm")), &b)?;
    }
    writeln!(out, "frames {} valid_pixels {}/{}", ds.len(), valid, total)?;
    Ok(Outcome::Pass)
}

fn evaluate_cmd(a: &EvaluateArgs, out: &mut impl Write) -> Result<Outcome> {
    let traj = read_trajectory(&a.trajectory)?;
    let mut gt = read_ground_truth(&a.groundtruth)?;
    if let Some(len) = a.reference_length {
        gt = gt.normalized(len)?;
    }
    let report = evaluate_sequence(&traj, &gt, &EvalOptions { window: a.window })?;
    if report.unmatched > 0 {
        warn!(
            "{} ground-truth poses had no trajectory pose within {} s",
            report.unmatched, a.window
        );
    }
    let name = a.name.clone().unwrap_or_else(|| {
        a.trajectory
            .file_stem()
            .map_or_else(|| "sequence".into(), |s| s.to_string_lossy().into())
    });
    writeln!(out, "sequence {name}")?;
    if report.is_failed() {
        writeln!(
            out,
            "no estimate: trajectory does not cover both segments (errors set to inf)"
        )?;
    }
    for m in Metric::ALL {
        writeln!(out, "{} {}", m.name(), num(m.of(&report)))?;
    }
    writeln!(out, "rmse_start {}", num(report.rmse_start))?;
    writeln!(out, "rmse_end {}", num(report.rmse_end))?;
    writeln!(out, "unmatched {}", report.unmatched)?;
    if let Some(p) = &a.report {
        create_parent(p)?;
        write_reports(p, &[(name, report)])?;
    }
    let mut ok = true;
    for (m, expected) in &a.expect {
        let v = m.of(&report);
        let d = (v - expected).abs();
        let tag = if d <= a.expect_tol { "PASS" } else { "FAIL" };
        writeln!(
            out,
            "{tag} {} = {} (expected {} ± {})",
            m.name(),
            num(v),
            num(*expected),
            num(a.expect_tol)
        )?;
        ok &= d <= a.expect_tol;
    }
    Ok(Outcome::from_checks(ok))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => {
            fs::create_dir_all(d).with_context(|| format!("{}: cannot create directory", d.display()))
        }
        _ => Ok(()),
    }
}

fn vec3(v: &[f64]) -> Result<Vector3<f64>> {
    ensure!(v.len() == 3, "expected three components");
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn inject_drift_cmd(a: &InjectDriftArgs, out: &mut impl Write) -> Result<Outcome> {
    let traj = read_trajectory(&a.trajectory)?;
    let kind = match (a.scale, a.rotation, &a.translation) {
        (Some(s), None, None) => DriftKind::Scale(s),
        (None, Some(deg), None) => DriftKind::Rotation {
            axis: vec3(&a.axis)?,
            degrees: deg,
        },
        (None, None, Some(t)) => DriftKind::Translation(vec3(t)?),
        _ => bail!("give exactly one of --scale, --rotation, --translation"),
    };
    let drifted = inject_drift(&traj, a.index, kind)?;
    write_trajectory(&a.out, &drifted)?;
    writeln!(out, "injected {kind:?} after pose {}", a.index)?;
    Ok(Outcome::Pass)
}

fn scene(c: &CameraArgs, pattern: Pattern, range: (f64, f64)) -> Result<SyntheticScene> {
    Ok(SyntheticScene::new(
        pattern,
        range,
        ResponseLut::gamma(c.gamma)?,
        VignetteMap::cos4(c.width, c.height, c.focal)?,
        c.seed,
    )?
    .with_noise(c.noise))
}

fn pinhole_camera(c: &CameraArgs) -> Result<FovIntrinsics> {
    let cx = 0.5 * (c.width as f64 - 1.0);
    let cy = 0.5 * (c.height as f64 - 1.0);
    Ok(FovIntrinsics::new(c.focal, c.focal, cx, cy, 0.0, c.width, c.height)?)
}

fn write_truth(root: &Path, response: &ResponseLut, vignette: &VignetteMap) -> Result<PathBuf> {
    let dir = root.join("truth");
    fs::create_dir_all(&dir).with_context(|| format!("{}: cannot create directory", dir.display()))?;
    write_response(&dir.join("pcalib.txt"), response)?;
    write_vignette(&dir.join("vignette.png"), vignette)?;
    Ok(dir)
}

fn synth_cmd(cmd: &SynthCommand, out: &mut impl Write) -> Result<Outcome> {
    match cmd {
        SynthCommand::Sweep(a) => {
            let s = scene(&a.camera, a.pattern.into(), (1e-3, 1e4))?;
            let (sweep, truth) = gen_exposure_sweep(&s, a.exposures, a.t_min, a.ratio)?;
            let frames: Vec<_> = sweep
                .frames()
                .iter()
                .enumerate()
                .map(|(i, (img, t))| {
                    let rec = ExposureRecord {
                        frame_id: i as u64,
                        stamp: i as f64 * 0.05,
                        exposure_ms: *t,
                    };
                    (img.clone(), rec)
                })
                .collect();
            write_sequence(&a.out, &frames, Some(&pinhole_camera(&a.camera)?), None, None)?;
            let dir = write_truth(&a.out, &truth.response, &truth.vignette)?;
            write_pfm(&dir.join("irradiance.pfm"), &truth.irradiance.map(|b| Some(*b)))?;
            writeln!(out, "wrote {} frames to {}", frames.len(), a.out.display())?;
        }
        SynthCommand::Plane(a) => {
            let s = scene(&a.camera, a.pattern.into(), (20.0, 60.0))?;
            let sampler = PoseSampler {
                focal: a.camera.focal,
                integer_exposures: a.integer_exposures,
                ..PoseSampler::default()
            };
            let obs = gen_plane_observations(&s, a.poses, a.camera.seed, &sampler)?;
            let images = a.out.join(IMAGES_DIR);
            fs::create_dir_all(&images).with_context(|| format!("{}: cannot create directory", images.display()))?;
            let mut entries = Vec::with_capacity(obs.len());
            for (i, o) in obs.iter().enumerate() {
                let rel = PathBuf::from(IMAGES_DIR).join(format!("{i:05}.png"));
                write_gray8(&a.out.join(&rel), &o.image)?;
                entries.push(ManifestEntry {
                    image: rel,
                    exposure_ms: o.exposure_ms,
                    homography: o.homography,
                });
            }
            write_manifest(&a.out.join("manifest.txt"), &entries)?;
            write_truth(&a.out, &s.response, &s.vignette)?;
            writeln!(out, "wrote {} observations to {}", obs.len(), a.out.display())?;
        }
        SynthCommand::Loop(a) => {
            let (traj, gt) = gen_loop_trajectory(a.points, a.seed)?;
            fs::create_dir_all(&a.out).with_context(|| format!("{}: cannot create directory", a.out.display()))?;
            write_trajectory(&a.out.join("trajectory.txt"), &traj)?;
            write_ground_truth(&a.out.join("groundtruth.txt"), &gt)?;
            writeln!(
                out,
                "wrote {} poses ({} s, S {} / E {}) to {}",
                traj.len(),
                traj.len() as f64 * TRAJECTORY_DT,
                gt.start().len(),
                gt.end().len(),
                a.out.display()
            )?;
        }
    }
    Ok(Outcome::Pass)
}

fn cumdist_cmd(a: &CumdistArgs, out: &mut impl Write) -> Result<Outcome> {
    let mut files: Vec<PathBuf> = fs::read_dir(&a.reports)
        .with_context(|| format!("{}: cannot read directory", a.reports.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    ensure!(!files.is_empty(), "{}: no report CSV files", a.reports.display());
    let mut reports = Vec::new();
    for f in &files {
        reports.extend(read_reports(f)?.into_iter().map(|(_, r)| r));
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("{}: cannot create directory", a.out_dir.display()))?;
    for m in Metric::ALL {
        if m == Metric::ES {
            // only the symmetrized scale error is ordered meaningfully
            continue;
        }
        let values: Vec<f64> = reports.iter().map(|r| m.of(r)).collect();
        let cd = cumulative_distribution(&values);
        write_cumulative(&a.out_dir.join(format!("cumdist_{}.csv", m.name())), &cd)?;
        let finite = cd.points.last().map_or(0, |p| p.1);
        writeln!(out, "{} runs {} finite {}", m.name(), cd.total, finite)?;
    }
    Ok(Outcome::Pass)
}

pub fn run(cli: &Cli, out: &mut impl Write) -> Result<Outcome> {
    info!("{:?}", cli.command);
    match &cli.command {
        Command::CalibrateResponse(a) => calibrate_response_cmd(a, out),
        Command::CalibrateVignette(a) => calibrate_vignette_cmd(a, out),
        Command::CheckObservability(a) => check_observability_cmd(a, out),
        Command::Rectify(a) => rectify_cmd(a, out),
        Command::Correct(a) => correct_cmd(a, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::InjectDrift(a) => inject_drift_cmd(a, out),
        Command::Synth(c) => synth_cmd(c, out),
        Command::Cumdist(a) => cumdist_cmd(a, out),
    }
}

/// Joins the error chain into one line, skipping causes whose text an outer
/// message already carries.
pub fn error_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
}

/// Shortest round-trip form, switching to exponent notation for very small or
/// very large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e9).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Parses arguments, runs, and maps errors to a single `error: ...` line on
/// stderr with exit code 1.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            let msg = error_line(&e);
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
