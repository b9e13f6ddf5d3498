//! Loop-closure drift evaluation.
//!
//! A tracked trajectory is aligned separately to ground truth over a start
//! segment `S` and an end segment `E`. The discrepancy between the two
//! similarity alignments is the drift accumulated over the loop.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

/// Similarity transform `p -> s R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3 {
    scale: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ORTHO_TOL: f64 = 1e-9;

impl Sim3 {
    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument("Sim3 scale must be positive and finite".into()));
        }
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(defect <= ORTHO_TOL) || !((rotation.determinant() - 1.0).abs() <= ORTHO_TOL) {
            return Err(Error::InvalidArgument(
                "Sim3 rotation must be orthonormal with det +1".into(),
            ));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("Sim3 translation must be finite".into()));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_scale(scale: f64) -> Result<Self> {
        Self::new(scale, Matrix3::identity(), Vector3::zeros())
    }

    /// Rotation by `degrees` about `axis` through the origin.
    pub fn from_axis_angle(axis: &Vector3<f64>, degrees: f64) -> Result<Self> {
        let rotation = axis_rotation(axis, degrees)?;
        Ok(Self {
            scale: 1.0,
            rotation,
            translation: Vector3::zeros(),
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Result<Self> {
        Self::new(1.0, Matrix3::identity(), translation)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Sim3) -> Sim3 {
        Sim3 {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    pub fn inverse(&self) -> Sim3 {
        let rt = self.rotation.transpose();
        Sim3 {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// Rotation angle in degrees, in `[0, 180]`.
    pub fn angle_degrees(&self) -> f64 {
        rotation_angle(&self.rotation).to_degrees()
    }
}

fn axis_rotation(axis: &Vector3<f64>, degrees: f64) -> Result<Matrix3<f64>> {
    let n = axis.norm();
    if !(n > 0.0) || !n.is_finite() || !degrees.is_finite() {
        return Err(Error::InvalidArgument(
            "rotation axis must be non-zero and finite".into(),
        ));
    }
    let axis = Unit::new_unchecked(axis / n);
    Ok(*Rotation3::from_axis_angle(&axis, degrees.to_radians()).matrix())
}

/// Rotation angle in radians.
///
/// Uses `atan2(|sin|, cos)` from the skew and symmetric parts, which stays
/// accurate near 0 where `acos` of the trace loses half the digits.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let sx = r[(2, 1)] - r[(1, 2)];
    let sy = r[(0, 2)] - r[(2, 0)];
    let sz = r[(1, 0)] - r[(0, 1)];
    let sin = 0.5 * libm::sqrt(sx * sx + sy * sy + sz * sz);
    let cos = 0.5 * (r.trace() - 1.0);
    libm::atan2(sin, cos)
}

/// Alignment together with its residual RMSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub transform: Sim3,
    pub rmse: f64,
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / points.len() as f64
}

/// Relative threshold below which the second principal axis of a point set
/// counts as absent.
const COLLINEAR_EPS: f64 = 1e-12;

/// Least-squares similarity mapping `source` onto `target`.
pub fn align_sim3(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<Alignment> {
    if source.len() != target.len() {
        return Err(Error::InvalidArgument("source and target lengths differ".into()));
    }
    if source.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: source.len(),
        });
    }
    let n = source.len() as f64;
    let mx = centroid(source);
    let my = centroid(target);

    let mut scatter = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = x - mx;
        let dy = y - my;
        scatter += dx * dx.transpose();
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;

    let mut spread = scatter.symmetric_eigenvalues();
    spread
        .as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    if !(spread[0] > 0.0) || spread[1] <= COLLINEAR_EPS * spread[0] {
        return Err(Error::Degenerate("source points are collinear"));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("SVD did not converge")),
    };
    let d = svd.singular_values;
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        let smallest = (0..3)
            .min_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(Ordering::Equal))
            .unwrap_or(2);
        signs[smallest] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = d.component_mul(&signs).sum() / var_x;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("alignment collapsed to non-positive scale"));
    }
    let translation = my - rotation * mx * scale;
    let transform = Sim3 {
        scale,
        rotation,
        translation,
    };
    let sq: f64 = source
        .iter()
        .zip(target)
        .map(|(x, y)| (transform.apply(x) - y).norm_squared())
        .sum();
    Ok(Alignment {
        transform,
        rmse: libm::sqrt(sq / n),
    })
}

/// Loop drift `T_e T_s^-1` and its scale, rotation (degrees) and translation
/// magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub transform: Sim3,
    pub e_s: f64,
    pub e_r: f64,
    pub e_t: f64,
}

pub fn drift(t_s: &Sim3, t_e: &Sim3) -> Drift {
    let transform = t_e.compose(&t_s.inverse());
    Drift {
        e_s: transform.scale,
        e_r: transform.angle_degrees(),
        e_t: transform.translation.norm(),
        transform,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    stamps: Vec<f64>,
    positions: Vec<Vector3<f64>>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, positions: Vec<Vector3<f64>>) -> Result<Self> {
        if stamps.len() != positions.len() {
            return Err(Error::InvalidArgument("timestamp and position counts differ".into()));
        }
        if stamps.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                got: stamps.len(),
            });
        }
        if !stamps.iter().all(|t| t.is_finite()) || !positions.iter().all(|p| p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidArgument("trajectory values must be finite".into()));
        }
        if stamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("timestamps must be strictly increasing".into()));
        }
        Ok(Self { stamps, positions })
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    /// Index of the pose nearest to `t`, if within `window` seconds.
    pub fn nearest(&self, t: f64, window: f64) -> Option<usize> {
        let i = self.stamps.partition_point(|&s| s < t);
        let mut best: Option<(usize, f64)> = None;
        for j in [i.wrapping_sub(1), i] {
            if let Some(&s) = self.stamps.get(j) {
                let d = (s - t).abs();
                if d <= window && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    pub fn path_length(&self) -> f64 {
        polyline_length(&self.positions)
    }
}

pub fn polyline_length(points: &[Vector3<f64>]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Ground-truth pose tagged with its timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtPose {
    pub stamp: f64,
    pub position: Vector3<f64>,
}

/// Ground truth for the start and end segments of a loop sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGroundTruth {
    start: Vec<GtPose>,
    end: Vec<GtPose>,
}

fn check_segment(poses: &[GtPose]) -> Result<()> {
    if poses.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: poses.len(),
        });
    }
    let pts: Vec<_> = poses.iter().map(|p| p.position).collect();
    let c = centroid(&pts);
    let scatter = pts
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let mut ev = scatter.symmetric_eigenvalues();
    ev.as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    if !(ev[0] > 0.0) || ev[1] <= COLLINEAR_EPS * ev[0] {
        return Err(Error::Degenerate("segment positions are collinear"));
    }
    Ok(())
}

impl SegmentGroundTruth {
    pub fn new(start: Vec<GtPose>, end: Vec<GtPose>) -> Result<Self> {
        check_segment(&start)?;
        check_segment(&end)?;
        if start.iter().any(|s| end.iter().any(|e| e.stamp == s.stamp)) {
            return Err(Error::InvalidArgument("start and end segments overlap".into()));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> &[GtPose] {
        &self.start
    }

    pub fn end(&self) -> &[GtPose] {
        &self.end
    }

    /// Multiplies all positions by `100 / reference_length`.
    pub fn normalized(&self, reference_length: f64) -> Result<Self> {
        let f = gt_scale_factor(reference_length)?;
        let scale = |v: &[GtPose]| {
            v.iter()
                .map(|p| GtPose {
                    stamp: p.stamp,
                    position: p.position * f,
                })
                .collect()
        };
        Ok(Self {
            start: scale(&self.start),
            end: scale(&self.end),
        })
    }
}

fn gt_scale_factor(reference_length: f64) -> Result<f64> {
    if !(reference_length > 0.0) || !reference_length.is_finite() {
        return Err(Error::InvalidArgument("reference length must be positive".into()));
    }
    Ok(100.0 / reference_length)
}

/// Rescales positions so that a trajectory of `reference_length` becomes 100.
pub fn normalize_gt_scale(positions: &[Vector3<f64>], reference_length: f64) -> Result<Vec<Vector3<f64>>> {
    let f = gt_scale_factor(reference_length)?;
    Ok(positions.iter().map(|p| p * f).collect())
}

/// Matched `(trajectory index, ground-truth position)` pairs for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub pairs: Vec<(usize, Vector3<f64>)>,
    /// Ground-truth poses with no trajectory pose inside the window.
    pub unmatched: usize,
}

impl Association {
    pub fn source(&self, traj: &Trajectory) -> Vec<Vector3<f64>> {
        self.pairs.iter().map(|(i, _)| traj.positions[*i]).collect()
    }

    pub fn target(&self) -> Vec<Vector3<f64>> {
        self.pairs.iter().map(|(_, p)| *p).collect()
    }
}

/// Nearest-timestamp association within `window` seconds.
pub fn associate(traj: &Trajectory, gt: &[GtPose], window: f64) -> Association {
    let mut pairs = Vec::with_capacity(gt.len());
    let mut unmatched = 0;
    for g in gt {
        match traj.nearest(g.stamp, window) {
            Some(i) => pairs.push((i, g.position)),
            None => unmatched += 1,
        }
    }
    Association { pairs, unmatched }
}

/// `sqrt(1/n sum |T_s p_i - T_e p_i|^2)` over all tracked positions.
pub fn alignment_error(traj: &Trajectory, t_s: &Sim3, t_e: &Sim3) -> f64 {
    let sq: f64 = traj
        .positions
        .iter()
        .map(|p| (t_s.apply(p) - t_e.apply(p)).norm_squared())
        .sum();
    libm::sqrt(sq / traj.len() as f64)
}

/// Single similarity alignment over `S ∪ E`.
pub fn joint_alignment(traj: &Trajectory, gt: &SegmentGroundTruth, window: f64) -> Result<Alignment> {
    let s = associate(traj, &gt.start, window);
    let e = associate(traj, &gt.end, window);
    let mut source = s.source(traj);
    source.extend(e.source(traj));
    let mut target = s.target();
    target.extend(e.target());
    align_sim3(&source, &target)
}

/// RMSE of the best joint alignment over `S ∪ E`.
pub fn joint_rmse(traj: &Trajectory, gt: &SegmentGroundTruth, window: f64) -> Result<f64> {
    joint_alignment(traj, gt, window).map(|a| a.rmse)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftKind {
    Scale(f64),
    Rotation { axis: Vector3<f64>, degrees: f64 },
    Translation(Vector3<f64>),
}

/// Applies a jump to every position after `index`, about the position at
/// `index`. Positions up to and including `index` are unchanged.
pub fn inject_drift(traj: &Trajectory, index: usize, kind: DriftKind) -> Result<Trajectory> {
    if index >= traj.len() {
        return Err(Error::IndexOutOfRange { index, len: traj.len() });
    }
    let pivot = traj.positions[index];
    let jump: Sim3 = match kind {
        DriftKind::Scale(l) => Sim3::from_scale(l)?,
        DriftKind::Rotation { axis, degrees } => Sim3::from_axis_angle(&axis, degrees)?,
        DriftKind::Translation(d) => Sim3::from_translation(d)?,
    };
    if jump == Sim3::identity() {
        return Ok(traj.clone());
    }
    let positions = traj
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i > index {
                pivot + jump.apply(&(p - pivot))
            } else {
                *p
            }
        })
        .collect();
    Trajectory::new(traj.stamps.clone(), positions)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Timestamp association window in seconds.
    pub window: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { window: 0.01 }
    }
}

/// Per-sequence result. Failed runs carry `f64::INFINITY` in every field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub e_s: f64,
    pub e_r: f64,
    pub e_t: f64,
    pub e_align: f64,
    pub e_rmse: f64,
    pub rmse_start: f64,
    pub rmse_end: f64,
    /// Ground-truth poses dropped by association.
    pub unmatched: usize,
}

impl DriftReport {
    pub fn failed(unmatched: usize) -> Self {
        Self {
            e_s: f64::INFINITY,
            e_r: f64::INFINITY,
            e_t: f64::INFINITY,
            e_align: f64::INFINITY,
            e_rmse: f64::INFINITY,
            rmse_start: f64::INFINITY,
            rmse_end: f64::INFINITY,
            unmatched,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.e_align.is_infinite()
    }

    /// `max(e_s, 1/e_s)`.
    pub fn e_s_sym(&self) -> f64 {
        symmetrize_scale(self.e_s)
    }
}

/// Full loop evaluation. Returns [`DriftReport::failed`] when the trajectory
/// covers fewer than three poses of either segment.
pub fn evaluate_sequence(traj: &Trajectory, gt: &SegmentGroundTruth, opts: &EvalOptions) -> Result<DriftReport> {
    let s = associate(traj, &gt.start, opts.window);
    let e = associate(traj, &gt.end, opts.window);
    let unmatched = s.unmatched + e.unmatched;
    if s.pairs.len() < 3 || e.pairs.len() < 3 {
        return Ok(DriftReport::failed(unmatched));
    }
    let a_s = align_sim3(&s.source(traj), &s.target())?;
    let a_e = align_sim3(&e.source(traj), &e.target())?;
    let d = drift(&a_s.transform, &a_e.transform);
    let e_rmse = joint_rmse(traj, gt, opts.window)?;
    Ok(DriftReport {
        e_s: d.e_s,
        e_r: d.e_r,
        e_t: d.e_t,
        e_align: alignment_error(traj, &a_s.transform, &a_e.transform),
        e_rmse,
        rmse_start: a_s.rmse,
        rmse_end: a_e.rmse,
        unmatched,
    })
}

/// `max(e_s, 1/e_s)`; non-finite or non-positive inputs map to infinity.
pub fn symmetrize_scale(e_s: f64) -> f64 {
    if e_s > 0.0 && e_s.is_finite() {
        e_s.max(1.0 / e_s)
    } else {
        f64::INFINITY
    }
}

/// Sorted `(threshold, count of runs <= threshold)` over finite errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeDistribution {
    pub points: Vec<(f64, usize)>,
    /// All runs, including failed (non-finite) ones.
    pub total: usize,
}

pub fn cumulative_distribution(errors: &[f64]) -> CumulativeDistribution {
    let mut finite: Vec<f64> = errors.iter().copied().filter(|x| x.is_finite()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut points: Vec<(f64, usize)> = Vec::new();
    for (i, x) in finite.iter().enumerate() {
        match points.last_mut() {
            Some(last) if last.0 == *x => last.1 = i + 1,
            _ => points.push((*x, i + 1)),
        }
    }
    CumulativeDistribution {
        points,
        total: errors.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pts() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::new(1.0, 1.0, 1.0),
        ]
    }

    #[test]
    fn identity_alignment() {
        let p = pts();
        let a = align_sim3(&p, &p).unwrap();
        assert!((a.transform.scale() - 1.0).abs() < 1e-12);
        assert!(a.transform.angle_degrees() < 1e-9);
        assert!(a.rmse < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert_eq!(
            align_sim3(&line, &line).unwrap_err(),
            Error::Degenerate("source points are collinear")
        );
        let p = pts();
        assert!(matches!(
            align_sim3(&p[..2], &p[..2]),
            Err(Error::TooFewPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn coplanar_reflection_is_guarded() {
        // a planar source mapped through a mirror must still yield det R = +1
        let src: Vec<_> = (0..6)
            .map(|i| Vector3::new((i % 3) as f64, (i / 3) as f64, 0.0))
            .collect();
        let dst: Vec<_> = src.iter().map(|p| Vector3::new(p.x, -p.y, p.z)).collect();
        let a = align_sim3(&src, &dst).unwrap();
        assert!((a.transform.rotation().determinant() - 1.0).abs() < 1e-12);
        assert!(a.rmse < 1e-9);
    }

    #[test]
    fn drift_of_equal_alignments_is_identity() {
        let t = Sim3::new(
            1.3,
            axis_rotation(&Vector3::new(1.0, 2.0, 3.0), 40.0).unwrap(),
            Vector3::new(1.0, -2.0, 0.5),
        )
        .unwrap();
        let d = drift(&t, &t);
        assert!((d.e_s - 1.0).abs() < 1e-12 && d.e_r < 1e-9 && d.e_t < 1e-12);
    }

    #[test]
    fn drift_recovers_composed_perturbation() {
        let t_s = Sim3::new(
            2.0,
            axis_rotation(&Vector3::new(0.3, -1.0, 0.2), 25.0).unwrap(),
            Vector3::new(4.0, 0.0, -1.0),
        )
        .unwrap();
        let t_e = Sim3::from_scale(0.8).unwrap().compose(&t_s);
        assert!((drift(&t_s, &t_e).e_s - 0.8).abs() < 1e-12);
        let t_e = Sim3::from_axis_angle(&Vector3::z(), 10.0).unwrap().compose(&t_s);
        assert!((drift(&t_s, &t_e).e_r - 10.0).abs() < 1e-9);
    }

    #[test]
    fn small_angles_keep_precision() {
        for deg in [1e-7, 1e-4, 0.3, 90.0, 179.9] {
            let r = axis_rotation(&Vector3::new(1.0, 1.0, 0.0), deg).unwrap();
            assert!((rotation_angle(&r).to_degrees() - deg).abs() < 1e-9 * deg.max(1.0));
        }
    }

    #[test]
    fn compose_and_inverse() {
        let a = Sim3::new(
            0.7,
            axis_rotation(&Vector3::new(0.0, 1.0, 1.0), 33.0).unwrap(),
            Vector3::new(1.0, 2.0, 3.0),
        )
        .unwrap();
        let p = Vector3::new(-0.4, 0.9, 2.2);
        assert!((a.inverse().apply(&a.apply(&p)) - p).norm() < 1e-12);
        let id = a.compose(&a.inverse());
        assert!((id.scale() - 1.0).abs() < 1e-12 && id.translation().norm() < 1e-12);
        assert!(Sim3::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
        assert!(Sim3::new(1.0, -Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn trajectory_validation_and_lookup() {
        let p = vec![Vector3::zeros(); 3];
        assert!(Trajectory::new(vec![0.0, 1.0, 1.0], p.clone()).is_err());
        assert!(Trajectory::new(vec![0.0], vec![Vector3::zeros()]).is_err());
        let t = Trajectory::new(vec![0.0, 1.0, 2.0], p).unwrap();
        assert_eq!(t.nearest(1.004, 0.01), Some(1));
        assert_eq!(t.nearest(1.5, 0.01), None);
        assert_eq!(t.nearest(-0.005, 0.01), Some(0));
    }

    #[test]
    fn inject_identity_is_noop_and_scale_scales_lengths() {
        let stamps: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let t = Trajectory::new(stamps, pts().into_iter().chain([Vector3::new(2.0, 0.0, 1.0)]).collect()).unwrap();
        assert_eq!(inject_drift(&t, 2, DriftKind::Scale(1.0)).unwrap(), t);
        let j = inject_drift(&t, 2, DriftKind::Scale(0.8)).unwrap();
        for i in 2..5 {
            let a = (t.positions()[i + 1] - t.positions()[i]).norm();
            let b = (j.positions()[i + 1] - j.positions()[i]).norm();
            assert!((b - 0.8 * a).abs() < 1e-12);
        }
        assert_eq!(&j.positions()[..3], &t.positions()[..3]);
        assert!(matches!(
            inject_drift(&t, 6, DriftKind::Scale(0.8)),
            Err(Error::IndexOutOfRange { index: 6, len: 6 })
        ));
    }

    #[test]
    fn cumulative_counts() {
        let c = cumulative_distribution(&[3.0, 1.0, 2.0]);
        assert_eq!(c.points, vec![(1.0, 1), (2.0, 2), (3.0, 3)]);
        let c = cumulative_distribution(&[2.0, f64::INFINITY, 2.0]);
        assert_eq!(c.points, vec![(2.0, 2)]);
        assert_eq!(c.total, 3);
        assert_eq!(symmetrize_scale(0.5), 2.0);
        assert_eq!(symmetrize_scale(2.0), 2.0);
        assert_eq!(symmetrize_scale(f64::INFINITY), f64::INFINITY);
    }

    #[test]
    fn gt_normalization() {
        let p = pts();
        assert_eq!(normalize_gt_scale(&p, 100.0).unwrap(), p);
        let d = normalize_gt_scale(&p, 50.0).unwrap();
        assert!(d.iter().zip(&p).all(|(a, b)| *a == b * 2.0));
        assert!(normalize_gt_scale(&p, 0.0).is_err());
    }
}
