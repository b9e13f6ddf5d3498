//! Plane-to-image homographies from point correspondences (normalized DLT).

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Maps plane coordinates to pixel coordinates. Stored with unit Frobenius
/// norm and the sign that puts points in front of the camera at positive `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let norm = m.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Degenerate("homography must be finite and non-zero"));
        }
        // already-normalized input is kept bit-exact so serialization round-trips
        let m = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            m
        } else {
            m / norm
        };
        if m.determinant().abs() < 1e-14 {
            return Err(Error::Degenerate("homography is singular"));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Matrix scaled so that its bottom-right entry is 1 (when non-zero).
    pub fn canonical(&self) -> Matrix3<f64> {
        let s = self.0[(2, 2)];
        if s.abs() > 1e-12 {
            self.0 / s
        } else {
            self.0
        }
    }

    /// Maps a plane point; `None` when it lands on or behind the camera plane.
    pub fn apply(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        let q = self.0 * Vector3::new(p.x, p.y, 1.0);
        if q.z <= 1e-12 {
            return None;
        }
        Some(Vector2::new(q.x / q.z, q.y / q.z))
    }

    pub fn inverse(&self) -> Self {
        let inv = self.0.try_inverse().expect("validated at construction");
        Self::new(inv).expect("inverse of invertible matrix is invertible")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyFit {
    pub homography: Homography,
    /// Root-mean-square reprojection error in pixels.
    pub rms_residual: f64,
}

fn normalizing_transform(pts: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 1e-15 {
        core::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = t * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

fn has_collinear_triple(pts: &[Vector2<f64>]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let a = pts[j] - pts[i];
                let b = pts[k] - pts[i];
                if (a.x * b.y - a.y * b.x).abs() < 1e-9 {
                    return true;
                }
            }
        }
    }
    false
}

/// Least-squares homography from `plane_points` to `pixels` (at least four
/// correspondences, no three of a minimal set collinear).
pub fn pose_from_correspondences(plane_points: &[Vector2<f64>], pixels: &[Vector2<f64>]) -> Result<HomographyFit> {
    let n = plane_points.len();
    if n != pixels.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{n} plane points but {} pixels",
            pixels.len()
        )));
    }
    if n < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: n });
    }
    let t_src = normalizing_transform(plane_points);
    let t_dst = normalizing_transform(pixels);
    let src: Vec<_> = plane_points.iter().map(|p| transform(&t_src, p)).collect();
    let dst: Vec<_> = pixels.iter().map(|p| transform(&t_dst, p)).collect();
    if n == 4 && (has_collinear_triple(&src) || has_collinear_triple(&dst)) {
        return Err(Error::Degenerate("three of four correspondences are collinear"));
    }

    // pad to at least 9 rows so the SVD exposes the full right null space
    let mut a = DMatrix::<f64>::zeros((2 * n).max(9), 9);
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        let r = 2 * i;
        a[(r, 3)] = -s.x;
        a[(r, 4)] = -s.y;
        a[(r, 5)] = -1.0;
        a[(r, 6)] = d.y * s.x;
        a[(r, 7)] = d.y * s.y;
        a[(r, 8)] = d.y;
        a[(r + 1, 0)] = s.x;
        a[(r + 1, 1)] = s.y;
        a[(r + 1, 2)] = 1.0;
        a[(r + 1, 6)] = -d.x * s.x;
        a[(r + 1, 7)] = -d.x * s.y;
        a[(r + 1, 8)] = -d.x;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::Degenerate("SVD failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let (smallest, second) = (order[0], order[1]);
    let largest = svd.singular_values[order[order.len() - 1]];
    if svd.singular_values[second] < 1e-10 * largest {
        return Err(Error::Degenerate(
            "correspondences do not determine a unique homography",
        ));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(Error::Degenerate("pixel normalization is singular"))?;
    let mut m = t_dst_inv * hn * t_src;

    let w_sum: f64 = plane_points.iter().map(|p| (m * Vector3::new(p.x, p.y, 1.0)).z).sum();
    if w_sum < 0.0 {
        m = -m;
    }
    let homography = Homography::new(m)?;

    let mut sq = 0.0;
    for (p, q) in plane_points.iter().zip(pixels) {
        let r = homography
            .apply(p)
            .ok_or(Error::Degenerate("correspondence maps behind the camera"))?;
        sq += (r - q).norm_squared();
    }
    Ok(HomographyFit {
        homography,
        rms_residual: libm::sqrt(sq / n as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corners() -> Vec<Vector2<f64>> {
        alloc::vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn identity_correspondences_give_identity() {
        let fit = pose_from_correspondences(&corners(), &corners()).unwrap();
        assert!((fit.homography.canonical() - Matrix3::identity()).norm() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn recovers_random_homographies_from_four_corners() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = Matrix3::new(
                rng.random_range(200.0..400.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(100.0..300.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(200.0..400.0),
                rng.random_range(100.0..300.0),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                1.0,
            );
            let truth = Homography::new(m).unwrap();
            let pixels: Vec<_> = corners().iter().map(|p| truth.apply(p).unwrap()).collect();
            let fit = pose_from_correspondences(&corners(), &pixels).unwrap();
            let diff = fit.homography.canonical() - truth.canonical();
            assert!(diff.norm() < 1e-9 * truth.canonical().norm(), "{diff}");
        }
    }

    #[test]
    fn collinear_minimal_set_is_degenerate() {
        let plane = alloc::vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(0.5, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        assert!(matches!(
            pose_from_correspondences(&plane, &plane),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn all_collinear_overdetermined_set_is_degenerate() {
        let plane: Vec<_> = (0..8).map(|i| Vector2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(
            pose_from_correspondences(&plane, &plane),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let p = &corners()[..3];
        assert_eq!(
            pose_from_correspondences(p, p).unwrap_err(),
            Error::TooFewPoints { needed: 4, got: 3 }
        );
    }

    #[test]
    fn inverse_round_trips() {
        let h = Homography::new(Matrix3::new(300.0, 10.0, 50.0, -5.0, 280.0, 40.0, 0.1, -0.05, 1.0)).unwrap();
        let p = Vector2::new(0.3, 0.7);
        let q = h.apply(&p).unwrap();
        let back = h.inverse().apply(&q).unwrap();
        assert!((back - p).norm() < 1e-12);
    }
}
