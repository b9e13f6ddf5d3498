use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use monovo_core::camera::FovIntrinsics;
use monovo_core::evaluation::{GtPose, SegmentGroundTruth, Trajectory};
use monovo_core::homography::Homography;
use monovo_core::nalgebra::{Matrix3, Vector3};
use monovo_core::photometry::ResponseLut;
use monovo_core::vignette::PlaneObservation;

use crate::error::{Error, Result};
use crate::formats::read_gray8;

/// Non-empty lines with comments stripped, as `(1-based line, tokens)`.
pub(crate) fn data_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let body = line.split('#').next().unwrap_or("");
            let tokens: Vec<String> = body.split_whitespace().map(str::to_owned).collect();
            (!tokens.is_empty()).then_some((i + 1, tokens))
        })
        .collect())
}

pub(crate) fn parse<T: FromStr>(path: &Path, line: usize, token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} '{token}'")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::io(path))
}

/// Unit convention of the intrinsics in a calibration file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// Pixels.
    Absolute,
    /// Fractions of image width (`fx`, `cx`) and height (`fy`, `cy`).
    Normalized,
}

impl FromStr for Units {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "normalized" => Ok(Self::Normalized),
            _ => Err(format!("unknown units '{s}' (expected absolute or normalized)")),
        }
    }
}

/// Reads `fx fy cx cy omega` / `width height` / optional `absolute|normalized`.
///
/// `units` must agree with a declaration in the file; when neither is given
/// the values are taken as pixels.
pub fn read_camera(path: &Path, units: Option<Units>) -> Result<FovIntrinsics> {
    let lines = data_lines(path)?;
    if lines.len() < 2 || lines.len() > 3 {
        return Err(Error::invalid(
            path,
            "expected 2 or 3 lines: intrinsics, image size, optional units",
        ));
    }
    let (l0, k) = &lines[0];
    if k.len() != 5 {
        return Err(Error::parse(path, *l0, "expected 'fx fy cx cy omega'"));
    }
    let v: Vec<f64> = k.iter().map(|t| parse(path, *l0, t, "number")).collect::<Result<_>>()?;
    let (l1, s) = &lines[1];
    if s.len() != 2 {
        return Err(Error::parse(path, *l1, "expected 'width height'"));
    }
    let width: usize = parse(path, *l1, &s[0], "width")?;
    let height: usize = parse(path, *l1, &s[1], "height")?;

    let declared = match lines.get(2) {
        Some((l2, t)) if t.len() == 1 => Some(t[0].parse::<Units>().map_err(|e| Error::parse(path, *l2, e))?),
        Some((l2, _)) => return Err(Error::parse(path, *l2, "expected a single units keyword")),
        None => None,
    };
    let units = match (units, declared) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::invalid(
                path,
                format!("file declares {b:?} units but {a:?} was requested"),
            ))
        }
        (a, b) => a.or(b).unwrap_or(Units::Absolute),
    };
    let (sx, sy) = match units {
        Units::Absolute => (1.0, 1.0),
        Units::Normalized => (width as f64, height as f64),
    };
    FovIntrinsics::new(v[0] * sx, v[1] * sy, v[2] * sx, v[3] * sy, v[4], width, height).map_err(Error::core(path))
}

/// Writes absolute (pixel) intrinsics.
pub fn write_camera(path: &Path, cam: &FovIntrinsics) -> Result<()> {
    write_text(
        path,
        &format!(
            "{} {} {} {} {}\n{} {}\nabsolute\n",
            cam.fx, cam.fy, cam.cx, cam.cy, cam.omega, cam.width, cam.height
        ),
    )
}

/// Reads the 256 values of `U`, in any line layout.
pub fn read_response(path: &Path) -> Result<ResponseLut> {
    let mut values = Vec::with_capacity(256);
    for (line, tokens) in data_lines(path)? {
        for t in tokens {
            values.push(parse::<f64>(path, line, &t, "number")?);
        }
    }
    if values.len() != 256 {
        return Err(Error::invalid(
            path,
            format!("expected 256 values, found {}", values.len()),
        ));
    }
    ResponseLut::from_slice(&values).map_err(Error::core(path))
}

pub fn write_response(path: &Path, response: &ResponseLut) -> Result<()> {
    let line: Vec<String> = response.values().iter().map(f64::to_string).collect();
    write_text(path, &(line.join(" ") + "\n"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureRecord {
    pub frame_id: u64,
    /// Seconds.
    pub stamp: f64,
    pub exposure_ms: f64,
}

/// Reads `frame_id timestamp exposure_ms` lines.
pub fn read_exposures(path: &Path) -> Result<Vec<ExposureRecord>> {
    data_lines(path)?
        .into_iter()
        .map(|(line, t)| {
            if t.len() != 3 {
                return Err(Error::parse(path, line, "expected 'frame_id timestamp exposure_ms'"));
            }
            let rec = ExposureRecord {
                frame_id: parse(path, line, &t[0], "frame id")?,
                stamp: parse(path, line, &t[1], "timestamp")?,
                exposure_ms: parse(path, line, &t[2], "exposure")?,
            };
            if !(rec.exposure_ms.is_finite() && rec.exposure_ms > 0.0) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("exposure must be positive, got {}", rec.exposure_ms),
                ));
            }
            Ok(rec)
        })
        .collect()
}

pub fn write_exposures(path: &Path, records: &[ExposureRecord]) -> Result<()> {
    let mut s = String::from("# frame_id timestamp exposure_ms\n");
    for r in records {
        let _ = writeln!(s, "{} {} {}", r.frame_id, r.stamp, r.exposure_ms);
    }
    write_text(path, &s)
}

fn position(path: &Path, line: usize, t: &[String]) -> Result<(f64, Vector3<f64>)> {
    let v: Vec<f64> = t[..4]
        .iter()
        .map(|x| parse(path, line, x, "number"))
        .collect::<Result<_>>()?;
    Ok((v[0], Vector3::new(v[1], v[2], v[3])))
}

/// Reads `timestamp x y z [qx qy qz qw]` lines; orientations are ignored.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut stamps = Vec::new();
    let mut positions = Vec::new();
    for (line, t) in data_lines(path)? {
        if t.len() != 4 && t.len() != 8 {
            return Err(Error::parse(path, line, "expected 'timestamp x y z [qx qy qz qw]'"));
        }
        let (s, p) = position(path, line, &t)?;
        if stamps.last().is_some_and(|&last| s <= last) {
            return Err(Error::parse(path, line, "timestamps must be strictly increasing"));
        }
        stamps.push(s);
        positions.push(p);
    }
    Trajectory::new(stamps, positions).map_err(Error::core(path))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut s = String::from("# timestamp x y z\n");
    for (t, p) in traj.stamps().iter().zip(traj.positions()) {
        let _ = writeln!(s, "{t} {} {} {}", p.x, p.y, p.z);
    }
    write_text(path, &s)
}

/// Reads trajectory lines with a trailing segment tag `S` or `E`.
pub fn read_ground_truth(path: &Path) -> Result<SegmentGroundTruth> {
    let mut start = Vec::new();
    let mut end = Vec::new();
    for (line, t) in data_lines(path)? {
        if t.len() != 5 && t.len() != 9 {
            return Err(Error::parse(path, line, "expected 'timestamp x y z [qx qy qz qw] S|E'"));
        }
        let (stamp, position) = position(path, line, &t)?;
        let pose = GtPose { stamp, position };
        match t[t.len() - 1].as_str() {
            "S" => start.push(pose),
            "E" => end.push(pose),
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("segment tag must be S or E, got '{other}'"),
                ))
            }
        }
    }
    SegmentGroundTruth::new(start, end).map_err(Error::core(path))
}

pub fn write_ground_truth(path: &Path, gt: &SegmentGroundTruth) -> Result<()> {
    let mut s = String::from("# timestamp x y z segment\n");
    for (tag, poses) in [("S", gt.start()), ("E", gt.end())] {
        for p in poses {
            let q = p.position;
            let _ = writeln!(s, "{} {} {} {} {tag}", p.stamp, q.x, q.y, q.z);
        }
    }
    write_text(path, &s)
}

/// One manifest line: image path (relative to the manifest), exposure and the
/// row-major plane-to-image homography.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub exposure_ms: f64,
    pub homography: Homography,
}

pub fn read_manifest_entries(path: &Path) -> Result<Vec<ManifestEntry>> {
    data_lines(path)?
        .into_iter()
        .map(|(line, t)| {
            if t.len() != 11 {
                return Err(Error::parse(path, line, "expected 'image exposure_ms h11 h12 ... h33'"));
            }
            let exposure_ms: f64 = parse(path, line, &t[1], "exposure")?;
            if !(exposure_ms.is_finite() && exposure_ms > 0.0) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("exposure must be positive, got {exposure_ms}"),
                ));
            }
            let h: Vec<f64> = t[2..]
                .iter()
                .map(|x| parse(path, line, x, "number"))
                .collect::<Result<_>>()?;
            let homography =
                Homography::new(Matrix3::from_row_slice(&h)).map_err(|e| Error::parse(path, line, e.to_string()))?;
            Ok(ManifestEntry {
                image: PathBuf::from(&t[0]),
                exposure_ms,
                homography,
            })
        })
        .collect()
}

/// Loads every image named in a manifest.
pub fn read_manifest(path: &Path) -> Result<Vec<PlaneObservation>> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest_entries(path)?
        .into_iter()
        .map(|e| {
            let image = read_gray8(&base.join(&e.image))?;
            PlaneObservation::new(image, e.exposure_ms, e.homography).map_err(Error::core(path))
        })
        .collect()
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut s = String::from("# image exposure_ms h11 h12 h13 h21 h22 h23 h31 h32 h33\n");
    for e in entries {
        let m = e.homography.matrix();
        let _ = write!(s, "{} {}", e.image.display(), e.exposure_ms);
        for r in 0..3 {
            for c in 0..3 {
                let _ = write!(s, " {}", m[(r, c)]);
            }
        }
        s.push('\n');
    }
    write_text(path, &s)
}
