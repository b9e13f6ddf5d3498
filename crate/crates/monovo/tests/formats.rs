use std::fs;
use std::path::PathBuf;

use monovo::formats::{
    read_camera, read_exposures, read_gray8, read_ground_truth, read_manifest, read_manifest_entries, read_mask,
    read_pfm, read_reports, read_response, read_trajectory, read_vignette, write_camera, write_exposures, write_gray8,
    write_ground_truth, write_manifest, write_mask, write_pfm, write_reports, write_response, write_trajectory,
    write_vignette, ExposureRecord, ManifestEntry, Units,
};
use monovo::Error;
use monovo_core::camera::FovIntrinsics;
use monovo_core::evaluation::{DriftReport, GtPose, SegmentGroundTruth, Trajectory};
use monovo_core::homography::Homography;
use monovo_core::image::Image;
use monovo_core::nalgebra::{Matrix3, Vector3};
use monovo_core::photometry::{ResponseLut, VignetteMap};
use proptest::prelude::*;
use tempfile::TempDir;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectory_round_trips_bit_exactly(
        steps in prop::collection::vec(1e-6f64..10.0, 2..60),
        coords in prop::collection::vec((finite(), finite(), finite()), 60),
    ) {
        let dir = TempDir::new().unwrap();
        let mut t = 1e9;
        let stamps: Vec<f64> = steps.iter().map(|d| { t += d; t }).collect();
        let pos: Vec<_> = coords[..stamps.len()].iter().map(|(x, y, z)| Vector3::new(*x, *y, *z)).collect();
        let traj = Trajectory::new(stamps, pos).unwrap();
        let p = dir.path().join("t.txt");
        write_trajectory(&p, &traj).unwrap();
        prop_assert_eq!(read_trajectory(&p).unwrap(), traj);
    }

    #[test]
    fn response_round_trips_bit_exactly(gamma in 0.3f64..4.0) {
        let dir = TempDir::new().unwrap();
        let r = ResponseLut::gamma(gamma).unwrap();
        let p = dir.path().join("pcalib.txt");
        write_response(&p, &r).unwrap();
        prop_assert_eq!(read_response(&p).unwrap(), r);
    }

    #[test]
    fn manifest_round_trips_bit_exactly(
        m in prop::collection::vec(-10.0f64..10.0, 9), t in 0.01f64..100.0,
    ) {
        let h = Matrix3::from_row_slice(&m);
        prop_assume!(h.determinant().abs() > 1e-3);
        let dir = TempDir::new().unwrap();
        let entry = ManifestEntry {
            image: PathBuf::from("images/00000.png"),
            exposure_ms: t,
            homography: Homography::new(h).unwrap(),
        };
        let p = dir.path().join("manifest.txt");
        write_manifest(&p, std::slice::from_ref(&entry)).unwrap();
        prop_assert_eq!(read_manifest_entries(&p).unwrap(), vec![entry]);
    }
}

#[test]
fn camera_round_trips_and_scales_normalized_units() {
    let dir = TempDir::new().unwrap();
    let cam = FovIntrinsics::new(300.25, 310.5, 319.5, 239.5, 0.9, 640, 480).unwrap();
    let p = dir.path().join("camera.txt");
    write_camera(&p, &cam).unwrap();
    assert_eq!(read_camera(&p, None).unwrap(), cam);
    assert_eq!(read_camera(&p, Some(Units::Absolute)).unwrap(), cam);
    assert!(matches!(
        read_camera(&p, Some(Units::Normalized)),
        Err(Error::Invalid { .. })
    ));

    fs::write(&p, "0.5 0.625 0.5 0.5 0.9\n640 480\n").unwrap();
    let n = read_camera(&p, Some(Units::Normalized)).unwrap();
    assert_eq!((n.fx, n.fy, n.cx, n.cy), (320.0, 300.0, 320.0, 240.0));
    assert_eq!(read_camera(&p, None).unwrap().fx, 0.5);
}

#[test]
fn ground_truth_round_trips() {
    let dir = TempDir::new().unwrap();
    let seg = |t0: f64| {
        (0..4)
            .map(|i| GtPose {
                stamp: t0 + i as f64 * 0.1,
                position: Vector3::new(i as f64, (i * i) as f64, 0.5),
            })
            .collect::<Vec<_>>()
    };
    let gt = SegmentGroundTruth::new(seg(0.0), seg(100.0)).unwrap();
    let p = dir.path().join("gt.txt");
    write_ground_truth(&p, &gt).unwrap();
    assert_eq!(read_ground_truth(&p).unwrap(), gt);
}

#[test]
fn exposures_round_trip_and_reject_non_positive_values() {
    let dir = TempDir::new().unwrap();
    let recs: Vec<_> = (0..5)
        .map(|i| ExposureRecord {
            frame_id: i,
            stamp: 1.5 + i as f64 / 3.0,
            exposure_ms: 0.05 * 1.05f64.powi(i as i32),
        })
        .collect();
    let p = dir.path().join("times.txt");
    write_exposures(&p, &recs).unwrap();
    assert_eq!(read_exposures(&p).unwrap(), recs);

    fs::write(&p, "0 0.0 1.0\n1 0.1 0\n").unwrap();
    match read_exposures(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn parse_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("t.txt");
    fs::write(&p, "# comment\n0 0 0 0\n1 0 0 oops\n").unwrap();
    let err = read_trajectory(&p).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    assert!(err.to_string().contains("t.txt:3"));

    fs::write(&p, "0 0 0 0\n0 1 1 1\n").unwrap();
    assert!(read_trajectory(&p).is_err());
}

#[test]
fn rasters_round_trip() {
    let dir = TempDir::new().unwrap();
    let img = Image::from_fn(7, 5, |x, y| (x * 31 + y * 7) as u8);
    let p = dir.path().join("a.png");
    write_gray8(&p, &img).unwrap();
    assert_eq!(read_gray8(&p).unwrap(), img);

    let v = VignetteMap::cos4(9, 6, 5.0).unwrap();
    let p = dir.path().join("v.png");
    write_vignette(&p, &v).unwrap();
    let back = read_vignette(&p).unwrap();
    for (a, b) in back.factors().as_slice().iter().zip(v.factors().as_slice()) {
        assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
    }

    let mask = Image::from_fn(4, 3, |x, y| (x + y) % 2 == 0);
    let p = dir.path().join("m.png");
    write_mask(&p, &mask).unwrap();
    assert_eq!(read_mask(&p).unwrap(), mask);
}

#[test]
fn pfm_keeps_rows_and_invalid_pixels() {
    let dir = TempDir::new().unwrap();
    let img = Image::from_fn(5, 3, |x, y| {
        if x == y {
            None
        } else {
            Some(x as f64 + 10.0 * y as f64 + 0.25)
        }
    });
    let p = dir.path().join("b.pfm");
    write_pfm(&p, &img).unwrap();
    let back = read_pfm(&p).unwrap();
    assert_eq!(back.dims(), (5, 3));
    for (a, b) in back.as_slice().iter().zip(img.as_slice()) {
        assert_eq!(*a, b.map(|v| v as f32));
    }
    let bytes = fs::read(&p).unwrap();
    assert!(bytes.starts_with(b"Pf\n5 3\n-1"));
}

#[test]
fn reports_round_trip_with_infinities() {
    let dir = TempDir::new().unwrap();
    let ok = DriftReport {
        e_s: 1.12,
        e_r: 3.9,
        e_t: 0.5,
        e_align: 2.27,
        e_rmse: 1.0,
        rmse_start: 0.01,
        rmse_end: 0.02,
        unmatched: 0,
    };
    let rows = vec![("a".to_string(), ok), ("b".to_string(), DriftReport::failed(7))];
    let p = dir.path().join("r.csv");
    write_reports(&p, &rows).unwrap();
    let back = read_reports(&p).unwrap();
    assert_eq!(back[0], rows[0]);
    assert!(back[1].1.is_failed());
    assert_eq!(back[1].1.unmatched, 7);
}

#[test]
fn manifest_paths_are_relative_to_the_manifest() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("imgs")).unwrap();
    write_gray8(&dir.path().join("imgs/x.png"), &Image::filled(3, 3, 100u8)).unwrap();
    let p = dir.path().join("manifest.txt");
    fs::write(&p, "imgs/x.png 2.5 1 0 0 0 1 0 0 0 1\n").unwrap();
    let obs = read_manifest(&p).unwrap();
    assert_eq!(obs.len(), 1);
    assert_eq!(obs[0].exposure_ms, 2.5);
    assert_eq!(*obs[0].image.get(1, 1), 100);

    fs::write(&p, "imgs/missing.png 2.5 1 0 0 0 1 0 0 0 1\n").unwrap();
    assert!(read_manifest(&p).unwrap_err().to_string().contains("missing.png"));
}
