use std::fs;

use monovo::dataset::{load_sequence, write_sequence, LoadOptions, TIMES_FILE};
use monovo::formats::ExposureRecord;
use monovo_core::camera::FovIntrinsics;
use monovo_core::image::Image;
use monovo_core::photometry::{ResponseLut, VignetteMap};
use tempfile::TempDir;

fn frames(n: usize) -> Vec<(Image<u8>, ExposureRecord)> {
    (0..n)
        .map(|i| {
            let img = Image::from_fn(6, 4, |x, y| (x * 10 + y + i * 20) as u8);
            let rec = ExposureRecord {
                frame_id: i as u64,
                stamp: i as f64 * 0.05,
                exposure_ms: 1.0 + i as f64,
            };
            (img, rec)
        })
        .collect()
}

#[test]
fn written_sequence_loads_back() {
    let dir = TempDir::new().unwrap();
    let fr = frames(5);
    let cam = FovIntrinsics::new(5.0, 5.0, 2.5, 1.5, 0.9, 6, 4).unwrap();
    let resp = ResponseLut::gamma(2.2).unwrap();
    let vig = VignetteMap::uniform(6, 4);
    write_sequence(dir.path(), &fr, Some(&cam), Some(&resp), Some(&vig)).unwrap();

    let ds = load_sequence(dir.path(), &LoadOptions::default()).unwrap();
    assert_eq!(ds.len(), 5);
    assert_eq!(ds.dims(), (6, 4));
    assert_eq!(ds.camera, Some(cam));
    assert_eq!(ds.response, Some(resp));
    assert_eq!(ds.vignette, Some(vig));
    for (i, (img, rec)) in fr.iter().enumerate() {
        assert_eq!(&ds.frame(i).unwrap(), img);
        assert_eq!(&ds.exposures()[i], rec);
    }
    let order: Vec<usize> = ds
        .prefetch(2)
        .map(|(i, f)| {
            assert_eq!(f.unwrap(), fr[i].0);
            i
        })
        .collect();
    assert_eq!(order, vec![0, 1, 2, 3, 4]);

    let sweep = ds.exposure_sweep().unwrap();
    assert_eq!(sweep.len(), 5);
}

#[test]
fn exposure_shift_moves_times_between_frames() {
    let dir = TempDir::new().unwrap();
    write_sequence(dir.path(), &frames(4), None, None, None).unwrap();
    let opts = LoadOptions {
        exposure_shift: 1,
        ..LoadOptions::default()
    };
    let ds = load_sequence(dir.path(), &opts).unwrap();
    let plain = load_sequence(dir.path(), &LoadOptions::default()).unwrap();
    let a: Vec<f64> = ds.exposures().iter().map(|r| r.exposure_ms).collect();
    let b: Vec<f64> = plain.exposures().iter().map(|r| r.exposure_ms).collect();
    assert_ne!(a, b);
    // frame i takes the exposure logged for frame i + 1
    assert_eq!(a[0..3], b[1..4]);
    assert_eq!(a[3], b[3]);
}

#[test]
fn frame_count_must_match_times() {
    let dir = TempDir::new().unwrap();
    write_sequence(dir.path(), &frames(3), None, None, None).unwrap();
    let times = dir.path().join(TIMES_FILE);
    let text = fs::read_to_string(&times).unwrap();
    let two: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).take(2).collect();
    fs::write(&times, two.join("\n")).unwrap();
    let err = load_sequence(dir.path(), &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains('3') && err.to_string().contains('2'), "{err}");
}

#[test]
fn non_positive_exposure_is_rejected() {
    let dir = TempDir::new().unwrap();
    write_sequence(dir.path(), &frames(2), None, None, None).unwrap();
    fs::write(dir.path().join(TIMES_FILE), "0 0.0 1.0\n1 0.05 -2\n").unwrap();
    let err = load_sequence(dir.path(), &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("times.txt:2"), "{err}");
}

#[test]
fn mismatched_calibration_size_is_rejected() {
    let dir = TempDir::new().unwrap();
    let vig = VignetteMap::uniform(5, 4);
    write_sequence(dir.path(), &frames(2), None, None, Some(&vig)).unwrap();
    assert!(load_sequence(dir.path(), &LoadOptions::default()).is_err());
}
