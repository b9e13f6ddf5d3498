//! Sequence directories:
//!
//! ```text
//! <root>/images/*.png   8-bit grayscale frames, in file-name order
//! <root>/times.txt      frame_id timestamp exposure_ms
//! <root>/camera.txt     optional FOV intrinsics
//! <root>/pcalib.txt     optional inverse response U
//! <root>/vignette.png   optional 16-bit vignette
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use monovo_core::camera::FovIntrinsics;
use monovo_core::image::GrayImage;
use monovo_core::photometry::{ExposureLog, ResponseLut, VignetteMap};
use monovo_core::response::ExposureSweep;

use crate::error::{Error, Result};
use crate::formats::{
    read_camera, read_exposures, read_gray8, read_response, read_vignette, write_camera, write_exposures, write_gray8,
    write_response, write_vignette, ExposureRecord, Units,
};

pub const IMAGES_DIR: &str = "images";
pub const TIMES_FILE: &str = "times.txt";
pub const CAMERA_FILE: &str = "camera.txt";
pub const RESPONSE_FILE: &str = "pcalib.txt";
pub const VIGNETTE_FILE: &str = "vignette.png";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Units of `camera.txt` when the file does not declare them.
    pub units: Option<Units>,
    /// Moves each exposure this many frames later (negative: earlier); the
    /// ends repeat the nearest logged value.
    pub exposure_shift: isize,
}

/// Validated sequence; frames are decoded on demand.
#[derive(Debug, Clone)]
pub struct SequenceDataset {
    root: PathBuf,
    frames: Vec<PathBuf>,
    exposures: Vec<ExposureRecord>,
    dims: (usize, usize),
    pub camera: Option<FovIntrinsics>,
    pub response: Option<ResponseLut>,
    pub vignette: Option<VignetteMap>,
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(dir)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(Error::image(path))?;
    Ok((w as usize, h as usize))
}

/// Opens and validates a sequence directory without decoding any frame.
pub fn load_sequence(root: &Path, opts: &LoadOptions) -> Result<SequenceDataset> {
    if !root.is_dir() {
        return Err(Error::invalid(root, "not a directory"));
    }
    let images = root.join(IMAGES_DIR);
    let frames = png_files(&images)?;
    if frames.is_empty() {
        return Err(Error::invalid(&images, "no PNG frames found"));
    }
    let times = root.join(TIMES_FILE);
    let mut exposures = read_exposures(&times)?;
    if exposures.len() != frames.len() {
        return Err(Error::invalid(
            &times,
            format!("{} exposure records for {} frames", exposures.len(), frames.len()),
        ));
    }
    if opts.exposure_shift != 0 {
        let log = ExposureLog::new(exposures.iter().map(|r| r.exposure_ms).collect()).map_err(Error::core(&times))?;
        for (r, t) in exposures.iter_mut().zip(log.shifted(opts.exposure_shift).times_ms()) {
            r.exposure_ms = *t;
        }
    }

    let dims = dimensions(&frames[0])?;
    for f in &frames[1..] {
        if dimensions(f)? != dims {
            return Err(Error::invalid(f, format!("size differs from {}", frames[0].display())));
        }
    }

    let optional = |name: &str| Some(root.join(name)).filter(|p| p.exists());
    let camera = optional(CAMERA_FILE).map(|p| read_camera(&p, opts.units)).transpose()?;
    if let Some(c) = &camera {
        if (c.width, c.height) != dims {
            return Err(Error::invalid(
                &root.join(CAMERA_FILE),
                format!(
                    "calibration is {}x{} but frames are {}x{}",
                    c.width, c.height, dims.0, dims.1
                ),
            ));
        }
    }
    let response = optional(RESPONSE_FILE).map(|p| read_response(&p)).transpose()?;
    let vignette = optional(VIGNETTE_FILE).map(|p| read_vignette(&p)).transpose()?;
    if let Some(v) = &vignette {
        if v.dims() != dims {
            return Err(Error::invalid(
                &root.join(VIGNETTE_FILE),
                "vignette size differs from frames",
            ));
        }
    }

    Ok(SequenceDataset {
        root: root.to_path_buf(),
        frames,
        exposures,
        dims,
        camera,
        response,
        vignette,
    })
}

impl SequenceDataset {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn frame_paths(&self) -> &[PathBuf] {
        &self.frames
    }

    pub fn exposures(&self) -> &[ExposureRecord] {
        &self.exposures
    }

    pub fn frame(&self, i: usize) -> Result<GrayImage> {
        let path = self.frames.get(i).ok_or_else(|| {
            Error::invalid(
                &self.root,
                format!("frame {i} out of range ({} frames)", self.frames.len()),
            )
        })?;
        read_gray8(path)
    }

    /// Decodes frames on a background thread, at most `depth` ahead of the
    /// consumer. Yields in frame order.
    pub fn prefetch(&self, depth: usize) -> Prefetch {
        let (tx, rx) = mpsc::sync_channel(depth.max(1));
        let frames = self.frames.clone();
        let handle = thread::spawn(move || {
            for (i, p) in frames.iter().enumerate() {
                if tx.send((i, read_gray8(p))).is_err() {
                    break;
                }
            }
        });
        Prefetch {
            rx,
            handle: Some(handle),
        }
    }

    /// Loads every frame into memory as a calibration sweep.
    pub fn exposure_sweep(&self) -> Result<ExposureSweep> {
        let mut frames = Vec::with_capacity(self.len());
        for (item, rec) in self.prefetch(4).zip(&self.exposures) {
            let (_, img) = item;
            frames.push((img?, rec.exposure_ms));
        }
        ExposureSweep::new(frames).map_err(Error::core(&self.root))
    }
}

/// Iterator over `(index, decoded frame)` fed by a decoder thread.
pub struct Prefetch {
    rx: mpsc::Receiver<(usize, Result<GrayImage>)>,
    handle: Option<thread::JoinHandle<()>>,
}

impl Iterator for Prefetch {
    type Item = (usize, Result<GrayImage>);

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.rx.recv().ok();
        if item.is_none() {
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
        item
    }
}

/// Writes a sequence directory in the layout read by [`load_sequence`].
pub fn write_sequence(
    root: &Path,
    frames: &[(GrayImage, ExposureRecord)],
    camera: Option<&FovIntrinsics>,
    response: Option<&ResponseLut>,
    vignette: Option<&VignetteMap>,
) -> Result<()> {
    let images = root.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(Error::io(&images))?;
    for (img, rec) in frames {
        write_gray8(&images.join(format!("{:05}.png", rec.frame_id)), img)?;
    }
    let records: Vec<ExposureRecord> = frames.iter().map(|(_, r)| *r).collect();
    write_exposures(&root.join(TIMES_FILE), &records)?;
    if let Some(c) = camera {
        write_camera(&root.join(CAMERA_FILE), c)?;
    }
    if let Some(r) = response {
        write_response(&root.join(RESPONSE_FILE), r)?;
    }
    if let Some(v) = vignette {
        write_vignette(&root.join(VIGNETTE_FILE), v)?;
    }
    Ok(())
}
