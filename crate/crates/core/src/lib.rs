#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
//! Photometric calibration (camera response and dense vignette), the FOV
//! fisheye camera model, and loop-closure drift metrics for monocular visual
//! odometry.
//!
//! The crate is `no_std` and only needs an allocator. File formats and the
//! command-line front end live in the `monovo` crate.

extern crate alloc;

pub mod camera;
pub mod error;
pub mod evaluation;
pub mod homography;
pub mod image;
pub mod observability;
pub mod photometry;
pub mod response;
mod sum;
pub mod synthetic;
pub mod vignette;

pub use error::{Error, Result};
pub use image::{GrayImage, Image};
pub use nalgebra;
