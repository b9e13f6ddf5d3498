//! On-disk formats. Text formats are whitespace-separated with `#` comments;
//! reals are written in shortest round-trip form so that every writer/reader
//! pair is lossless.

mod raster;
mod tables;
mod text;

pub use raster::*;
pub use tables::*;
pub use text::*;
