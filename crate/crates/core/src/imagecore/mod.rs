//! Pixel containers, Netpbm/PNG I/O, codec-aware patch partition and
//! full-reference metrics.
//!
//! All samples live in `[0, 1]`. Color inputs are reduced to BT.601 luma on
//! load; everything downstream is single-channel.

mod io;
mod metrics;
mod partition;

pub(crate) use io::luma_plane;
pub use io::{
    decode_pgm_bytes, detect_format, load_plane, load_plane_auto, save_plane, ImageFormat,
};
pub use metrics::{delta_psnr, mse, psnr, ssim, DeltaPsnr};
pub use partition::{partition, Patch, PatchGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-channel image with row-major samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::precondition(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                samples.len()
            )));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(Error::precondition(format!(
                "sample {i} = {s} outside [0, 1]"
            )));
        }
        Ok(Plane {
            width,
            height,
            samples,
        })
    }

    /// Builds a plane from arbitrary values, clamping each into `[0, 1]`.
    /// NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, mut samples: Vec<f64>) -> Result<Self> {
        for s in &mut samples {
            *s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
        }
        Plane::new(width, height, samples)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Plane::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn same_dims(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_dims(&self, other: &Plane) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::precondition(format!(
                "dimension mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

/// Compression family of the input, which fixes the block grid IQAM looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecKind {
    Jpeg,
    HevcMsp,
}

impl CodecKind {
    /// Patch edge `B`: 8 for JPEG blocks, 4 for the smallest HEVC CU/TU.
    pub fn patch_size(self) -> usize {
        match self {
            CodecKind::Jpeg => 8,
            CodecKind::HevcMsp => 4,
        }
    }

    pub fn offset(self) -> usize {
        self.patch_size() / 2
    }
}

impl std::str::FromStr for CodecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "jpeg" | "jpg" => Ok(CodecKind::Jpeg),
            "hevc_msp" | "hevc" => Ok(CodecKind::HevcMsp),
            other => Err(Error::Config(format!("unknown codec '{other}'"))),
        }
    }
}

impl std::fmt::Display for CodecKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CodecKind::Jpeg => "jpeg",
            CodecKind::HevcMsp => "hevc_msp",
        })
    }
}
