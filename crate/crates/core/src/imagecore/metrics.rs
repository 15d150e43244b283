use serde::{Deserialize, Serialize};

use super::Plane;
use crate::error::{Error, Result};

pub fn mse(a: &Plane, b: &Plane) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.samples().len() as f64)
}

/// `10·log10(1/MSE)` for unit-range samples. Identical planes give
/// `f64::INFINITY`.
pub fn psnr(a: &Plane, b: &Plane) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(-10.0 * m.log10())
    }
}

/// Enhancement gain in dB. Infinite PSNR terms cannot be differenced, so
/// those cases are reported as distinct variants instead of sentinels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeltaPsnr {
    Finite {
        db: f64,
    },
    /// The enhanced image equals the raw image while the compressed one does not.
    InfiniteImprovement,
    /// Compressed input already equals raw; the gain is undefined.
    Undefined {
        reason: String,
    },
}

impl DeltaPsnr {
    /// Finite gain, or NaN.
    pub fn value(&self) -> f64 {
        match self {
            DeltaPsnr::Finite { db } => *db,
            _ => f64::NAN,
        }
    }

    pub fn diagnostic(&self) -> Option<&str> {
        match self {
            DeltaPsnr::Finite { .. } => None,
            DeltaPsnr::InfiniteImprovement => Some("enhanced output is identical to raw"),
            DeltaPsnr::Undefined { reason } => Some(reason),
        }
    }
}

pub fn delta_psnr(raw: &Plane, compressed: &Plane, enhanced: &Plane) -> Result<DeltaPsnr> {
    raw.ensure_same_dims(compressed)?;
    raw.ensure_same_dims(enhanced)?;
    let before = psnr(compressed, raw)?;
    let after = psnr(enhanced, raw)?;
    Ok(match (before.is_finite(), after.is_finite()) {
        (true, true) => DeltaPsnr::Finite { db: after - before },
        (true, false) => DeltaPsnr::InfiniteImprovement,
        (false, _) => DeltaPsnr::Undefined {
            reason: "compressed input is identical to raw".into(),
        },
    })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k
                .iter()
                .zip(&row[x..x + SSIM_WINDOW])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * horiz[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5, K1 = 0.01,
/// K2 = 0.03, dynamic range 1).
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::precondition(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let k = ssim_kernel();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let (xa, xb) = (a.samples(), b.samples());
    let aa: Vec<f64> = xa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = xb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = xa.iter().zip(xb).map(|(p, q)| p * q).collect();
    let mu_a = filter_valid(xa, w, h, &k);
    let mu_b = filter_valid(xb, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}
