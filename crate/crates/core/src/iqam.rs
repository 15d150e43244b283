//! Tchebichef-moment no-reference quality assessment.
//!
//! The plane is cut into patches centered on codec block corners. Each patch
//! is classified by its non-DC moment energy. Smooth patches are scored for
//! blocking from the share of highest-order moments; textured patches are
//! scored for blur from how much a light Gaussian blur changes their
//! moments. The two class means combine as `Q = Q̄_S^α · Q̄_T^β`, and an
//! enhancement stage may exit once `Q ≥ t_q`.
//!
//! Constants are interpreted on unit-range samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{partition, CodecKind, Plane};
use crate::tchebichef::{basis, moments, sstm, MomentMatrix};

/// Normalization of the textured-patch similarity sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureNorm {
    /// Mean over all `n²` similarity entries.
    #[default]
    Normalized,
    /// Fixed divisor of 9 regardless of patch order. Frequently clamps to 0;
    /// kept for comparison experiments.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqamParams {
    pub alpha: f64,
    pub beta: f64,
    pub c_stab: f64,
    pub t_e: f64,
    pub t_sstm: f64,
    pub t_q: f64,
    pub codec: CodecKind,
    pub mode: TextureNorm,
    pub blur_sigma: f64,
}

/// Exit thresholds tuned per codec.
pub const DEFAULT_TQ_HEVC_MSP: f64 = 0.89;
pub const DEFAULT_TQ_JPEG: f64 = 0.74;

impl IqamParams {
    pub fn for_codec(codec: CodecKind) -> Self {
        IqamParams {
            alpha: 0.9,
            beta: 0.1,
            c_stab: 1e-8,
            t_e: 0.05,
            t_sstm: 4e-3,
            t_q: match codec {
                CodecKind::Jpeg => DEFAULT_TQ_JPEG,
                CodecKind::HevcMsp => DEFAULT_TQ_HEVC_MSP,
            },
            codec,
            mode: TextureNorm::Normalized,
            blur_sigma: 5.0,
        }
    }

    /// Parses a JSON parameter document. Missing keys take the defaults of
    /// the document's codec, or of `fallback_codec` when `codec` is absent.
    pub fn from_json(text: &str, fallback_codec: CodecKind) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            alpha: Option<f64>,
            beta: Option<f64>,
            c_stab: Option<f64>,
            t_e: Option<f64>,
            t_sstm: Option<f64>,
            t_q: Option<f64>,
            codec: Option<CodecKind>,
            mode: Option<TextureNorm>,
            blur_sigma: Option<f64>,
        }
        let doc: Doc =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("IQAM params: {e}")))?;
        let mut p = IqamParams::for_codec(doc.codec.unwrap_or(fallback_codec));
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = doc.$f { p.$f = v; } )* };
        }
        take!(alpha, beta, c_stab, t_e, t_sstm, t_q, mode, blur_sigma);
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.beta,
            self.c_stab,
            self.t_e,
            self.t_sstm,
            self.t_q,
            self.blur_sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("IQAM params must be finite".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha <= self.beta {
            return Err(Error::Config(format!(
                "need alpha > beta >= 0, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.c_stab <= 0.0 || self.t_sstm <= 0.0 || self.blur_sigma <= 0.0 {
            return Err(Error::Config(
                "c_stab, t_sstm and blur_sigma must be positive".into(),
            ));
        }
        if self.t_q < 0.0 {
            return Err(Error::Config(format!("t_q must be >= 0, got {}", self.t_q)));
        }
        if !(self.t_e > 0.0 && self.t_e < 1.0) {
            return Err(Error::Config(format!(
                "t_e must lie in (0, 1), got {}",
                self.t_e
            )));
        }
        Ok(())
    }
}

impl Default for IqamParams {
    fn default() -> Self {
        IqamParams::for_codec(CodecKind::Jpeg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchClass {
    Smooth,
    Textured,
}

pub fn classify(m: &MomentMatrix, params: &IqamParams) -> PatchClass {
    if sstm(m) < params.t_sstm {
        PatchClass::Smooth
    } else {
        PatchClass::Textured
    }
}

const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Horizontal and vertical blocking energies, each clamped to `t_e`.
///
/// `e_h` sums the last column (highest horizontal order), `e_v` the last
/// row, both relative to the absolute non-DC moment mass.
pub fn blocky_energies(m: &MomentMatrix, params: &IqamParams) -> (f64, f64) {
    let n = m.order();
    let last = n - 1;
    // basis round-off leaves ~1e-16 residue in the AC moments of a flat
    // patch; with C = 1e-8 in the denominator that residue would not cancel
    let floor = ROUNDOFF_FLOOR * (1.0 + m.dc().abs());
    let mag = |v: f64| if v.abs() <= floor { 0.0 } else { v.abs() };
    let ac_total: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| (i, j) != (0, 0))
        .map(|(i, j)| mag(m.get(i, j)))
        .sum();
    let denom = ac_total + params.c_stab;
    let col: f64 = (0..n).map(|i| mag(m.get(i, last))).sum();
    let row: f64 = (0..n).map(|j| mag(m.get(last, j))).sum();
    let clamp = |e: f64| if e < params.t_e { e } else { params.t_e };
    (clamp(col / denom), clamp(row / denom))
}

/// `log_(1-t_e)(1 - (e_h + e_v)/2)`.
pub fn q_smooth(e_h: f64, e_v: f64, params: &IqamParams) -> f64 {
    // adding 0.0 turns the -0.0 of ln(1)/ln(x<1) into +0.0
    (1.0 - (e_h + e_v) / 2.0).ln() / (1.0 - params.t_e).ln() + 0.0
}

/// Normalized 3×3 Gaussian, indexed `[dy + 1][dx + 1]`.
pub fn gaussian_kernel3(sigma: f64) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    let mut sum = 0.0;
    for (dy, row) in k.iter_mut().enumerate() {
        for (dx, v) in row.iter_mut().enumerate() {
            let r2 = (dy as f64 - 1.0).powi(2) + (dx as f64 - 1.0).powi(2);
            *v = (-r2 / (2.0 * sigma * sigma)).exp();
            sum += *v;
        }
    }
    for row in &mut k {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    k
}

/// Blurs one `n×n` patch with the 3×3 kernel, replicating patch borders.
pub fn blur_patch(patch: &[f64], n: usize, params: &IqamParams) -> Vec<f64> {
    let k = gaussian_kernel3(params.blur_sigma);
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, n as isize - 1) as usize;
        let cy = y.clamp(0, n as isize - 1) as usize;
        patch[cy * n + cx]
    };
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for (dy, row) in k.iter().enumerate() {
                for (dx, w) in row.iter().enumerate() {
                    acc += w * at(x as isize + dx as isize - 1, y as isize + dy as isize - 1);
                }
            }
            out[y * n + x] = acc;
        }
    }
    out
}

/// `1 − Σ S(i,j) / norm`, clamped to `[0, 1]`, where `S` is the
/// entrywise similarity of the original and blurred moments.
pub fn q_textured(m: &MomentMatrix, m_blur: &MomentMatrix, params: &IqamParams) -> Result<f64> {
    if m.order() != m_blur.order() {
        return Err(Error::precondition(format!(
            "moment orders differ: {} vs {}",
            m.order(),
            m_blur.order()
        )));
    }
    let c = params.c_stab;
    let total: f64 = m
        .values()
        .iter()
        .zip(m_blur.values())
        .map(|(a, b)| (2.0 * a * b + c) / (a * a + b * b + c))
        .sum();
    let norm = match params.mode {
        TextureNorm::Normalized => (m.order() * m.order()) as f64,
        TextureNorm::Literal => 9.0,
    };
    Ok((1.0 - total / norm).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchScore {
    pub class: PatchClass,
    pub score: f64,
}

/// Classifies one patch and returns its class score.
pub fn score_patch(patch: &[f64], params: &IqamParams) -> Result<PatchScore> {
    let n = params.codec.patch_size();
    let b = basis(n)?;
    let m = moments(patch, b)?;
    Ok(match classify(&m, params) {
        PatchClass::Smooth => {
            let (e_h, e_v) = blocky_energies(&m, params);
            PatchScore {
                class: PatchClass::Smooth,
                score: q_smooth(e_h, e_v, params),
            }
        }
        PatchClass::Textured => {
            let blurred = blur_patch(patch, n, params);
            let mb = moments(&blurred, b)?;
            PatchScore {
                class: PatchClass::Textured,
                score: q_textured(&m, &mb, params)?,
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub q_s_bar: f64,
    pub q_t_bar: f64,
    pub q: f64,
    pub n_smooth: usize,
    pub n_textured: usize,
}

/// Scores a whole plane. Patches are scored in parallel but reduced in
/// row-major order, so the result is bitwise reproducible.
pub fn assess(plane: &Plane, params: &IqamParams) -> Result<QualityReport> {
    let grid = partition(plane, params.codec)?;
    let scores: Vec<PatchScore> = grid
        .patches
        .par_iter()
        .map(|p| score_patch(&p.samples, params))
        .collect::<Result<_>>()?;

    let (mut sum_s, mut n_s, mut sum_t, mut n_t) = (0.0, 0usize, 0.0, 0usize);
    for s in &scores {
        match s.class {
            PatchClass::Smooth => {
                sum_s += s.score;
                n_s += 1;
            }
            PatchClass::Textured => {
                sum_t += s.score;
                n_t += 1;
            }
        }
    }
    // an empty class contributes a neutral factor of 1
    let q_s_bar = if n_s == 0 { 1.0 } else { sum_s / n_s as f64 };
    let q_t_bar = if n_t == 0 { 1.0 } else { sum_t / n_t as f64 };
    let q = q_s_bar.powf(params.alpha) * q_t_bar.powf(params.beta);
    Ok(QualityReport {
        q_s_bar,
        q_t_bar,
        q,
        n_smooth: n_s,
        n_textured: n_t,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExitDecision {
    Exit,
    Continue,
}

/// Exit as soon as the score reaches the threshold (inclusive).
pub fn decide_exit(q: f64, t_q: f64) -> ExitDecision {
    if q >= t_q {
        ExitDecision::Exit
    } else {
        ExitDecision::Continue
    }
}
