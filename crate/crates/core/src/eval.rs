//! Manifest-driven evaluation: full-reference metrics beside the IQAM score,
//! optional enhancement, and rank correlation summaries.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{delta_psnr, load_plane_auto, psnr, ssim, DeltaPsnr, Plane};
use crate::iqam::{assess, IqamParams};
use crate::pipeline::{run, PipelineConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// One manifest line. `enhanced_path` is an optional fourth column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub raw_path: PathBuf,
    pub compressed_path: PathBuf,
    pub quality_label: String,
    #[serde(default)]
    pub enhanced_path: Option<PathBuf>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("CSV: {e}"))
}

/// Writes the manifest; the `enhanced_path` column appears only when some
/// row has one.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let with_enhanced = rows.iter().any(|r| r.enhanced_path.is_some());
    let mut wtr = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("CSV: {other:?}")),
    })?;
    let mut header = vec!["raw_path", "compressed_path", "quality_label"];
    if with_enhanced {
        header.push("enhanced_path");
    }
    wtr.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.raw_path.display().to_string(),
            r.compressed_path.display().to_string(),
            r.quality_label.clone(),
        ];
        if with_enhanced {
            rec.push(
                r.enhanced_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            );
        }
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Parsed manifest plus a warning for every row that could not be read.
#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub warnings: Vec<String>,
}

/// Reads a manifest. Relative paths resolve against the manifest's directory.
/// A missing file or missing required column is an error; malformed rows are
/// skipped and reported in `warnings`.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    for required in ["raw_path", "compressed_path", "quality_label"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Config(format!(
                "{}: manifest lacks a '{required}' column",
                path.display()
            )));
        }
    }
    let mut out = Manifest::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| e.to_string()).and_then(|r| {
            r.deserialize::<ManifestRow>(Some(&headers))
                .map_err(|e| e.to_string())
        });
        match row {
            Ok(mut r) => {
                let fix = |p: &mut PathBuf| {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                };
                fix(&mut r.raw_path);
                fix(&mut r.compressed_path);
                if r.enhanced_path
                    .as_ref()
                    .is_some_and(|p| p.as_os_str().is_empty())
                {
                    r.enhanced_path = None;
                }
                if let Some(p) = &mut r.enhanced_path {
                    fix(p);
                }
                out.rows.push(r);
            }
            Err(e) => out.warnings.push(format!("manifest line {line}: {e}")),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub image_id: String,
    pub quality_label: String,
    /// `f64::INFINITY` when compressed equals raw.
    pub psnr: f64,
    pub ssim: f64,
    pub q: f64,
    pub q_s_bar: f64,
    pub q_t_bar: f64,
    pub delta_psnr: Option<DeltaPsnr>,
    pub chosen_exit: Option<usize>,
    pub macs: Option<u64>,
}

impl EvalRow {
    pub fn psnr_is_infinite(&self) -> bool {
        self.psnr.is_infinite()
    }
}

/// What to do beyond scoring the compressed image.
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Run this pipeline on each compressed image and report its ΔPSNR,
    /// chosen exit and MACs. Takes precedence over `enhanced_path`.
    pub stages: Option<PipelineConfig>,
}

fn image_id(row: &ManifestRow) -> String {
    row.raw_path
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.strip_suffix("_raw").unwrap_or(s).to_string())
        .unwrap_or_default()
}

fn evaluate_row(row: &ManifestRow, params: &IqamParams, opts: &EvalOptions) -> Result<EvalRow> {
    let raw = load_plane_auto(&row.raw_path)?;
    let comp = load_plane_auto(&row.compressed_path)?;
    raw.ensure_same_dims(&comp)?;
    let report = assess(&comp, params)?;
    let mut out = EvalRow {
        image_id: image_id(row),
        quality_label: row.quality_label.clone(),
        psnr: psnr(&comp, &raw)?,
        ssim: ssim(&comp, &raw)?,
        q: report.q,
        q_s_bar: report.q_s_bar,
        q_t_bar: report.q_t_bar,
        delta_psnr: None,
        chosen_exit: None,
        macs: None,
    };
    let enhanced: Option<Plane> = if let Some(cfg) = &opts.stages {
        let (plane, trace) = run(&comp, cfg, params)?;
        out.chosen_exit = Some(trace.chosen_exit);
        out.macs = Some(trace.accumulated_cost);
        Some(plane)
    } else if let Some(p) = &row.enhanced_path {
        Some(load_plane_auto(p)?)
    } else {
        None
    };
    if let Some(e) = enhanced {
        out.delta_psnr = Some(delta_psnr(&raw, &comp, &e)?);
    }
    Ok(out)
}

/// Evaluation rows in manifest order plus the warnings for skipped rows.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub warnings: Vec<String>,
}

/// Scores every row in parallel. Rows that fail to load or score are
/// skipped with a warning; output order always equals manifest order.
pub fn evaluate(
    manifest: &Manifest,
    params: &IqamParams,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    params.validate()?;
    let results: Vec<Result<EvalRow>> = manifest
        .rows
        .par_iter()
        .map(|r| evaluate_row(r, params, opts))
        .collect();
    let mut ev = Evaluation {
        rows: Vec::with_capacity(results.len()),
        warnings: manifest.warnings.clone(),
    };
    for (row, res) in manifest.rows.iter().zip(results) {
        match res {
            Ok(r) => ev.rows.push(r),
            Err(e) => ev
                .warnings
                .push(format!("{}: skipped: {e}", row.compressed_path.display())),
        }
    }
    Ok(ev)
}

/// Fractional ranks (1-based), ties receive the average of their positions.
/// NaN is not allowed.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("no NaN in ranked data"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of average ranks. `None` for
/// fewer than two points, NaN input, or a constant sample.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 || a.iter().chain(b).any(|v| v.is_nan()) {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub quality_label: String,
    pub rows: usize,
    /// Mean over rows with finite PSNR only.
    pub mean_psnr: Option<f64>,
    pub infinite_psnr_rows: usize,
    pub mean_ssim: f64,
    pub mean_q: f64,
    pub mean_delta_psnr: Option<f64>,
    pub mean_chosen_exit: Option<f64>,
    pub mean_macs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub rows: usize,
    pub spearman_q_psnr: Option<f64>,
    pub spearman_q_ssim: Option<f64>,
    pub per_label: Vec<LabelSummary>,
    pub warning_count: usize,
    pub warnings: Vec<String>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl Evaluation {
    /// Labels appear in first-seen order.
    pub fn summary(&self) -> EvalSummary {
        let q: Vec<f64> = self.rows.iter().map(|r| r.q).collect();
        let p: Vec<f64> = self.rows.iter().map(|r| r.psnr).collect();
        let s: Vec<f64> = self.rows.iter().map(|r| r.ssim).collect();
        let mut labels: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !labels.contains(&r.quality_label.as_str()) {
                labels.push(&r.quality_label);
            }
        }
        let per_label = labels
            .into_iter()
            .map(|label| {
                let rows: Vec<&EvalRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.quality_label == label)
                    .collect();
                LabelSummary {
                    quality_label: label.to_string(),
                    rows: rows.len(),
                    mean_psnr: mean(rows.iter().map(|r| r.psnr).filter(|v| v.is_finite())),
                    infinite_psnr_rows: rows.iter().filter(|r| r.psnr_is_infinite()).count(),
                    mean_ssim: mean(rows.iter().map(|r| r.ssim)).unwrap_or(f64::NAN),
                    mean_q: mean(rows.iter().map(|r| r.q)).unwrap_or(f64::NAN),
                    mean_delta_psnr: mean(
                        rows.iter()
                            .filter_map(|r| r.delta_psnr.as_ref())
                            .map(DeltaPsnr::value)
                            .filter(|v| v.is_finite()),
                    ),
                    mean_chosen_exit: mean(
                        rows.iter().filter_map(|r| r.chosen_exit).map(|e| e as f64),
                    ),
                    mean_macs: mean(rows.iter().filter_map(|r| r.macs).map(|m| m as f64)),
                }
            })
            .collect();
        EvalSummary {
            schema_version: SCHEMA_VERSION,
            rows: self.rows.len(),
            spearman_q_psnr: spearman(&q, &p),
            spearman_q_ssim: spearman(&q, &s),
            per_label,
            warning_count: self.warnings.len(),
            warnings: self.warnings.clone(),
        }
    }

    /// Per-row CSV. Infinite values are written as `inf`; absent optional
    /// fields are empty; a ΔPSNR that is not finite carries its status.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "schema_version",
            "image_id",
            "quality_label",
            "psnr",
            "ssim",
            "q",
            "q_s_bar",
            "q_t_bar",
            "delta_psnr",
            "chosen_exit",
            "macs",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            let dp = match &r.delta_psnr {
                None => String::new(),
                Some(DeltaPsnr::Finite { db }) => db.to_string(),
                Some(DeltaPsnr::InfiniteImprovement) => "inf".into(),
                Some(DeltaPsnr::Undefined { .. }) => "undefined".into(),
            };
            wtr.write_record([
                SCHEMA_VERSION.to_string(),
                r.image_id.clone(),
                r.quality_label.clone(),
                fmt_f64(r.psnr),
                fmt_f64(r.ssim),
                fmt_f64(r.q),
                fmt_f64(r.q_s_bar),
                fmt_f64(r.q_t_bar),
                dp,
                r.chosen_exit.map(|e| e.to_string()).unwrap_or_default(),
                r.macs.map(|m| m.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::Format(format!("CSV: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

impl EvalSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
