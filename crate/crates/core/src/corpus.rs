//! JPEG re-encoding ladders and their manifests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{write_manifest, ManifestRow};
use crate::imagecore::{
    decode_pgm_bytes, load_plane_auto, luma_plane, save_plane, ImageFormat, Plane,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JpegBackend {
    /// Baseline encoder and decoder linked into this crate.
    #[default]
    Builtin,
    /// Python Imaging Library through `python3`.
    Pil,
}

impl std::str::FromStr for JpegBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(JpegBackend::Builtin),
            "pil" => Ok(JpegBackend::Pil),
            other => Err(Error::Config(format!("unknown JPEG encoder '{other}'"))),
        }
    }
}

fn to_gray8(plane: &Plane) -> Vec<u8> {
    plane
        .samples()
        .iter()
        .map(|&s| (s * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Encodes the plane at quality `qf` (1..=100) and decodes it back to luma.
pub fn jpeg_round_trip(plane: &Plane, qf: u8, backend: JpegBackend) -> Result<Plane> {
    if !(1..=100).contains(&qf) {
        return Err(Error::Config(format!(
            "JPEG quality must be 1..=100, got {qf}"
        )));
    }
    match backend {
        JpegBackend::Builtin => builtin_round_trip(plane, qf),
        JpegBackend::Pil => pil_round_trip(plane, qf),
    }
}

fn builtin_round_trip(plane: &Plane, qf: u8) -> Result<Plane> {
    let raw = to_gray8(plane);
    let mut jpeg = Vec::new();
    JpegEncoder::new_with_quality(&mut jpeg, qf)
        .encode(
            &raw,
            plane.width() as u32,
            plane.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| Error::Format(format!("JPEG encode failed: {e}")))?;
    let img = image::load_from_memory_with_format(&jpeg, image::ImageFormat::Jpeg)
        .map_err(|e| Error::Format(format!("JPEG decode failed: {e}")))?;
    Ok(luma_plane(&img))
}

const PIL_SCRIPT: &str = r#"
import io, sys
from PIL import Image
data = sys.stdin.buffer.read()
im = Image.open(io.BytesIO(data)).convert("L")
buf = io.BytesIO()
im.save(buf, "JPEG", quality=int(sys.argv[1]))
buf.seek(0)
out = io.BytesIO()
Image.open(buf).convert("L").save(out, "PPM")
sys.stdout.buffer.write(out.getvalue())
"#;

fn pil_round_trip(plane: &Plane, qf: u8) -> Result<Plane> {
    let mut pgm = format!("P5\n{} {}\n255\n", plane.width(), plane.height()).into_bytes();
    pgm.extend(to_gray8(plane));
    let missing = |why: String| {
        Error::MissingDependency(format!(
            "the 'pil' encoder needs python3 with Pillow installed ({why}); \
             install Pillow or use --encoder builtin"
        ))
    };
    let mut child = Command::new("python3")
        .args(["-c", PIL_SCRIPT, &qf.to_string()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| missing(e.to_string()))?;
    child
        .stdin
        .take()
        .expect("piped stdin")
        .write_all(&pgm)
        .map_err(|e| missing(e.to_string()))?;
    let out = child
        .wait_with_output()
        .map_err(|e| missing(e.to_string()))?;
    if !out.status.success() {
        let stderr = String::from_utf8_lossy(&out.stderr);
        if stderr.contains("No module named") {
            return Err(missing(stderr.trim().to_string()));
        }
        return Err(Error::Format(format!(
            "PIL round trip failed: {}",
            stderr.trim()
        )));
    }
    decode_pgm_bytes(&out.stdout)
}

/// Raw images (`.pgm`, `.png`) in `dir`, sorted by file name.
pub fn list_raw_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm" | "png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn quality_label(qf: u8) -> String {
    format!("QF{qf}")
}

/// Writes `<stem>_raw.pgm` and one decoded `<stem>_qf<QF>.pgm` per quality
/// for each raw image, then the manifest. Rows follow sorted file order,
/// then `qfs` order.
pub fn build_corpus(
    raw_dir: &Path,
    qfs: &[u8],
    out_dir: &Path,
    manifest: &Path,
    backend: JpegBackend,
) -> Result<Vec<ManifestRow>> {
    let raws = list_raw_images(raw_dir)?;
    if raws.is_empty() {
        return Err(Error::precondition(format!(
            "no .pgm or .png images in {}",
            raw_dir.display()
        )));
    }
    if qfs.is_empty() {
        return Err(Error::Config("quality list is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let out_dir = out_dir.canonicalize().map_err(|e| Error::io(out_dir, e))?;

    let per_image: Vec<Vec<ManifestRow>> = raws
        .par_iter()
        .map(|raw_path| {
            let stem = raw_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            let luma = load_plane_auto(raw_path)?;
            // reference is the 8-bit luma that actually goes into the encoder
            let raw8 = Plane::new(
                luma.width(),
                luma.height(),
                to_gray8(&luma).iter().map(|&v| v as f64 / 255.0).collect(),
            )?;
            let raw_out = out_dir.join(format!("{stem}_raw.pgm"));
            save_plane(&raw8, &raw_out, ImageFormat::Pgm8)?;
            qfs.iter()
                .map(|&qf| {
                    let decoded = jpeg_round_trip(&raw8, qf, backend)?;
                    let comp_out = out_dir.join(format!("{stem}_qf{qf}.pgm"));
                    save_plane(&decoded, &comp_out, ImageFormat::Pgm8)?;
                    Ok(ManifestRow {
                        raw_path: raw_out.clone(),
                        compressed_path: comp_out,
                        quality_label: quality_label(qf),
                        enhanced_path: None,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ManifestRow> = per_image.into_iter().flatten().collect();
    write_manifest(manifest, &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::psnr;

    fn texture(w: usize, h: usize) -> Plane {
        let s = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                0.5 + 0.3 * (x * 0.21).sin() * (y * 0.13).cos() + 0.1 * ((x * y) * 0.07).sin()
            })
            .collect();
        Plane::new(w, h, s).unwrap()
    }

    #[test]
    fn builtin_quality_ladder_orders_psnr() {
        let p = texture(64, 48);
        let lo = jpeg_round_trip(&p, 10, JpegBackend::Builtin).unwrap();
        let hi = jpeg_round_trip(&p, 50, JpegBackend::Builtin).unwrap();
        assert_eq!((lo.width(), lo.height()), (64, 48));
        assert!(psnr(&lo, &p).unwrap() < psnr(&hi, &p).unwrap());
    }

    #[test]
    fn quality_range_checked() {
        let p = texture(16, 16);
        assert!(jpeg_round_trip(&p, 0, JpegBackend::Builtin).is_err());
        assert!(jpeg_round_trip(&p, 101, JpegBackend::Builtin).is_err());
    }

    #[test]
    fn empty_raw_dir_is_precondition_error() {
        let raw = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = build_corpus(
            raw.path(),
            &[10],
            out.path(),
            &out.path().join("m.csv"),
            JpegBackend::Builtin,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
