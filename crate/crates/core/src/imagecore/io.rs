use std::fs;
use std::io::Write;
use std::path::Path;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use super::Plane;
use crate::error::{Error, Result};

/// On-disk grayscale formats.
///
/// `Pgm8` and `Pgm16` both read any binary (P5) PGM; they differ only in the
/// maxval written on save (255 vs 65535, big-endian for 16 bit).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Pgm8,
    Pgm16,
    PngGray,
}

impl ImageFormat {
    pub fn maxval(self) -> u32 {
        match self {
            ImageFormat::Pgm8 | ImageFormat::PngGray => 255,
            ImageFormat::Pgm16 => 65535,
        }
    }
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Sniffs the format from magic bytes. A P5 file with maxval > 255 reports
/// `Pgm16`.
pub fn detect_format(path: &Path) -> Result<ImageFormat> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.starts_with(PNG_MAGIC) {
        return Ok(ImageFormat::PngGray);
    }
    if data.starts_with(b"P5") {
        let header = parse_pgm_header(&data)?;
        return Ok(if header.maxval > 255 {
            ImageFormat::Pgm16
        } else {
            ImageFormat::Pgm8
        });
    }
    Err(Error::Format(format!(
        "{}: not a binary PGM or PNG file",
        path.display()
    )))
}

pub fn load_plane_auto(path: &Path) -> Result<Plane> {
    let format = detect_format(path)?;
    load_plane(path, format)
}

pub fn load_plane(path: &Path, format: ImageFormat) -> Result<Plane> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        ImageFormat::Pgm8 | ImageFormat::Pgm16 => decode_pgm(&data).map_err(|e| annotate(e, path)),
        ImageFormat::PngGray => decode_png(&data).map_err(|e| annotate(e, path)),
    }
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub fn save_plane(plane: &Plane, path: &Path, format: ImageFormat) -> Result<()> {
    let bytes = match format {
        ImageFormat::Pgm8 | ImageFormat::Pgm16 => encode_pgm(plane, format.maxval()),
        ImageFormat::PngGray => encode_png(plane)?,
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Round-half-up quantization onto `0..=maxval`.
#[inline]
pub(crate) fn quantize(sample: f64, maxval: u32) -> u32 {
    let v = (sample * maxval as f64 + 0.5).floor();
    v.clamp(0.0, maxval as f64) as u32
}

#[derive(Debug)]
struct PgmHeader {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_pgm_header(data: &[u8]) -> Result<PgmHeader> {
    if !data.starts_with(b"P5") {
        return Err(Error::Format("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        // whitespace and comments before each header token
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = data.get(pos) {
                        pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while data.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(
                "expected a decimal number in PGM header".into(),
            ));
        }
        *field = std::str::from_utf8(&data[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PGM header number out of range".into()))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after PGM maxval".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::Format("PGM with zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!(
            "PGM maxval {maxval} not in 1..=65535"
        )));
    }
    Ok(PgmHeader {
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_offset: pos,
    })
}

/// Decodes an in-memory binary PGM.
pub fn decode_pgm_bytes(data: &[u8]) -> Result<Plane> {
    decode_pgm(data)
}

fn decode_pgm(data: &[u8]) -> Result<Plane> {
    let h = parse_pgm_header(data)?;
    let n = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let bps = if h.maxval > 255 { 2 } else { 1 };
    let raster = &data[h.data_offset..];
    if raster.len() < n * bps {
        return Err(Error::Format(format!(
            "truncated PGM raster: need {} bytes, have {}",
            n * bps,
            raster.len()
        )));
    }
    let scale = h.maxval as f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let v = if bps == 2 {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32
        } else {
            raster[i] as u32
        };
        if v > h.maxval {
            return Err(Error::Format(format!(
                "PGM sample {v} exceeds maxval {}",
                h.maxval
            )));
        }
        samples.push(v as f64 / scale);
    }
    Plane::new(h.width, h.height, samples)
}

fn encode_pgm(plane: &Plane, maxval: u32) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{}\n", plane.width(), plane.height(), maxval);
    let bps = if maxval > 255 { 2 } else { 1 };
    let mut out = Vec::with_capacity(header.len() + plane.samples().len() * bps);
    out.extend_from_slice(header.as_bytes());
    for &s in plane.samples() {
        let q = quantize(s, maxval);
        if bps == 2 {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

fn decode_png(data: &[u8]) -> Result<Plane> {
    let img = image::load_from_memory_with_format(data, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG decode failed: {e}")))?;
    Ok(luma_plane(&img))
}

/// Converts a decoded image to a luma plane (BT.601 weights for color).
pub(crate) fn luma_plane(img: &DynamicImage) -> Plane {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let samples: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => img
            .to_luma16()
            .as_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
        _ => img
            .to_rgb16()
            .as_raw()
            .chunks_exact(3)
            .map(|px| {
                (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64) / 65535.0
            })
            .collect(),
    };
    Plane::from_clamped(w, h, samples).expect("decoded image dimensions are consistent")
}

fn encode_png(plane: &Plane) -> Result<Vec<u8>> {
    let raw: Vec<u8> = plane
        .samples()
        .iter()
        .map(|&s| quantize(s, 255) as u8)
        .collect();
    let buf = image::GrayImage::from_raw(plane.width() as u32, plane.height() as u32, raw)
        .ok_or_else(|| Error::Format("plane does not fit a PNG buffer".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG encode failed: {e}")))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn pgm8_scale_identity() {
        let mut data = b"P5\n2 2\n255\n".to_vec();
        data.extend_from_slice(&[0, 255, 255, 0]);
        let p = decode_pgm(&data).unwrap();
        assert_eq!(p.samples(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pgm16_big_endian() {
        let mut data = b"P5 1 1 65535\n".to_vec();
        data.extend_from_slice(&32768u16.to_be_bytes());
        let p = decode_pgm(&data).unwrap();
        assert_eq!(p.samples()[0], 32768.0 / 65535.0);
        assert!((p.samples()[0] - 0.50000763).abs() < 1e-8);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut data = b"P5\n# made by hand\n1 # width\n1\n255\n".to_vec();
        data.push(51);
        let p = decode_pgm(&data).unwrap();
        assert_eq!(p.samples()[0], 51.0 / 255.0);
    }

    #[test]
    fn malformed_inputs_are_format_errors() {
        let cases: &[&[u8]] = &[
            b"",
            b"P6\n1 1\n255\n\x00\x00\x00",
            b"P5\n2 2\n255\n\x00\x01",
            b"P5\n2",
            b"P5\n0 2\n255\n",
            b"P5\n1 1\n70000\n\x00\x00",
            b"P5\n1 1\n15\n\x20",
            b"P5\nx 1\n255\n\x00",
        ];
        for c in cases {
            assert!(
                matches!(decode_pgm(c), Err(Error::Format(_))),
                "expected format error for {:?}",
                String::from_utf8_lossy(c)
            );
        }
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(0.0, 255), 0);
        assert_eq!(quantize(1.0, 255), 255);
        assert_eq!(quantize(1.0, 65535), 65535);
    }

    #[test]
    fn save_uses_single_whitespace_header() {
        let p = Plane::filled(3, 2, 0.5).unwrap();
        let bytes = encode_pgm(&p, 255);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[128; 6]);
    }

    #[test]
    fn png_round_trip_and_rgb_luma() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.png");
        let p = Plane::new(2, 1, vec![0.0, 1.0]).unwrap();
        save_plane(&p, &path, ImageFormat::PngGray).unwrap();
        assert_eq!(detect_format(&path).unwrap(), ImageFormat::PngGray);
        assert_eq!(load_plane_auto(&path).unwrap(), p);

        let rgb = image::RgbImage::from_raw(1, 1, vec![255, 0, 0]).unwrap();
        let rgb_path = dir.path().join("rgb.png");
        rgb.save(&rgb_path).unwrap();
        let q = load_plane(&rgb_path, ImageFormat::PngGray).unwrap();
        assert!((q.samples()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_plane(Path::new("/nonexistent/x.pgm"), ImageFormat::Pgm8).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
