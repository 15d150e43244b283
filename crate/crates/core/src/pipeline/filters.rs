//! Classical enhancement stages.

use crate::error::{Error, Result};
use crate::imagecore::Plane;

/// Separable Gaussian blur with radius `ceil(3σ)` and replicate padding.
pub fn gaussian_blur(plane: &Plane, sigma: f64) -> Result<Plane> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let (w, h) = (plane.width(), plane.height());
    let src = plane.samples();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * src[y * w + clamp(x as isize + i as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as isize + i as isize - radius, h) * w + x])
                .sum();
        }
    }
    Plane::from_clamped(w, h, out)
}

/// Smooths across every block boundary at multiples of `block`.
///
/// The two pixels touching a boundary are each replaced by the 3-tap mean
/// centered on them, then blended with the original by `strength`. Columns
/// are filtered first, then rows of the result.
pub fn deblock(plane: &Plane, block: usize, strength: f64) -> Result<Plane> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::Config(format!(
            "deblock strength must lie in [0, 1], got {strength}"
        )));
    }
    if block < 2 {
        return Err(Error::precondition("deblock block size must be >= 2"));
    }
    let (w, h) = (plane.width(), plane.height());
    let horizontal = filter_axis(plane.samples(), w, h, block, strength, true);
    let both = filter_axis(&horizontal, w, h, block, strength, false);
    Plane::from_clamped(w, h, both)
}

fn filter_axis(
    src: &[f64],
    w: usize,
    h: usize,
    block: usize,
    s: f64,
    across_columns: bool,
) -> Vec<f64> {
    let mut out = src.to_vec();
    let (len, lines) = if across_columns { (w, h) } else { (h, w) };
    let idx = |line: usize, pos: usize| {
        if across_columns {
            line * w + pos
        } else {
            pos * w + line
        }
    };
    for line in 0..lines {
        let at = |pos: isize| src[idx(line, pos.clamp(0, len as isize - 1) as usize)];
        let mut edge = block;
        while edge < len {
            let (p, q) = (edge as isize - 1, edge as isize);
            let p_new = (at(p - 1) + at(p) + at(q)) / 3.0;
            let q_new = (at(p) + at(q) + at(q + 1)) / 3.0;
            out[idx(line, p as usize)] = (1.0 - s) * at(p) + s * p_new;
            out[idx(line, q as usize)] = (1.0 - s) * at(q) + s * q_new;
            edge += block;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_plane() -> Plane {
        let s = (0..16 * 8)
            .map(|i| if i % 16 < 8 { 0.2 } else { 0.8 })
            .collect();
        Plane::new(16, 8, s).unwrap()
    }

    #[test]
    fn deblock_strength_zero_is_identity() {
        let p = step_plane();
        assert_eq!(deblock(&p, 8, 0.0).unwrap(), p);
    }

    #[test]
    fn deblock_step_edge() {
        let out = deblock(&step_plane(), 8, 1.0).unwrap();
        for y in 0..8 {
            assert!((out.get(7, y) - 0.4).abs() < 1e-12);
            assert!((out.get(8, y) - 0.6).abs() < 1e-12);
            assert!(((out.get(7, y) + out.get(8, y)) / 2.0 - 0.5).abs() < 1e-12);
            for x in (0..16).filter(|x| *x != 7 && *x != 8) {
                assert_eq!(out.get(x, y), step_plane().get(x, y));
            }
        }
    }

    #[test]
    fn deblock_rejects_bad_strength() {
        assert!(deblock(&step_plane(), 8, 1.5).is_err());
        assert!(deblock(&step_plane(), 8, -0.1).is_err());
    }

    #[test]
    fn gaussian_preserves_constants() {
        let p = Plane::filled(9, 7, 0.3).unwrap();
        let out = gaussian_blur(&p, 1.2).unwrap();
        assert!(out.samples().iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(gaussian_blur(&p, 0.0).is_err());
    }

    #[test]
    fn gaussian_spreads_impulse_symmetrically() {
        let mut s = vec![0.0; 81];
        s[40] = 1.0;
        let out = gaussian_blur(&Plane::new(9, 9, s).unwrap(), 0.8).unwrap();
        assert!(out.get(4, 4) < 1.0);
        assert!((out.get(3, 4) - out.get(5, 4)).abs() < 1e-15);
        assert!((out.get(4, 3) - out.get(3, 4)).abs() < 1e-15);
        let total: f64 = out.samples().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
