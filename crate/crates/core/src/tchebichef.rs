//! Orthonormal discrete Tchebichef basis and 2-D patch moments.
//!
//! Row `r` of the basis is the degree-`r` discrete orthonormal polynomial
//! sampled at `x = 0..n-1`. It is obtained by orthonormalizing the monomials
//! `1, x, …, x^(n-1)` over those points, which determines each row up to
//! sign; the sign is fixed so that the last sample of every non-constant row
//! is positive.

use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MomentBasis {
    n: usize,
    rows: Vec<f64>,
}

impl MomentBasis {
    /// Builds the basis for `n ∈ {4, 8}`. Prefer [`basis`], which caches.
    pub fn build(n: usize) -> Result<Self> {
        if n != 4 && n != 8 {
            return Err(unsupported(n));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for degree in 0..n {
            let mut v: Vec<f64> = (0..n).map(|x| (x as f64).powi(degree as i32)).collect();
            // two passes of modified Gram-Schmidt; one pass loses ~cond(V)·eps
            for _ in 0..2 {
                for u in &rows {
                    let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            if degree > 0 && v[n - 1] < 0.0 {
                v.iter_mut().for_each(|a| *a = -*a);
            }
            rows.push(v);
        }
        Ok(MomentBasis {
            n,
            rows: rows.concat(),
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn coeff(&self, degree: usize, x: usize) -> f64 {
        self.rows[degree * self.n + x]
    }

    pub fn row(&self, degree: usize) -> &[f64] {
        &self.rows[degree * self.n..(degree + 1) * self.n]
    }
}

fn unsupported(n: usize) -> Error {
    Error::precondition(format!("Tchebichef basis order must be 4 or 8, got {n}"))
}

/// Shared, lazily built basis for `n ∈ {4, 8}`.
pub fn basis(n: usize) -> Result<&'static MomentBasis> {
    static B4: OnceLock<MomentBasis> = OnceLock::new();
    static B8: OnceLock<MomentBasis> = OnceLock::new();
    let cell = match n {
        4 => &B4,
        8 => &B8,
        _ => return Err(unsupported(n)),
    };
    Ok(cell.get_or_init(|| MomentBasis::build(n).expect("order is supported")))
}

/// `n×n` moments of one patch. `m[i][j]` pairs vertical order `i` with
/// horizontal order `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    n: usize,
    m: Vec<f64>,
}

impl MomentMatrix {
    pub fn from_values(n: usize, m: Vec<f64>) -> Result<Self> {
        if m.len() != n * n {
            return Err(Error::precondition(format!(
                "moment matrix of order {n} needs {} values, got {}",
                n * n,
                m.len()
            )));
        }
        Ok(MomentMatrix { n, m })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.m
    }

    pub fn dc(&self) -> f64 {
        self.m[0]
    }
}

/// `M = T·X·Tᵗ` for a row-major `n×n` patch.
pub fn moments(patch: &[f64], basis: &MomentBasis) -> Result<MomentMatrix> {
    let n = basis.order();
    if patch.len() != n * n {
        return Err(Error::precondition(format!(
            "patch has {} samples, basis order {n} needs {}",
            patch.len(),
            n * n
        )));
    }
    // tmp = X·Tᵗ, tmp[y][j] = Σ_x X[y][x]·T[j][x]
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        let xrow = &patch[y * n..(y + 1) * n];
        for j in 0..n {
            tmp[y * n + j] = xrow.iter().zip(basis.row(j)).map(|(a, b)| a * b).sum();
        }
    }
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let t = basis.row(i);
        for j in 0..n {
            m[i * n + j] = (0..n).map(|y| t[y] * tmp[y * n + j]).sum();
        }
    }
    Ok(MomentMatrix { n, m })
}

/// Sum of squared non-DC moments.
pub fn sstm(m: &MomentMatrix) -> f64 {
    let total: f64 = m.m.iter().map(|v| v * v).sum();
    total - m.dc() * m.dc()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Orthonormal discrete Tchebichef polynomials by the classical
    /// three-term recurrence; independent of the Gram-Schmidt construction.
    fn recurrence_basis(n: usize) -> Vec<Vec<f64>> {
        let nf = n as f64;
        let mut t = vec![vec![0.0; n]; n];
        for x in 0..n {
            t[0][x] = 1.0 / nf.sqrt();
            t[1][x] = (2.0 * x as f64 + 1.0 - nf) * (3.0 / (nf * (nf * nf - 1.0))).sqrt();
        }
        for p in 2..n {
            let pf = p as f64;
            let a1 = (2.0 / pf) * ((4.0 * pf * pf - 1.0) / (nf * nf - pf * pf)).sqrt();
            let a2 = ((1.0 - nf) / pf) * ((4.0 * pf * pf - 1.0) / (nf * nf - pf * pf)).sqrt();
            let a3 = ((pf - 1.0) / pf)
                * ((2.0 * pf + 1.0) / (2.0 * pf - 3.0)).sqrt()
                * ((nf * nf - (pf - 1.0).powi(2)) / (nf * nf - pf * pf)).sqrt();
            for x in 0..n {
                t[p][x] = (a1 * x as f64 + a2) * t[p - 1][x] - a3 * t[p - 2][x];
            }
        }
        t
    }

    fn inf_norm_gram_error(b: &MomentBasis) -> f64 {
        let n = b.order();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let dot: f64 = b.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
                row_sum += (dot - if i == j { 1.0 } else { 0.0 }).abs();
            }
            worst = worst.max(row_sum);
        }
        worst
    }

    #[test]
    fn orthonormal() {
        for n in [4, 8] {
            let b = basis(n).unwrap();
            assert!(inf_norm_gram_error(b) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn first_rows_n4() {
        let b = basis(4).unwrap();
        for x in 0..4 {
            assert!((b.coeff(0, x) - 0.5).abs() < 1e-15);
        }
        let s = 20f64.sqrt();
        let expect = [-3.0 / s, -1.0 / s, 1.0 / s, 3.0 / s];
        for x in 0..4 {
            assert!((b.coeff(1, x) - expect[x]).abs() < 1e-12);
        }
        assert!((b.coeff(1, 0) + 0.67082).abs() < 1e-5);
        assert!((b.coeff(1, 1) + 0.22361).abs() < 1e-5);
    }

    #[test]
    fn matches_recurrence_with_sign_convention() {
        for n in [4, 8] {
            let b = basis(n).unwrap();
            let r = recurrence_basis(n);
            for p in 0..n {
                let sign = if p > 0 && r[p][n - 1] < 0.0 {
                    -1.0
                } else {
                    1.0
                };
                for x in 0..n {
                    assert!(
                        (b.coeff(p, x) - sign * r[p][x]).abs() < 1e-10,
                        "n={n} p={p}"
                    );
                }
                if p > 0 {
                    assert!(b.coeff(p, n - 1) > 0.0);
                }
            }
        }
    }

    #[test]
    fn unsupported_order() {
        assert!(MomentBasis::build(5).is_err());
        assert!(basis(16).is_err());
    }

    #[test]
    fn constant_and_zero_patches() {
        let b = basis(4).unwrap();
        let m = moments(&[1.0; 16], b).unwrap();
        assert!((m.dc() - 4.0).abs() < 1e-12);
        for (k, v) in m.values().iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "entry {k} = {v}");
        }
        assert!(sstm(&m).abs() < 1e-12);
        let z = moments(&[0.0; 16], b).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        assert!(moments(&[0.0; 15], b).is_err());
        assert!(moments(&[0.0; 16], basis(8).unwrap()).is_err());
    }

    #[test]
    fn checkerboard_sstm() {
        let patch: Vec<f64> = (0..16).map(|i| ((i % 4 + i / 4) % 2) as f64).collect();
        let m = moments(&patch, basis(4).unwrap()).unwrap();
        assert!((m.dc() - 2.0).abs() < 1e-12);
        assert!((sstm(&m) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn parseval_on_random_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [4, 8] {
            let b = basis(n).unwrap();
            for _ in 0..500 {
                let x: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
                let m = moments(&x, b).unwrap();
                let ex: f64 = x.iter().map(|v| v * v).sum();
                let em: f64 = m.values().iter().map(|v| v * v).sum();
                assert!((em - ex).abs() / ex.max(1.0) < 1e-9);
            }
        }
    }

    fn patch_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
        prop_oneof![Just(4usize), Just(8usize)]
            .prop_flat_map(|n| (Just(n), prop::collection::vec(-1.0f64..1.0, n * n)))
    }

    proptest! {
        #[test]
        fn linearity(
            (n, x) in patch_strategy(),
            seed in any::<u64>(),
            a in -2.0f64..2.0,
            c in -2.0f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = basis(n).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + c * q).collect();
            let mm = moments(&mix, b).unwrap();
            let mx = moments(&x, b).unwrap();
            let my = moments(&y, b).unwrap();
            for k in 0..n * n {
                let expect = a * mx.values()[k] + c * my.values()[k];
                prop_assert!((mm.values()[k] - expect).abs() < 1e-10);
            }
        }

        #[test]
        fn dc_is_scaled_mean((n, x) in patch_strategy()) {
            let m = moments(&x, basis(n).unwrap()).unwrap();
            let sum: f64 = x.iter().sum();
            prop_assert!((m.dc() - sum / n as f64).abs() < 1e-10);
        }

        #[test]
        fn sstm_ignores_dc_shift((n, x) in patch_strategy(), shift in -3.0f64..3.0) {
            let b = basis(n).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let s0 = sstm(&moments(&x, b).unwrap());
            let s1 = sstm(&moments(&shifted, b).unwrap());
            prop_assert!((s0 - s1).abs() < 1e-9);
            prop_assert!(s0 >= -1e-12);
        }
    }
}
