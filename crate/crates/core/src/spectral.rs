//! Eigenvalues of `A u = -u'''` on `(0, L)` with
//! `u(0) = u'(L) = u(L) - u''(L) = 0`.
//!
//! With `r^3 = -λ` and roots `r_i = α^i r` (`α = e^{2πi/3}`), `λ` is an
//! eigenvalue iff
//! `Σ a_ij r_i (1 - r_j²) e^{(r_i + r_j) L} = 0`,
//! `a_12 = a_20 = a_01 = 1`, `a_21 = a_02 = a_10 = -1`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{require, Error, Result};

/// `(i, j, a_ij)` for the six nonzero coefficients.
const TERMS: [(usize, usize, f64); 6] =
    [(1, 2, 1.0), (2, 0, 1.0), (0, 1, 1.0), (2, 1, -1.0), (0, 2, -1.0), (1, 0, -1.0)];

const NEWTON_MAX: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigRecord {
    pub k: usize,
    pub lam: Complex64,
    /// Scaled determinant modulus at `lam`, see [`char_det_scaled`].
    pub residual: f64,
    /// `|lam| / (8π³k³ / (3√3 L³))`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub records: Vec<EigRecord>,
    /// Indices in the requested range with no converged eigenvalue.
    pub unresolved: Vec<usize>,
}

/// The three cube roots of `-λ`, starting from the one with argument in `[0, 2π/3)`.
pub fn cube_roots(lam: Complex64) -> Result<[Complex64; 3]> {
    require(lam.norm() > 0.0, || "lambda = 0 is a degenerate root".into())?;
    let target = -lam;
    let base = Complex64::from_polar(target.norm().cbrt(), target.arg() / 3.0);
    let alpha = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let mut r = base;
    // rotate into [0, 2π/3)
    while r.arg() < -1e-15 || r.arg() >= 2.0 * PI / 3.0 - 1e-15 {
        r *= alpha;
    }
    Ok([r, r * alpha, r * alpha * alpha])
}

/// The determinant for a given labeling of the roots.
pub fn char_det_with_roots(roots: &[Complex64; 3], length: f64) -> Complex64 {
    char_det_shifted(roots, length, 0.0)
}

fn char_det_shifted(roots: &[Complex64; 3], length: f64, shift: f64) -> Complex64 {
    TERMS
        .iter()
        .map(|&(i, j, a)| {
            let (ri, rj) = (roots[i], roots[j]);
            a * ri * (1.0 - rj * rj) * ((ri + rj) * length - shift).exp()
        })
        .sum()
}

fn max_exponent(roots: &[Complex64; 3], length: f64) -> f64 {
    TERMS.iter().map(|&(i, j, _)| (roots[i] + roots[j]).re * length).fold(f64::NEG_INFINITY, f64::max)
}

pub fn char_det(lam: Complex64, length: f64) -> Result<Complex64> {
    require(length > 0.0, || format!("length must be > 0, got {length}"))?;
    Ok(char_det_with_roots(&cube_roots(lam)?, length))
}

/// `char_det · e^{-max Re(r_i + r_j) L} / (1 + |r|)³`; same zeros, O(1) scale.
pub fn char_det_scaled(lam: Complex64, length: f64) -> Result<Complex64> {
    require(length > 0.0, || format!("length must be > 0, got {length}"))?;
    let roots = cube_roots(lam)?;
    let shift = max_exponent(&roots, length);
    let norm = (1.0 + roots[0].norm()).powi(3);
    Ok(char_det_shifted(&roots, length, shift) / norm)
}

/// `8π³ / (3√3 L³)`; the asymptotic law is `|λ_k| ≈ c k³`.
pub fn asymptotic_constant(length: f64) -> f64 {
    8.0 * PI.powi(3) / (3.0 * 3f64.sqrt() * length.powi(3))
}

/// Complex Newton on the determinant; the exponential scale is frozen at
/// each iterate so that value and difference quotient share it.
pub fn newton(seed: Complex64, length: f64, tol: f64) -> Result<Complex64> {
    let mut lam = seed;
    for _ in 0..NEWTON_MAX {
        let roots = cube_roots(lam)?;
        let shift = max_exponent(&roots, length);
        let f = char_det_shifted(&roots, length, shift);
        let h = 1e-7 * lam.norm().max(1e-3);
        let fp = char_det_shifted(&cube_roots(lam + h)?, length, shift);
        let fm = char_det_shifted(&cube_roots(lam - h)?, length, shift);
        let d = (fp - fm) / (2.0 * h);
        if d.norm() == 0.0 || !d.is_finite() {
            break;
        }
        let step = f / d;
        lam -= step;
        if !lam.is_finite() {
            break;
        }
        if step.norm() <= 1e-14 * lam.norm().max(1.0) {
            let res = char_det_scaled(lam, length)?.norm();
            if res < tol {
                return Ok(lam);
            }
        }
    }
    let res = char_det_scaled(lam, length).map(|c| c.norm()).unwrap_or(f64::INFINITY);
    if res < tol {
        return Ok(lam);
    }
    Err(Error::NoConvergence { what: format!("eigenvalue Newton from seed {seed}"), iterations: NEWTON_MAX })
}

/// Eigenvalues ordered by modulus and indexed from 1; returns those with
/// `k_min <= k <= k_max`.
pub fn find_eigenvalues(length: f64, k_min: usize, k_max: usize, tol: f64) -> Result<Spectrum> {
    require(length > 0.0, || format!("length must be > 0, got {length}"))?;
    require(k_min >= 1 && k_max >= k_min, || format!("bad k range {k_min}..={k_max}"))?;
    require(tol > 0.0, || format!("tol must be > 0, got {tol}"))?;
    let c = asymptotic_constant(length);
    let mut found: Vec<Complex64> = Vec::new();
    for k in 1..=k_max + 2 {
        let kf = k as f64;
        for m in [kf, kf - 0.5] {
            let seed = Complex64::new(-c * m.powi(3), 0.0);
            if let Ok(lam) = newton(seed, length, tol) {
                let tiny = lam.norm() < 1e-6 * c;
                let dup = found.iter().any(|z| (z - lam).norm() <= 1e-7 * lam.norm().max(1.0));
                if !tiny && !dup {
                    found.push(lam);
                    if lam.im.abs() > 1e-9 * lam.norm() {
                        found.push(lam.conj());
                    }
                }
            }
        }
    }
    found.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    let mut records = Vec::new();
    for (idx, lam) in found.iter().enumerate() {
        let k = idx + 1;
        if k < k_min || k > k_max {
            continue;
        }
        records.push(EigRecord {
            k,
            lam: *lam,
            residual: char_det_scaled(*lam, length)?.norm(),
            ratio: lam.norm() / (c * (k as f64).powi(3)),
        });
    }
    let unresolved = (k_min..=k_max).filter(|k| !records.iter().any(|r| r.k == *k)).collect();
    Ok(Spectrum { records, unresolved })
}

/// `max Re λ` over the records.
pub fn spectral_abscissa(records: &[EigRecord]) -> Result<f64> {
    require(!records.is_empty(), || "no eigenvalues given".into())?;
    Ok(records.iter().map(|r| r.lam.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Minimum of `|char_det_scaled(iξ)|` over `n` samples of
/// `ξ_min <= |ξ| <= ξ_max`.
pub fn imaginary_axis_min(length: f64, xi_min: f64, xi_max: f64, n: usize) -> Result<f64> {
    require(xi_min > 0.0 && xi_max > xi_min && n >= 2, || "bad imaginary-axis band".into())?;
    let mut worst = f64::INFINITY;
    for i in 0..n {
        let xi = xi_min + (xi_max - xi_min) * i as f64 / (n - 1) as f64;
        for s in [xi, -xi] {
            worst = worst.min(char_det_scaled(Complex64::new(0.0, s), length)?.norm());
        }
    }
    Ok(worst)
}

/// CSV with columns `k,re,im,residual,ratio`.
pub fn eigen_csv(records: &[EigRecord]) -> String {
    let mut out = String::from("k,re,im,residual,ratio\n");
    for r in records {
        out.push_str(&format!("{},{:.11e},{:.11e},{:.11e},{:.11e}\n", r.k, r.lam.re, r.lam.im, r.residual, r.ratio));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: f64 = 2.0 * PI;

    #[test]
    fn cube_roots_solve_the_cubic() {
        for lam in [Complex64::new(-3.0, 0.0), Complex64::new(2.0, -5.0), Complex64::new(0.0, 1.0)] {
            let roots = cube_roots(lam).unwrap();
            for r in roots {
                assert!((r * r * r + lam).norm() < 1e-12 * lam.norm());
            }
            assert!(roots[0].arg() >= -1e-15 && roots[0].arg() < 2.0 * PI / 3.0);
        }
    }

    #[test]
    fn zero_is_rejected() {
        assert!(char_det(Complex64::new(0.0, 0.0), L).is_err());
    }

    #[test]
    fn conjugate_symmetry() {
        let lam = Complex64::new(-1.3, 0.7);
        let a = char_det(lam.conj(), L).unwrap();
        let b = char_det(lam, L).unwrap().conj();
        // conjugation reverses the cyclic order of the roots, an odd relabeling
        assert!((a - b).norm().min((a + b).norm()) < 1e-10 * a.norm());
    }

    #[test]
    fn relabeling_changes_at_most_the_sign() {
        let lam = Complex64::new(-2.1, 0.4);
        let [r0, r1, r2] = cube_roots(lam).unwrap();
        let base = char_det_with_roots(&[r0, r1, r2], L);
        for (perm, sign) in [([r1, r2, r0], 1.0), ([r2, r0, r1], 1.0), ([r1, r0, r2], -1.0), ([r0, r2, r1], -1.0)] {
            let d = char_det_with_roots(&perm, L);
            assert!((d - sign * base).norm() < 1e-10 * base.norm());
        }
    }

    #[test]
    fn first_eigenvalue_is_real_and_negative() {
        let s = find_eigenvalues(L, 1, 3, 1e-10).unwrap();
        assert!(s.unresolved.is_empty());
        assert!((s.records[0].lam.re + 0.22235).abs() < 1e-4);
        assert!(s.records.iter().all(|r| r.lam.re < 0.0));
    }

    #[test]
    fn abscissa_of_empty_set_errors() {
        assert!(spectral_abscissa(&[]).is_err());
    }
}
