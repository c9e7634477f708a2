//! Truncated pseudo-kernel series and the decay rates derived from it.
//!
//! The kernel is built in the (s, t) = (x - y, y) coordinates as
//! `G = (λ/3) Σ_n H^n` with `H^0 = st` and `H^{n+1} = P H^n`, and then read
//! back as `k(x, y) = G(x - y, y)`.

use std::fmt::Write as _;

use num_rational::BigRational;
use serde::Deserialize;

use crate::error::{require, Error, Result};
use crate::numeric::compensated_sum;
use crate::poly::{Coeff, Monomial, Poly1, Poly2, Var};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_N_MAX: usize = 200;

/// Iterates `H^0 = st`, `H^{n+1} = P H^n` for a fixed λ.
pub struct SeriesTerms<C: Coeff> {
    lambda: C,
    next: Option<Poly2<C>>,
}

impl<C: Coeff> SeriesTerms<C> {
    pub fn new(lambda: C) -> Self {
        Self { lambda, next: Some(Poly2::monomial(1, 1, C::from_ratio(1, 1))) }
    }
}

impl<C: Coeff> Iterator for SeriesTerms<C> {
    type Item = Poly2<C>;

    fn next(&mut self) -> Option<Poly2<C>> {
        let current = self.next.take()?;
        // every term carries s_exp >= 1, so apply_p cannot fail here
        self.next = Some(current.apply_p(&self.lambda).expect("series terms have s_exp >= 1"));
        Some(current)
    }
}

/// Truncated pseudo-kernel `G ≈ (λ/3) Σ_{n=0}^{N} H^n` on a domain of length `L`.
#[derive(Debug, Clone)]
pub struct PseudoKernel {
    pub lambda: f64,
    pub length: f64,
    pub series: Poly2,
    /// Number of `H^n` summed (N + 1).
    pub n_terms: usize,
    /// Bound on `sup |G - series|` over the triangle.
    pub tail_bound: f64,
    /// Bound on the first partial derivatives of the dropped tail.
    pub deriv_tail_bound: f64,
    /// Bound on the kernel PDE applied to the dropped tail. The residual of
    /// the truncated series equals `-λ ∂_ss∂_t H^{N+1}` exactly, so this is
    /// `λ · sup_bound(∂_ss∂_t H^{N+1})`.
    pub pde_tail_bound: f64,
    /// Measured `sup_bound(H^n, L)` for every computed n, including N + 1.
    pub term_bounds: Vec<f64>,
    g_s: Poly2,
    g_t: Poly2,
}

/// Decay rates of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub norm_ky0_sq: f64,
    pub norm_kxl_sq: f64,
    pub invnorm: Option<f64>,
}

impl PseudoKernel {
    /// Sums `H^n` until the scaled term bound `(λ/3) sup_bound(H^N)` drops
    /// below `tol` times the sup bound of the running sum (and is falling).
    pub fn build(lambda: f64, length: f64, tol: f64, n_max: usize) -> Result<Self> {
        require(lambda > 0.0 && lambda.is_finite(), || format!("lambda must be > 0, got {lambda}"))?;
        require(length > 0.0 && length.is_finite(), || format!("length must be > 0, got {length}"))?;
        require(tol > 0.0, || format!("tol must be > 0, got {tol}"))?;
        require(n_max >= 1, || "n_max must be >= 1".to_string())?;

        let scale = lambda / 3.0;
        let mut terms = SeriesTerms::new(lambda);
        let mut sum = Poly2::zero();
        let mut bounds = Vec::new();
        for n in 0..=n_max {
            let h = terms.next().expect("series iterator is infinite");
            let b = h.sup_bound(length);
            sum = &sum + &h;
            bounds.push(b);
            let falling = n >= 1 && b < bounds[n - 1];
            if falling && scale * b < tol * scale * sum.sup_bound(length) {
                let next = terms.next().expect("series iterator is infinite");
                return Ok(Self::finish(lambda, length, sum, n + 1, bounds, &next));
            }
        }
        Err(Error::NoConvergence {
            what: format!("kernel series for lambda = {lambda}, L = {length} (tol {tol:e})"),
            iterations: n_max,
        })
    }

    pub fn with_defaults(lambda: f64, length: f64) -> Result<Self> {
        Self::build(lambda, length, DEFAULT_TOL, DEFAULT_N_MAX)
    }

    /// Sums exactly `n_terms` terms with no stopping rule.
    pub fn with_terms(lambda: f64, length: f64, n_terms: usize) -> Result<Self> {
        require(lambda > 0.0, || format!("lambda must be > 0, got {lambda}"))?;
        require(length > 0.0, || format!("length must be > 0, got {length}"))?;
        require(n_terms >= 1, || "n_terms must be >= 1".to_string())?;
        let mut terms = SeriesTerms::new(lambda);
        let mut sum = Poly2::zero();
        let mut bounds = Vec::new();
        for _ in 0..n_terms {
            let h = terms.next().expect("series iterator is infinite");
            bounds.push(h.sup_bound(length));
            sum = &sum + &h;
        }
        let next = terms.next().expect("series iterator is infinite");
        Ok(Self::finish(lambda, length, sum, n_terms, bounds, &next))
    }

    /// Builds from an exactly summed rational series (λ must be rational).
    /// Coefficients are rounded to `f64` once, at the end.
    pub fn with_terms_exact(lambda: &BigRational, length: f64, n_terms: usize) -> Result<Self> {
        require(n_terms >= 1, || "n_terms must be >= 1".to_string())?;
        let lambda_f = Coeff::to_f64(lambda);
        require(lambda_f > 0.0, || format!("lambda must be > 0, got {lambda_f}"))?;
        require(length > 0.0, || format!("length must be > 0, got {length}"))?;
        let mut terms = SeriesTerms::new(lambda.clone());
        let mut sum: Poly2<BigRational> = Poly2::zero();
        let mut bounds = Vec::new();
        for _ in 0..n_terms {
            let h = terms.next().expect("series iterator is infinite");
            bounds.push(h.sup_bound(length));
            sum = &sum + &h;
        }
        let next = terms.next().expect("series iterator is infinite").to_f64();
        let third = BigRational::new(1.into(), 3.into());
        let series = sum.scale(&(lambda.clone() * third)).to_f64();
        let mut k = Self::finish(lambda_f, length, Poly2::zero(), n_terms, bounds, &next);
        k.set_series(series);
        Ok(k)
    }

    fn finish(lambda: f64, length: f64, h_sum: Poly2, n_terms: usize, mut bounds: Vec<f64>, next: &Poly2) -> Self {
        let scale = lambda / 3.0;
        let b_last = *bounds.last().expect("at least one term");
        let b_next = next.sup_bound(length);
        bounds.push(b_next);
        let q = if b_last > 0.0 { b_next / b_last } else { 0.0 };
        let (tail_bound, deriv_tail_bound) = if q < 1.0 {
            let n1 = n_terms as f64; // index of the first dropped term
            let geo = 1.0 / (1.0 - q);
            (scale * b_next * geo, scale * b_next / length * ((2.0 * n1 + 1.0) * geo + 2.0 * q * geo * geo))
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let pde_tail_bound = lambda * next.diff(Var::S, 2).diff(Var::T, 1).sup_bound(length);
        let series = h_sum.scale(&scale);
        let mut k = Self {
            lambda,
            length,
            series: Poly2::zero(),
            n_terms,
            tail_bound,
            deriv_tail_bound,
            pde_tail_bound,
            term_bounds: bounds,
            g_s: Poly2::zero(),
            g_t: Poly2::zero(),
        };
        k.set_series(series);
        k
    }

    fn set_series(&mut self, series: Poly2) {
        self.g_s = series.diff(Var::S, 1);
        self.g_t = series.diff(Var::T, 1);
        self.series = series;
    }

    fn check_triangle(&self, x: f64, y: f64) -> Result<()> {
        let eps = 1e-12 * self.length.max(1.0);
        if y < -eps || y > x + eps || x > self.length + eps || !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain { x, y, length: self.length });
        }
        Ok(())
    }

    /// `k(x, y) = G(x - y, y)` on `0 <= y <= x <= L`.
    pub fn value(&self, x: f64, y: f64) -> Result<f64> {
        self.check_triangle(x, y)?;
        Ok(self.series.eval(x - y, y))
    }

    /// `k_x(x, y) = G_s(x - y, y)`.
    pub fn dx(&self, x: f64, y: f64) -> Result<f64> {
        self.check_triangle(x, y)?;
        Ok(self.g_s.eval(x - y, y))
    }

    /// `k_y(x, y) = -G_s(x - y, y) + G_t(x - y, y)`.
    pub fn dy(&self, x: f64, y: f64) -> Result<f64> {
        self.check_triangle(x, y)?;
        let s = x - y;
        Ok(self.g_t.eval(s, y) - self.g_s.eval(s, y))
    }

    /// `x ↦ k_y(x, 0) = G_t(x, 0)`.
    pub fn trace_ky0(&self) -> Poly1 {
        self.g_t.restrict_t(0.0)
    }

    /// `y ↦ k(L, y)`.
    pub fn trace_kl(&self) -> Poly1 {
        self.series.along_antidiagonal(self.length)
    }

    /// `y ↦ k_x(L, y)`.
    pub fn trace_kxl(&self) -> Poly1 {
        self.g_s.along_antidiagonal(self.length)
    }

    pub fn norm_ky0_sq(&self) -> f64 {
        self.trace_ky0().int_sq(self.length).expect("length > 0")
    }

    pub fn norm_kxl_sq(&self) -> f64 {
        self.trace_kxl().int_sq(self.length).expect("length > 0")
    }

    /// Two-controller decay rate `λ - ½ ‖k_y(·, 0)‖²`.
    pub fn alpha(&self) -> f64 {
        self.lambda - 0.5 * self.norm_ky0_sq()
    }

    /// Single-controller decay rate, penalised by `‖k_x(L, ·)‖` and the
    /// norm of the inverse transform.
    pub fn beta(&self, invnorm: f64) -> Result<f64> {
        require(invnorm >= 1.0 - 1e-12, || format!("inverse norm must be >= 1, got {invnorm}"))?;
        Ok(self.alpha() - 0.5 * self.norm_kxl_sq() * invnorm * invnorm)
    }

    pub fn decay_report(&self, invnorm: Option<f64>) -> Result<DecayReport> {
        let beta = invnorm.map(|n| self.beta(n)).transpose()?;
        Ok(DecayReport {
            alpha: self.alpha(),
            beta,
            norm_ky0_sq: self.norm_ky0_sq(),
            norm_kxl_sq: self.norm_kxl_sq(),
            invnorm,
        })
    }

    /// `G_ttt - 3 G_stt + 3 G_sst + G_t + λ G` for the truncated series.
    pub fn residual_poly(&self) -> Poly2 {
        let g = &self.series;
        let g_ttt = g.diff(Var::T, 3);
        let g_stt = g.diff(Var::S, 1).diff(Var::T, 2).scale(&-3.0);
        let g_sst = g.diff(Var::S, 2).diff(Var::T, 1).scale(&3.0);
        let lin = g.scale(&self.lambda);
        let parts = [g_ttt, g_stt, g_sst, self.g_t.clone(), lin];
        let mut out = Poly2::zero();
        for p in &parts {
            for (m, c) in p.terms() {
                out.add_term(*m, *c);
            }
        }
        out
    }

    /// Max absolute kernel-PDE residual over `(s, t)` sample points in the
    /// triangle `s, t >= 0, s + t <= L`.
    pub fn residual(&self, points: &[(f64, f64)]) -> Result<f64> {
        let r = self.residual_poly();
        let mut worst = 0.0f64;
        for &(s, t) in points {
            self.check_triangle(s + t, t)?;
            worst = worst.max(r.eval(s, t).abs());
        }
        Ok(worst)
    }

    /// `(3/λ) sup_bound(G_t)`, a computable stand-in for the constant that
    /// bounds `‖G_t‖_∞ <= λ M / 3`.
    pub fn measured_m(&self) -> f64 {
        3.0 / self.lambda * self.g_t.sup_bound(self.length)
    }

    /// JSON dump: `{lambda, L, n_terms, tail_bound, terms: [[s_exp, t_exp, coeff], ...]}`
    /// with coefficients printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"lambda\": {}, \"L\": {}, \"n_terms\": {}, \"tail_bound\": {}, \"terms\": [",
            fmt17(self.lambda),
            fmt17(self.length),
            self.n_terms,
            fmt17(self.tail_bound)
        );
        for (i, (m, c)) in self.series.terms().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "[{}, {}, {}]", m.s_exp, m.t_exp, fmt17(*c));
        }
        out.push_str("]}\n");
        out
    }
}

fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // JSON has no infinity; a huge sentinel keeps the file parseable
        "1e308".to_string()
    }
}

/// Parsed kernel dump.
#[derive(Debug, Clone, Deserialize)]
pub struct KernelDump {
    pub lambda: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub n_terms: usize,
    pub tail_bound: f64,
    pub terms: Vec<(u32, u32, f64)>,
}

impl KernelDump {
    pub fn parse(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn series(&self) -> Poly2 {
        Poly2::from_terms(self.terms.iter().map(|&(a, b, c)| (Monomial::new(a, b), c)))
    }
}

/// Convenience: α for a given (λ, L) with default truncation settings.
pub fn alpha(lambda: f64, length: f64) -> Result<f64> {
    Ok(PseudoKernel::with_defaults(lambda, length)?.alpha())
}

/// Sum of `(λ/3)·term_bounds`, i.e. a bound on the whole series in sup norm.
pub fn series_bound(k: &PseudoKernel) -> f64 {
    compensated_sum(k.term_bounds.iter().map(|b| b * k.lambda / 3.0))
}
