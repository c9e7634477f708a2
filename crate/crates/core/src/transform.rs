//! Discrete Volterra transform `w = u - K u` and its inverse.

use nalgebra::DMatrix;

use crate::error::{require, Error, Result};
use crate::kernel::PseudoKernel;
use crate::numeric::compensated_sum;

pub const SUCCESSION_TOL: f64 = 1e-10;
pub const SUCCESSION_MAX: usize = 200;

/// Samples at `x_j = j·L/J`, `j = 0..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub length: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(length: f64, values: Vec<f64>) -> Result<Self> {
        require(length > 0.0, || format!("length must be > 0, got {length}"))?;
        require(values.len() >= 5, || format!("need J >= 4, got {} samples", values.len()))?;
        require(values.iter().all(|v| v.is_finite()), || "grid values must be finite".into())?;
        Ok(Self { length, values })
    }

    pub fn zeros(length: f64, j: usize) -> Self {
        Self { length, values: vec![0.0; j + 1] }
    }

    pub fn from_fn(length: f64, j: usize, f: impl Fn(f64) -> f64) -> Self {
        let dx = length / j as f64;
        Self { length, values: (0..=j).map(|i| f(i as f64 * dx)).collect() }
    }

    pub fn j(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dx(&self) -> f64 {
        self.length / self.j() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Trapezoid `L²` norm.
    pub fn norm(&self) -> f64 {
        trapezoid_norm(&self.values, self.dx())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        check_len(self.values.len(), other.values.len())?;
        Ok(GridFunction {
            length: self.length,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { expected, got });
    }
    Ok(())
}

/// Trapezoid weights `δx` with halves at both ends.
pub fn trapezoid_weights(n_points: usize, dx: f64) -> Vec<f64> {
    let mut w = vec![dx; n_points];
    if let Some(first) = w.first_mut() {
        *first = 0.5 * dx;
    }
    if let Some(last) = w.last_mut() {
        *last = 0.5 * dx;
    }
    w
}

pub fn trapezoid_norm(values: &[f64], dx: f64) -> f64 {
    let w = trapezoid_weights(values.len(), dx);
    compensated_sum(values.iter().zip(&w).map(|(v, w)| w * v * v)).sqrt()
}

/// Lower-triangular quadrature matrix of `(Kφ)(x_j) = ∫_0^{x_j} k(x_j, y) φ(y) dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteK {
    length: f64,
    /// Row `j` holds columns `0..=j`.
    rows: Vec<Vec<f64>>,
}

/// Outcome of the successive-approximation inverse.
#[derive(Debug, Clone)]
pub struct Succession {
    pub u: GridFunction,
    pub iterations: usize,
    /// `‖v^m - v^{m-1}‖` (or `‖v^0‖` when m = 0).
    pub last_increment: f64,
    pub increments: Vec<f64>,
    pub converged: bool,
}

/// How many succession steps to take.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuccessionRule {
    Fixed(usize),
    Adaptive { tol: f64, max: usize },
}

impl Default for SuccessionRule {
    fn default() -> Self {
        SuccessionRule::Adaptive { tol: SUCCESSION_TOL, max: SUCCESSION_MAX }
    }
}

impl DiscreteK {
    /// Trapezoid rule on `[0, x_j]` for an arbitrary kernel `k(x, y)`.
    pub fn from_fn(length: f64, j: usize, k: impl Fn(f64, f64) -> f64) -> Result<Self> {
        require(j >= 4, || format!("J must be >= 4, got {j}"))?;
        require(length > 0.0, || format!("length must be > 0, got {length}"))?;
        let dx = length / j as f64;
        let mut rows = Vec::with_capacity(j + 1);
        rows.push(vec![0.0]);
        for r in 1..=j {
            let x = r as f64 * dx;
            let w = trapezoid_weights(r + 1, dx);
            rows.push((0..=r).map(|c| w[c] * k(x, c as f64 * dx)).collect());
        }
        Ok(Self { length, rows })
    }

    pub fn zeros(length: f64, j: usize) -> Result<Self> {
        Self::from_fn(length, j, |_, _| 0.0)
    }

    pub fn j(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn dx(&self) -> f64 {
        self.length / self.j() as f64
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c > r {
            0.0
        } else {
            self.rows[r][c]
        }
    }

    pub fn apply_slice(&self, phi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows.len(), phi.len())?;
        Ok(self.rows.iter().map(|row| row.iter().zip(phi).map(|(k, p)| k * p).sum()).collect())
    }

    pub fn apply(&self, phi: &GridFunction) -> Result<GridFunction> {
        Ok(GridFunction { length: self.length, values: self.apply_slice(&phi.values)? })
    }

    pub fn forward_slice(&self, u: &[f64]) -> Result<Vec<f64>> {
        let ku = self.apply_slice(u)?;
        Ok(u.iter().zip(ku).map(|(a, b)| a - b).collect())
    }

    /// `w = u - K u`.
    pub fn forward(&self, u: &GridFunction) -> Result<GridFunction> {
        Ok(GridFunction { length: self.length, values: self.forward_slice(&u.values)? })
    }

    /// Solves `(I - K) u = ψ` row by row.
    pub fn inverse_direct_slice(&self, psi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows.len(), psi.len())?;
        let mut u = vec![0.0; psi.len()];
        for (j, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..j].iter().zip(&u[..j]).map(|(k, v)| k * v).sum();
            u[j] = (psi[j] + s) / (1.0 - row[j]);
        }
        Ok(u)
    }

    pub fn inverse_direct(&self, psi: &GridFunction) -> Result<GridFunction> {
        Ok(GridFunction { length: self.length, values: self.inverse_direct_slice(&psi.values)? })
    }

    /// `u = ψ + v` with `v^0 = Kψ`, `v^k = K(ψ + v^{k-1})`.
    pub fn inverse_succession(&self, psi: &GridFunction, rule: SuccessionRule) -> Result<Succession> {
        let (max, tol) = match rule {
            SuccessionRule::Fixed(m) => {
                require(m >= 1, || "m must be >= 1".into())?;
                (m, None)
            }
            SuccessionRule::Adaptive { tol, max } => {
                require(tol > 0.0 && max >= 1, || "adaptive succession needs tol > 0, max >= 1".into())?;
                (max, Some(tol))
            }
        };
        let dx = self.dx();
        let mut v = self.apply_slice(&psi.values)?;
        let mut increments = vec![trapezoid_norm(&v, dx)];
        let mut iterations = 0;
        let mut converged = tol.is_some_and(|t| increments[0] < t);
        let mut sum = vec![0.0; v.len()];
        while iterations < max && !converged {
            for ((s, p), vi) in sum.iter_mut().zip(&psi.values).zip(&v) {
                *s = p + vi;
            }
            let next = self.apply_slice(&sum)?;
            let diff: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
            let inc = trapezoid_norm(&diff, dx);
            increments.push(inc);
            v = next;
            iterations += 1;
            converged = tol.is_some_and(|t| inc < t);
        }
        let u = psi.values.iter().zip(&v).map(|(p, vi)| p + vi).collect();
        Ok(Succession {
            u: GridFunction { length: self.length, values: u },
            iterations,
            last_increment: *increments.last().expect("at least v^0"),
            increments,
            converged: tol.is_none() || converged,
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        DMatrix::from_fn(n, n, |r, c| self.get(r, c))
    }

    /// Operator norm of `(I - K)^{-1}` on the trapezoid-weighted `L²` space,
    /// i.e. the largest singular value of `W^{1/2} M W^{-1/2}`.
    pub fn invnorm_estimate(&self) -> f64 {
        let n = self.rows.len();
        let w = trapezoid_weights(n, self.dx());
        let mut inv = DMatrix::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.inverse_direct_slice(&e).expect("shape matches");
            for r in 0..n {
                inv[(r, c)] = col[r] * (w[r] / w[c]).sqrt();
            }
        }
        inv.singular_values().max()
    }

    /// Dense matrix as CSV, one row per line.
    pub fn to_csv(&self) -> String {
        let n = self.rows.len();
        let mut out = String::new();
        for r in 0..n {
            let line: Vec<String> = (0..n).map(|c| format!("{:.11e}", self.get(r, c))).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Quadrature of the built kernel on a `J`-cell grid over `[0, L]`.
pub fn discretize_k(kernel: &PseudoKernel, j: usize) -> Result<DiscreteK> {
    let series = &kernel.series;
    DiscreteK::from_fn(kernel.length, j, |x, y| series.eval((x - y).max(0.0), y))
}
