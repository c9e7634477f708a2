//! Implicit finite-difference time stepping of the target system and the plant.
//!
//! Grid: `x_j = j·δx`, `j = 0..=J`, `δx = L/J`. The unknowns are
//! `j = 1..=J-2`; entries `0`, `J-1`, `J` are fixed by the boundary
//! conditions of the mode being run.

use std::fmt;
use std::str::FromStr;

use crate::banded::{BandedLu, BandedMatrix};
use crate::error::{require, Error, Result};
use crate::kernel::PseudoKernel;
use crate::numeric::compensated_sum;
use crate::transform::{discretize_k, trapezoid_norm, trapezoid_weights, DiscreteK, GridFunction, SuccessionRule};

pub const BLOWUP_FACTOR: f64 = 1e6;
pub const INNER_TOL: f64 = 1e-10;
pub const INNER_MAX: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Controlled2,
    Controlled1,
    Uncontrolled,
    NonlinearControlled2,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Controlled2, Mode::Controlled1, Mode::Uncontrolled, Mode::NonlinearControlled2];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Controlled2 => "controlled2",
            Mode::Controlled1 => "controlled1",
            Mode::Uncontrolled => "uncontrolled",
            Mode::NonlinearControlled2 => "nonlinear_controlled2",
        }
    }

    pub fn needs_kernel(self) -> bool {
        self != Mode::Uncontrolled
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Precondition(format!("unknown mode '{s}'")))
    }
}

/// Difference stencil used for `w_x + w_xxx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `D+D+D- + D`, offsets -1..=2.
    #[default]
    OneSided,
    /// Second-order central third difference, offsets -2..=2. Row 1 falls
    /// back to the `OneSided` row since `w_{-1}` does not exist.
    Centered,
}

impl FromStr for Stencil {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_sided" => Ok(Stencil::OneSided),
            "centered" => Ok(Stencil::Centered),
            _ => Err(Error::Precondition(format!("unknown stencil '{s}'"))),
        }
    }
}

/// `(offset, coefficient)` pairs of row `j`.
pub fn stencil_row(stencil: Stencil, j: usize, dx: f64) -> Vec<(isize, f64)> {
    let d3 = dx * dx * dx;
    let d1 = 0.5 / dx;
    match stencil {
        Stencil::Centered if j >= 2 => vec![(-2, -0.5 / d3), (-1, 1.0 / d3 - d1), (1, -1.0 / d3 + d1), (2, 0.5 / d3)],
        _ => vec![(-1, -1.0 / d3 - d1), (0, 3.0 / d3), (1, -3.0 / d3 + d1), (2, 1.0 / d3)],
    }
}

/// The banded matrix of `w_x + w_xxx` on unknowns `j = 1..=J-2`
/// (matrix row `i` is grid index `i + 1`).
pub fn build_a(j_cells: usize, dx: f64, stencil: Stencil) -> Result<BandedMatrix> {
    require(j_cells >= 8, || format!("J must be >= 8, got {j_cells}"))?;
    require(dx > 0.0, || format!("dx must be > 0, got {dx}"))?;
    let n = j_cells - 2;
    let kl = match stencil {
        Stencil::OneSided => 1,
        Stencil::Centered => 2,
    };
    let mut a = BandedMatrix::zeros(n, kl, 2);
    for j in 1..=n {
        for (off, c) in stencil_row(stencil, j, dx) {
            let col = j as isize + off;
            if (1..=n as isize).contains(&col) {
                a.add(j - 1, col as usize - 1, c);
            }
        }
    }
    Ok(a)
}

/// `𝒞 = (1 + δt λ) I + δt 𝒜`, factored.
pub fn factor_c(a: &BandedMatrix, dt: f64, lambda: f64) -> Result<BandedLu> {
    a.scaled_plus_identity(dt, 1.0 + dt * lambda).factor()
}

/// One step `w^{n+1} = 𝒞^{-1}(w^n + (δt/δx) g_j w_1^n)` on the full grid.
pub fn step_target(w: &mut [f64], c: &BandedLu, gain: &[f64], dt: f64, dx: f64) -> Result<()> {
    let j = w.len() - 1;
    if c.n() + 2 != j || gain.len() != w.len() {
        return Err(Error::Shape { expected: c.n() + 3, got: w.len() });
    }
    let trace = dt / dx * w[1];
    let mut rhs: Vec<f64> = (1..j - 1).map(|i| w[i] + trace * gain[i]).collect();
    c.solve_in_place(&mut rhs)?;
    w[1..j - 1].copy_from_slice(&rhs);
    w[0] = 0.0;
    w[j - 1] = 0.0;
    w[j] = 0.0;
    Ok(())
}

/// Cell averages over `[x_j - δx/2, x_j + δx/2]` (3-point Gauss) for
/// `j = 1..=J-2`; entries `0`, `J-1`, `J` are zero.
pub fn init_cell_average(u0: impl Fn(f64) -> f64, j_cells: usize, length: f64) -> Result<GridFunction> {
    require(j_cells >= 8, || format!("J must be >= 8, got {j_cells}"))?;
    require(length > 0.0, || format!("length must be > 0, got {length}"))?;
    let dx = length / j_cells as f64;
    let xi = (0.6f64).sqrt();
    let nodes = [(-xi, 5.0 / 9.0), (0.0, 8.0 / 9.0), (xi, 5.0 / 9.0)];
    let mut values = vec![0.0; j_cells + 1];
    for (j, v) in values.iter_mut().enumerate().take(j_cells - 1).skip(1) {
        let mid = j as f64 * dx;
        *v = 0.5 * nodes.iter().map(|&(s, w)| w * u0(mid + 0.5 * dx * s)).sum::<f64>();
    }
    GridFunction::new(length, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub length: f64,
    pub j: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub lambda: f64,
    pub mode: Mode,
    pub stencil: Stencil,
    pub succession: SuccessionRule,
    /// Keep the plant state every this many steps (and at the end).
    pub snapshot_every: Option<usize>,
}

impl SchemeConfig {
    pub fn new(length: f64, j: usize, dt: f64, n_steps: usize, lambda: f64, mode: Mode) -> Self {
        Self {
            length,
            j,
            dt,
            n_steps,
            lambda,
            mode,
            stencil: Stencil::OneSided,
            succession: SuccessionRule::default(),
            snapshot_every: None,
        }
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn dx(&self) -> f64 {
        self.length / self.j as f64
    }

    fn validate(&self, kernel: Option<&PseudoKernel>, u0: &GridFunction) -> Result<()> {
        require(self.length > 0.0, || format!("length must be > 0, got {}", self.length))?;
        require(self.j >= 8, || format!("J must be >= 8, got {}", self.j))?;
        require(self.dt > 0.0 && self.dt.is_finite(), || format!("dt must be > 0, got {}", self.dt))?;
        require(self.lambda >= 0.0, || format!("lambda must be >= 0, got {}", self.lambda))?;
        if u0.values.len() != self.j + 1 {
            return Err(Error::Shape { expected: self.j + 1, got: u0.values.len() });
        }
        if self.mode.needs_kernel() {
            let k = kernel.ok_or_else(|| Error::Precondition(format!("mode {} needs a kernel", self.mode)))?;
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
            require(close(k.lambda, self.lambda) && close(k.length, self.length), || {
                format!(
                    "kernel built for (lambda {}, L {}) but config has (lambda {}, L {})",
                    k.lambda, k.length, self.lambda, self.length
                )
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub mode: Mode,
    pub times: Vec<f64>,
    /// `‖u‖ = sqrt(δx Σ u_j²)` of the plant.
    pub energy: Vec<f64>,
    /// Same norm of the marched state (the target `w̃` in controlled modes).
    pub target_energy: Vec<f64>,
    /// `w_1 / δx`.
    pub u_left_deriv: Vec<f64>,
    pub dirichlet_u: Vec<f64>,
    pub neumann_v: Vec<f64>,
    pub snapshots: Vec<(f64, GridFunction)>,
    /// Max over steps of `‖(I - K)u - w̃‖`.
    pub max_consistency_residual: f64,
    pub max_succession_iterations: usize,
    pub max_inner_iterations: usize,
}

impl SimTrace {
    fn new(mode: Mode, capacity: usize) -> Self {
        Self {
            mode,
            times: Vec::with_capacity(capacity),
            energy: Vec::with_capacity(capacity),
            target_energy: Vec::with_capacity(capacity),
            u_left_deriv: Vec::with_capacity(capacity),
            dirichlet_u: Vec::with_capacity(capacity),
            neumann_v: Vec::with_capacity(capacity),
            snapshots: Vec::new(),
            max_consistency_residual: 0.0,
            max_succession_iterations: 0,
            max_inner_iterations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t,energy,u_left_deriv,U,V`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,energy,u_left_deriv,U,V\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt12(self.times[i]),
                fmt12(self.energy[i]),
                fmt12(self.u_left_deriv[i]),
                fmt12(self.dirichlet_u[i]),
                fmt12(self.neumann_v[i])
            ));
        }
        out
    }
}

pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

/// CSV with columns `x,u`.
pub fn snapshot_csv(u: &GridFunction) -> String {
    let mut out = String::from("x,u\n");
    for (i, v) in u.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", fmt12(u.x(i)), fmt12(*v)));
    }
    out
}

fn grid_norm(v: &[f64], dx: f64) -> f64 {
    (dx * compensated_sum(v.iter().map(|x| x * x))).sqrt()
}

fn quadrature(weights: &[f64], f: &[f64], u: &[f64]) -> f64 {
    compensated_sum(weights.iter().zip(f).zip(u).map(|((w, f), u)| w * f * u))
}

struct Recorder<'a> {
    trace: SimTrace,
    dx: f64,
    dt: f64,
    weights: Vec<f64>,
    kl: Vec<f64>,
    kxl: Vec<f64>,
    snapshot_every: Option<usize>,
    n_steps: usize,
    length: f64,
    limit: Option<f64>,
    kd: Option<&'a DiscreteK>,
    rule: SuccessionRule,
}

impl Recorder<'_> {
    /// Records step `n`; for controlled modes `marched` is `w̃` and the plant
    /// state is rebuilt from it.
    fn record(&mut self, n: usize, marched: &[f64], dirichlet: Option<f64>) -> Result<()> {
        let t = n as f64 * self.dt;
        let plant: Vec<f64> = match self.kd {
            Some(kd) => {
                let psi = GridFunction { length: self.length, values: marched.to_vec() };
                let s = kd.inverse_succession(&psi, self.rule)?;
                self.trace.max_succession_iterations = self.trace.max_succession_iterations.max(s.iterations);
                let back = kd.forward_slice(&s.u.values)?;
                let diff: Vec<f64> = back.iter().zip(marched).map(|(a, b)| a - b).collect();
                let r = trapezoid_norm(&diff, self.dx);
                self.trace.max_consistency_residual = self.trace.max_consistency_residual.max(r);
                s.u.values
            }
            None => marched.to_vec(),
        };
        let e = grid_norm(&plant, self.dx);
        let limit = *self.limit.get_or_insert(BLOWUP_FACTOR * e);
        if (e > limit && limit > 0.0) || !e.is_finite() {
            return Err(Error::Blowup { time: t, energy: e, limit });
        }
        self.trace.times.push(t);
        self.trace.energy.push(e);
        self.trace.target_energy.push(grid_norm(marched, self.dx));
        self.trace.u_left_deriv.push(marched[1] / self.dx);
        self.trace.dirichlet_u.push(dirichlet.unwrap_or_else(|| quadrature(&self.weights, &self.kl, &plant)));
        self.trace.neumann_v.push(quadrature(&self.weights, &self.kxl, &plant));
        let snap = self.snapshot_every.is_some_and(|k| k > 0 && (n.is_multiple_of(k) || n == self.n_steps));
        if snap {
            self.trace.snapshots.push((t, GridFunction { length: self.length, values: plant }));
        }
        Ok(())
    }
}

/// Runs the scheme from the plant initial state `u0`.
pub fn simulate(config: &SchemeConfig, kernel: Option<&PseudoKernel>, u0: &GridFunction) -> Result<SimTrace> {
    config.validate(kernel, u0)?;
    let jc = config.j;
    let dx = config.dx();
    let dt = config.dt;
    let a = build_a(jc, dx, config.stencil)?;
    let sample = |p: Option<crate::poly::Poly1>| -> Vec<f64> {
        (0..=jc).map(|i| p.as_ref().map_or(0.0, |p| p.eval(i as f64 * dx))).collect()
    };
    let kernel = if config.mode.needs_kernel() { kernel } else { None };
    let kl = sample(kernel.map(|k| k.trace_kl()));
    let kxl = sample(kernel.map(|k| k.trace_kxl()));
    let kd = match (config.mode, kernel) {
        (Mode::Controlled2 | Mode::NonlinearControlled2, Some(k)) => Some(discretize_k(k, jc)?),
        _ => None,
    };
    let mut rec = Recorder {
        trace: SimTrace::new(config.mode, config.n_steps + 1),
        dx,
        dt,
        weights: trapezoid_weights(jc + 1, dx),
        kl,
        kxl,
        snapshot_every: config.snapshot_every,
        n_steps: config.n_steps,
        length: config.length,
        limit: None,
        kd: kd.as_ref(),
        rule: config.succession,
    };

    match config.mode {
        Mode::Uncontrolled => {
            let c = factor_c(&a, dt, 0.0)?;
            let gain = vec![0.0; jc + 1];
            let mut w = u0.values.clone();
            w[0] = 0.0;
            w[jc - 1] = 0.0;
            w[jc] = 0.0;
            rec.record(0, &w, None)?;
            for n in 1..=config.n_steps {
                step_target(&mut w, &c, &gain, dt, dx)?;
                rec.record(n, &w, None)?;
            }
        }
        Mode::Controlled2 | Mode::NonlinearControlled2 => {
            let k = kernel.expect("validated");
            let kd = kd.as_ref().expect("built above");
            let c = factor_c(&a, dt, config.lambda)?;
            let gain = sample(Some(k.trace_ky0()));
            let mut w = kd.forward_slice(&u0.values)?;
            w[0] = 0.0;
            w[jc - 1] = 0.0;
            w[jc] = 0.0;
            rec.record(0, &w, None)?;
            for n in 1..=config.n_steps {
                if config.mode == Mode::Controlled2 {
                    step_target(&mut w, &c, &gain, dt, dx)?;
                } else {
                    let iters = step_nonlinear(&mut w, &c, &gain, kd, dt, dx, n)?;
                    rec.trace.max_inner_iterations = rec.trace.max_inner_iterations.max(iters);
                }
                rec.record(n, &w, None)?;
            }
        }
        Mode::Controlled1 => {
            let c = factor_c(&a, dt, 0.0)?;
            let couplings = boundary_couplings(jc, dx, config.stencil);
            let mut u = u0.values.clone();
            u[0] = 0.0;
            rec.record(0, &u, Some(u[jc]))?;
            for n in 1..=config.n_steps {
                let big_u = quadrature(&rec.weights, &rec.kl, &u);
                let mut rhs: Vec<f64> = u[1..jc - 1].to_vec();
                for &(row, coeff) in &couplings {
                    rhs[row - 1] -= dt * coeff * big_u;
                }
                c.solve_in_place(&mut rhs)?;
                u[1..jc - 1].copy_from_slice(&rhs);
                u[jc - 1] = big_u;
                u[jc] = big_u;
                rec.record(n, &u, Some(big_u))?;
            }
        }
    }
    Ok(rec.trace)
}

/// Rows `j` and summed coefficients that couple to `u_{J-1}` or `u_J`.
fn boundary_couplings(jc: usize, dx: f64, stencil: Stencil) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for j in 1..=jc - 2 {
        let c: f64 = stencil_row(stencil, j, dx)
            .into_iter()
            .filter(|&(off, _)| {
                let col = j as isize + off;
                col == jc as isize - 1 || col == jc as isize
            })
            .map(|(_, c)| c)
            .sum();
        if c != 0.0 {
            out.push((j, c));
        }
    }
    out
}

/// Nonlinear step: fixed point on
/// `𝒞 w = w^n + (δt/δx) g w_1^n - δt (I - K)[u D u]`, `u = (I - K)^{-1} w`.
fn step_nonlinear(
    w: &mut [f64],
    c: &BandedLu,
    gain: &[f64],
    kd: &DiscreteK,
    dt: f64,
    dx: f64,
    step: usize,
) -> Result<usize> {
    let jc = w.len() - 1;
    let trace = dt / dx * w[1];
    let linear: Vec<f64> = (1..jc - 1).map(|i| w[i] + trace * gain[i]).collect();
    let mut iterate = w.to_vec();
    let mut flux = vec![0.0; jc + 1];
    for it in 1..=INNER_MAX {
        let u = kd.inverse_direct_slice(&iterate)?;
        for j in 1..jc {
            flux[j] = u[j] * (u[j + 1] - u[j - 1]) / (2.0 * dx);
        }
        let g = kd.forward_slice(&flux)?;
        let mut rhs: Vec<f64> = linear.iter().zip(&g[1..jc - 1]).map(|(l, g)| l - dt * g).collect();
        c.solve_in_place(&mut rhs)?;
        let inc = grid_norm(&rhs.iter().zip(&iterate[1..jc - 1]).map(|(a, b)| a - b).collect::<Vec<_>>(), dx);
        iterate[1..jc - 1].copy_from_slice(&rhs);
        if inc < INNER_TOL {
            w.copy_from_slice(&iterate);
            w[0] = 0.0;
            w[jc - 1] = 0.0;
            w[jc] = 0.0;
            return Ok(it);
        }
    }
    Err(Error::NoConvergence { what: format!("nonlinear inner iteration at step {step}"), iterations: INNER_MAX })
}

/// Negated least-squares slope of `ln v` against `t` over `[t_start, t_end]`.
pub fn fit_log_slope(times: &[f64], values: &[f64], t_start: f64, t_end: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Shape { expected: times.len(), got: values.len() });
    }
    let pts: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(t, _)| **t >= t_start && **t <= t_end).map(|(t, v)| (*t, *v)).collect();
    require(pts.len() >= 2, || format!("window [{t_start}, {t_end}] holds fewer than two samples"))?;
    require(pts.iter().all(|(_, v)| *v > 0.0), || "energy must be > 0 on the fit window".into())?;
    let n = pts.len() as f64;
    let mt = compensated_sum(pts.iter().map(|p| p.0)) / n;
    let my = compensated_sum(pts.iter().map(|p| p.1.ln())) / n;
    let sxy = compensated_sum(pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - my)));
    let sxx = compensated_sum(pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)));
    Ok(-sxy / sxx)
}

/// Fitted exponential decay rate of `‖u(t)‖`.
pub fn fit_decay_rate(trace: &SimTrace, t_start: f64, t_end: f64) -> Result<f64> {
    fit_log_slope(&trace.times, &trace.energy, t_start, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn a_annihilates_constants_in_the_interior() {
        let jc = 20;
        let dx = 0.1;
        for stencil in [Stencil::OneSided, Stencil::Centered] {
            for j in 2..jc - 3 {
                let s: f64 = stencil_row(stencil, j, dx).iter().map(|p| p.1).sum();
                assert!(s.abs() < 1e-9, "{stencil:?} row {j}: {s}");
            }
        }
    }

    #[test]
    fn one_sided_stencil_bandwidth() {
        let a = build_a(16, 0.2, Stencil::OneSided).unwrap();
        let d = a.to_dense();
        for (r, row) in d.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let off = c as isize - r as isize;
                if *v != 0.0 {
                    assert!((-1..=2).contains(&off), "({r}, {c})");
                }
            }
        }
        let d3 = 0.2f64 * 0.2 * 0.2;
        assert_eq!(d[3][2], -1.0 / d3 - 2.5);
        assert_eq!(d[3][5], 1.0 / d3);
    }

    #[test]
    fn build_a_rejects_small_grids() {
        assert!(build_a(7, 0.1, Stencil::OneSided).is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let a = build_a(12, 0.5, Stencil::OneSided).unwrap();
        let c = factor_c(&a, 0.01, 0.1).unwrap();
        let mut w = vec![0.0; 13];
        step_target(&mut w, &c, &[1.0; 13], 0.01, 0.5).unwrap();
        assert!(w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cell_average_of_constant() {
        let g = init_cell_average(|_| 2.5, 10, 1.0).unwrap();
        assert_eq!(g.values[0], 0.0);
        assert_eq!(g.values[9], 0.0);
        assert_eq!(g.values[10], 0.0);
        assert!(g.values[1..9].iter().all(|v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn cell_average_of_one_minus_cos() {
        let jc = 64;
        let l = 2.0 * PI;
        let dx = l / jc as f64;
        let g = init_cell_average(|x| 1.0 - x.cos(), jc, l).unwrap();
        for j in 1..jc - 1 {
            let (a, b) = (j as f64 * dx - 0.5 * dx, j as f64 * dx + 0.5 * dx);
            let exact = 1.0 - (b.sin() - a.sin()) / dx;
            assert!((g.values[j] - exact).abs() < 1e-10, "j={j}");
        }
    }

    #[test]
    fn exponential_fit() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|t| 3.0 * (-0.5 * t).exp()).collect();
        assert!((fit_log_slope(&t, &e, 0.0, 10.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(fit_log_slope(&t, &vec![0.0; 100], 0.0, 10.0).is_err());
        assert!(fit_log_slope(&t, &e, 20.0, 30.0).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("sideways".parse::<Mode>().is_err());
    }

    #[test]
    fn controlled_modes_need_a_kernel() {
        let cfg = SchemeConfig::new(1.0, 10, 0.01, 5, 0.1, Mode::Controlled2);
        let u0 = GridFunction::zeros(1.0, 10);
        assert!(matches!(simulate(&cfg, None, &u0), Err(Error::Precondition(_))));
        let k = PseudoKernel::with_defaults(0.2, 1.0).unwrap();
        assert!(matches!(simulate(&cfg, Some(&k), &u0), Err(Error::Precondition(_))));
    }
}
