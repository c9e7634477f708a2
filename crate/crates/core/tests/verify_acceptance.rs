//! Runs every acceptance criterion and prints one PASS/FAIL line per
//! criterion; exits nonzero if any fails. INFO lines are diagnostics only.

use std::f64::consts::PI;
use std::time::Instant;

use kdvbs_core::kernel::SeriesTerms;
use kdvbs_core::spectral::{asymptotic_constant, char_det_scaled, imaginary_axis_min};
use kdvbs_core::transform::trapezoid_norm;
use kdvbs_core::{
    discretize_k, find_eigenvalues, fit_decay_rate, init_cell_average, simulate, GridFunction, Mode, PseudoKernel,
    SchemeConfig, SimTrace, Stencil, SuccessionRule,
};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: f64 = 2.0 * PI;

/// Published decay rates with the significant figures they must match.
const PUBLISHED: [(f64, f64, u32); 7] = [
    (0.01, 0.00954938, 4),
    (0.02, 0.0167563, 4),
    (0.03, 0.0181985, 4),
    (0.04, 0.00844268, 4),
    (0.05, -0.0203987, 4),
    (0.10, -0.961935, 4),
    (1.0, -83925.8, 3),
];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

fn bump(x: f64) -> f64 {
    1.0 - x.cos()
}

fn run(
    mode: Mode,
    lambda: f64,
    j: usize,
    dt: f64,
    t_final: f64,
    amp: f64,
    stencil: Stencil,
) -> kdvbs_core::Result<SimTrace> {
    let steps = (t_final / dt).round() as usize;
    let mut cfg = SchemeConfig::new(L, j, dt, steps, lambda, mode);
    cfg.stencil = stencil;
    let kernel = if mode.needs_kernel() { Some(PseudoKernel::with_defaults(lambda, L)?) } else { None };
    let u0 = init_cell_average(|x| amp * bump(x), j, L)?;
    simulate(&cfg, kernel.as_ref(), &u0)
}

fn halton(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn triangle_points(n: usize) -> Vec<(f64, f64)> {
    (1u64..)
        .map(|i| (halton(i, 2), halton(i, 3)))
        .filter(|(u, v)| u + v <= 1.0)
        .take(n)
        .map(|(u, v)| (u * L, v * L))
        .collect()
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn factorial(n: u32) -> BigRational {
    (1..=n).fold(BigRational::one(), |acc, k| acc * BigRational::from_integer(BigInt::from(k)))
}

fn criterion_1() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (lambda, want, digits) in PUBLISHED {
        let start = Instant::now();
        let k = match PseudoKernel::with_defaults(lambda, L) {
            Ok(k) => k,
            Err(e) => return Verdict::error(e),
        };
        let secs = start.elapsed().as_secs_f64();
        let got = k.alpha();
        let rel = (got - want).abs() / want.abs();
        let row_ok = rel < 0.5 * 10f64.powi(1 - digits as i32) && secs < 10.0;
        ok &= row_ok;
        parts.push(format!("{lambda}: {got:.6e} vs {want:.6e} ({}, {secs:.2}s)", if row_ok { "ok" } else { "off" }));
    }
    Verdict::new(ok, parts.join("; "))
}

fn criterion_2() -> Verdict {
    let pts = triangle_points(100);
    let mut ok = true;
    let mut parts = Vec::new();
    for lambda in [0.01, 0.03, 0.05, 0.1, 1.0] {
        let k = match PseudoKernel::with_defaults(lambda, L) {
            Ok(k) => k,
            Err(e) => return Verdict::error(e),
        };
        let mut structural = true;
        for i in 0..=200 {
            let x = L * i as f64 / 200.0;
            let kxx = k.dx(x, x).unwrap();
            let want = lambda / 3.0 * x;
            structural &= k.value(x, x).unwrap() == 0.0
                && k.value(x, 0.0).unwrap() == 0.0
                && (kxx - want).abs() <= 4.0 * f64::EPSILON * want.abs();
        }
        let residual = k.residual(&pts).unwrap();
        let residual_ok = residual <= k.deriv_tail_bound;

        let tilde = lambda.max(1.0);
        let mut coeff_ok = true;
        for (n, h) in SeriesTerms::new(lambda).take(k.n_terms + 1).enumerate() {
            let lam_n = tilde.powi(n as i32);
            let fact_n1: f64 = (1..=n + 1).map(|v| v as f64).product();
            for (m, c) in h.terms() {
                let fact_t: f64 = (1..=m.t_exp).map(f64::from).product();
                coeff_ok &= c.abs() <= lam_n / (fact_n1 * fact_t) * (1.0 + 1e-12);
            }
        }
        let mut log_fact = 0.0;
        let mut major_ok = true;
        for (n, b) in k.term_bounds.iter().enumerate() {
            log_fact += ((n + 1) as f64).ln();
            let nf = n as f64;
            let log_major = nf * (4.0 * tilde).ln() + (3.0 * nf + 2.0) * L.ln() - log_fact;
            major_ok &= b.ln() <= log_major + 1e-12;
        }
        let all = structural && residual_ok && coeff_ok && major_ok;
        ok &= all;
        parts.push(format!(
            "{lambda}: bc {structural}, residual {residual:.2e} <= {:.2e} {residual_ok}, coeff {coeff_ok}, majorant {major_ok}",
            k.deriv_tail_bound
        ));
    }
    // the bound again with exact arithmetic
    let lam = rat(3, 100);
    let mut exact_ok = true;
    for (n, h) in SeriesTerms::new(lam).take(16).enumerate() {
        for (m, c) in h.terms() {
            exact_ok &= c.abs() <= BigRational::one() / (factorial(n as u32 + 1) * factorial(m.t_exp));
        }
    }
    ok &= exact_ok;
    parts.push(format!("exact coeff bound at 3/100: {exact_ok}"));
    Verdict::new(ok, parts.join("; "))
}

fn criterion_3() -> Verdict {
    let k = match PseudoKernel::with_defaults(0.03, L).and_then(|k| discretize_k(&k, 128)) {
        Ok(k) => k,
        Err(e) => return Verdict::error(e),
    };
    let n = k.j() + 1;
    let lu = (DMatrix::<f64>::identity(n, n) - k.to_dense()).lu();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_trip, mut worst_oracle) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let u = GridFunction::new(L, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let psi = k.forward(&u).unwrap();
        let s = k.inverse_succession(&psi, SuccessionRule::default()).unwrap();
        worst_trip = worst_trip.max(s.u.sub(&u).unwrap().norm() / u.norm());
        let oracle: Vec<f64> = lu.solve(&DVector::from_column_slice(&psi.values)).unwrap().iter().copied().collect();
        let d: Vec<f64> = s.u.values.iter().zip(&oracle).map(|(a, b)| a - b).collect();
        worst_oracle = worst_oracle.max(trapezoid_norm(&d, k.dx()) / trapezoid_norm(&oracle, k.dx()));
    }
    Verdict::new(
        worst_trip < 1e-8 && worst_oracle < 1e-10,
        format!("max round-trip error {worst_trip:.2e} (< 1e-8), max oracle gap {worst_oracle:.2e} (< 1e-10)"),
    )
}

fn drift(tr: &SimTrace) -> f64 {
    tr.energy.iter().map(|e| (e / tr.energy[0] - 1.0).abs()).fold(0.0, f64::max)
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let tr = match run(Mode::Uncontrolled, 0.0, 200, 1e-3, 50.0, 1.0, Stencil::OneSided) {
        Ok(t) => t,
        Err(e) => return Verdict::error(e),
    };
    let secs = start.elapsed().as_secs_f64();
    let d = drift(&tr);
    let rate = fit_decay_rate(&tr, 5.0, 50.0).unwrap();
    Verdict::new(
        d < 0.01 && rate.abs() < 1e-3 && secs < 60.0,
        format!("energy drift {:.2}% (< 1%), fitted rate {rate:.3e} (|.| < 1e-3), runtime {secs:.1}s", 100.0 * d),
    )
}

fn controlled_rate(j: usize, dt: f64, stencil: Stencil) -> kdvbs_core::Result<(f64, SimTrace)> {
    let tr = run(Mode::Controlled2, 0.03, j, dt, 30.0, 1.0, stencil)?;
    Ok((fit_decay_rate(&tr, 5.0, 30.0)?, tr))
}

fn criterion_5() -> Verdict {
    let ((rate, tr), (fine, _)) = match controlled_rate(200, 1e-3, Stencil::OneSided)
        .and_then(|a| Ok((a, controlled_rate(400, 5e-4, Stencil::OneSided)?)))
    {
        Ok(v) => v,
        Err(e) => return Verdict::error(e),
    };
    let threshold = 0.8 * 0.0181985;
    let u_max = tr.dirichlet_u.iter().map(|u| u.abs()).fold(0.0, f64::max);
    let u_end = tr.dirichlet_u.last().unwrap().abs();
    let change = (fine - rate).abs() / rate.abs();
    Verdict::new(
        rate >= threshold && u_end < 0.05 * u_max && change < 0.05,
        format!(
            "rate {rate:.4e} (>= {threshold:.4e}), |U(T)|/max|U| {:.3} (< 0.05), refined rate {fine:.4e} changes {:.1}% (< 5%)",
            u_end / u_max,
            100.0 * change
        ),
    )
}

fn criterion_6() -> Verdict {
    let alpha = PseudoKernel::with_defaults(0.03, L).unwrap().alpha();
    let tr = match run(Mode::NonlinearControlled2, 0.03, 200, 1e-3, 30.0, 0.05, Stencil::OneSided) {
        Ok(t) => t,
        Err(e) => return Verdict::error(format!("{e} (inner iteration or blow-up)")),
    };
    let rate = fit_decay_rate(&tr, 5.0, 30.0).unwrap();
    Verdict::new(
        rate >= 0.8 * alpha,
        format!(
            "inner iteration converged every step (max {} iterations), rate {rate:.4e} (>= 0.8 alpha = {:.4e})",
            tr.max_inner_iterations,
            0.8 * alpha
        ),
    )
}

fn criterion_7() -> Verdict {
    let k = PseudoKernel::with_defaults(0.01, L).unwrap();
    let est = |j| discretize_k(&k, j).map(|d| d.invnorm_estimate());
    let (n256, n512) = match est(256).and_then(|a| Ok((a, est(512)?))) {
        Ok(v) => v,
        Err(e) => return Verdict::error(e),
    };
    let beta = k.beta(n256).unwrap();
    let change = (n512 - n256).abs() / n256;
    let rate = match run(Mode::Controlled1, 0.01, 200, 1e-3, 30.0, 1.0, Stencil::OneSided)
        .and_then(|tr| fit_decay_rate(&tr, 5.0, 30.0))
    {
        Ok(r) => r,
        Err(e) => return Verdict::error(e),
    };
    Verdict::new(
        beta > 0.0 && change < 0.02 && rate > 0.0,
        format!(
            "beta {beta:.4e} (> 0) with invnorm {n256:.6} at J=256, {n512:.6} at J=512 ({:.3}% < 2%), single-controller rate {rate:.4e} (> 0)",
            100.0 * change
        ),
    )
}

fn criterion_8() -> Verdict {
    let spec = match find_eigenvalues(L, 1, 20, 1e-12) {
        Ok(s) => s,
        Err(e) => return Verdict::error(e),
    };
    let found = spec.records.len() == 20 && spec.unresolved.is_empty();
    let max_re = spec.records.iter().map(|r| r.lam.re).fold(f64::NEG_INFINITY, f64::max);
    let max_res = spec.records.iter().map(|r| r.residual).fold(0.0, f64::max);
    let ratios: Vec<f64> = spec.records.iter().filter(|r| r.k >= 10).map(|r| r.ratio).collect();
    let ratio_ok = ratios.iter().all(|q| (q - 1.0).abs() < 0.05);
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), q| (a.min(*q), b.max(*q)));
    let axis = imaginary_axis_min(L, 1e-2, 1e3, 200_000).unwrap();
    // log-spaced refinement near the origin
    let near = (0..=400)
        .map(|i| 10f64.powf(-2.0 + 5.0 * i as f64 / 400.0))
        .flat_map(|xi| [xi, -xi])
        .map(|xi| char_det_scaled(Complex64::new(0.0, xi), L).unwrap().norm())
        .fold(f64::INFINITY, f64::min);
    let axis_min = axis.min(near);
    Verdict::new(
        found && max_re < 0.0 && ratio_ok && max_res < 1e-9 && axis_min > 1e-3,
        format!(
            "{} modes, max Re {max_re:.4e} (< 0), ratio to c k^3 for k in 10..=20 in [{lo:.3}, {hi:.3}] (within 5%), max residual {max_res:.1e} (< 1e-9), min |det| on 1e-2 <= |xi| <= 1e3 is {axis_min:.3} (c = {:.5})",
            spec.records.len(),
            asymptotic_constant(L)
        ),
    )
}

fn info_centered() -> Vec<String> {
    let mut out = Vec::new();
    match run(Mode::Uncontrolled, 0.0, 200, 1e-3, 50.0, 1.0, Stencil::Centered) {
        Ok(tr) => out.push(format!(
            "centered stencil, uncontrolled: drift {:.3}%, rate {:.3e}",
            100.0 * drift(&tr),
            fit_decay_rate(&tr, 5.0, 50.0).unwrap_or(f64::NAN)
        )),
        Err(e) => out.push(format!("centered stencil, uncontrolled: {e}")),
    }
    match controlled_rate(200, 1e-3, Stencil::Centered)
        .and_then(|(a, _)| Ok((a, controlled_rate(400, 5e-4, Stencil::Centered)?.0)))
    {
        Ok((a, b)) => out.push(format!(
            "centered stencil, controlled2: rate {a:.4e}, refined {b:.4e} ({:.2}% change)",
            100.0 * (b - a).abs() / a.abs()
        )),
        Err(e) => out.push(format!("centered stencil, controlled2: {e}")),
    }
    out
}

type Check = fn() -> Verdict;

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("decay rates at L = 2pi", criterion_1),
        ("kernel correctness", criterion_2),
        ("transform round trip", criterion_3),
        ("critical-length stationarity", criterion_4),
        ("controlled decay", criterion_5),
        ("nonlinear small-data decay", criterion_6),
        ("single-controller stability", criterion_7),
        ("spectral asymptotics", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("{} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    for line in info_centered() {
        println!("INFO {line}");
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
