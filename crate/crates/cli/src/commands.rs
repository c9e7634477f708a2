use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kdvbs_core::kernel::{DEFAULT_N_MAX, DEFAULT_TOL};
use kdvbs_core::simulator::{fmt12, snapshot_csv};
use kdvbs_core::spectral::eigen_csv;
use kdvbs_core::transform::trapezoid_norm;
use kdvbs_core::{
    discretize_k, find_eigenvalues, fit_decay_rate, init_cell_average, simulate as run_scheme, Error as CoreError,
    GridFunction, Mode, PseudoKernel, SchemeConfig, Stencil, SuccessionRule, VERSION,
};
use rayon::prelude::*;

use crate::config::{at_least, positive, ConfigFile};
use crate::error::CliError;
use crate::{KernelArgs, KernelOpts, SchemeOpts, SimulateArgs, SpectralArgs, SweepArgs, Table1Args, TransformArgs};

pub const TABLE_LAMBDAS: [f64; 7] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.1, 1.0];
pub const SWEEP_LAMBDAS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

/// One `# kdvbs <version> command=... key=value ...` line.
struct Meta(String);

impl Meta {
    fn new(command: &str) -> Self {
        Meta(format!("# kdvbs {VERSION} command={command}"))
    }

    fn add(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = write!(self.0, " {key}={value}");
        self
    }

    fn wrap(&self, body: &str) -> String {
        format!("{}\n{body}", self.0)
    }
}

/// Files go under `--out` when given, otherwise the primary output goes to stdout.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
        }
        Ok(Self { dir })
    }

    fn emit(&self, name: &str, content: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => write_file(&d.join(name), content),
            None => {
                print!("{content}");
                Ok(())
            }
        }
    }

    fn file(&self, name: &str, content: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => write_file(&d.join(name), content),
            None => Err(CliError::Usage(format!("{name} needs --out"))),
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| CliError::io(path, e))
}

struct KernelSettings {
    length: f64,
    tol: f64,
    n_max: usize,
}

impl KernelSettings {
    fn resolve(cfg: &ConfigFile, o: &KernelOpts) -> Result<Self, CliError> {
        Ok(Self {
            length: positive("length", cfg.pick(o.length, "length", 2.0 * PI)?)?,
            tol: positive("tol", cfg.pick(o.tol, "tol", DEFAULT_TOL)?)?,
            n_max: at_least("n-max", cfg.pick(o.n_max, "n_max", DEFAULT_N_MAX)?, 1)?,
        })
    }

    fn build(&self, lambda: f64) -> Result<PseudoKernel, CliError> {
        Ok(PseudoKernel::build(lambda, self.length, self.tol, self.n_max)?)
    }

    fn describe(&self, m: &mut Meta) {
        m.add("length", self.length).add("tol", self.tol).add("n_max", self.n_max);
    }
}

#[derive(Debug, Clone, Copy)]
enum Preset {
    OneMinusCos,
    Gaussian,
    Zero,
}

impl Preset {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "one_minus_cos" => Ok(Preset::OneMinusCos),
            "gaussian" => Ok(Preset::Gaussian),
            "zero" => Ok(Preset::Zero),
            _ => Err(CliError::Usage(format!("unknown u0 preset '{s}' (one_minus_cos, gaussian, zero)"))),
        }
    }

    fn eval(self, x: f64, length: f64) -> f64 {
        match self {
            Preset::OneMinusCos => 1.0 - x.cos(),
            Preset::Gaussian => (-(x - 0.5 * length).powi(2)).exp(),
            Preset::Zero => 0.0,
        }
    }
}

struct SchemeSettings {
    grid: usize,
    dt: f64,
    steps: usize,
    mode: Mode,
    stencil: Stencil,
    succession: SuccessionRule,
    u0: String,
    preset: Preset,
    amplitude: f64,
}

impl SchemeSettings {
    fn resolve(cfg: &ConfigFile, o: &SchemeOpts, default_mode: Mode) -> Result<Self, CliError> {
        let mode_name = cfg.pick(o.mode.clone(), "mode", default_mode.name().to_string())?;
        let stencil_name = cfg.pick(o.stencil.clone(), "stencil", "one_sided".to_string())?;
        let u0 = cfg.pick(o.u0.clone(), "u0", "one_minus_cos".to_string())?;
        let succession = match cfg.pick_opt(o.m_succession, "m_succession")? {
            None => SuccessionRule::default(),
            Some(m) => SuccessionRule::Fixed(at_least("m-succession", m, 1)?),
        };
        let amplitude = cfg.pick(o.amplitude, "amplitude", 1.0)?;
        if !amplitude.is_finite() {
            return Err(CliError::Usage(format!("--amplitude must be finite, got {amplitude}")));
        }
        Ok(Self {
            grid: at_least("grid", cfg.pick(o.grid, "grid", 200)?, 8)?,
            dt: positive("dt", cfg.pick(o.dt, "dt", 1e-3)?)?,
            steps: at_least("steps", cfg.pick(o.steps, "steps", 30_000)?, 1)?,
            mode: mode_name.parse().map_err(|e: CoreError| CliError::Usage(e.to_string()))?,
            stencil: stencil_name.parse().map_err(|e: CoreError| CliError::Usage(e.to_string()))?,
            succession,
            preset: Preset::parse(&u0)?,
            u0,
            amplitude,
        })
    }

    fn scheme(&self, length: f64, lambda: f64) -> SchemeConfig {
        let mut c = SchemeConfig::new(length, self.grid, self.dt, self.steps, lambda, self.mode);
        c.stencil = self.stencil;
        c.succession = self.succession;
        c
    }

    fn initial(&self, length: f64) -> Result<GridFunction, CliError> {
        let (p, a) = (self.preset, self.amplitude);
        Ok(init_cell_average(|x| a * p.eval(x, length), self.grid, length)?)
    }

    fn describe(&self, m: &mut Meta) {
        m.add("grid", self.grid)
            .add("dt", self.dt)
            .add("steps", self.steps)
            .add("mode", self.mode)
            .add("stencil", if self.stencil == Stencil::OneSided { "one_sided" } else { "centered" })
            .add(
                "m_succession",
                match self.succession {
                    SuccessionRule::Fixed(m) => m.to_string(),
                    SuccessionRule::Adaptive { .. } => "adaptive".to_string(),
                },
            )
            .add("u0", &self.u0)
            .add("amplitude", self.amplitude);
    }
}

fn gain(cfg: &ConfigFile, flag: Option<f64>, default: Option<f64>) -> Result<f64, CliError> {
    let v = match default {
        Some(d) => cfg.pick(flag, "lambda", d)?,
        None => cfg.pick_opt(flag, "lambda")?.ok_or_else(|| CliError::Usage("--lambda is required".into()))?,
    };
    positive("lambda", v)
}

fn fit_window(cfg: &ConfigFile, start: Option<f64>, end: Option<f64>, t_final: f64) -> Result<(f64, f64), CliError> {
    let t0 = cfg.pick(start, "fit_start", (0.1 * t_final).min(5.0))?;
    let t1 = cfg.pick(end, "fit_end", t_final)?;
    if !(t0 >= 0.0 && t1 > t0) {
        return Err(CliError::Usage(format!("fit window [{t0}, {t1}] is empty")));
    }
    Ok((t0, t1))
}

pub fn kernel(cfg: &ConfigFile, a: KernelArgs) -> Result<(), CliError> {
    let lambda = gain(cfg, a.lambda, None)?;
    let ks = KernelSettings::resolve(cfg, &a.kernel)?;
    let grid = cfg.pick_opt(a.grid, "grid")?.map(|j| at_least("grid", j, 4)).transpose()?;
    let k = ks.build(lambda)?;
    let invnorm = grid.map(|j| discretize_k(&k, j).map(|d| d.invnorm_estimate())).transpose()?;
    let r = k.decay_report(invnorm)?;

    let mut meta = Meta::new("kernel");
    meta.add("lambda", lambda);
    ks.describe(&mut meta);
    if let Some(j) = grid {
        meta.add("grid", j);
    }
    let opt = |v: Option<f64>| v.map(fmt12).unwrap_or_default();
    let report = meta.wrap(&format!(
        "lambda,n_terms,tail_bound,alpha,beta,norm_ky0_sq,norm_kxl_sq,invnorm\n{},{},{},{},{},{},{},{}\n",
        lambda,
        k.n_terms,
        fmt12(k.tail_bound),
        fmt12(r.alpha),
        opt(r.beta),
        fmt12(r.norm_ky0_sq),
        fmt12(r.norm_kxl_sq),
        opt(r.invnorm),
    ));

    let sink = Sink::new(a.out)?;
    let mut json = k.to_json();
    json.push('\n');
    sink.emit("kernel.json", &json)?;
    match sink.dir {
        Some(_) => sink.file("decay.csv", &report)?,
        None => eprint!("{report}"),
    }
    Ok(())
}

pub fn table1(cfg: &ConfigFile, a: Table1Args) -> Result<(), CliError> {
    let lambdas = cfg.pick_list(a.lambdas, "lambdas", &TABLE_LAMBDAS)?;
    if lambdas.is_empty() {
        return Err(CliError::Usage("--lambdas is empty".into()));
    }
    for &l in &lambdas {
        positive("lambdas", l)?;
    }
    let ks = KernelSettings::resolve(cfg, &a.kernel)?;
    let mut body = String::from("lambda,alpha,n_terms,tail_bound\n");
    for &l in &lambdas {
        let k = ks.build(l)?;
        let _ = writeln!(body, "{l},{},{},{}", fmt12(k.alpha()), k.n_terms, fmt12(k.tail_bound));
    }
    let mut meta = Meta::new("table1");
    meta.add("lambdas", join(&lambdas));
    ks.describe(&mut meta);
    Sink::new(a.out)?.emit("table1.csv", &meta.wrap(&body))
}

pub fn simulate(cfg: &ConfigFile, a: SimulateArgs) -> Result<(), CliError> {
    let ks = KernelSettings::resolve(cfg, &a.kernel)?;
    let ss = SchemeSettings::resolve(cfg, &a.scheme, Mode::Controlled2)?;
    let lambda = if ss.mode.needs_kernel() { gain(cfg, a.lambda, Some(0.03))? } else { 0.0 };
    let snapshot_every = cfg.pick_opt(a.snapshot_every, "snapshot_every")?;
    if let Some(n) = snapshot_every {
        at_least("snapshot-every", n, 1)?;
        if a.out.is_none() {
            return Err(CliError::Usage("--snapshot-every needs --out".into()));
        }
    }
    let mut sc = ss.scheme(ks.length, lambda);
    sc.snapshot_every = snapshot_every;
    let window = fit_window(cfg, a.fit_start, a.fit_end, sc.final_time())?;
    let k = if ss.mode.needs_kernel() { Some(ks.build(lambda)?) } else { None };
    let u0 = ss.initial(ks.length)?;
    let trace = run_scheme(&sc, k.as_ref(), &u0)?;

    let mut meta = Meta::new("simulate");
    meta.add("lambda", lambda);
    ks.describe(&mut meta);
    ss.describe(&mut meta);

    let sink = Sink::new(a.out)?;
    sink.emit("trace.csv", &meta.wrap(&trace.to_csv()))?;
    for (i, (t, u)) in trace.snapshots.iter().enumerate() {
        let mut m = Meta(meta.0.clone());
        m.add("t", fmt12(*t));
        sink.file(&format!("snapshot_{i:05}.csv"), &m.wrap(&snapshot_csv(u)))?;
    }
    match fit_decay_rate(&trace, window.0, window.1) {
        Ok(rate) => eprintln!("fitted decay rate on [{}, {}]: {}", window.0, window.1, fmt12(rate)),
        Err(e) => eprintln!("no decay rate: {e}"),
    }
    Ok(())
}

pub fn spectral(cfg: &ConfigFile, a: SpectralArgs) -> Result<(), CliError> {
    let length = positive("length", cfg.pick(a.length, "length", 2.0 * PI)?)?;
    let k_min = at_least("k-min", cfg.pick(a.k_min, "k_min", 1)?, 1)?;
    let k_max = cfg.pick(a.k_max, "k_max", 20)?;
    if k_max < k_min {
        return Err(CliError::Usage(format!("--k-max {k_max} is below --k-min {k_min}")));
    }
    let tol = positive("tol", cfg.pick(a.tol, "tol", DEFAULT_TOL)?)?;
    let spec = find_eigenvalues(length, k_min, k_max, tol)?;
    let mut meta = Meta::new("spectral");
    meta.add("length", length).add("k_min", k_min).add("k_max", k_max).add("tol", tol);
    Sink::new(a.out)?.emit("eigenvalues.csv", &meta.wrap(&eigen_csv(&spec.records)))?;
    if !spec.unresolved.is_empty() {
        return Err(CoreError::NoConvergence {
            what: format!("eigenvalues for k in {:?}", spec.unresolved),
            iterations: 0,
        }
        .into());
    }
    Ok(())
}

/// Worker count from `KDVBS_THREADS`, if set.
fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("KDVBS_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("KDVBS_THREADS must be a positive integer, got '{s}'"))),
        },
    }
}

pub fn sweep(cfg: &ConfigFile, a: SweepArgs) -> Result<(), CliError> {
    let lambdas = cfg.pick_list(a.lambdas, "lambdas", &SWEEP_LAMBDAS)?;
    if lambdas.is_empty() {
        return Err(CliError::Usage("--lambdas is empty".into()));
    }
    for &l in &lambdas {
        positive("lambdas", l)?;
    }
    let ks = KernelSettings::resolve(cfg, &a.kernel)?;
    let ss = SchemeSettings::resolve(cfg, &a.scheme, Mode::Controlled2)?;
    if !ss.mode.needs_kernel() {
        return Err(CliError::Usage("sweep needs a controlled mode".into()));
    }
    let t_final = ss.scheme(ks.length, 1.0).final_time();
    let window = fit_window(cfg, a.fit_start, a.fit_end, t_final)?;
    let u0 = ss.initial(ks.length)?;

    let job = |&lambda: &f64| -> Result<String, CliError> {
        let k = ks.build(lambda)?;
        let invnorm = discretize_k(&k, ss.grid)?.invnorm_estimate();
        let beta = k.beta(invnorm)?;
        let trace = run_scheme(&ss.scheme(ks.length, lambda), Some(&k), &u0)?;
        let rate = fit_decay_rate(&trace, window.0, window.1)?;
        Ok(format!("{lambda},{},{},{}\n", fmt12(k.alpha()), fmt12(beta), fmt12(rate)))
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let rows: Vec<Result<String, CliError>> = pool.install(|| lambdas.par_iter().map(job).collect());

    let mut body = String::from("lambda,alpha,beta,rate\n");
    for r in rows {
        body.push_str(&r?);
    }
    let mut meta = Meta::new("sweep");
    meta.add("lambdas", join(&lambdas));
    ks.describe(&mut meta);
    ss.describe(&mut meta);
    meta.add("fit_start", window.0).add("fit_end", window.1);
    Sink::new(a.out)?.emit("sweep.csv", &meta.wrap(&body))
}

type Profile = fn(f64, f64) -> f64;

/// Fixed test functions; the check uses no random numbers.
const CASES: [(&str, Profile); 5] = [
    ("one_minus_cos", |x, _| 1.0 - x.cos()),
    ("gaussian", |x, l| (-(x - 0.5 * l).powi(2)).exp()),
    ("sin3", |x, _| (3.0 * x).sin()),
    ("parabola", |x, l| x * (l - x)),
    ("ramp", |x, l| x / l),
];

pub fn transform_check(cfg: &ConfigFile, a: TransformArgs) -> Result<(), CliError> {
    let lambda = gain(cfg, a.lambda, Some(0.03))?;
    let ks = KernelSettings::resolve(cfg, &a.kernel)?;
    let grid = at_least("grid", cfg.pick(a.grid, "grid", 128)?, 4)?;
    let rule = match cfg.pick_opt(a.m_succession, "m_succession")? {
        None => SuccessionRule::default(),
        Some(m) => SuccessionRule::Fixed(at_least("m-succession", m, 1)?),
    };
    let k = ks.build(lambda)?;
    let kd = discretize_k(&k, grid)?;
    let invnorm = kd.invnorm_estimate();

    let mut body = String::from("case,roundtrip_rel,succession_vs_direct,iterations,invnorm\n");
    for (name, f) in CASES {
        let u = GridFunction::from_fn(ks.length, grid, |x| f(x, ks.length));
        let w = kd.forward(&u)?;
        let s = kd.inverse_succession(&w, rule)?;
        let direct = kd.inverse_direct(&w)?;
        let dx = kd.dx();
        let rel = s.u.sub(&u)?.norm() / u.norm();
        let diff: Vec<f64> = s.u.values.iter().zip(&direct.values).map(|(a, b)| a - b).collect();
        let agree = trapezoid_norm(&diff, dx) / direct.norm();
        let _ = writeln!(body, "{name},{},{},{},{}", fmt12(rel), fmt12(agree), s.iterations, fmt12(invnorm));
    }
    let mut meta = Meta::new("transform-check");
    meta.add("lambda", lambda).add("grid", grid);
    ks.describe(&mut meta);
    meta.add(
        "m_succession",
        match rule {
            SuccessionRule::Fixed(m) => m.to_string(),
            SuccessionRule::Adaptive { .. } => "adaptive".to_string(),
        },
    );
    Sink::new(a.out)?.emit("transform_check.csv", &meta.wrap(&body))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
