//! The `certeq` command-line tool. [`run`] takes the arguments and returns the
//! exit code with everything that goes to stdout, so the binary is a thin
//! wrapper and the commands can be tested in-process.
//!
//! Exit codes: 0 on success, 1 for usage, I/O and schema errors, 2 for
//! errors raised by the solvers and bounds.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bounds::{
    dare_bound_direct, dare_bound_fixed_point, gain_perturb_bound, gap_bound_fast_rate, gap_bound_meta,
    stability_margin_check, BoundReport, SystemConstants, FAST_RATE_C0,
};
use crate::error::Error;
use crate::experiments::{
    beta_sweep, gap_sweep, gap_sweep_system, log_grid, lqg_sweep, lqg_sweep_system, minimal_ell, regret_study,
    regret_system,
};
use crate::linalg::{operator_norm, spectral_radius, Mat};
use crate::lqg::{lqg_optimal, n_star, LqgSystem};
use crate::riccati::{riccati_residual, solve_dare, CostParams, LinearSystem};
use crate::stats::LineFit;
use crate::transient::{default_gamma, default_rho, tau};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CERTEQ_THREADS";

#[derive(Debug, Parser)]
#[command(name = "certeq", version, about = "Certainty-equivalent LQR/LQG toolkit")]
struct Cli {
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the control (and, with C, the filter) Riccati equation.
    Solve {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Check a stored solution against the Riccati equation.
    Verify {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Relative tolerance; the check is `residual ≤ tol (1 + ‖P‖)`.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Evaluate every perturbation and gap bound at one `eps`.
    Bounds(BoundsArgs),
    /// Exact LQR gap of the certainty-equivalent gain across `eps`.
    GapSweep(SweepArgs),
    /// Fixed-point and direct Riccati bounds on the two-state `β` example.
    BetaSweep {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        beta_grid: Vec<f64>,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
    },
    /// Exact LQG gap of the certainty-equivalent controller across `eps`.
    LqgSweep(SweepArgs),
    /// Regret of ε-greedy adaptive LQR over several seeds.
    Regret {
        #[arg(long = "T", default_value_t = 100_000)]
        horizon: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0.5)]
        exponent: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        epoch_base: usize,
        #[arg(long, default_value_t = 1.0)]
        exploration_scale: f64,
        #[arg(long, default_value_t = 1e-6)]
        ridge_lambda: f64,
    },
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    sigma_w: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated values; defaults to 8 log-spaced points in [1e-4, 10^-1.5].
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    /// Perturbation draws per grid point.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use this system instead of the built-in random instance.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Seed of the built-in random instance.
    #[arg(long)]
    system_seed: Option<u64>,
}

/// JSON description of a system. Matrices are arrays of rows.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(rename = "A")]
    pub a: Mat,
    #[serde(rename = "B")]
    pub b: Mat,
    #[serde(rename = "C")]
    pub c: Option<Mat>,
    #[serde(rename = "Q")]
    pub q: Option<Mat>,
    #[serde(rename = "R")]
    pub r: Option<Mat>,
    #[serde(rename = "W")]
    pub w: Option<Mat>,
    #[serde(rename = "V")]
    pub v: Option<Mat>,
    pub sigma_w: Option<f64>,
    pub sigma_v: Option<f64>,
}

/// What a system file describes once defaults are filled in.
pub enum Problem {
    Lqr { sys: LinearSystem, cost: CostParams, sigma_w: f64 },
    Lqg { sys: LqgSystem },
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                e.inner().to_string()
            } else {
                format!("key `{path}`: {}", e.inner())
            }
        })
    }

    /// Defaults: `Q = I`, `R = I`, `σw = 1`; with `C`, `W = σw² I` and `V = σv² I`, `σv = 1`.
    pub fn into_problem(self) -> crate::Result<Problem> {
        let sigma_w = self.sigma_w.unwrap_or(1.0);
        let n = self.a.rows();
        let d = self.b.cols();
        let r = self.r.unwrap_or_else(|| Mat::identity(d));
        match self.c {
            None => {
                let sys = LinearSystem::new(self.a, self.b)?;
                let cost = CostParams::new(self.q.unwrap_or_else(|| Mat::identity(n)), r)?;
                cost.check_against(&sys)?;
                Ok(Problem::Lqr { sys, cost, sigma_w })
            }
            Some(c) => {
                let p = c.rows();
                let sigma_v = self.sigma_v.unwrap_or(1.0);
                let w = self.w.unwrap_or_else(|| Mat::identity(n).scale(sigma_w * sigma_w));
                let v = self.v.unwrap_or_else(|| Mat::identity(p).scale(sigma_v * sigma_v));
                let q = self.q.unwrap_or_else(|| Mat::identity(p));
                Ok(Problem::Lqg { sys: LqgSystem::new(self.a, self.b, c, w, v, q, r)? })
            }
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Parse(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Solver(_) => 2,
            _ => 1,
        }
    }

    fn json(&self) -> Value {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Io(m) => ("io", m.clone()),
            Failure::Parse(m) => ("parse", m.clone()),
            Failure::Solver(e) => (e.kind(), e.to_string()),
        };
        json!({ "error": { "kind": kind, "message": message } })
    }
}

/// Outcome of one invocation.
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    Outcome { code: 0, stdout: text, stderr: String::new() }
                }
                _ => Outcome { code: 1, stdout: Failure::Usage(text.clone()).json().to_string() + "\n", stderr: text },
            };
        }
    };
    let result = dispatch(&cli.command);
    let (code, body) = match result {
        Ok(body) => (0, body),
        Err(f) => (f.code(), f.json().to_string() + "\n"),
    };
    match (&cli.out, code) {
        (Some(path), 0) => match std::fs::write(path, &body) {
            Ok(()) => Outcome { code: 0, stdout: String::new(), stderr: String::new() },
            Err(e) => {
                let f = Failure::Io(format!("{}: {e}", path.display()));
                Outcome { code: f.code(), stdout: f.json().to_string() + "\n", stderr: String::new() }
            }
        },
        _ => Outcome { code, stdout: body, stderr: String::new() },
    }
}

fn read_system(path: &PathBuf) -> Result<Problem, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let file = SystemFile::parse(&text).map_err(|m| Failure::Parse(format!("{}: {m}", path.display())))?;
    Ok(file.into_problem()?)
}

fn dispatch(cmd: &Command) -> Result<String, Failure> {
    match cmd {
        Command::Solve { system, gamma } => cmd_solve(system, *gamma),
        Command::Verify { system, solution, tol } => cmd_verify(system, solution, *tol),
        Command::Bounds(args) => cmd_bounds(args),
        Command::GapSweep(args) => cmd_gap_sweep(args),
        Command::BetaSweep { beta_grid, eps } => cmd_beta_sweep(beta_grid, *eps),
        Command::LqgSweep(args) => cmd_lqg_sweep(args),
        Command::Regret { horizon, seeds, exponent, seed, epoch_base, exploration_scale, ridge_lambda } => {
            cmd_regret(*horizon, *seeds, *exponent, *seed, *epoch_base, *exploration_scale, *ridge_lambda)
        }
    }
}

fn mat_json(m: &Mat) -> Value {
    json!(m.to_rows())
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values serialize") + "\n"
}

fn cmd_solve(system: &PathBuf, gamma: Option<f64>) -> Result<String, Failure> {
    let (sys, cost, kalman) = match read_system(system)? {
        Problem::Lqr { sys, cost, .. } => (sys, cost, None),
        Problem::Lqg { sys } => {
            let opt = lqg_optimal(&sys)?;
            let (lin, cost) = sys.lqr_problem()?;
            let nstar = n_star(&sys, &opt)?;
            let extra = json!({
                "L_kf": mat_json(&opt.kalman.gain),
                "Sigma": mat_json(opt.sigma()),
                "filter_residual": opt.kalman.residual,
                "J_star": opt.j_star,
                "rho_N": spectral_radius(&nstar)?,
            });
            (lin, cost, Some(extra))
        }
    };
    let sol = solve_dare(&sys, &cost)?;
    let rho = spectral_radius(&sol.l)?;
    let gamma = match gamma {
        Some(g) => g,
        None => default_gamma(&sol.l)?,
    };
    let t = tau(&sol.l, gamma)?;
    let mut out = json!({
        "P": mat_json(&sol.p),
        "K": mat_json(&sol.k),
        "L": mat_json(&sol.l),
        "residual": sol.residual,
        "iterations": sol.iterations,
        "rho_L": rho,
        "gamma": gamma,
        "tau_L": t.tau,
    });
    if let Some(extra) = kalman {
        out["kalman"] = extra;
    }
    Ok(pretty(&out))
}

#[derive(Deserialize)]
struct SolutionFile {
    #[serde(rename = "P")]
    p: Mat,
}

fn cmd_verify(system: &PathBuf, solution: &PathBuf, tol: f64) -> Result<String, Failure> {
    let (sys, cost) = match read_system(system)? {
        Problem::Lqr { sys, cost, .. } => (sys, cost),
        Problem::Lqg { sys } => sys.lqr_problem()?,
    };
    let text = std::fs::read_to_string(solution).map_err(|e| Failure::Io(format!("{}: {e}", solution.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let sol: SolutionFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Failure::Parse(format!("{}: key `{}`: {}", solution.display(), e.path(), e.inner())))?;
    let residual = riccati_residual(&sol.p, &sys, &cost)?;
    let threshold = tol * (1.0 + operator_norm(&sol.p));
    let ok = residual <= threshold;
    let body = pretty(&json!({ "residual": residual, "tolerance": threshold, "ok": ok }));
    if ok {
        Ok(body)
    } else {
        Err(Failure::Solver(Error::Convergence { iterations: 0, residual }))
    }
}

/// Formats floats with 17 significant digits.
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(command: &str) -> Self {
        let mut c = Self { text: String::new() };
        c.meta("command", command);
        c.meta("version", env!("CARGO_PKG_VERSION"));
        c
    }

    fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "# {key}={value}");
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    fn header(&mut self, names: &[&str]) {
        self.row(&names.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    fn fit(&mut self, label: &str, fit: Option<LineFit>) {
        match fit {
            Some(f) => self.meta(&format!("fit_{label}"), format!("slope={},intercept={},r2={}", num(f.slope), num(f.intercept), num(f.r2))),
            None => self.meta(&format!("fit_{label}"), "unavailable"),
        }
    }
}

fn cmd_bounds(args: &BoundsArgs) -> Result<String, Failure> {
    let (sys, cost, sigma_w) = match read_system(&args.system)? {
        Problem::Lqr { sys, cost, sigma_w } => (sys, cost, sigma_w),
        Problem::Lqg { sys } => {
            let (lin, cost) = sys.lqr_problem()?;
            (lin, cost, operator_norm(sys.w()).sqrt())
        }
    };
    let sigma_w = args.sigma_w.unwrap_or(sigma_w);
    let sol = solve_dare(&sys, &cost)?;
    let gamma = match args.gamma {
        Some(g) => g,
        None => default_gamma(&sol.l)?,
    };
    let rho = match args.rho {
        Some(r) => r,
        None => default_rho(sys.a())?,
    };
    let ell = match args.ell {
        Some(l) => Some(l),
        None => minimal_ell(&sys).ok(),
    };
    let eps = args.eps;
    let consts = SystemConstants::new(&sys, &cost, &sol)?;
    let tau_l = tau(&sol.l, gamma)?.tau;

    let mut reports: Vec<BoundReport> = Vec::new();
    let mut notes = Vec::new();
    let fp = dare_bound_fixed_point(&sys, &cost, &sol, eps, gamma)?;
    let f_eps = fp.bound_value.max(eps);
    reports.push(fp);
    match ell.map(|l| dare_bound_direct(&sys, &cost, &sol, eps, rho, l)) {
        Some(Ok(r)) => reports.push(r),
        Some(Err(e)) => notes.push(format!("dare_direct skipped: {e}")),
        None => notes.push("dare_direct skipped: system is not controllable within n steps".into()),
    }
    let cert = stability_margin_check(&consts, &sol, f_eps, gamma)?;
    let mut gain = BoundReport {
        name: "gain_perturb".into(),
        bound_value: gain_perturb_bound(&consts, f_eps, consts.sigma_min_r).unwrap_or(f64::INFINITY),
        applicable: f_eps < 1.0,
        applicability_margin: 1.0 - f_eps,
        components: Default::default(),
    };
    gain.components.insert("f_eps".into(), f_eps);
    gain.components.insert("gamma_star".into(), consts.gamma_star);
    gain.components.insert("sigma_min_r".into(), consts.sigma_min_r);
    reports.push(gain);
    let mut stab = BoundReport {
        name: "stability_certificate".into(),
        bound_value: cert.new_tau_bound,
        applicable: cert.stable_certified,
        applicability_margin: cert.margin,
        components: Default::default(),
    };
    stab.components.insert("k_gap_bound".into(), cert.k_gap_bound);
    stab.components.insert("f_eps".into(), f_eps);
    reports.push(stab);
    reports.push(gap_bound_meta(&consts, f_eps, gamma, tau_l, sys.d(), sigma_w)?);
    if let Some(l) = ell {
        match gap_bound_fast_rate(&sys, &cost, &sol, eps, rho, l, gamma, sigma_w, FAST_RATE_C0) {
            Ok(r) => reports.push(r),
            Err(e) => notes.push(format!("gap_fast_rate skipped: {e}")),
        }
    }

    let keys: BTreeSet<&String> = reports.iter().flat_map(|r| r.components.keys()).collect();
    let mut csv = Csv::new("bounds");
    csv.meta("system", args.system.display());
    csv.meta("eps", num(eps));
    csv.meta("gamma", num(gamma));
    csv.meta("rho", num(rho));
    csv.meta("ell", ell.map_or("none".to_string(), |l| l.to_string()));
    csv.meta("sigma_w", num(sigma_w));
    csv.meta("fast_rate_c0", num(FAST_RATE_C0));
    for n in &notes {
        csv.meta("note", n);
    }
    let mut header = vec!["name".to_string(), "value".into(), "applicable".into(), "margin".into()];
    header.extend(keys.iter().map(|k| k.to_string()));
    csv.row(&header);
    for r in &reports {
        let mut cells = vec![r.name.clone(), num(r.bound_value), r.applicable.to_string(), num(r.applicability_margin)];
        cells.extend(keys.iter().map(|k| r.components.get(*k).map_or(String::new(), |v| num(*v))));
        csv.row(&cells);
    }
    Ok(csv.text)
}

fn default_eps_grid(grid: &Option<Vec<f64>>) -> Vec<f64> {
    grid.clone().unwrap_or_else(|| log_grid(-4.0, -1.5, 8))
}

fn cmd_gap_sweep(args: &SweepArgs) -> Result<String, Failure> {
    let system_seed = args.system_seed.unwrap_or(7);
    let (sys, cost, sigma_w, source) = match &args.system {
        Some(path) => match read_system(path)? {
            Problem::Lqr { sys, cost, sigma_w } => (sys, cost, sigma_w, path.display().to_string()),
            Problem::Lqg { .. } => return Err(Failure::Usage("gap-sweep needs a system file without C".into())),
        },
        None => {
            let (sys, cost) = gap_sweep_system(system_seed);
            (sys, cost, 1.0, format!("random(seed={system_seed})"))
        }
    };
    let grid = default_eps_grid(&args.eps_grid);
    let sweep = gap_sweep(&sys, &cost, &grid, args.seeds, args.seed, sigma_w)?;
    let mut csv = Csv::new("gap-sweep");
    csv.meta("system", source);
    csv.meta("draws", args.seeds);
    csv.meta("seed", args.seed);
    csv.meta("gamma", num(sweep.gamma));
    csv.meta("rho", num(sweep.rho));
    csv.meta("ell", sweep.ell);
    csv.meta("sigma_w", num(sweep.sigma_w));
    csv.meta("fast_rate_c0", num(FAST_RATE_C0));
    csv.header(&[
        "eps",
        "gap_exact",
        "gap_min",
        "gap_max",
        "failures",
        "gap_bound_meta",
        "meta_applicable",
        "gap_bound_fast_rate",
        "fast_rate_applicable",
    ]);
    for r in &sweep.rows {
        csv.row(&[
            num(r.eps),
            num(r.gap_median),
            num(r.gap_min),
            num(r.gap_max),
            r.failures.to_string(),
            num(r.bound_meta),
            r.bound_meta_applicable.to_string(),
            num(r.bound_fast_rate),
            r.bound_fast_rate_applicable.to_string(),
        ]);
    }
    csv.fit("gap_exact", sweep.fit);
    Ok(csv.text)
}

fn cmd_beta_sweep(betas: &[f64], eps: f64) -> Result<String, Failure> {
    let sweep = beta_sweep(betas, eps)?;
    let mut csv = Csv::new("beta-sweep");
    csv.meta("eps", num(eps));
    csv.meta("gamma", "(1+rho(L))/2");
    csv.meta("rho", num(1.01));
    csv.meta("ell", 1);
    csv.header(&["beta", "bound_fixed_point", "bound_fixed_point_applicable", "bound_direct", "bound_direct_applicable", "ratio"]);
    for r in &sweep.rows {
        csv.row(&[
            num(r.beta),
            num(r.bound_fixed_point),
            r.bound_fixed_point_applicable.to_string(),
            num(r.bound_direct),
            r.bound_direct_applicable.to_string(),
            num(r.ratio),
        ]);
    }
    csv.fit("bound_fixed_point_vs_inv_beta", sweep.fit_fixed_point);
    csv.fit("bound_direct_vs_inv_beta", sweep.fit_direct);
    csv.fit("ratio_vs_inv_beta", sweep.fit_ratio);
    Ok(csv.text)
}

fn cmd_lqg_sweep(args: &SweepArgs) -> Result<String, Failure> {
    let system_seed = args.system_seed.unwrap_or(11);
    let (plant, source) = match &args.system {
        Some(path) => match read_system(path)? {
            Problem::Lqg { sys } => (sys, path.display().to_string()),
            Problem::Lqr { .. } => return Err(Failure::Usage("lqg-sweep needs a system file with C".into())),
        },
        None => (lqg_sweep_system(system_seed), format!("random(seed={system_seed})")),
    };
    let grid = default_eps_grid(&args.eps_grid);
    let sweep = lqg_sweep(&plant, &grid, args.seeds, args.seed)?;
    let mut csv = Csv::new("lqg-sweep");
    csv.meta("system", source);
    csv.meta("draws", args.seeds);
    csv.meta("seed", args.seed);
    csv.meta("gamma", num(sweep.gamma));
    csv.meta("j_star", num(sweep.j_star));
    csv.meta("lqg_gap_c1", num(crate::lqg::LQG_GAP_C1));
    csv.meta("lqg_fast_rate_c2", num(crate::lqg::LQG_FAST_RATE_C2));
    csv.header(&[
        "eps",
        "gap_exact",
        "gap_min",
        "gap_max",
        "failures",
        "eps_bar_median",
        "gap_bound",
        "bound_applicable",
        "gap_bound_fast_rate",
        "fast_rate_applicable",
    ]);
    for r in &sweep.rows {
        csv.row(&[
            num(r.eps),
            num(r.gap_median),
            num(r.gap_min),
            num(r.gap_max),
            r.failures.to_string(),
            num(r.eps_bar_median),
            num(r.bound),
            r.bound_applicable.to_string(),
            num(r.bound_fast_rate),
            r.bound_fast_rate_applicable.to_string(),
        ]);
    }
    csv.fit("gap_exact", sweep.fit);
    Ok(csv.text)
}

fn cmd_regret(
    horizon: usize,
    seeds: usize,
    exponent: f64,
    seed: u64,
    epoch_base: usize,
    exploration_scale: f64,
    ridge_lambda: f64,
) -> Result<String, Failure> {
    if seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let (sys, cost, k0) = regret_system();
    let study = regret_study(&sys, &cost, &k0, exponent, horizon, seeds, seed, |c| {
        c.epoch_base = epoch_base;
        c.exploration_scale = exploration_scale;
        c.ridge_lambda = ridge_lambda;
    })?;
    let mut csv = Csv::new("regret");
    csv.meta("system", "builtin 3-state 2-input");
    csv.meta("T", horizon);
    csv.meta("seeds", seeds);
    csv.meta("base_seed", seed);
    csv.meta("exponent", num(exponent));
    csv.meta("epoch_base", epoch_base);
    csv.meta("exploration_scale", num(exploration_scale));
    csv.meta("ridge_lambda", num(ridge_lambda));
    csv.meta("sigma_w", num(1.0));
    csv.meta("failure_rate", num(study.failure_rate));
    csv.meta("median_final_regret_paired", num(study.median_final_regret));
    csv.meta("median_final_regret", num(study.median_final_regret_raw));
    csv.fit("pooled_paired", study.pooled_fit);
    csv.fit("pooled", study.pooled_fit_raw);
    csv.header(&["seed", "t", "regret", "regret_paired"]);
    for run in &study.runs {
        if let Some(f) = &run.failure {
            csv.meta(&format!("failed_seed_{}", run.seed), f);
            continue;
        }
        for &(t, r, p) in &run.checkpoints {
            csv.row(&[run.seed.to_string(), t.to_string(), num(r), num(p)]);
        }
    }
    Ok(csv.text)
}

/// Size the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
