//! Command-line front end.
//!
//! Configuration comes from an optional JSON file (`--config`) overlaid by
//! flags. Reports go to `--output` (stdout by default); a one-line summary goes
//! to stderr. Exit codes: 0 success, 2 validation error, 3 numerical failure
//! (or an inconclusive verdict under `--strict`).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classify::{self, ClassifyConfig, IsoNecessary, Verdict};
use crate::cocycle::{d_cocycle_residual, kernel_membership, pairing_battery, CocyclePair};
use crate::error::{Error, Result};
use crate::grid::{Grid, LambdaGrid};
use crate::kernel::{
    build_kernel, idempotent_check, kernel_cocycle_residual, left_inverse_defect, perturbed_matrix,
    renewal_residual, semigroup_residual, shift_matrix, solve_renewal,
};
use crate::openset::{asymptotic_fit, construct_u, sandwich_check, OpenSet, ProfileF};
use crate::phi::{PhiShape, PhiSpec};
use crate::quad;
use crate::toeplitz::{
    fn_plancherel, hs_norm, min_singular_value, toeplitz_matrix, uncertainty_battery, ProbeThresholds, Symbol,
};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "CCRLAB_THREADS";

/// Pairing cases `(q, r, s, t)` used by `cocycle`.
pub const PAIRING_CASES: [(f64, f64, f64, f64); 10] = [
    (0.0, 0.5, 0.25, 0.75),
    (0.0, 0.25, 0.5, 0.75),
    (0.0, 1.0, 0.0, 1.0),
    (0.25, 0.75, 0.5, 1.0),
    (0.0, 0.125, 0.0, 0.125),
    (0.125, 0.625, 0.375, 0.875),
    (0.5, 1.0, 0.0, 0.75),
    (0.0, 0.75, 0.25, 0.5),
    (0.375, 0.5, 0.0, 1.0),
    (0.0, 0.5, 0.5, 1.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub h: f64,
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { h: 1.0 / 256.0, horizon: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaConfig {
    /// Frequency cutoff per unit of `n` for the `F_n` checks.
    pub cutoff: f64,
    /// Samples per unit of cutoff.
    pub density: f64,
    pub n_list: Vec<usize>,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self { cutoff: 16384.0, density: 4.0, n_list: vec![1, 4, 8, 16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenSetConfig {
    pub gamma: f64,
    pub log_power: f64,
    pub n_max: usize,
    /// Number of log-spaced sandwich points in `(x_lo, f⁻¹(1))`.
    pub points: usize,
    pub x_lo: f64,
}

impl Default for OpenSetConfig {
    fn default() -> Self {
        Self { gamma: 0.5, log_power: 0.0, n_max: 10_000, points: 50, x_lo: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub beta_list: Vec<f64>,
    pub gamma_list: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { beta_list: vec![0.1, 0.2, 0.3, 0.4, 0.5], gamma_list: vec![0.1, 0.3, 0.5, 0.7, 0.9] }
    }
}

/// Fully resolved run configuration; embedded in every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub phi: PhiSpec,
    pub phi2: Option<PhiSpec>,
    pub grid: GridConfig,
    /// Compression / semigroup time `t`.
    pub t: f64,
    /// Second time `s` for composition checks.
    pub s: f64,
    pub resolutions: Vec<f64>,
    pub lambda: LambdaConfig,
    pub openset: OpenSetConfig,
    pub sweep: SweepConfig,
    pub classify: ClassifyConfig,
    pub thresholds: ProbeThresholds,
    pub iso_t_list: Vec<f64>,
    pub seed: u64,
    pub trials: usize,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            phi: PhiSpec::indicator(0.25),
            phi2: None,
            grid: GridConfig::default(),
            t: 0.5,
            s: 0.25,
            resolutions: vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0],
            lambda: LambdaConfig::default(),
            openset: OpenSetConfig::default(),
            sweep: SweepConfig::default(),
            classify: ClassifyConfig::default(),
            thresholds: ProbeThresholds::default(),
            iso_t_list: quad::log_spaced(1e-5, 1e-1, 9),
            seed: 0,
            trials: 100,
            strict: false,
        }
    }
}

impl RunConfig {
    /// Checks the invariants shared by all commands.
    pub fn validate(&self) -> Result<()> {
        let g = Grid::with_horizon(self.grid.h, self.grid.horizon)?;
        for (name, t) in [("t", self.t), ("s", self.s)] {
            g.cells(t).map_err(|_| Error::param(name, format!("{t} is not a multiple of h = {}", self.grid.h)))?;
        }
        self.phi.validate()?;
        if let Some(p) = &self.phi2 {
            p.validate()?;
        }
        self.classify.validate()
    }

    fn needs_kernel(&self) -> Result<()> {
        if self.grid.horizon < 2.0 {
            return Err(Error::param("horizon", format!("kernel commands need horizon ≥ 2, got {}", self.grid.horizon)));
        }
        if self.s + self.t > self.grid.horizon / 2.0 + 1e-12 {
            return Err(Error::param("horizon", format!("s + t = {} exceeds half the horizon", self.s + self.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhiKind {
    Zero,
    Indicator,
    PowerLaw,
}

#[derive(Debug, Parser)]
#[command(name = "ccrlab", version, about = "Numerical laboratory for generalized CCR flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON RunConfig; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report destination (stdout when omitted).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Secondary CSV table (cocycle: pairing battery; openset: sandwich rows; toeplitz-diag: uncertainty battery).
    #[arg(long, global = true)]
    emit: Option<PathBuf>,
    /// Exit 3 when a required verdict is inconclusive.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, value_enum, global = true)]
    phi: Option<PhiKind>,
    /// Indicator height.
    #[arg(long, global = true, allow_hyphen_values = true)]
    c: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Rescale φ to this L¹ norm.
    #[arg(long, global = true)]
    l1_target: Option<f64>,
    /// Cut φ off at x = 1.
    #[arg(long, global = true)]
    truncate: bool,
    /// Cell width; accepts fractions such as 1/256.
    #[arg(long, global = true, value_parser = parse_number)]
    h: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true, value_parser = parse_number)]
    t: Option<f64>,
    #[arg(long, global = true, value_parser = parse_number)]
    s: Option<f64>,
    /// Resolution ladder, e.g. 1/64,1/128,1/256.
    #[arg(long, global = true, value_parser = parse_list)]
    resolutions: Option<NumList>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    log_power: Option<f64>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    /// β values, `lo:hi:k` (inclusive, k points) or a comma list.
    #[arg(long, global = true, value_parser = parse_list)]
    betas: Option<NumList>,
    /// γ values, `lo:hi:k` or a comma list.
    #[arg(long, global = true, value_parser = parse_list)]
    gammas: Option<NumList>,
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// iso-probe: second φ is the first scaled by this factor.
    #[arg(long, global = true)]
    phi2_scale: Option<f64>,
    /// iso-probe: second φ is the first plus an indicator of this height.
    #[arg(long, global = true, allow_hyphen_values = true)]
    phi2_add_indicator: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct NumList(Vec<f64>);

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?);
            if b == 0.0 {
                return Err("division by zero".into());
            }
            Ok(a / b)
        }
        None => s.parse().map_err(|e| format!("{e}")),
    }
}

fn parse_list(s: &str) -> std::result::Result<NumList, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (lo, hi) = (parse_number(parts[0])?, parse_number(parts[1])?);
        let k: usize = parts[2].trim().parse().map_err(|e| format!("{e}"))?;
        if k == 0 {
            return Err("range needs at least one point".into());
        }
        if k == 1 {
            return Ok(NumList(vec![lo]));
        }
        // Rounded to 12 digits so that 0.1:0.5:5 gives exactly 0.1, 0.2, ….
        let round = |v: f64| (v * 1e12).round() / 1e12;
        return Ok(NumList((0..k).map(|i| round(lo + (hi - lo) * i as f64 / (k - 1) as f64)).collect()));
    }
    s.split(',').map(parse_number).collect::<std::result::Result<Vec<_>, _>>().map(NumList)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Type of the global flow (JSON TypeReport).
    ClassifyGlobal,
    /// Type of the local algebra over U_γ (JSON TypeReport).
    ClassifyLocal,
    /// Cocycles, pairing battery and kernel membership (JSON; --emit CSV q,r,s,t,pairing,overlap,abs_error).
    Cocycle,
    /// Renewal, kernel equation, semigroup, left-inverse and idempotent checks (JSON).
    KernelCheck,
    /// Open set construction and sandwich estimate (JSON; --emit CSV x,lower,measure,upper,pass).
    Openset,
    /// CSV h,symbol_tag,hs_norm,smallest_singular_value over the resolution ladder
    /// (--emit CSV trial,lhs,rhs,holds for the seeded uncertainty battery).
    ToeplitzDiag,
    /// Necessary/sufficient isomorphism probe between φ and φ₂ (JSON).
    IsoProbe,
    /// (β, γ) phase sweep; CSV beta,gamma,verdict,exponent,boundary_distance.
    Sweep,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ClassifyGlobal => "classify-global",
            Command::ClassifyLocal => "classify-local",
            Command::Cocycle => "cocycle",
            Command::KernelCheck => "kernel-check",
            Command::Openset => "openset",
            Command::ToeplitzDiag => "toeplitz-diag",
            Command::IsoProbe => "iso-probe",
            Command::Sweep => "sweep",
        }
    }
}

/// Failure of a CLI run, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { 2 } else { 3 };
        Self { code, message: e.to_string() }
    }
}

fn io_fail(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn resolve(cmd: &Command, c: &Common) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_fail(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| io_fail(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.command = cmd.name().to_string();
    if let Some(kind) = c.phi {
        let base = match kind {
            PhiKind::Zero => PhiSpec::zero(),
            PhiKind::Indicator => PhiSpec::indicator(c.c.unwrap_or(0.25)),
            PhiKind::PowerLaw => PhiSpec::power_law(c.beta.unwrap_or(0.25), c.scale.unwrap_or(1.0)),
        };
        cfg.phi = base;
    } else {
        match &mut cfg.phi.shape {
            PhiShape::Indicator { c: height } => *height = c.c.unwrap_or(*height),
            PhiShape::PowerLaw { beta, scale } => {
                *beta = c.beta.unwrap_or(*beta);
                *scale = c.scale.unwrap_or(*scale);
            }
            _ => {}
        }
    }
    if let Some(v) = c.l1_target {
        cfg.phi.l1_target = Some(v);
    }
    if c.truncate {
        cfg.phi.truncate_to_unit = true;
    }
    if let Some(f) = c.phi2_scale {
        cfg.phi2 = Some(cfg.phi.scaled(f));
    }
    if let Some(height) = c.phi2_add_indicator {
        cfg.phi2 = Some(PhiSpec::sum(vec![cfg.phi.clone(), PhiSpec::indicator(height)]));
    }
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(cfg.grid.h, c.h);
    set!(cfg.grid.horizon, c.horizon);
    set!(cfg.t, c.t);
    set!(cfg.s, c.s);
    set!(cfg.resolutions, c.resolutions.clone().map(|l| l.0));
    set!(cfg.openset.gamma, c.gamma);
    set!(cfg.openset.log_power, c.log_power);
    set!(cfg.openset.n_max, c.n_max);
    set!(cfg.classify.n_max, c.n_max);
    set!(cfg.sweep.beta_list, c.betas.clone().map(|l| l.0));
    set!(cfg.sweep.gamma_list, c.gammas.clone().map(|l| l.0));
    set!(cfg.classify.margin, c.margin);
    set!(cfg.seed, c.seed);
    cfg.strict |= c.strict;
    Ok(cfg)
}

struct Outcome {
    body: String,
    summary: String,
    emit: Option<String>,
    inconclusive: bool,
}

fn json_report(cfg: &RunConfig, report: serde_json::Value) -> String {
    let mut v = json!({ "config": cfg });
    if let (Some(obj), serde_json::Value::Object(extra)) = (v.as_object_mut(), report) {
        obj.extend(extra);
    }
    let mut s = serde_json::to_string_pretty(&v).expect("reports serialize");
    s.push('\n');
    s
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn build_set(cfg: &RunConfig) -> Result<(OpenSet, Option<f64>)> {
    let o = &cfg.openset;
    if o.gamma == 1.0 && o.log_power == 0.0 {
        return Ok((OpenSet::new(vec![(0.0, 1.0)])?, None));
    }
    let u = construct_u(&ProfileF::new(o.gamma, o.log_power, 1.0)?, o.n_max)?;
    Ok((u.set, Some(u.truncation_remainder)))
}

fn csv_num(v: f64) -> String {
    format!("{v:e}")
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let grid = || Grid::with_horizon(cfg.grid.h, cfg.grid.horizon);
    Ok(match cmd {
        Command::ClassifyGlobal => {
            let rep = classify::global_type(&cfg.phi, &cfg.classify)?;
            Outcome {
                summary: format!("classify-global: {:?} ({:?})", rep.verdict, rep.method),
                inconclusive: rep.verdict == Verdict::Inconclusive,
                body: json_report(cfg, json!({ "report": rep })),
                emit: None,
            }
        }
        Command::ClassifyLocal => {
            let (u, remainder) = build_set(cfg)?;
            let rep = classify::local_type(&cfg.phi, &u, &cfg.classify)?;
            let set = json!({ "components": u.len(), "measure": u.measure(), "sup": u.sup(), "truncation_remainder": remainder });
            Outcome {
                summary: format!("classify-local: {:?} ({:?}, {} components)", rep.verdict, rep.method, u.len()),
                inconclusive: rep.verdict == Verdict::Inconclusive,
                body: json_report(cfg, json!({ "open_set": set, "report": rep })),
                emit: None,
            }
        }
        Command::Cocycle => {
            cfg.needs_kernel()?;
            let grid = grid()?;
            let phi = cfg.phi.materialize(grid)?;
            let psi = solve_renewal(&phi)?;
            let k = build_kernel(&phi, &psi)?;
            let pair = CocyclePair::new(&phi, &psi)?;
            let (laplace_c, laplace_d) = pair.laplace_defects(&phi, num_complex::Complex64::new(1.0, 0.0));
            let rows = pairing_battery(&pair, &k, &PAIRING_CASES)?;
            let worst = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
            let tt = perturbed_matrix(grid, cfg.t, &k)?;
            let c = crate::cocycle::c_interval(&pair.cm, 0.0, cfg.t)?;
            let membership = kernel_membership(&c, &tt, 0.0, cfg.t)?;
            let dres = d_cocycle_residual(&pair.dm, &k, cfg.s, cfg.t)?;
            let mut csv = String::from("q,r,s,t,pairing,overlap,abs_error\n");
            for r in &rows {
                csv.push_str(&format!("{},{},{},{},{},{},{}\n", r.q, r.r, r.s, r.t, csv_num(r.pairing), csv_num(r.overlap), csv_num(r.abs_error)));
            }
            Outcome {
                summary: format!("cocycle: max pairing error {worst:.3e} over {} cases (h = {})", rows.len(), cfg.grid.h),
                body: json_report(
                    cfg,
                    json!({
                        "c_m_at_0": pair.cm.values()[0],
                        "d_m_at_0": pair.dm.values()[0],
                        "laplace_defect_c": laplace_c,
                        "laplace_defect_d": laplace_d,
                        "kernel_membership": membership,
                        "d_cocycle_residual": dres,
                        "max_pairing_error": worst,
                        "pairing": to_value(&rows),
                    }),
                ),
                emit: Some(csv),
                inconclusive: false,
            }
        }
        Command::KernelCheck => {
            cfg.needs_kernel()?;
            let grid = grid()?;
            let phi = cfg.phi.materialize(grid)?;
            let psi = solve_renewal(&phi)?;
            let k = build_kernel(&phi, &psi)?;
            let tt = perturbed_matrix(grid, cfg.t, &k)?;
            let st = shift_matrix(grid, cfg.t)?;
            let idem = idempotent_check(&tt, &st)?;
            let report = json!({
                "renewal_residual": renewal_residual(&phi, &psi)?,
                "kernel_cocycle_residual": kernel_cocycle_residual(&k, cfg.t)?,
                "semigroup_residual": semigroup_residual(grid, &k, cfg.s, cfg.t)?,
                "left_inverse_defect": left_inverse_defect(&tt, &st)?,
                "perturbation_hs_norm": k.perturbation_hs_norm(cfg.t)?,
                "idempotent": to_value(&idem),
            });
            Outcome {
                summary: format!(
                    "kernel-check: left-inverse defect {:.3e}, kernel residual {:.3e}",
                    report["left_inverse_defect"].as_f64().unwrap_or(f64::NAN),
                    report["kernel_cocycle_residual"].as_f64().unwrap_or(f64::NAN)
                ),
                body: json_report(cfg, report),
                emit: None,
                inconclusive: false,
            }
        }
        Command::Openset => {
            let o = &cfg.openset;
            let f = ProfileF::new(o.gamma, o.log_power, 1.0)?;
            let u = construct_u(&f, o.n_max)?;
            let x_hi = f.inverse(1.0)?;
            let xs: Vec<f64> = quad::log_spaced(o.x_lo, x_hi, o.points + 2)[1..=o.points].to_vec();
            let sandwich = sandwich_check(&u, &xs)?;
            let fit_hi = (100.0 * o.x_lo).max(x_hi * 1e-2);
            let fit = asymptotic_fit(&u.set, fit_hi * 1e-2, fit_hi, 12).ok();
            let mut csv = String::from("x,lower,measure,upper,pass\n");
            for r in &sandwich.rows {
                csv.push_str(&format!("{},{},{},{},{}\n", csv_num(r.x), csv_num(r.lower), csv_num(r.measure), csv_num(r.upper), r.pass()));
            }
            let passed = sandwich.rows.iter().filter(|r| r.pass()).count();
            Outcome {
                summary: format!("openset: sandwich {passed}/{} within bounds, {} components", sandwich.rows.len(), u.set.len()),
                body: json_report(
                    cfg,
                    json!({
                        "components": u.set.len(),
                        "last_index": u.n_max,
                        "measure": u.set.measure(),
                        "sup": u.set.sup(),
                        "truncation_remainder": u.truncation_remainder,
                        "sandwich_pass": sandwich.pass,
                        "sandwich": to_value(&sandwich.rows),
                        "fit": fit.map(|f| to_value(&f)),
                    }),
                ),
                emit: Some(csv),
                inconclusive: !sandwich.pass,
            }
        }
        Command::ToeplitzDiag => {
            let mut body = String::from("h,symbol_tag,hs_norm,smallest_singular_value\n");
            for &h in &cfg.resolutions {
                let g = Grid::with_horizon(h, cfg.t)?;
                let phi = cfg.phi.materialize(g)?;
                let psi = solve_renewal(&phi)?;
                for sym in [Symbol::M, Symbol::Minv, Symbol::AbsM2, Symbol::AbsM2MinusOne] {
                    let m = toeplitz_matrix(&sym, &phi, &psi, cfg.t)?;
                    body.push_str(&format!("{},{},{},{}\n", csv_num(h), m.symbol_tag, csv_num(hs_norm(&m.matrix)), csv_num(min_singular_value(&m))));
                }
            }
            let trials = uncertainty_battery(cfg.seed, cfg.trials)?;
            let violations = trials.iter().filter(|t| !t.holds(1e-6)).count();
            let mut csv = String::from("trial,lhs,rhs,holds\n");
            for (i, t) in trials.iter().enumerate() {
                csv.push_str(&format!("{i},{},{},{}\n", csv_num(t.lhs), csv_num(t.rhs), t.holds(1e-6)));
            }
            let lg = LambdaGrid::new(cfg.lambda.cutoff, (cfg.lambda.density * cfg.lambda.cutoff) as usize)?;
            let planch = fn_plancherel(1, &lg)?;
            Outcome {
                summary: format!(
                    "toeplitz-diag: {} resolutions, uncertainty violations {violations}/{}, F_1 Plancherel {planch:.6}",
                    cfg.resolutions.len(),
                    trials.len()
                ),
                body,
                emit: Some(csv),
                inconclusive: false,
            }
        }
        Command::IsoProbe => {
            let phi2 = cfg.phi2.as_ref().ok_or_else(|| Error::param("phi2", "iso-probe needs a second φ (config phi2, --phi2-scale or --phi2-add-indicator)"))?;
            let rep = classify::iso_probe(&cfg.phi, phi2, &cfg.iso_t_list, &cfg.classify)?;
            Outcome {
                summary: format!("iso-probe: necessary {:?}, sufficient {:?}", rep.necessary, rep.sufficient),
                inconclusive: rep.necessary == IsoNecessary::Vacuous,
                body: json_report(cfg, json!({ "report": rep })),
                emit: None,
            }
        }
        Command::Sweep => {
            let rows = classify::sweep(&cfg.sweep.beta_list, &cfg.sweep.gamma_list, &cfg.classify)?;
            let mut body = String::from("beta,gamma,verdict,exponent,boundary_distance\n");
            for r in &rows {
                let exp = r.report.estimated_exponent.map_or(String::new(), |e| format!("{e:.6}"));
                body.push_str(&format!("{},{},{:?},{exp},{:.6}\n", r.beta, r.gamma, r.report.verdict, r.boundary_distance));
            }
            let inconclusive = rows.iter().filter(|r| r.report.verdict == Verdict::Inconclusive).count();
            Outcome {
                summary: format!("sweep: {} cells, {inconclusive} inconclusive", rows.len()),
                body,
                emit: None,
                inconclusive: inconclusive > 0,
            }
        }
    })
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn write_out(path: Option<&PathBuf>, text: &str) -> std::result::Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_fail(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io_fail),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    let result = resolve(&cli.command, &cli.common).and_then(|cfg| {
        let out = execute(&cli.command, &cfg).map_err(|e| {
            let mut f = Failure::from(e.clone());
            if let Error::InvalidParameter { name, .. } = e {
                f.message = format!("[{name}] {}", f.message);
            }
            f
        })?;
        write_out(cli.common.output.as_ref(), &out.body)?;
        if let (Some(path), Some(csv)) = (cli.common.emit.as_ref(), out.emit.as_ref()) {
            fs::write(path, csv).map_err(|e| io_fail(format!("{}: {e}", path.display())))?;
        }
        Ok((out, cfg.strict))
    });
    match result {
        Ok((out, strict)) => {
            eprintln!("{}", out.summary);
            if strict && out.inconclusive {
                eprintln!("strict: inconclusive result");
                3
            } else {
                0
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
