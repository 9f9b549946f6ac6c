//! Type I / type III classification by the integral criteria, the (β, γ) phase
//! sweep, and necessary-condition probes for sum-system isomorphism.
//!
//! Every verdict here is numerical evidence from an exponent estimate over a
//! finite window, not a proof of convergence or divergence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::openset::{asymptotic_fit, construct_u, symdiff_measure, OpenSet, ProfileF};
use crate::phi::PhiSpec;
use crate::quad;
use crate::toeplitz::{abs_m2_generator, refinement_verdict, ProbeReport, ProbeThresholds, TwoSided};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    TypeI,
    TypeIII,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    TailFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeReport {
    pub verdict: Verdict,
    /// Fitted local exponent of the integrand at 0⁺.
    pub estimated_exponent: Option<f64>,
    /// `(t, ∫_t^1 integrand)`.
    pub tail_values: Vec<(f64, f64)>,
    pub method: Method,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub margin: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    pub samples: usize,
    /// Simpson panels between successive tail samples.
    pub panels: usize,
    /// Intervals kept when building `U_γ` for a sweep.
    pub n_max: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self { margin: 0.05, window_lo: 1e-4, window_hi: 1e-2, samples: 12, panels: 16, n_max: 1_000_000 }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::param("margin", format!("must lie in (0, 1), got {}", self.margin)));
        }
        if !(self.window_lo > 0.0 && self.window_hi <= 1.0) {
            return Err(Error::param("window", format!("need 0 < lo < hi ≤ 1, got ({}, {})", self.window_lo, self.window_hi)));
        }
        if self.window_hi < 100.0 * self.window_lo * (1.0 - 1e-12) {
            return Err(Error::InsufficientSamples("fit window spans less than two decades".into()));
        }
        if self.samples < 8 {
            return Err(Error::InsufficientSamples(format!("need at least 8 samples, got {}", self.samples)));
        }
        if self.panels < 2 {
            return Err(Error::param("panels", "need at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converges,
    Diverges,
    Inconclusive,
}

impl Convergence {
    fn verdict(self) -> Verdict {
        match self {
            Convergence::Converges => Verdict::TypeI,
            Convergence::Diverges => Verdict::TypeIII,
            Convergence::Inconclusive => Verdict::Inconclusive,
        }
    }
}

/// Fits the local exponent `p` of an integrand from samples `(t, ∫_t^1)`.
///
/// The mean integrand on `[t_k, t_{k+1}]` is placed at the geometric midpoint;
/// for a pure power with log-spaced `t` the fit is exact.
pub fn convergence_detector(tail: &[(f64, f64)], margin: f64) -> Result<(Convergence, f64)> {
    if tail.len() < 8 {
        return Err(Error::InsufficientSamples(format!("need at least 8 tail samples, got {}", tail.len())));
    }
    let mut pts = tail.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
    if !(lo > 0.0 && hi >= 100.0 * lo * (1.0 - 1e-12)) {
        return Err(Error::InsufficientSamples(format!("samples span ({lo}, {hi}), less than two decades")));
    }
    let mut xs = Vec::with_capacity(pts.len() - 1);
    let mut ys = Vec::with_capacity(pts.len() - 1);
    for w in pts.windows(2) {
        let inc = w[0].1 - w[1].1;
        if !(inc > 0.0) {
            return Err(Error::InsufficientSamples(format!("non-increasing tail near t = {}", w[0].0)));
        }
        xs.push((w[0].0 * w[1].0).sqrt());
        ys.push(inc / (w[1].0 - w[0].0));
    }
    let p = quad::loglog_fit(&xs, &ys).slope;
    let verdict = if p > -1.0 + margin {
        Convergence::Converges
    } else if p < -1.0 - margin {
        Convergence::Diverges
    } else {
        Convergence::Inconclusive
    };
    Ok((verdict, p))
}

/// `(t, ∫_t^1 f)` on log-spaced `t` over the configured window.
fn tail_samples(f: impl Fn(f64) -> f64, cfg: &ClassifyConfig) -> Vec<(f64, f64)> {
    let ts = quad::log_spaced(cfg.window_lo, cfg.window_hi, cfg.samples);
    let top = if cfg.window_hi < 1.0 {
        let decades = (1.0 / cfg.window_hi).log10().ceil().max(1.0) as usize;
        quad::simpson_log(&f, cfg.window_hi, 1.0, 32 * decades)
    } else {
        0.0
    };
    let mut out = vec![(0.0, 0.0); ts.len()];
    let mut acc = top;
    for k in (0..ts.len()).rev() {
        if k + 1 < ts.len() {
            acc += quad::simpson_log(&f, ts[k], ts[k + 1], cfg.panels);
        }
        out[k] = (ts[k], acc);
    }
    out
}

fn fit_report(tail: Vec<(f64, f64)>, cfg: &ClassifyConfig, notes: Vec<String>) -> Result<TypeReport> {
    let (conv, p) = convergence_detector(&tail, cfg.margin)?;
    Ok(TypeReport { verdict: conv.verdict(), estimated_exponent: Some(p), tail_values: tail, method: Method::TailFit, notes })
}

/// Type of the global flow: type I iff `φ ∈ L²(0, ∞)`.
pub fn global_type(spec: &PhiSpec, cfg: &ClassifyConfig) -> Result<TypeReport> {
    spec.validate()?;
    cfg.validate()?;
    if spec.is_zero() {
        return Ok(TypeReport {
            verdict: Verdict::TypeI,
            estimated_exponent: None,
            tail_values: Vec::new(),
            method: Method::Analytic,
            notes: vec!["φ = 0: the CCR flow".into()],
        });
    }
    let tail_cfg = match &spec.shape {
        crate::phi::PhiShape::Samples { h, .. } => ClassifyConfig { window_lo: cfg.window_lo.max(10.0 * h), ..*cfg },
        _ => *cfg,
    };
    let tail = tail_samples(|x| spec.eval(x).powi(2), &tail_cfg);
    let mut report = match fit_report(tail, &tail_cfg, Vec::new()) {
        Ok(r) => r,
        Err(Error::InsufficientSamples(msg)) if spec.is_parametric() => TypeReport {
            verdict: Verdict::Inconclusive,
            estimated_exponent: None,
            tail_values: Vec::new(),
            method: Method::TailFit,
            notes: vec![format!("tail fit unavailable: {msg}")],
        },
        Err(e @ Error::InsufficientSamples(_)) => {
            return Ok(TypeReport {
                verdict: Verdict::Inconclusive,
                estimated_exponent: None,
                tail_values: Vec::new(),
                method: Method::TailFit,
                notes: vec![format!("sampled φ does not resolve a two-decade window: {e}")],
            })
        }
        Err(e) => return Err(e),
    };
    if spec.is_parametric() {
        let p = spec.square_exponent().unwrap_or(0.0);
        let analytic = if p <= -1.0 { Verdict::TypeIII } else { Verdict::TypeI };
        report.notes.push(format!("|φ(x)|² ~ x^{p} at 0⁺; ∫₀ diverges iff {p} ≤ -1"));
        if report.verdict != analytic {
            report.notes.push(format!("tail fit alone gives {:?}", report.verdict));
        }
        report.verdict = analytic;
        report.method = Method::Analytic;
    }
    Ok(report)
}

/// Type of the local algebra over `U` by the integral criterion.
///
/// Sets whose symmetric difference decays like `x` (elementary sets) are type I
/// outright. For φ monotone near 0 the integrand is `|φ|² |(U+x)⊖U|` with φ
/// evaluated analytically; otherwise `|φ - φ∗φ̃|² |(U+x)⊖U|` on φ's sample grid.
pub fn local_type(spec: &PhiSpec, u: &OpenSet, cfg: &ClassifyConfig) -> Result<TypeReport> {
    spec.validate()?;
    cfg.validate()?;
    if u.is_empty() {
        return Err(Error::param("U", "open set is empty"));
    }
    if spec.is_zero() {
        return Ok(TypeReport {
            verdict: Verdict::TypeI,
            estimated_exponent: None,
            tail_values: Vec::new(),
            method: Method::Analytic,
            notes: vec!["φ = 0: every local algebra of the CCR flow is type I".into()],
        });
    }
    let fit = asymptotic_fit(u, cfg.window_lo, cfg.window_hi, cfg.samples)?;
    if (fit.gamma_hat - 1.0).abs() <= cfg.margin {
        return Ok(TypeReport {
            verdict: Verdict::TypeI,
            estimated_exponent: None,
            tail_values: Vec::new(),
            method: Method::Analytic,
            notes: vec![format!("|(U+x)⊖U| ~ x^{:.4}: elementary set, the integral is finite", fit.gamma_hat)],
        });
    }
    let mut notes = vec![format!("|(U+x)⊖U| ~ x^{:.4} on the window", fit.gamma_hat)];
    if spec.is_monotone_near_zero() {
        let tail = tail_samples(|x| spec.eval(x).powi(2) * symdiff_measure(u, x), cfg);
        return fit_report(tail, cfg, notes);
    }
    // Non-parametric φ: the singularity is only resolved down to the sample spacing.
    let crate::phi::PhiShape::Samples { h, values } = &spec.shape else {
        return Err(Error::param("phi", "sum with a non-monotone term needs sampled form"));
    };
    let lo = cfg.window_lo.max(10.0 * h);
    let grid_cfg = ClassifyConfig { window_lo: lo, ..*cfg };
    notes.push(format!("sampled φ: divergence detection limited to x ≥ {lo:e}"));
    let grid = Grid::new(*h, values.len().max(1))?;
    let phi = spec.materialize(grid)?;
    let v = phi.values();
    // φ(x) - (φ∗φ̃)(x) at the cell of x; the correlation is summed per node.
    let integrand = |x: f64| {
        let d = (x / h).floor() as usize;
        if d >= v.len() {
            return 0.0;
        }
        let corr = h * v.iter().zip(&v[d..]).map(|(a, b)| a * b).sum::<f64>();
        (v[d] - corr).powi(2) * symdiff_measure(u, x)
    };
    match fit_report(tail_samples(integrand, &grid_cfg), &grid_cfg, notes.clone()) {
        Ok(r) => Ok(r),
        Err(Error::InsufficientSamples(msg)) => {
            notes.push(msg);
            Ok(TypeReport { verdict: Verdict::Inconclusive, estimated_exponent: None, tail_values: Vec::new(), method: Method::TailFit, notes })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub gamma: f64,
    pub report: TypeReport,
    /// `γ - (1 - 2β)`; positive on the type I side.
    pub boundary_distance: f64,
}

impl SweepRow {
    /// Verdict predicted by the exponent rule `2β - 2 + γ > -1`.
    pub fn expected(&self) -> Verdict {
        if self.boundary_distance > 0.0 {
            Verdict::TypeI
        } else if self.boundary_distance < 0.0 {
            Verdict::TypeIII
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Sets for the sweep: `U_γ` from `f(x) = x^{γ-1}`, or `(0, 1)` at `γ = 1`.
pub fn sweep_set(gamma: f64, n_max: usize) -> Result<OpenSet> {
    if gamma == 1.0 {
        return OpenSet::new(vec![(0.0, 1.0)]);
    }
    Ok(construct_u(&ProfileF::power(gamma)?, n_max)?.set)
}

/// Classifies `𝒜^{φ_β}(U_γ)` on the grid `betas × gammas`; rows ordered by (β, γ).
pub fn sweep(betas: &[f64], gammas: &[f64], cfg: &ClassifyConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b <= 0.5)) {
        return Err(Error::param("beta", format!("must lie in (0, 0.5], got {b}")));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
        return Err(Error::param("gamma", format!("must lie in (0, 1], got {g}")));
    }
    let sets = gammas.par_iter().map(|&g| sweep_set(g, cfg.n_max)).collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..betas.len()).flat_map(|i| (0..gammas.len()).map(move |j| (i, j))).collect();
    cells
        .par_iter()
        .map(|&(i, j)| {
            let (beta, gamma) = (betas[i], gammas[j]);
            let report = local_type(&PhiSpec::power_law(beta, 1.0), &sets[j], cfg)?;
            Ok(SweepRow { beta, gamma, report, boundary_distance: gamma - (1.0 - 2.0 * beta) })
        })
        .collect()
}

/// Along increasing γ at fixed β: TypeIII, then Inconclusive, then TypeI, never backwards.
pub fn row_is_monotone(rows: &[SweepRow]) -> bool {
    let rank = |v: Verdict| match v {
        Verdict::TypeIII => 0,
        Verdict::Inconclusive => 1,
        Verdict::TypeI => 2,
    };
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(a.gamma.total_cmp(&b.gamma)));
    sorted.windows(2).all(|w| w[0].beta != w[1].beta || rank(w[0].report.verdict) <= rank(w[1].report.verdict))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IsoNecessary {
    Consistent,
    NecessaryConditionsFail,
    /// φ₁ ∈ L², where the limits carry no information.
    Vacuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IsoSufficient {
    /// `φ₁ - φ₂ ∈ L²` (estimated), which implies isomorphic sum systems.
    Isomorphic,
    NotEstablished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoReport {
    /// `(t, ‖φ₂‖/‖φ₁‖)` in `L²(t, 1)`.
    pub r: Vec<(f64, f64)>,
    /// `(t, ‖φ₁ - φ₂‖/‖φ₁‖)` in `L²(t, 1)`.
    pub s: Vec<(f64, f64)>,
    pub necessary: IsoNecessary,
    pub sufficient: IsoSufficient,
    pub notes: Vec<String>,
}

/// Deviation of `r` from 1 (or `s` from 0) below which the condition is taken as met.
const ISO_TOL: f64 = 0.05;
/// A deviation must shrink by at least this factor over the last decade to count as trending.
const ISO_TREND: f64 = 0.95;

fn trending_away(dev: &[(f64, f64)]) -> bool {
    let (t_min, last) = dev[0];
    if last <= ISO_TOL {
        return false;
    }
    let reference = dev.iter().rev().find(|(t, _)| *t <= 10.0 * t_min * (1.0 + 1e-9)).map_or(dev[dev.len() - 1].1, |p| p.1);
    last > ISO_TREND * reference
}

/// Checks the limits `r(t) → 1` and `s(t) → 0` as `t → 0` that isomorphic sum
/// systems force. `CONSISTENT` does not imply isomorphic.
pub fn iso_probe(spec1: &PhiSpec, spec2: &PhiSpec, t_list: &[f64], cfg: &ClassifyConfig) -> Result<IsoReport> {
    spec1.validate()?;
    spec2.validate()?;
    let mut ts: Vec<f64> = t_list.to_vec();
    ts.sort_by(f64::total_cmp);
    if ts.len() < 3 || !(ts[0] > 0.0 && ts[ts.len() - 1] < 1.0) {
        return Err(Error::InsufficientSamples("need at least 3 values of t in (0, 1)".into()));
    }
    if ts[ts.len() - 1] < 10.0 * ts[0] * (1.0 - 1e-12) {
        return Err(Error::InsufficientSamples("t values must span at least one decade".into()));
    }
    let sq = |f: &dyn Fn(f64) -> f64, t: f64| quad::simpson_log(|x| f(x).powi(2), t, 1.0, 64 * (1.0 / t).log10().ceil().max(1.0) as usize);
    let f1 = |x: f64| spec1.eval(x);
    let f2 = |x: f64| spec2.eval(x);
    let diff = |x: f64| spec1.eval(x) - spec2.eval(x);
    let mut r = Vec::with_capacity(ts.len());
    let mut s = Vec::with_capacity(ts.len());
    for &t in &ts {
        let n1 = sq(&f1, t).sqrt();
        if n1 == 0.0 {
            return Err(Error::param("phi1", "vanishes on (t, 1)"));
        }
        r.push((t, sq(&f2, t).sqrt() / n1));
        s.push((t, sq(&diff, t).sqrt() / n1));
    }
    let mut notes = Vec::new();
    let in_l2 = match spec1.square_exponent() {
        Some(p) if spec1.is_parametric() => p > -1.0,
        _ => {
            let (c, _) = convergence_detector(&tail_samples(|x| f1(x).powi(2), cfg), cfg.margin)?;
            c == Convergence::Converges
        }
    };
    let necessary = if in_l2 {
        notes.push("φ₁ ∈ L²: the limit conditions are vacuous".into());
        IsoNecessary::Vacuous
    } else {
        let r_dev: Vec<(f64, f64)> = r.iter().map(|(t, v)| (*t, (v - 1.0).abs())).collect();
        if trending_away(&r_dev) || trending_away(&s) {
            IsoNecessary::NecessaryConditionsFail
        } else {
            notes.push("consistent with isomorphism; this is a necessary condition only".into());
            IsoNecessary::Consistent
        }
    };
    let diff_zero = tail_samples(|x| diff(x).powi(2), cfg).iter().all(|(_, v)| *v == 0.0);
    let sufficient = if diff_zero {
        IsoSufficient::Isomorphic
    } else {
        match convergence_detector(&tail_samples(|x| diff(x).powi(2), cfg), cfg.margin) {
            Ok((Convergence::Converges, p)) => {
                notes.push(format!("|φ₁ - φ₂|² ~ x^{p:.3}: φ₁ - φ₂ ∈ L²"));
                IsoSufficient::Isomorphic
            }
            Ok((_, p)) => {
                notes.push(format!("|φ₁ - φ₂|² ~ x^{p:.3}"));
                IsoSufficient::NotEstablished
            }
            Err(e) => {
                notes.push(format!("difference tail fit failed: {e}"));
                IsoSufficient::NotEstablished
            }
        }
    };
    Ok(IsoReport { r, s, necessary, sufficient, notes })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumSystemReport {
    pub scalars: Vec<f64>,
    pub probe: ProbeReport,
}

/// `‖P_t 𝒯_{|M₁|²} P_t - a P_t 𝒯_{|M₂|²} P_t‖_HS` with `a` fitted on the diagonals.
pub fn sumsystem_hs_probe(
    spec1: &PhiSpec,
    spec2: &PhiSpec,
    t: f64,
    resolutions: &[f64],
    th: &ProbeThresholds,
) -> Result<SumSystemReport> {
    if resolutions.len() < 3 {
        return Err(Error::InsufficientSamples(format!("need at least 3 resolutions, got {}", resolutions.len())));
    }
    if resolutions.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("resolutions", "must be strictly decreasing"));
    }
    let mut scalars = Vec::with_capacity(resolutions.len());
    let mut norms = Vec::with_capacity(resolutions.len());
    for &h in resolutions {
        let grid = Grid::with_horizon(h, t + 4.0)?;
        let tau = grid.cells(t)?;
        let mut gens: Vec<TwoSided> = Vec::with_capacity(2);
        for spec in [spec1, spec2] {
            let phi = spec.materialize(grid)?;
            // ‖𝒯_Φ‖ ≤ ‖φ‖₁ < 1 makes 𝒯_M boundedly invertible.
            if phi.norm_l1() >= 1.0 {
                return Err(Error::NotInvertible { sigma: 1.0 - phi.norm_l1(), h });
            }
            gens.push(abs_m2_generator(&phi, tau));
        }
        // Both compressions have constant diagonals 1 - h g_0.
        let d1 = 1.0 - h * gens[0].get(0);
        let d2 = 1.0 - h * gens[1].get(0);
        let a = d1 / d2;
        let diff = TwoSided::from_fn(h, tau, |u| {
            let d = (u / h).round() as isize;
            if d == 0 {
                0.0
            } else {
                gens[0].get(d) - a * gens[1].get(d)
            }
        });
        scalars.push(a);
        norms.push(diff.compression_hs(tau));
    }
    let verdict = refinement_verdict(&norms, th);
    Ok(SumSystemReport { scalars, probe: ProbeReport { resolutions: resolutions.to_vec(), norms, verdict } })
}
