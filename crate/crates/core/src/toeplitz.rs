//! Toeplitz operators on `L²(0, ∞)` whose symbols are built from φ, their
//! compressions to `L²(0, t)`, and the diagnostics that probe them.
//!
//! Every symbol is carried by its time-side convolution generator `g`:
//! `(𝒯f)_i = id·f_i - h Σ_j g_{i-j} f_j`. For `M = 1 - 𝔏φ` the generator is φ,
//! for `1/M = 1 + 𝔏ψ` it is `-ψ`, and for `|M|²` it is the two-sided
//! `g = φ + φ̃ - φ∗φ̃`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cocycle::{c_interval, d_interval};
use crate::error::{Error, Result};
use crate::grid::{laplace_steps, Grid, GridFunction, LambdaGrid};
use crate::kernel::Kernel2D;
use crate::openset::OpenSet;
use crate::phi::PhiSpec;

/// Two-sided cell-averaged generator, indexed by the cell offset `d = i - j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSided {
    h: f64,
    /// Offsets `-(reach-1) ..= reach-1`, stored from the most negative.
    values: Vec<f64>,
}

impl TwoSided {
    /// `causal[d]` at offset `d ≥ 0` plus `anti[d]` at offset `-d`; both contribute at `d = 0`.
    fn from_sides(h: f64, causal: &[f64], anti: &[f64]) -> Self {
        let reach = causal.len().max(anti.len());
        let mut values = vec![0.0; 2 * reach - 1];
        for (d, v) in causal.iter().enumerate() {
            values[reach - 1 + d] += v;
        }
        for (d, v) in anti.iter().enumerate() {
            values[reach - 1 - d] += v;
        }
        Self { h, values }
    }

    /// Even generator from a one-sided profile `g(|u|)`.
    pub fn even(h: f64, profile: &[f64]) -> Result<Self> {
        if profile.is_empty() {
            return Err(Error::param("generator", "needs at least one cell"));
        }
        let mut g = Self::from_sides(h, profile, profile);
        let r = g.reach();
        g.values[r - 1] = profile[0];
        Ok(g)
    }

    /// Samples `g` at cell-offset midpoints on `(-reach·h, reach·h)`.
    pub fn from_fn(h: f64, reach: usize, g: impl Fn(f64) -> f64) -> Self {
        let values = (0..2 * reach - 1)
            .map(|k| g((k as f64 - (reach as f64 - 1.0)) * h))
            .collect();
        Self { h, values }
    }

    pub fn zero(h: f64, reach: usize) -> Self {
        Self { h, values: vec![0.0; 2 * reach.max(1) - 1] }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn reach(&self) -> usize {
        (self.values.len() + 1) / 2
    }

    pub fn get(&self, d: isize) -> f64 {
        let r = self.reach() as isize;
        if d <= -r || d >= r {
            0.0
        } else {
            self.values[(d + r - 1) as usize]
        }
    }

    /// HS norm of the compression `(h g_{i-j})_{i,j<τ}`.
    pub fn compression_hs(&self, tau: usize) -> f64 {
        let mut acc = 0.0;
        for d in -(tau as isize - 1)..tau as isize {
            let g = self.get(d);
            acc += (tau - d.unsigned_abs()) as f64 * g * g;
        }
        self.h * acc.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Symbol {
    M,
    Minv,
    AbsM2,
    AbsM2MinusOne,
    Custom(TwoSided),
}

impl Symbol {
    pub fn tag(&self) -> &'static str {
        match self {
            Symbol::M => "M",
            Symbol::Minv => "Minv",
            Symbol::AbsM2 => "AbsM2",
            Symbol::AbsM2MinusOne => "AbsM2MinusOne",
            Symbol::Custom(_) => "Custom",
        }
    }

    /// Coefficient of the identity part of the operator.
    pub fn identity(&self) -> f64 {
        match self {
            Symbol::AbsM2MinusOne => 0.0,
            _ => 1.0,
        }
    }
}

/// `a_d = h Σ_l φ_l φ_{l+d}` for `d < reach`.
fn autocorrelation(phi: &[f64], h: f64, reach: usize) -> Vec<f64> {
    (0..reach.min(phi.len()))
        .map(|d| h * phi.iter().zip(&phi[d..]).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Generator of `|M|² - 1`: `g_d = φ_d [d ≥ 0] + φ_{-d} [d ≤ 0] - a_{|d|}`.
pub fn abs_m2_generator(phi: &GridFunction, reach: usize) -> TwoSided {
    let reach = reach.clamp(1, phi.len());
    let head = &phi.values()[..reach];
    let a = autocorrelation(phi.values(), phi.h(), reach);
    let mut g = TwoSided::from_sides(phi.h(), head, head);
    for d in 0..reach {
        let r = reach - 1;
        g.values[r + d] -= a[d];
        if d > 0 {
            g.values[r - d] -= a[d];
        }
    }
    g
}

/// Convolution generator of `symbol` on φ's grid, reaching `reach` cells each way.
pub fn generator(symbol: &Symbol, phi: &GridFunction, psi: &GridFunction, reach: usize) -> Result<TwoSided> {
    phi.grid().ensure_same(psi.grid())?;
    let h = phi.h();
    let reach = reach.clamp(1, phi.len());
    Ok(match symbol {
        Symbol::M => TwoSided::from_sides(h, &phi.values()[..reach], &[]),
        Symbol::Minv => {
            let neg: Vec<f64> = psi.values()[..reach].iter().map(|v| -v).collect();
            TwoSided::from_sides(h, &neg, &[])
        }
        Symbol::AbsM2 | Symbol::AbsM2MinusOne => abs_m2_generator(phi, reach),
        Symbol::Custom(g) => {
            if (g.h - h).abs() > 1e-15 * h {
                return Err(Error::param("generator", format!("custom generator has h = {}, grid has h = {h}", g.h)));
            }
            g.clone()
        }
    })
}

/// Applies `𝒯_symbol` to `f`; the output is restricted to the grid window.
pub fn toeplitz_apply(symbol: &Symbol, phi: &GridFunction, psi: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    phi.grid().ensure_same(f.grid())?;
    let n = f.len();
    let g = generator(symbol, phi, psi, n)?;
    let id = symbol.identity();
    let h = f.h();
    let fv = f.values();
    let out = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, v) in fv.iter().enumerate() {
                if *v != 0.0 {
                    acc += g.get(i as isize - j as isize) * v;
                }
            }
            id * fv[i] - h * acc
        })
        .collect();
    GridFunction::new(*f.grid(), out)
}

/// `𝒯ᵀ f`, i.e. the adjoint on the grid window.
pub fn toeplitz_apply_transpose(symbol: &Symbol, phi: &GridFunction, psi: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    phi.grid().ensure_same(f.grid())?;
    let n = f.len();
    let g = generator(symbol, phi, psi, n)?;
    let id = symbol.identity();
    let h = f.h();
    let fv = f.values();
    let out = (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for (i, v) in fv.iter().enumerate() {
                if *v != 0.0 {
                    acc += g.get(i as isize - j as isize) * v;
                }
            }
            id * fv[j] - h * acc
        })
        .collect();
    GridFunction::new(*f.grid(), out)
}

fn block(g: &TwoSided, id: f64, rows: usize, cols: usize) -> DMatrix<f64> {
    let h = g.h;
    DMatrix::from_fn(rows, cols, |i, j| {
        let diag = if i == j { id } else { 0.0 };
        diag - h * g.get(i as isize - j as isize)
    })
}

/// Compression `P_t 𝒯 P_t` as a `(t/h) × (t/h)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzMatrix {
    pub grid: Grid,
    pub t: f64,
    pub symbol_tag: &'static str,
    pub matrix: DMatrix<f64>,
}

pub fn toeplitz_matrix(symbol: &Symbol, phi: &GridFunction, psi: &GridFunction, t: f64) -> Result<ToeplitzMatrix> {
    let grid = *phi.grid();
    let tau = grid.cells(t)?;
    if tau > grid.n() {
        return Err(Error::HorizonTooSmall { requested: tau, available: grid.n() });
    }
    let g = generator(symbol, phi, psi, tau)?;
    Ok(ToeplitzMatrix { grid, t, symbol_tag: symbol.tag(), matrix: block(&g, symbol.identity(), tau, tau) })
}

/// `𝒯 P_t` with rows over the whole grid window.
pub fn column_block(symbol: &Symbol, phi: &GridFunction, psi: &GridFunction, t: f64) -> Result<DMatrix<f64>> {
    let grid = *phi.grid();
    let tau = grid.cells(t)?;
    if tau > grid.n() {
        return Err(Error::HorizonTooSmall { requested: tau, available: grid.n() });
    }
    let g = generator(symbol, phi, psi, grid.n())?;
    Ok(block(&g, symbol.identity(), grid.n(), tau))
}

/// `𝒯_Φ P_t`: entries `h φ_{i-j}` over the whole grid window.
pub fn convolution_block(phi: &GridFunction, t: f64) -> Result<DMatrix<f64>> {
    let grid = *phi.grid();
    let tau = grid.cells(t)?;
    if tau > grid.n() {
        return Err(Error::HorizonTooSmall { requested: tau, available: grid.n() });
    }
    let h = phi.h();
    let v = phi.values();
    Ok(DMatrix::from_fn(grid.n(), tau, |i, j| if i >= j { h * v[i - j] } else { 0.0 }))
}

pub fn hs_norm(matrix: &DMatrix<f64>) -> f64 {
    matrix.norm()
}

/// `∫₀^∞ |φ(u)|² t du = t ‖φ‖₂²` on the grid.
pub fn hs_closed_form(phi: &GridFunction, t: f64) -> f64 {
    t * phi.norm_l2().powi(2)
}

/// As [`hs_closed_form`], but `+∞` when the profile is not square integrable at 0.
pub fn hs_closed_form_for(spec: &PhiSpec, grid: Grid, t: f64) -> Result<f64> {
    if spec.square_exponent().is_some_and(|e| e <= -1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(hs_closed_form(&spec.materialize(grid)?, t))
}

/// `g_n = Σ_k (1_{(2k/2n, (2k+1)/2n]} - 1_{((2k+1)/2n, (2k+2)/2n]})` on `(0, 1]`.
pub fn gn_vector(n: usize, grid: Grid) -> Result<GridFunction> {
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    let per_unit = grid.cells(1.0).map_err(|_| Error::Divisibility(format!("1/h is not an integer for h = {}", grid.h())))?;
    if per_unit % (2 * n) != 0 {
        return Err(Error::Divisibility(format!("2n = {} does not divide 1/h = {per_unit}", 2 * n)));
    }
    if per_unit > grid.n() {
        return Err(Error::HorizonTooSmall { requested: per_unit, available: grid.n() });
    }
    let block = per_unit / (2 * n);
    let values = (0..grid.n())
        .map(|j| match j {
            j if j >= per_unit => 0.0,
            j if (j / block) % 2 == 0 => 1.0,
            _ => -1.0,
        })
        .collect();
    GridFunction::new(grid, values)
}

fn gn_coarse(n: usize) -> Result<GridFunction> {
    gn_vector(n, Grid::new(1.0 / (2 * n) as f64, 2 * n)?)
}

/// `Σ_k |F_n(iλ_k)|² δλ` with `F_n = 𝔏g_n`; tends to 2π.
pub fn fn_plancherel(n: usize, lambda: &LambdaGrid) -> Result<f64> {
    let g = gn_coarse(n)?;
    Ok(lambda.points().map(|l| laplace_steps(&g, Complex64::new(0.0, l)).norm_sqr()).sum::<f64>() * lambda.spacing())
}

/// `max_{|λ| ≤ bound} |F_n(iλ)|²` over `samples` equispaced points.
pub fn fn_compact_max(n: usize, bound: f64, samples: usize) -> Result<f64> {
    let g = gn_coarse(n)?;
    let samples = samples.max(2);
    Ok((0..samples)
        .map(|k| {
            let l = -bound + 2.0 * bound * k as f64 / (samples - 1) as f64;
            laplace_steps(&g, Complex64::new(0.0, l)).norm_sqr()
        })
        .fold(0.0, f64::max))
}

/// `‖𝒯_M g_n - g_n‖₂ = ‖1_{(0,∞)} φ∗g_n‖₂` for each `n`.
pub fn taum_gn_decay(phi: &GridFunction, ns: &[usize]) -> Result<Vec<f64>> {
    ns.iter()
        .map(|&n| {
            let g = gn_vector(n, *phi.grid())?;
            Ok(crate::grid::convolve(phi, &g)?.norm_l2())
        })
        .collect()
}

fn smallest_singular_value(m: DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest singular value of `P_t 𝒯_M P_t` at each resolution.
pub fn lower_bound_probe(spec: &PhiSpec, t: f64, resolutions: &[f64]) -> Result<Vec<f64>> {
    resolutions
        .iter()
        .map(|&h| {
            let grid = Grid::with_horizon(h, t)?;
            let phi = spec.materialize(grid)?;
            let m = toeplitz_matrix(&Symbol::M, &phi, &phi, t)?;
            Ok(smallest_singular_value(m.matrix))
        })
        .collect()
}

pub fn min_singular_value(m: &ToeplitzMatrix) -> f64 {
    smallest_singular_value(m.matrix.clone())
}

/// Both sides of `∫_F |f̂|² ≤ |E| |F| ‖f‖²`, with `f̂(λ) = 𝔏f(iλ)`.
///
/// `lhs` uses the midpoint rule in λ; each sample obeys the pointwise bound
/// `|f̂|² ≤ |E| ‖f‖²`, so the discrete inequality holds exactly.
pub fn uncertainty_check(f: &GridFunction, e: &OpenSet, freq: &OpenSet) -> Result<(f64, f64)> {
    let h = f.h();
    let scale = f.max_abs();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (j, v) in f.values().iter().enumerate() {
        if v.abs() > 1e-14 * scale {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            if !e.contains_interval(a, b, 1e-12) {
                return Err(Error::Support(format!("f is nonzero on ({a}, {b}), outside E")));
            }
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    let norm2 = f.norm_l2().powi(2);
    let rhs = e.measure() * freq.measure() * norm2;
    if norm2 == 0.0 {
        return Ok((0.0, rhs));
    }
    let step = (0.5 / (hi - lo)).min(0.05);
    let mut lhs = 0.0;
    for &(a, b) in freq.intervals() {
        let panels = ((b - a) / step).ceil().max(1.0) as usize;
        let w = (b - a) / panels as f64;
        for k in 0..panels {
            let l = a + (k as f64 + 0.5) * w;
            lhs += laplace_steps(f, Complex64::new(0.0, l)).norm_sqr() * w;
        }
    }
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyTrial {
    pub lhs: f64,
    pub rhs: f64,
}

impl UncertaintyTrial {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + tol)
    }
}

/// `trials` random triples `(f, E, F)`: E a grid-aligned union of up to three
/// intervals in `(0, 4)`, f piecewise constant on E, F up to three intervals in `(-40, 40)`.
pub fn uncertainty_battery(seed: u64, trials: usize) -> Result<Vec<UncertaintyTrial>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(1.0 / 16.0, 64)?;
    let h = grid.h();
    let mut out = Vec::with_capacity(trials);
    while out.len() < trials {
        let mut cells = vec![false; grid.n()];
        let mut e = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let a = rng.gen_range(0..grid.n() - 1);
            let b = rng.gen_range(a + 1..=grid.n().min(a + 24));
            cells[a..b].iter_mut().for_each(|c| *c = true);
            e.push((a as f64 * h, b as f64 * h));
        }
        let e = OpenSet::from_unsorted(e)?;
        let values: Vec<f64> = cells.iter().map(|&c| if c { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        let f = GridFunction::new(grid, values)?;
        let freq = OpenSet::from_unsorted(
            (0..rng.gen_range(1..=3))
                .map(|_| {
                    let a = rng.gen_range(-40.0..40.0);
                    (a, a + rng.gen_range(0.05..10.0))
                })
                .collect(),
        )?;
        let (lhs, rhs) = uncertainty_check(&f, &e, &freq)?;
        out.push(UncertaintyTrial { lhs, rhs });
    }
    Ok(out)
}

/// `max_p ‖𝒯_{1/M}ᵀ 𝒯_{1/M} c_{p,q} - d_{p,q}‖ / ‖d_{p,q}‖` over consecutive partition points.
pub fn j_operator_check(
    cm: &GridFunction,
    dm: &GridFunction,
    psi: &GridFunction,
    k: &Kernel2D,
    partition: &[f64],
) -> Result<f64> {
    if partition.len() < 2 {
        return Err(Error::param("partition", "needs at least two points"));
    }
    let minv = Symbol::Minv;
    let mut worst = 0.0f64;
    for w in partition.windows(2) {
        let c = c_interval(cm, w[0], w[1])?;
        let once = toeplitz_apply(&minv, psi, psi, &c)?;
        let twice = toeplitz_apply_transpose(&minv, psi, psi, &once)?;
        let d = d_interval(dm, k, w[0], w[1])?;
        worst = worst.max(twice.sub(&d)?.norm_l2() / d.norm_l2());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeVerdict {
    Bounded,
    Diverging,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeThresholds {
    /// Relative change below which successive refinements count as converged.
    pub cauchy: f64,
    /// Per-halving growth above which the sequence counts as divergent.
    pub growth: f64,
}

impl Default for ProbeThresholds {
    fn default() -> Self {
        Self { cauchy: 0.05, growth: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub resolutions: Vec<f64>,
    pub norms: Vec<f64>,
    pub verdict: ProbeVerdict,
}

/// Classifies a refinement sequence of norms (coarsest first).
pub fn refinement_verdict(norms: &[f64], th: &ProbeThresholds) -> ProbeVerdict {
    if norms.len() < 3 {
        return ProbeVerdict::Inconclusive;
    }
    if norms.iter().all(|v| *v == 0.0) {
        return ProbeVerdict::Bounded;
    }
    let grows = norms.windows(2).all(|w| w[1] > (1.0 + th.growth) * w[0]);
    if grows {
        return ProbeVerdict::Diverging;
    }
    let tail = &norms[norms.len() - 3..];
    let settled = tail.windows(2).all(|w| (w[1] - w[0]).abs() <= th.cauchy * w[1].abs().max(w[0].abs()));
    if settled {
        ProbeVerdict::Bounded
    } else {
        ProbeVerdict::Inconclusive
    }
}

/// Evaluates `norm_at(h)` over a strictly decreasing list of `h` and classifies the result.
pub fn hs_divergence_probe(
    resolutions: &[f64],
    th: &ProbeThresholds,
    mut norm_at: impl FnMut(f64) -> Result<f64>,
) -> Result<ProbeReport> {
    if resolutions.len() < 3 {
        return Err(Error::InsufficientSamples(format!("need at least 3 resolutions, got {}", resolutions.len())));
    }
    if resolutions.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("resolutions", "must be strictly decreasing"));
    }
    let norms = resolutions.iter().map(|&h| norm_at(h)).collect::<Result<Vec<f64>>>()?;
    let verdict = refinement_verdict(&norms, th);
    Ok(ProbeReport { resolutions: resolutions.to_vec(), norms, verdict })
}

/// `‖P_t 𝒯_{|M|²-1} P_t‖_HS` at step `h`, from the φ of `spec`.
pub fn abs_m2_minus_one_hs(spec: &PhiSpec, t: f64, h: f64) -> Result<f64> {
    // The autocorrelation needs φ past t; its tail is exponentially small by t + 4.
    let grid = Grid::with_horizon(h, t + 4.0)?;
    let phi = spec.materialize(grid)?;
    let tau = grid.cells(t)?;
    Ok(abs_m2_generator(&phi, tau).compression_hs(tau))
}
