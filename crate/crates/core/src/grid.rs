//! Uniform cell-average grids on `[0, T]` and the quadrature primitives built on them.
//!
//! A [`GridFunction`] stores one value per cell: the average of the represented
//! function over `[j h, (j + 1) h)`. Integrable endpoint singularities are
//! therefore representable, and every operation here is a finite sum that
//! preserves the algebraic identities (linearity, commutativity of the causal
//! convolution) exactly at grid level.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a time is a grid multiple.
const MULTIPLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    h: f64,
    n: usize,
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(h = {}, n = {})", self.h, self.n)
    }
}

impl Grid {
    pub fn new(h: f64, n: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("h", format!("cell width must be positive, got {h}")));
        }
        if n == 0 {
            return Err(Error::param("n", "cell count must be at least 1"));
        }
        Ok(Self { h, n })
    }

    /// Grid of width `h` covering `[0, horizon]`; `horizon` must be a multiple of `h`.
    pub fn with_horizon(h: f64, horizon: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("h", format!("cell width must be positive, got {h}")));
        }
        let n = cells_in(horizon, h)?;
        Self::new(h, n)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.n as f64
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h
    }

    /// Number of cells spanned by `t`, which must be a non-negative grid multiple.
    pub fn cells(&self, t: f64) -> Result<usize> {
        cells_in(t, self.h)
    }

    /// Index of the cell containing `x` (clamped to the grid).
    pub fn cell_of(&self, x: f64) -> usize {
        let j = (x / self.h).floor();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.n - 1)
        }
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.h == other.h && self.n == other.n {
            Ok(())
        } else {
            Err(Error::GridMismatch { left: *self, right: *other })
        }
    }
}

/// `t / h` as an integer, or an error when `t` is not a non-negative multiple of `h`.
pub fn cells_in(t: f64, h: f64) -> Result<usize> {
    let ratio = t / h;
    let rounded = ratio.round();
    if !ratio.is_finite() || rounded < 0.0 || (ratio - rounded).abs() > MULTIPLE_TOL * rounded.max(1.0) {
        return Err(Error::NotGridMultiple { t, h });
    }
    Ok(rounded as usize)
}

/// Real function sampled by cell averages on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::param(
                "values",
                format!("expected {} cell values, got {}", grid.n, values.len()),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.n] }
    }

    /// Cell averages of `value * 1_{(a, b)}`.
    pub fn indicator(grid: Grid, a: f64, b: f64, value: f64) -> Self {
        let h = grid.h;
        let values = (0..grid.n)
            .map(|j| {
                let lo = j as f64 * h;
                let overlap = (b.min(lo + h) - a.max(lo)).max(0.0);
                value * overlap / h
            })
            .collect();
        Self { grid, values }
    }

    /// Cell averages computed from an antiderivative `prim` of the represented function.
    pub fn from_antiderivative(grid: Grid, prim: impl Fn(f64) -> f64) -> Self {
        let h = grid.h;
        let values = (0..grid.n)
            .map(|j| (prim((j + 1) as f64 * h) - prim(j as f64 * h)) / h)
            .collect();
        Self { grid, values }
    }

    /// Samples `f` at cell midpoints.
    pub fn from_midpoints(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n).map(|j| f(grid.midpoint(j))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of the cell containing `x`.
    pub fn at(&self, x: f64) -> f64 {
        self.values[self.grid.cell_of(x)]
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn norm_l1(&self) -> f64 {
        self.grid.h * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn norm_l2(&self) -> f64 {
        (self.grid.h * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zeroes every cell at or beyond `x`; a partially covered cell keeps its covered fraction.
    pub fn truncate_at(&self, x: f64) -> Self {
        let h = self.grid.h;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let lo = j as f64 * h;
                v * ((x - lo) / h).clamp(0.0, 1.0)
            })
            .collect();
        Self { grid: self.grid, values }
    }
}

/// Real L² inner product `h Σ f_j g_j`.
pub fn inner(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(f.grid.h * f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>())
}

/// Causal convolution `(f∗g)_m = h Σ_{j≤m} f_j g_{m-j}`, truncated at the horizon.
///
/// Terms are accumulated in symmetric pairs `f_j g_{m-j} + f_{m-j} g_j`, so
/// swapping the arguments yields bit-identical output.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    f.grid.ensure_same(&g.grid)?;
    let (a, b) = (&f.values, &g.values);
    let n = a.len();
    let mut out = vec![0.0; n];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut j = 0;
        while 2 * j < m {
            acc += a[j] * b[m - j] + a[m - j] * b[j];
            j += 1;
        }
        if 2 * j == m {
            acc += a[j] * b[j];
        }
        *slot = f.grid.h * acc;
    }
    Ok(GridFunction { grid: f.grid, values: out })
}

/// Running integral `x ↦ ∫₀ˣ f`, realized as `h Σ_{j≤m} f_j`.
pub fn cumint(f: &GridFunction) -> GridFunction {
    let h = f.grid.h;
    let mut acc = 0.0;
    let values = f
        .values
        .iter()
        .map(|&v| {
            acc += v;
            h * acc
        })
        .collect();
    GridFunction { grid: f.grid, values }
}

/// Midpoint-rule Laplace transform `h Σ f_j exp(-z x̄_j)`.
pub fn laplace(f: &GridFunction, z: Complex64) -> Complex64 {
    let h = f.grid.h;
    let step = (-z * h).exp();
    let mut weight = (-z * (0.5 * h)).exp();
    let mut acc = Complex64::new(0.0, 0.0);
    for &v in &f.values {
        acc += weight * v;
        weight *= step;
    }
    acc * h
}

/// Exact Laplace transform of the piecewise-constant function whose cell values are `f`.
///
/// Differs from [`laplace`] by the factor `sinh(zh/2)/(zh/2)`; unlike the midpoint
/// sum it is not periodic along the imaginary axis, so it is the right transform
/// for frequency integrals that extend past `π/h`.
pub fn laplace_steps(f: &GridFunction, z: Complex64) -> Complex64 {
    laplace(f, z) * sinhc(z * (0.5 * f.grid.h))
}

fn sinhc(w: Complex64) -> Complex64 {
    if w.norm() < 1e-4 {
        let w2 = w * w;
        Complex64::new(1.0, 0.0) + w2 / 6.0 + w2 * w2 / 120.0
    } else {
        w.sinh() / w
    }
}

/// Symmetric frequency grid: `m` midpoints of `[-Λ, Λ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    cutoff: f64,
    m: usize,
}

impl LambdaGrid {
    pub fn new(cutoff: f64, m: usize) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::param("cutoff", format!("must be positive, got {cutoff}")));
        }
        if m == 0 || m % 2 != 0 {
            return Err(Error::param("samples", format!("must be positive and even, got {m}")));
        }
        Ok(Self { cutoff, m })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.cutoff / self.m as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        -self.cutoff + (k as f64 + 0.5) * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |k| self.point(k))
    }
}

/// `M(iλ_k) = 1 - 𝔏φ(iλ_k)` on every frequency sample.
pub fn symbol_on_lambda(phi: &GridFunction, lambda: &LambdaGrid) -> Vec<Complex64> {
    lambda
        .points()
        .map(|l| Complex64::new(1.0, 0.0) - laplace(phi, Complex64::new(0.0, l)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlancherelReport {
    /// `(1/2π) Σ_k |𝔏f(iλ_k)|² δλ` with the exact step transform.
    pub spectral: f64,
    /// `inner(f, f)`.
    pub direct: f64,
    pub defect: f64,
}

pub fn plancherel(f: &GridFunction, lambda: &LambdaGrid) -> PlancherelReport {
    let spectral = lambda
        .points()
        .map(|l| laplace_steps(f, Complex64::new(0.0, l)).norm_sqr())
        .sum::<f64>()
        * lambda.spacing()
        / (2.0 * PI);
    let direct = f.norm_l2().powi(2);
    PlancherelReport { spectral, direct, defect: (spectral - direct).abs() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_grid(h: f64, horizon: f64) -> Grid {
        Grid::with_horizon(h, horizon).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(0.0, 4).is_err());
        assert!(Grid::new(0.1, 0).is_err());
        assert!(matches!(Grid::with_horizon(0.3, 1.0), Err(Error::NotGridMultiple { .. })));
        assert_eq!(unit_grid(0.25, 2.0).n(), 8);
    }

    #[test]
    fn inner_of_indicators() {
        let g = unit_grid(1.0 / 64.0, 2.0);
        let one = GridFunction::indicator(g, 0.0, 1.0, 1.0);
        assert_eq!(inner(&one, &one).unwrap(), 1.0);
        let a = GridFunction::indicator(g, 0.0, 0.5, 1.0);
        let b = GridFunction::indicator(g, 0.25, 1.0, 1.0);
        assert_abs_diff_eq!(inner(&a, &b).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn inner_of_ramp_is_second_order() {
        // Cell averages of x on (0,1): the midpoint; h Σ x̄² = 1/3 - h²/12.
        for &h in &[1.0 / 32.0, 1.0 / 64.0] {
            let g = unit_grid(h, 1.0);
            let f = GridFunction::from_antiderivative(g, |x| 0.5 * x * x);
            let err = (inner(&f, &f).unwrap() - 1.0 / 3.0).abs();
            assert!(err <= h * h / 12.0 + 1e-14, "h={h} err={err}");
        }
    }

    #[test]
    fn inner_grid_mismatch_names_both() {
        let a = GridFunction::zeros(unit_grid(0.5, 1.0));
        let b = GridFunction::zeros(unit_grid(0.25, 1.0));
        let msg = inner(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("h = 0.5") && msg.contains("h = 0.25"), "{msg}");
    }

    #[test]
    fn convolution_examples() {
        let g = unit_grid(1.0 / 128.0, 2.0);
        let zero = GridFunction::zeros(g);
        let c = 0.5;
        let f = GridFunction::indicator(g, 0.0, 1.0, c);
        assert_eq!(convolve(&zero, &f).unwrap().max_abs(), 0.0);
        let ff = convolve(&f, &f).unwrap();
        for j in 0..g.cells(1.0).unwrap() {
            let x = g.midpoint(j);
            assert!((ff.values()[j] - c * c * x).abs() <= g.h(), "j={j}");
        }
    }

    #[test]
    fn cumint_examples() {
        let g = unit_grid(1.0 / 64.0, 2.0);
        assert_eq!(cumint(&GridFunction::zeros(g)).max_abs(), 0.0);
        let ramp = cumint(&GridFunction::indicator(g, 0.0, 1.0, 1.0));
        for j in 0..g.n() {
            let expected = ((j + 1) as f64 * g.h()).min(1.0);
            assert_abs_diff_eq!(ramp.values()[j], expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn cumint_of_singular_power_matches_incomplete_gamma() {
        use statrs::function::gamma::gamma_li;
        let h = 1.0 / 256.0;
        let g = unit_grid(h, 2.0);
        // x^{-1/2} integrated exactly per cell, e^{-x} at the cell midpoint.
        let f = GridFunction::from_antiderivative(g, |x| 2.0 * x.sqrt());
        let f = GridFunction::new(
            g,
            f.values().iter().enumerate().map(|(j, v)| v * (-g.midpoint(j)).exp()).collect(),
        )
        .unwrap();
        let cum = cumint(&f);
        for &x in &[0.25, 0.5, 1.0, 1.5] {
            let j = g.cells(x).unwrap() - 1;
            let oracle = gamma_li(0.5, x);
            assert!((cum.values()[j] - oracle).abs() < h, "x={x}");
        }
    }

    #[test]
    fn laplace_examples() {
        let g = unit_grid(1.0 / 64.0, 2.0);
        let f = GridFunction::indicator(g, 0.0, 1.0, 1.0);
        let exact = 1.0 - (-1.0f64).exp();
        let mid = laplace(&f, Complex64::new(1.0, 0.0));
        assert!((mid.re - exact).abs() < g.h() * g.h() && mid.im == 0.0);
        let steps = laplace_steps(&f, Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(steps.re, exact, epsilon = 1e-13);
        let at_zero = laplace(&f, Complex64::new(0.0, 0.0)).re;
        assert_abs_diff_eq!(at_zero, *cumint(&f).values().last().unwrap(), epsilon = 1e-13);
        assert_eq!(laplace(&GridFunction::zeros(g), Complex64::new(0.3, 2.0)).norm(), 0.0);
    }

    #[test]
    fn symbol_examples() {
        let g = unit_grid(1.0 / 256.0, 2.0);
        let lg = LambdaGrid::new(10.0, 8).unwrap();
        assert!(symbol_on_lambda(&GridFunction::zeros(g), &lg)
            .iter()
            .all(|m| *m == Complex64::new(1.0, 0.0)));
        let c = 0.25;
        let phi = GridFunction::indicator(g, 0.0, 1.0, c);
        let m0 = Complex64::new(1.0, 0.0) - laplace(&phi, Complex64::new(0.0, 0.0));
        assert_abs_diff_eq!(m0.re, 1.0 - c, epsilon = 1e-13);
        // Riemann-Lebesgue: far out on the frequency axis |M| returns to 1.
        // Exact step transform, since the midpoint sum is 2π/h periodic.
        let far = Complex64::new(1.0, 0.0) - laplace_steps(&phi, Complex64::new(0.0, 1e4));
        assert!((far.norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn lambda_grid_is_symmetric() {
        let lg = LambdaGrid::new(3.0, 6).unwrap();
        let pts: Vec<f64> = lg.points().collect();
        for k in 0..6 {
            assert_abs_diff_eq!(pts[k], -pts[5 - k], epsilon = 1e-15);
        }
        assert!(LambdaGrid::new(3.0, 5).is_err());
    }

    #[test]
    fn plancherel_defect_shrinks_with_cutoff() {
        // The step transform decays like 1/λ², so the truncation defect is O(1/Λ).
        let g = unit_grid(1.0 / 16.0, 2.0);
        let f = GridFunction::new(g, (0..g.n()).map(|j| ((j * 7) % 5) as f64 - 2.0).collect()).unwrap();
        let mut last = f64::INFINITY;
        for &cutoff in &[50.0, 100.0, 200.0, 400.0, 800.0] {
            let lg = LambdaGrid::new(cutoff, (cutoff * 8.0) as usize).unwrap();
            let rep = plancherel(&f, &lg);
            assert!(rep.defect < last, "cutoff={cutoff}");
            assert!(rep.defect < 40.0 / cutoff * rep.direct, "cutoff={cutoff} {rep:?}");
            last = rep.defect;
        }
    }

    fn arb_fn(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n)
    }

    proptest! {
        #[test]
        fn convolution_commutes_exactly(a in arb_fn(40), b in arb_fn(40)) {
            let g = Grid::new(0.05, 40).unwrap();
            let f = GridFunction::new(g, a).unwrap();
            let k = GridFunction::new(g, b).unwrap();
            prop_assert_eq!(convolve(&f, &k).unwrap(), convolve(&k, &f).unwrap());
        }

        #[test]
        fn convolution_is_associative_and_young(a in arb_fn(32), b in arb_fn(32), c in arb_fn(32)) {
            let g = Grid::new(0.1, 32).unwrap();
            let (f, k, w) = (
                GridFunction::new(g, a).unwrap(),
                GridFunction::new(g, b).unwrap(),
                GridFunction::new(g, c).unwrap(),
            );
            let left = convolve(&convolve(&f, &k).unwrap(), &w).unwrap();
            let right = convolve(&f, &convolve(&k, &w).unwrap()).unwrap();
            let scale = 1.0 + left.max_abs();
            prop_assert!(left.sub(&right).unwrap().max_abs() <= 1e-12 * scale);
            let fk = convolve(&f, &k).unwrap();
            prop_assert!(fk.norm_l1() <= f.norm_l1() * k.norm_l1() * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn operations_are_linear(a in arb_fn(24), b in arb_fn(24), c in arb_fn(24), s in -2.0f64..2.0) {
            let g = Grid::new(0.125, 24).unwrap();
            let (f, k, w) = (
                GridFunction::new(g, a).unwrap(),
                GridFunction::new(g, b).unwrap(),
                GridFunction::new(g, c).unwrap(),
            );
            let combo = f.add(&k.scale(s)).unwrap();
            let lhs = inner(&combo, &w).unwrap();
            let rhs = inner(&f, &w).unwrap() + s * inner(&k, &w).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let conv = convolve(&combo, &w).unwrap();
            let conv2 = convolve(&f, &w).unwrap().add(&convolve(&k, &w).unwrap().scale(s)).unwrap();
            prop_assert!(conv.sub(&conv2).unwrap().max_abs() <= 1e-11);
            let ci = cumint(&combo).sub(&cumint(&f).add(&cumint(&k).scale(s)).unwrap()).unwrap();
            prop_assert!(ci.max_abs() <= 1e-11);
            let z = Complex64::new(0.7, 1.3);
            let lz = laplace(&combo, z) - laplace(&f, z) - laplace(&k, z) * s;
            prop_assert!(lz.norm() <= 1e-11);
        }

        #[test]
        fn norm_is_nonnegative(a in arb_fn(16)) {
            let g = Grid::new(0.25, 16).unwrap();
            let f = GridFunction::new(g, a.clone()).unwrap();
            let n2 = inner(&f, &f).unwrap();
            prop_assert!(n2 >= 0.0);
            prop_assert_eq!(n2 == 0.0, a.iter().all(|v| *v == 0.0));
        }
    }
}
