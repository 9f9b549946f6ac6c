//! Renewal solve, perturbation kernel, and the matrices of the shift `S_t` and its
//! Hilbert-Schmidt perturbation `T_t = S_t + K_t`.
//!
//! Index conventions: cell `i` of a vector stands for `[i h, (i + 1) h)`. The
//! reflected argument `t - x_i` of the perturbation lands in cell `τ - 1 - i`,
//! where `τ = t / h`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{convolve, Grid, GridFunction};

/// Solves `ψ = φ + φ∗ψ` by forward substitution with the diagonal term handled implicitly.
pub fn solve_renewal(phi: &GridFunction) -> Result<GridFunction> {
    let h = phi.h();
    let p = phi.values();
    let pivot = 1.0 - h * p.first().copied().unwrap_or(0.0);
    if pivot < 1e-12 {
        return Err(Error::RenewalBlowUp { pivot });
    }
    let mut psi = vec![0.0; p.len()];
    for m in 0..p.len() {
        let history: f64 = (0..m).map(|j| p[m - j] * psi[j]).sum();
        psi[m] = (p[m] + h * history) / pivot;
        if !psi[m].is_finite() {
            return Err(Error::RenewalBlowUp { pivot });
        }
    }
    GridFunction::new(*phi.grid(), psi)
}

/// `max |ψ - φ - φ∗ψ|` with the grid convolution.
pub fn renewal_residual(phi: &GridFunction, psi: &GridFunction) -> Result<f64> {
    let conv = convolve(phi, psi)?;
    Ok(psi.sub(phi)?.sub(&conv)?.max_abs())
}

/// Cell samples of `k(x, y)` on the square `[0, side·h)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    grid: Grid,
    values: DMatrix<f64>,
}

impl Kernel2D {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of cells along each side of the kernel square.
    pub fn side(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Value at the cell containing `(x, y)`.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let h = self.grid.h();
        let last = self.side() - 1;
        let i = ((x / h).floor().max(0.0) as usize).min(last);
        let j = ((y / h).floor().max(0.0) as usize).min(last);
        self.values[(i, j)]
    }

    /// Grid proxy `h² Σ k²` for `∫∫ k²` over the represented square.
    pub fn hs_proxy(&self) -> f64 {
        let h = self.grid.h();
        h * h * self.values.norm_squared()
    }

    /// `‖K_t‖_HS` read directly off the kernel rows `x < t`.
    pub fn perturbation_hs_norm(&self, t: f64) -> Result<f64> {
        let tau = self.grid.cells(t)?;
        self.ensure_fits(tau)?;
        Ok(self.grid.h() * self.values.rows(0, tau).norm())
    }

    fn ensure_fits(&self, cells: usize) -> Result<()> {
        if cells > self.side() {
            return Err(Error::HorizonTooSmall { requested: cells, available: self.side() });
        }
        Ok(())
    }
}

/// `k(x,y) = φ(x+y) + ∫₀ˣ φ(x+y-s) ψ(s) ds` on the square of half the grid horizon.
pub fn build_kernel(phi: &GridFunction, psi: &GridFunction) -> Result<Kernel2D> {
    build_kernel_with_side(phi, psi, phi.len() / 2)
}

/// As [`build_kernel`] with an explicit square side (in cells, at most `n / 2`).
pub fn build_kernel_with_side(phi: &GridFunction, psi: &GridFunction, side: usize) -> Result<Kernel2D> {
    phi.grid().ensure_same(psi.grid())?;
    let n = phi.len();
    if side == 0 || 2 * side > n {
        return Err(Error::HorizonTooSmall { requested: 2 * side.max(1), available: n });
    }
    let h = phi.h();
    let (p, q) = (phi.values(), psi.values());
    let mut values = DMatrix::zeros(side, side);
    // Walk each anti-diagonal m = i + j; the integral term grows by one product per step in i.
    for m in 0..(2 * side - 1) {
        let i_lo = m.saturating_sub(side - 1);
        let i_hi = m.min(side - 1);
        let mut acc: f64 = (0..i_lo).map(|l| p[m - l] * q[l]).sum();
        for i in i_lo..=i_hi {
            values[(i, m - i)] = p[m] + h * acc;
            acc += p[m - i] * q[i];
        }
    }
    Ok(Kernel2D { grid: *phi.grid(), values })
}

/// Largest on-grid defect of the kernel functional equation
/// `k(x+t, y) = k(x, y+t) + ∫₀ᵗ k(x, s) k(t-s, y) ds`.
pub fn kernel_cocycle_residual(k: &Kernel2D, t: f64) -> Result<f64> {
    let tau = k.grid.cells(t)?;
    let side = k.side();
    if tau >= side {
        return Err(Error::HorizonTooSmall { requested: tau + 1, available: side });
    }
    if tau == 0 {
        return Ok(0.0);
    }
    let rows = side - tau;
    let h = k.grid.h();
    let left = k.values.view((0, 0), (rows, tau));
    let reversed = DMatrix::from_fn(tau, rows, |l, j| k.values[(tau - 1 - l, j)]);
    let conv = left * reversed;
    let mut worst: f64 = 0.0;
    for a in 0..rows {
        for j in 0..rows {
            let r = k.values[(a + tau, j)] - k.values[(a, j + tau)] - h * conv[(a, j)];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

/// Matrix of `S_t` or `T_t` acting on cell-value vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupOperator {
    grid: Grid,
    t: f64,
    cells: usize,
    matrix: DMatrix<f64>,
}

impl SemigroupOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `t / h`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.grid.ensure_same(f.grid())?;
        let out = &self.matrix * DVector::from_column_slice(f.values());
        GridFunction::new(self.grid, out.as_slice().to_vec())
    }

    pub fn apply_transpose(&self, f: &GridFunction) -> Result<GridFunction> {
        self.grid.ensure_same(f.grid())?;
        let out = self.matrix.tr_mul(&DVector::from_column_slice(f.values()));
        GridFunction::new(self.grid, out.as_slice().to_vec())
    }
}

/// `S_t`: ones on the `(t/h)`-th subdiagonal.
pub fn shift_matrix(grid: Grid, t: f64) -> Result<SemigroupOperator> {
    let tau = grid.cells(t)?;
    let n = grid.n();
    let mut matrix = DMatrix::zeros(n, n);
    for j in 0..n.saturating_sub(tau) {
        matrix[(j + tau, j)] = 1.0;
    }
    Ok(SemigroupOperator { grid, t, cells: tau, matrix })
}

/// `T_t = S_t + K_t` with `K_t[i][j] = h k(t - x_i, y_j)` for `x_i < t`.
///
/// Columns run over the whole kernel square: the perturbation integrates `y` over
/// `(0, ∞)`, which is what makes `T_s T_t = T_{s+t}` hold.
pub fn perturbed_matrix(grid: Grid, t: f64, k: &Kernel2D) -> Result<SemigroupOperator> {
    grid.ensure_same(&k.grid)?;
    let mut op = shift_matrix(grid, t)?;
    let tau = op.cells;
    k.ensure_fits(tau)?;
    let h = grid.h();
    for i in 0..tau {
        for j in 0..k.side() {
            op.matrix[(i, j)] += h * k.values[(tau - 1 - i, j)];
        }
    }
    Ok(op)
}

fn same_time(a: &SemigroupOperator, b: &SemigroupOperator) -> Result<()> {
    a.grid.ensure_same(&b.grid)?;
    if a.cells != b.cells {
        return Err(Error::param("t", format!("operators act at different times {} and {}", a.t, b.t)));
    }
    Ok(())
}

/// `max |T_tᵀ S_t - P|`, where `P` keeps the columns whose shifted image stays on the grid.
pub fn left_inverse_defect(tt: &SemigroupOperator, st: &SemigroupOperator) -> Result<f64> {
    same_time(tt, st)?;
    let n = tt.grid.n();
    let keep = n.saturating_sub(tt.cells);
    let product = tt.matrix.tr_mul(&st.matrix);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j && j < keep { 1.0 } else { 0.0 };
            worst = worst.max((product[(i, j)] - target).abs());
        }
    }
    Ok(worst)
}

/// `‖T_s T_t - T_{s+t}‖_HS`.
pub fn semigroup_residual(grid: Grid, k: &Kernel2D, s: f64, t: f64) -> Result<f64> {
    let ts = perturbed_matrix(grid, s, k)?;
    let tt = perturbed_matrix(grid, t, k)?;
    let tst = perturbed_matrix(grid, s + t, k)?;
    Ok((&ts.matrix * &tt.matrix - &tst.matrix).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdempotentReport {
    /// `‖E² - E‖_HS` for `E = S_t T_tᵀ`.
    pub residual: f64,
    /// Numerical rank of `I - E` (singular values above `1e-8`).
    pub complement_rank: usize,
    /// `t / h`, the dimension of `ker T_tᵀ`.
    pub expected_rank: usize,
}

pub fn idempotent_check(tt: &SemigroupOperator, st: &SemigroupOperator) -> Result<IdempotentReport> {
    same_time(tt, st)?;
    let n = tt.grid.n();
    let e = &st.matrix * tt.matrix.transpose();
    let residual = (&e * &e - &e).norm();
    let complement = DMatrix::identity(n, n) - &e;
    let complement_rank = complement.singular_values().iter().filter(|s| **s > 1e-8).count();
    Ok(IdempotentReport { residual, complement_rank, expected_rank: tt.cells })
}
