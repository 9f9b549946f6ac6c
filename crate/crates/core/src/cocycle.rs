//! Real and imaginary additive cocycles `c^M`, `d^M`, their interval versions, and the
//! pairing between them.
//!
//! Both generators are fixed by `c^M(0⁺) = d^M(0⁺) = 1`:
//! `c^M = 1 - ∫₀ˣ φ` has Laplace transform `M(z)/z`, and `d^M = 1 + ∫₀ˣ ψ` has
//! transform `1/(z M(z))`, so no transform inversion is ever needed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{cumint, inner, laplace, Grid, GridFunction};
use crate::kernel::{perturbed_matrix, Kernel2D, SemigroupOperator};

/// `c^M = 1 - cumint(φ)`.
pub fn real_cocycle(phi: &GridFunction) -> GridFunction {
    cumint(phi).map(|v| 1.0 - v)
}

/// `d^M = 1 + cumint(ψ)`.
pub fn imag_cocycle(psi: &GridFunction) -> GridFunction {
    cumint(psi).map(|v| 1.0 + v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocyclePair {
    pub cm: GridFunction,
    pub dm: GridFunction,
}

impl CocyclePair {
    pub fn new(phi: &GridFunction, psi: &GridFunction) -> Result<Self> {
        phi.grid().ensure_same(psi.grid())?;
        Ok(Self { cm: real_cocycle(phi), dm: imag_cocycle(psi) })
    }

    pub fn grid(&self) -> &Grid {
        self.cm.grid()
    }

    /// `(|z 𝔏c^M(z) - M(z)|, |z M(z) 𝔏d^M(z) - 1|)` with `M = 1 - 𝔏φ`.
    pub fn laplace_defects(&self, phi: &GridFunction, z: Complex64) -> (f64, f64) {
        let m = Complex64::new(1.0, 0.0) - laplace(phi, z);
        let c = (z * laplace(&self.cm, z) - m).norm();
        let d = (z * m * laplace(&self.dm, z) - 1.0).norm();
        (c, d)
    }
}

fn ordered_cells(grid: &Grid, r: f64, s: f64) -> Result<(usize, usize)> {
    if !(r >= 0.0 && r < s) {
        return Err(Error::Ordering { lo: r, hi: s });
    }
    let (a, b) = (grid.cells(r)?, grid.cells(s)?);
    if b > grid.n() {
        return Err(Error::HorizonTooSmall { requested: b, available: grid.n() });
    }
    Ok((a, b))
}

/// `c_{r,s} = S_r (c^M - S_{s-r} c^M)`.
pub fn c_interval(cm: &GridFunction, r: f64, s: f64) -> Result<GridFunction> {
    let grid = *cm.grid();
    let (a, b) = ordered_cells(&grid, r, s)?;
    let c = cm.values();
    let values = (0..grid.n())
        .map(|i| {
            if i < a {
                0.0
            } else if i < b {
                c[i - a]
            } else {
                c[i - a] - c[i - b]
            }
        })
        .collect();
    GridFunction::new(grid, values)
}

/// `d_t(x) = 1_{(0,t]}(x) d^M(t - x)`, realized by reversing the first `t/h` cells.
pub fn d_generator(dm: &GridFunction, t: f64) -> Result<GridFunction> {
    let grid = *dm.grid();
    let (_, tau) = ordered_cells(&grid, 0.0, t)?;
    let d = dm.values();
    let values = (0..grid.n()).map(|j| if j < tau { d[tau - 1 - j] } else { 0.0 }).collect();
    GridFunction::new(grid, values)
}

/// `d_{r,s} = T_r d_{s-r}`.
pub fn d_interval(dm: &GridFunction, k: &Kernel2D, r: f64, s: f64) -> Result<GridFunction> {
    let grid = *dm.grid();
    ordered_cells(&grid, r, s)?;
    let base = d_generator(dm, s - r)?;
    perturbed_matrix(grid, r, k)?.apply(&base)
}

/// `⟨c_{q,r}, d_{s,t}⟩`; tends to `|[q,r] ∩ [s,t]|` as `h → 0`.
pub fn pairing(cqr: &GridFunction, dst: &GridFunction) -> Result<f64> {
    inner(cqr, dst)
}

pub fn overlap(q: f64, r: f64, s: f64, t: f64) -> f64 {
    (r.min(t) - q.max(s)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairingRow {
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub pairing: f64,
    pub overlap: f64,
    pub abs_error: f64,
}

/// Evaluates `⟨c_{q,r}, d_{s,t}⟩` against the overlap length for each `(q, r, s, t)`.
pub fn pairing_battery(
    pair: &CocyclePair,
    k: &Kernel2D,
    cases: &[(f64, f64, f64, f64)],
) -> Result<Vec<PairingRow>> {
    cases
        .iter()
        .map(|&(q, r, s, t)| {
            let c = c_interval(&pair.cm, q, r)?;
            let d = d_interval(&pair.dm, k, s, t)?;
            let value = pairing(&c, &d)?;
            let ov = overlap(q, r, s, t);
            Ok(PairingRow { q, r, s, t, pairing: value, overlap: ov, abs_error: (value - ov).abs() })
        })
        .collect()
}

/// `‖T_tᵀ c_{q,r}‖ / ‖c_{q,r}‖`; vanishes in the limit because `c_{q,r} ∈ ker T_t*`.
pub fn kernel_membership(cqr: &GridFunction, tt: &SemigroupOperator, q: f64, r: f64) -> Result<f64> {
    if !(q >= 0.0 && q < r && r <= tt.t() + 1e-12) {
        return Err(Error::Support(format!("interval ({q}, {r}) is not inside (0, {})", tt.t())));
    }
    let image = tt.apply_transpose(cqr)?;
    let norm = cqr.norm_l2();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(image.norm_l2() / norm)
}

/// `‖d_{s+t} - d_s - T_s d_t‖`.
pub fn d_cocycle_residual(dm: &GridFunction, k: &Kernel2D, s: f64, t: f64) -> Result<f64> {
    let grid = *dm.grid();
    let whole = d_generator(dm, s + t)?;
    let head = d_generator(dm, s)?;
    let tail = perturbed_matrix(grid, s, k)?.apply(&d_generator(dm, t)?)?;
    Ok(whole.sub(&head)?.sub(&tail)?.norm_l2())
}

/// Smallest eigenvalue of the Gram matrix of `{c_{jδ,(j+1)δ}}_{j<m}`, `δ = t/m`.
pub fn gram_min_eigenvalue(cm: &GridFunction, t: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("m", "need at least one interval"));
    }
    let delta = t / m as f64;
    let family = (0..m)
        .map(|j| c_interval(cm, j as f64 * delta, (j + 1) as f64 * delta))
        .collect::<Result<Vec<_>>>()?;
    let mut gram = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = inner(&family[a], &family[b])?;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    Ok(gram.symmetric_eigen().eigenvalues.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, shift_matrix, solve_renewal};
    use crate::phi::PhiSpec;

    struct Setup {
        grid: Grid,
        pair: CocyclePair,
        k: Kernel2D,
    }

    fn setup(h: f64, spec: PhiSpec) -> Setup {
        let grid = Grid::with_horizon(h, 2.0).unwrap();
        let phi = spec.materialize(grid).unwrap();
        let psi = solve_renewal(&phi).unwrap();
        let k = build_kernel(&phi, &psi).unwrap();
        let pair = CocyclePair::new(&phi, &psi).unwrap();
        Setup { grid, pair, k }
    }

    #[test]
    fn zero_phi_reduces_to_indicators() {
        let s = setup(1.0 / 64.0, PhiSpec::zero());
        assert!(s.pair.cm.values().iter().all(|v| *v == 1.0));
        assert!(s.pair.dm.values().iter().all(|v| *v == 1.0));
        let ind = GridFunction::indicator(s.grid, 0.25, 0.75, 1.0);
        assert_eq!(c_interval(&s.pair.cm, 0.25, 0.75).unwrap(), ind);
        assert_eq!(d_interval(&s.pair.dm, &s.k, 0.25, 0.75).unwrap(), ind);
        let tt = perturbed_matrix(s.grid, 1.0, &s.k).unwrap();
        assert_eq!(kernel_membership(&ind, &tt, 0.25, 0.75).unwrap(), 0.0);
        let c = c_interval(&s.pair.cm, 0.0, 0.5).unwrap();
        let d = d_interval(&s.pair.dm, &s.k, 0.25, 0.75).unwrap();
        assert!((pairing(&c, &d).unwrap() - 0.25).abs() < 1e-12);
        assert!(d_cocycle_residual(&s.pair.dm, &s.k, 0.25, 0.5).unwrap() < 1e-12);
    }

    #[test]
    fn indicator_cocycle_values() {
        let h = 1.0 / 512.0;
        let s = setup(h, PhiSpec::indicator(0.25));
        assert!((s.pair.cm.at(0.5) - 0.875).abs() < 5.0 * h);
        assert!((s.pair.dm.at(0.5) - (0.125f64).exp()).abs() < 5.0 * h);
        let c = c_interval(&s.pair.cm, 0.0, 0.5).unwrap();
        assert!((c.at(0.25) - 0.9375).abs() < 5.0 * h);
        assert!((c.at(0.75) + 0.125).abs() < 5.0 * h);
        // c^M, d^M tend to constants, so the transform needs a long horizon.
        let long = Grid::with_horizon(h, 40.0).unwrap();
        let phi = PhiSpec::indicator(0.25).materialize(long).unwrap();
        let pair = CocyclePair::new(&phi, &solve_renewal(&phi).unwrap()).unwrap();
        let z = Complex64::new(1.0, 0.0);
        let (dc, dd) = pair.laplace_defects(&phi, z);
        assert!(dc < 5.0 * h && dd < 5.0 * h, "{dc} {dd}");
        let product = laplace(&pair.cm, z) * laplace(&pair.dm, z);
        assert!((product.re - 1.0).abs() < 5.0 * h);
        assert!(s.pair.cm.values()[0] > 1.0 - h && s.pair.dm.values()[0] < 1.0 + h);
    }

    #[test]
    fn interval_additivity_is_exact() {
        let s = setup(1.0 / 128.0, PhiSpec::indicator(0.25));
        let a = c_interval(&s.pair.cm, 0.125, 0.5).unwrap();
        let b = c_interval(&s.pair.cm, 0.5, 0.875).unwrap();
        let whole = c_interval(&s.pair.cm, 0.125, 0.875).unwrap();
        assert!(a.add(&b).unwrap().sub(&whole).unwrap().max_abs() < 1e-15);
        let d = d_interval(&s.pair.dm, &s.k, 0.25, 0.75).unwrap();
        let split = pairing(&a, &d).unwrap() + pairing(&b, &d).unwrap();
        assert!((split - pairing(&whole, &d).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn ordering_and_support_errors() {
        let s = setup(1.0 / 16.0, PhiSpec::indicator(0.25));
        assert!(matches!(c_interval(&s.pair.cm, 0.5, 0.25), Err(Error::Ordering { .. })));
        assert!(matches!(d_interval(&s.pair.dm, &s.k, 0.5, 0.5), Err(Error::Ordering { .. })));
        let tt = perturbed_matrix(s.grid, 0.5, &s.k).unwrap();
        let c = c_interval(&s.pair.cm, 0.25, 0.75).unwrap();
        assert!(matches!(kernel_membership(&c, &tt, 0.25, 0.75), Err(Error::Support(_))));
    }

    #[test]
    fn d_generator_is_supported_in_unit_window() {
        let s = setup(1.0 / 64.0, PhiSpec::indicator(0.25));
        let d = d_generator(&s.pair.dm, 0.5).unwrap();
        let st = shift_matrix(s.grid, 0.5).unwrap();
        assert_eq!(st.apply_transpose(&d).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn gram_matrix_stays_nondegenerate() {
        let mut mins = Vec::new();
        for &h in &[1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
            let s = setup(h, PhiSpec::indicator(0.25));
            mins.push(gram_min_eigenvalue(&s.pair.cm, 1.0, 8).unwrap());
        }
        // For φ = 0 the Gram matrix is δ·I = 0.125 I; the perturbation keeps it well away from 0.
        assert!(mins.iter().all(|m| *m > 0.05), "{mins:?}");
        assert!((mins[2] - mins[1]).abs() < 0.05 * mins[1]);
    }
}
