//! Declarative description of the generating function φ and its materialization on a grid.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_li};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::quad;

/// Working normalization bound on ‖φ‖₁.
pub const L1_BOUND: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PhiShape {
    Zero,
    /// `c · 1_{(0,1)}`.
    Indicator { c: f64 },
    /// `scale · x^{β-1} e^{-x}`.
    PowerLaw {
        beta: f64,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    /// Raw cell averages on a grid of width `h` starting at 0.
    Samples { h: f64, values: Vec<f64> },
    /// Pointwise sum of other specs.
    Sum { terms: Vec<PhiSpec> },
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSpec {
    #[serde(flatten)]
    pub shape: PhiShape,
    #[serde(default)]
    pub truncate_to_unit: bool,
    #[serde(default)]
    pub l1_target: Option<f64>,
}

impl PhiSpec {
    pub fn new(shape: PhiShape) -> Self {
        Self { shape, truncate_to_unit: false, l1_target: None }
    }

    pub fn zero() -> Self {
        Self::new(PhiShape::Zero)
    }

    pub fn indicator(c: f64) -> Self {
        Self::new(PhiShape::Indicator { c })
    }

    pub fn power_law(beta: f64, scale: f64) -> Self {
        Self::new(PhiShape::PowerLaw { beta, scale })
    }

    pub fn samples(f: &GridFunction) -> Self {
        Self::new(PhiShape::Samples { h: f.h(), values: f.values().to_vec() })
    }

    pub fn sum(terms: Vec<PhiSpec>) -> Self {
        Self::new(PhiShape::Sum { terms })
    }

    pub fn truncated(mut self) -> Self {
        self.truncate_to_unit = true;
        self
    }

    pub fn with_l1_target(mut self, target: f64) -> Self {
        self.l1_target = Some(target);
        self
    }

    /// Checks parameter ranges and the ‖φ‖₁ < 1/3 policy.
    pub fn validate(&self) -> Result<()> {
        if let Some(target) = self.l1_target {
            if !(target.is_finite() && target > 0.0 && target < L1_BOUND) {
                return Err(Error::param(
                    "l1_target",
                    format!("must lie in (0, 1/3), got {target}"),
                ));
            }
        }
        match &self.shape {
            PhiShape::Zero => Ok(()),
            PhiShape::Indicator { c } => {
                if !c.is_finite() {
                    return Err(Error::param("c", "must be finite"));
                }
                if self.l1_target.is_none() && c.abs() >= L1_BOUND {
                    return Err(Error::param(
                        "c",
                        format!("‖φ‖₁ = |c| = {} violates the ‖φ‖₁ < 1/3 normalization; set l1_target", c.abs()),
                    ));
                }
                Ok(())
            }
            PhiShape::PowerLaw { beta, scale } => {
                if !(*beta > 0.0 && *beta <= 0.5) {
                    return Err(Error::param("beta", format!("must lie in (0, 0.5], got {beta}")));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::param("scale", format!("must be positive, got {scale}")));
                }
                Ok(())
            }
            PhiShape::Samples { h, values } => {
                if !(h.is_finite() && *h > 0.0) {
                    return Err(Error::param("h", format!("sample spacing must be positive, got {h}")));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("values", "samples must be finite"));
                }
                Ok(())
            }
            PhiShape::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::param("terms", "sum needs at least one term"));
                }
                terms.iter().try_for_each(PhiSpec::validate)
            }
        }
    }

    /// Cell averages of φ on `grid`, after truncation and L¹ rescaling.
    pub fn materialize(&self, grid: Grid) -> Result<GridFunction> {
        self.validate()?;
        if self.truncate_to_unit && grid.horizon() < 1.0 - 1e-12 {
            return Err(Error::param(
                "horizon",
                format!("truncate_to_unit needs a horizon of at least 1, got {}", grid.horizon()),
            ));
        }
        let h = grid.h();
        let raw = match &self.shape {
            PhiShape::Zero => GridFunction::zeros(grid),
            PhiShape::Indicator { c } => GridFunction::indicator(grid, 0.0, 1.0, *c),
            PhiShape::PowerLaw { beta, scale } => {
                let (b, s) = (*beta, *scale);
                let values = (0..grid.n())
                    .map(|j| {
                        let lo = (j as f64 * h).powf(b);
                        let hi = ((j + 1) as f64 * h).powf(b);
                        s * (hi - lo) / (b * h) * (-grid.midpoint(j)).exp()
                    })
                    .collect();
                GridFunction::new(grid, values)?
            }
            PhiShape::Samples { h: sh, values } => {
                if (sh - h).abs() > 1e-12 * h {
                    return Err(Error::param(
                        "h",
                        format!("samples were taken at h = {sh}, grid has h = {h}"),
                    ));
                }
                let mut v = values.clone();
                v.resize(grid.n(), 0.0);
                GridFunction::new(grid, v)?
            }
            PhiShape::Sum { terms } => {
                let mut acc = GridFunction::zeros(grid);
                for term in terms {
                    acc = acc.add(&term.materialize(grid)?)?;
                }
                acc
            }
        };
        let phi = if self.truncate_to_unit { raw.truncate_at(1.0) } else { raw };
        match self.l1_target {
            Some(target) => {
                let norm = phi.norm_l1();
                if norm == 0.0 {
                    return Err(Error::param("l1_target", "cannot rescale a function with zero L¹ norm"));
                }
                Ok(phi.scale(target / norm))
            }
            None => Ok(phi),
        }
    }

    /// Pointwise value φ(x) for `x > 0` (cell lookup for sampled shapes).
    pub fn eval(&self, x: f64) -> f64 {
        if self.truncate_to_unit && x >= 1.0 {
            return 0.0;
        }
        self.l1_factor() * self.eval_raw(x)
    }

    fn eval_raw(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.shape {
            PhiShape::Zero => 0.0,
            PhiShape::Indicator { c } => {
                if x < 1.0 {
                    *c
                } else {
                    0.0
                }
            }
            PhiShape::PowerLaw { beta, scale } => scale * x.powf(beta - 1.0) * (-x).exp(),
            PhiShape::Samples { h, values } => {
                let j = (x / h).floor() as usize;
                values.get(j).copied().unwrap_or(0.0)
            }
            PhiShape::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    fn l1_factor(&self) -> f64 {
        match self.l1_target {
            Some(target) => {
                let norm = self.raw_l1_norm();
                if norm > 0.0 {
                    target / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }

    /// ‖φ‖₁ of the truncated but not yet rescaled function.
    fn raw_l1_norm(&self) -> f64 {
        let upper = if self.truncate_to_unit { 1.0 } else { f64::INFINITY };
        match &self.shape {
            PhiShape::Zero => 0.0,
            PhiShape::Indicator { c } => c.abs(),
            PhiShape::PowerLaw { beta, scale } => {
                if self.truncate_to_unit {
                    scale * gamma_li(*beta, 1.0)
                } else {
                    scale * gamma(*beta)
                }
            }
            PhiShape::Samples { h, values } => values
                .iter()
                .enumerate()
                .map(|(j, v)| v.abs() * h * ((upper - j as f64 * h) / h).clamp(0.0, 1.0))
                .sum(),
            PhiShape::Sum { .. } => {
                let f = |x: f64| self.eval_raw(x).abs();
                let head = quad::integrate_from_zero(f, 1.0, 1e-10);
                if self.truncate_to_unit {
                    head
                } else {
                    head + quad::integrate(f, 1.0, 80.0, 1e-10)
                }
            }
        }
    }

    /// ‖φ‖₁ implied by the spec (analytic where possible).
    pub fn l1_norm(&self) -> f64 {
        self.l1_target.unwrap_or_else(|| self.raw_l1_norm())
    }

    /// Exponent `p` with `|φ(x)|² ~ x^p` as `x → 0⁺`; `None` for the zero function.
    pub fn square_exponent(&self) -> Option<f64> {
        match &self.shape {
            PhiShape::Zero => None,
            PhiShape::Indicator { c } => (*c != 0.0).then_some(0.0),
            PhiShape::PowerLaw { beta, .. } => Some(2.0 * beta - 2.0),
            PhiShape::Samples { values, .. } => values.iter().any(|v| *v != 0.0).then_some(0.0),
            PhiShape::Sum { terms } => terms
                .iter()
                .filter_map(PhiSpec::square_exponent)
                .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.min(p)))),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.square_exponent().is_none()
    }

    /// True when the spec is built only from closed-form shapes (no raw samples).
    pub fn is_parametric(&self) -> bool {
        match &self.shape {
            PhiShape::Samples { .. } => false,
            PhiShape::Sum { terms } => terms.iter().all(PhiSpec::is_parametric),
            _ => true,
        }
    }

    /// True when φ is known to be monotone on some interval `(0, a)`.
    pub fn is_monotone_near_zero(&self) -> bool {
        match &self.shape {
            PhiShape::Samples { .. } => false,
            PhiShape::Sum { terms } => {
                // Non-negative power laws and constants near 0 all decrease or stay flat.
                terms.iter().all(|t| match &t.shape {
                    PhiShape::Zero => true,
                    PhiShape::Indicator { c } => *c >= 0.0,
                    PhiShape::PowerLaw { .. } => true,
                    _ => false,
                })
            }
            _ => true,
        }
    }

    /// Same spec with every amplitude multiplied by `factor` (ignored when an L¹ target is set).
    pub fn scaled(&self, factor: f64) -> Self {
        let shape = match &self.shape {
            PhiShape::Zero => PhiShape::Zero,
            PhiShape::Indicator { c } => PhiShape::Indicator { c: c * factor },
            PhiShape::PowerLaw { beta, scale } => PhiShape::PowerLaw { beta: *beta, scale: scale * factor },
            PhiShape::Samples { h, values } => {
                PhiShape::Samples { h: *h, values: values.iter().map(|v| v * factor).collect() }
            }
            PhiShape::Sum { terms } => PhiShape::Sum { terms: terms.iter().map(|t| t.scaled(factor)).collect() },
        };
        Self { shape, truncate_to_unit: self.truncate_to_unit, l1_target: self.l1_target }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_and_indicator() {
        let g = Grid::with_horizon(1.0 / 64.0, 2.0).unwrap();
        assert_eq!(PhiSpec::zero().materialize(g).unwrap().max_abs(), 0.0);
        let phi = PhiSpec::indicator(0.25).materialize(g).unwrap();
        assert!(phi.values()[..64].iter().all(|v| *v == 0.25));
        assert!(phi.values()[64..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn power_law_first_cell_is_exact() {
        let h = 0.01;
        let g = Grid::with_horizon(h, 2.0).unwrap();
        let phi = PhiSpec::power_law(0.5, 1.0).materialize(g).unwrap();
        let expected = 2.0 / h.sqrt() * (-h / 2.0f64).exp();
        assert_abs_diff_eq!(phi.values()[0], expected, epsilon = 1e-12);
        assert!((phi.values()[0] - 19.90).abs() < 5e-3);
    }

    #[test]
    fn truncation_and_rescaling() {
        let g = Grid::with_horizon(1.0 / 128.0, 2.0).unwrap();
        let spec = PhiSpec::power_law(0.25, 1.0).truncated().with_l1_target(0.2);
        let phi = spec.materialize(g).unwrap();
        assert_abs_diff_eq!(phi.norm_l1(), 0.2, epsilon = 1e-14);
        assert!(phi.values()[128..].iter().all(|v| *v == 0.0));
        assert_abs_diff_eq!(spec.l1_norm(), 0.2);
        // Pointwise evaluation uses the analytic norm; the two agree to O(h).
        let by_eval = quad::integrate_from_zero(|x| spec.eval(x), 1.0, 1e-12);
        assert_abs_diff_eq!(by_eval, 0.2, epsilon = 1e-8);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        let g = Grid::with_horizon(0.25, 1.0).unwrap();
        assert!(PhiSpec::power_law(0.6, 1.0).materialize(g).is_err());
        assert!(PhiSpec::power_law(0.0, 1.0).materialize(g).is_err());
        assert!(PhiSpec::indicator(0.1).with_l1_target(0.4).materialize(g).is_err());
        assert!(PhiSpec::indicator(0.9).validate().is_err());
        assert!(PhiSpec::indicator(0.9).with_l1_target(0.3).validate().is_ok());
        let short = Grid::with_horizon(0.25, 0.5).unwrap();
        assert!(PhiSpec::indicator(0.1).truncated().materialize(short).is_err());
    }

    #[test]
    fn json_round_trip_and_schema() {
        let spec: PhiSpec = serde_json::from_str(
            r#"{"variant":"power_law","beta":0.25,"scale":2.0,"truncate_to_unit":true,"l1_target":null}"#,
        )
        .unwrap();
        assert_eq!(spec, PhiSpec::power_law(0.25, 2.0).truncated());
        let json = serde_json::to_value(PhiSpec::indicator(0.25)).unwrap();
        assert_eq!(json["variant"], "indicator");
        assert_eq!(json["c"], 0.25);
        assert!(json["l1_target"].is_null());
        let zero: PhiSpec = serde_json::from_str(r#"{"variant":"zero"}"#).unwrap();
        assert!(zero.is_zero());
        let sum = PhiSpec::sum(vec![PhiSpec::power_law(0.25, 1.0), PhiSpec::indicator(0.1)]);
        let back: PhiSpec = serde_json::from_str(&serde_json::to_string(&sum).unwrap()).unwrap();
        assert_eq!(back, sum);
    }

    #[test]
    fn exponents_and_shape_flags() {
        assert_eq!(PhiSpec::power_law(0.25, 1.0).square_exponent(), Some(-1.5));
        assert_eq!(PhiSpec::indicator(0.2).square_exponent(), Some(0.0));
        let sum = PhiSpec::sum(vec![PhiSpec::indicator(0.1), PhiSpec::power_law(0.4, 1.0)]);
        assert_abs_diff_eq!(sum.square_exponent().unwrap(), -1.2, epsilon = 1e-12);
        assert!(sum.is_monotone_near_zero() && sum.is_parametric());
        let g = Grid::with_horizon(0.5, 1.0).unwrap();
        let samples = PhiSpec::samples(&GridFunction::indicator(g, 0.0, 1.0, 0.1));
        assert!(!samples.is_parametric());
        assert_abs_diff_eq!(samples.eval(0.7), 0.1);
    }
}
