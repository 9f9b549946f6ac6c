//! One-dimensional quadrature and fitting helpers shared by the classifiers.

/// Double-exponential quadrature on `[a, b]`; tolerates integrable endpoint singularities.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    quadrature::integrate(f, a, b, tol).integral
}

/// `∫_a^b f` for `0 < a < b` after the substitution `x = e^u`.
pub fn integrate_log(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    integrate(|u| {
        let x = u.exp();
        f(x) * x
    }, a.ln(), b.ln(), tol)
}

/// `∫₀^a f` for integrands with an integrable power-type singularity at 0.
///
/// Integrates decade by decade towards 0; once successive decade contributions
/// decay geometrically the remaining tail is summed in closed form.
pub fn integrate_from_zero(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut hi = a;
    let mut prev: Option<f64> = None;
    let mut prev_ratio: Option<f64> = None;
    for _ in 0..300 {
        let lo = hi * 0.1;
        let part = integrate_log(&f, lo, hi, tol * 1e-2);
        total += part;
        if part.abs() <= tol * total.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if let Some(p) = prev {
            if p != 0.0 {
                let ratio = part / p;
                if let Some(r0) = prev_ratio {
                    if ratio > 0.0 && ratio < 1.0 && (ratio - r0).abs() < 1e-8 * ratio {
                        total += part * ratio / (1.0 - ratio);
                        break;
                    }
                }
                prev_ratio = Some(ratio);
            }
        }
        prev = Some(part);
        hi = lo;
    }
    total
}

/// Composite Simpson rule in `ln x` with `panels` (even) subintervals, `0 < a < b`.
///
/// Used where the integrand is only piecewise smooth (e.g. it contains an exact
/// symmetric-difference measure), so adaptive rules gain nothing.
pub fn simpson_log(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(2) + panels % 2;
    let (lo, hi) = (a.ln(), b.ln());
    let du = (hi - lo) / panels as f64;
    let g = |u: f64| {
        let x = u.exp();
        f(x) * x
    };
    let mut acc = g(lo) + g(hi);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(lo + k as f64 * du);
    }
    acc * du / 3.0
}

/// `k` logarithmically spaced points from `a` to `b` inclusive.
pub fn log_spaced(a: f64, b: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            (0..k).map(|i| (la + (lb - la) * i as f64 / (k - 1) as f64).exp()).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LineFit { slope, intercept: my - slope * mx, r_squared }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn singular_endpoint() {
        assert_abs_diff_eq!(integrate_from_zero(|x| x.powf(-0.5), 1.0, 1e-12), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(integrate_from_zero(|x| x.powf(-0.75) * (-x).exp(), 1.0, 1e-12), 3.379354379028, epsilon = 1e-9);
        assert_abs_diff_eq!(integrate(|x| x * x, 0.0, 1.0, 1e-12), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate_log(|x| x.powf(-1.5), 1e-4, 1.0, 1e-12), 198.0, epsilon = 1e-7);
    }

    #[test]
    fn simpson_in_log_variable() {
        let v = simpson_log(|x| x.powf(-0.5), 1e-4, 1.0, 64);
        assert_abs_diff_eq!(v, 2.0 - 2.0 * 1e-2, epsilon = 1e-6);
    }

    #[test]
    fn log_spacing_and_fit() {
        let xs = log_spaced(1e-3, 1.0, 4);
        assert_abs_diff_eq!(xs[1], 1e-2, epsilon = 1e-15);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.7)).collect();
        let fit = loglog_fit(&xs, &ys);
        assert_abs_diff_eq!(fit.slope, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3f64.ln(), epsilon = 1e-12);
    }
}
