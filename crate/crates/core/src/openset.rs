//! Finite unions of open intervals with exact measure arithmetic, and the
//! slowly-shrinking open sets built from a decreasing profile `f`.
//!
//! For a profile `f` the construction places gaps of length `f⁻¹(n)` and
//! intervals of length `f⁻¹(n+1)` alternately:
//! `a₀ = 0`, `a_{2n-1} = a_{2n} = f⁻¹(n)`, `b_k = Σ_{j≤k} a_j`,
//! `I_n = (b_{2n}, b_{2n+1})`. The symmetric difference `|(U+x) ⊖ U|` then decays
//! like `x f(x)` as `x → 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Two endpoints closer than this are treated as touching.
pub const MERGE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpenSet {
    intervals: Vec<(f64, f64)>,
}

impl OpenSet {
    /// Validates that the intervals are sorted, disjoint, and of positive length.
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        for (k, &(a, b)) in intervals.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::param("intervals", format!("interval {k} = ({a}, {b}) is empty or not finite")));
            }
            if k > 0 && intervals[k - 1].1 >= a {
                return Err(Error::param(
                    "intervals",
                    format!("interval {k} starts at {a}, before the previous one ends at {}", intervals[k - 1].1),
                ));
            }
        }
        Ok(Self { intervals })
    }

    /// Sorts and merges overlapping or touching intervals; drops empty ones.
    pub fn from_unsorted(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        intervals.retain(|(a, b)| b > a);
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 + MERGE_TOL => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self::new(merged)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn sup(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.1)
    }

    pub fn inf(&self) -> f64 {
        self.intervals.first().map_or(0.0, |i| i.0)
    }

    /// True when `[a, b]` lies inside the closure of one component.
    pub fn contains_interval(&self, a: f64, b: f64, tol: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.1 < b - tol);
        self.intervals.get(idx).is_some_and(|&(lo, hi)| lo <= a + tol && b <= hi + tol)
    }

    /// Union with another set.
    pub fn union(&self, other: &OpenSet) -> Result<OpenSet> {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Self::from_unsorted(all)
    }

    /// `|U ∩ (U + x)|` by a two-pointer sweep.
    pub fn overlap_with_shift(&self, x: f64) -> f64 {
        let iv = &self.intervals;
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < iv.len() && j < iv.len() {
            let (a, b) = iv[i];
            let (c, d) = (iv[j].0 + x, iv[j].1 + x);
            let lo = a.max(c);
            let hi = b.min(d);
            if hi > lo {
                acc += hi - lo;
            }
            if b < d {
                i += 1;
            } else {
                j += 1;
            }
        }
        acc
    }
}

/// Exact `|(U + x) ⊖ U| = 2|U| - 2|U ∩ (U + x)|`.
pub fn symdiff_measure(u: &OpenSet, x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    (2.0 * (u.measure() - u.overlap_with_shift(x))).max(0.0)
}

/// Decreasing profile `f(x) = (x/s)^{γ-1} · ln(1 + s/x)^p`.
///
/// `p = 0` gives a pure power; `p > 0` adds a slowly varying logarithmic factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileF {
    pub gamma: f64,
    #[serde(default)]
    pub log_power: f64,
    #[serde(default = "unit")]
    pub scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl ProfileF {
    pub fn power(gamma: f64) -> Result<Self> {
        Self::new(gamma, 0.0, 1.0)
    }

    pub fn new(gamma: f64, log_power: f64, scale: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::param("gamma", format!("must lie in (0, 1], got {gamma}")));
        }
        if !(log_power.is_finite() && log_power >= 0.0) {
            return Err(Error::param("log_power", format!("must be non-negative, got {log_power}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param("scale", format!("must be positive, got {scale}")));
        }
        if gamma == 1.0 && log_power == 0.0 {
            return Err(Error::param("gamma", "γ = 1 without a log factor is constant; f must diverge at 0⁺"));
        }
        Ok(Self { gamma, log_power, scale })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = x / self.scale;
        let base = u.powf(self.gamma - 1.0);
        if self.log_power == 0.0 {
            base
        } else {
            base * (1.0 / u).ln_1p().powf(self.log_power)
        }
    }

    fn ln_eval(&self, ln_u: f64) -> f64 {
        let mut v = (self.gamma - 1.0) * ln_u;
        if self.log_power > 0.0 {
            v += self.log_power * (-ln_u).exp().ln_1p().ln();
        }
        v
    }

    /// `d ln f / d ln u`.
    fn ln_slope(&self, ln_u: f64) -> f64 {
        let mut s = self.gamma - 1.0;
        if self.log_power > 0.0 {
            let w = (-ln_u).exp();
            let l = w.ln_1p();
            s -= self.log_power * w / ((1.0 + w) * l);
        }
        s
    }

    /// `f⁻¹(y)`; closed form for pure powers, safeguarded Newton in `ln x` otherwise.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::param("y", format!("profile inverse needs a positive value, got {y}")));
        }
        if self.log_power == 0.0 {
            return Ok(self.scale * y.powf(1.0 / (self.gamma - 1.0)));
        }
        let target = y.ln();
        let g = |u: f64| self.ln_eval(u) - target;
        // Bracket: g is strictly decreasing in u.
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut guard = 0;
        while g(lo) < 0.0 {
            lo *= 2.0;
            guard += 1;
            if guard > 60 {
                return Err(Error::RootFind { target: y });
            }
        }
        while g(hi) > 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 120 {
                return Err(Error::RootFind { target: y });
            }
        }
        let mut u = 0.5 * (lo + hi);
        for _ in 0..200 {
            let val = g(u);
            if val > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let slope = self.ln_slope(u);
            let mut next = u - val / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-13 * u.abs().max(1.0) {
                return Ok(self.scale * next.exp());
            }
            u = next;
        }
        if (hi - lo) <= 1e-12 * u.abs().max(1.0) {
            return Ok(self.scale * u.exp());
        }
        Err(Error::RootFind { target: y })
    }

    /// `∫₀^a f(s) ds`.
    pub fn integral_to(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        if self.log_power == 0.0 {
            self.scale * (a / self.scale).powf(self.gamma) / self.gamma
        } else {
            quad::integrate_from_zero(|s| self.eval(s), a, 1e-12)
        }
    }

    /// `Σ_{k > n} f⁻¹(k) ≤ ∫_n^∞ f⁻¹(y) dy = ∫₀^{f⁻¹(n)} f(s) ds - n f⁻¹(n)`.
    pub fn tail_bound(&self, n: f64) -> Result<f64> {
        let a = self.inverse(n)?;
        Ok((self.integral_to(a) - n * a).max(0.0))
    }
}

/// Open set built from a profile, truncated after `I_{n_max}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructedSet {
    pub set: OpenSet,
    pub profile: ProfileF,
    /// Index of the last interval kept (at most the requested `n_max`).
    pub n_max: usize,
    /// Upper bound on the measure of the dropped intervals `I_n`, `n > n_max`.
    pub truncation_remainder: f64,
}

/// Relative length below which an interval is lost to rounding of its endpoints.
const RESOLVABLE: f64 = 1e-12;

/// Builds `I_0, …, I_{n_max}`; stops earlier once the next interval would be
/// shorter than `RESOLVABLE` relative to its position, and folds the rest into
/// `truncation_remainder`.
pub fn construct_u(f: &ProfileF, n_max: usize) -> Result<ConstructedSet> {
    if n_max < 2 {
        return Err(Error::param("n_max", format!("need at least 2, got {n_max}")));
    }
    // I_n = (b_{2n}, b_{2n+1}): gap f⁻¹(n) before it (none for n = 0), length f⁻¹(n+1).
    let mut intervals = Vec::with_capacity(n_max.min(1 << 20) + 1);
    let mut prev = f.inverse(1.0)?;
    let mut b = 0.0;
    let mut last = 0;
    for n in 0..=n_max {
        let len = if n == 0 { prev } else { f.inverse((n + 1) as f64)? };
        if n > 0 && !(len < prev && len > 0.0) {
            return Err(Error::NonMonotone(format!("f⁻¹ is not strictly decreasing: {prev} then {len}")));
        }
        let start = if n > 0 { b + prev } else { 0.0 };
        if len < RESOLVABLE * start.max(1.0) {
            break;
        }
        intervals.push((start, start + len));
        b = start + len;
        prev = len;
        last = n;
    }
    if last < 2 {
        return Err(Error::param("profile", "fewer than three resolvable intervals"));
    }
    let set = OpenSet::new(intervals)?;
    // Dropped intervals have lengths f⁻¹(k) for k ≥ last + 2.
    let truncation_remainder = f.tail_bound((last + 1) as f64)?;
    Ok(ConstructedSet { set, profile: *f, n_max: last, truncation_remainder })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichRow {
    pub x: f64,
    pub lower: f64,
    pub measure: f64,
    pub upper: f64,
}

impl SandwichRow {
    pub fn pass(&self) -> bool {
        self.lower <= self.measure && self.measure <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    pub pass: bool,
}

/// `(2f(x) - 1) x ≤ |(U+x) ⊖ U| ≤ (2f(x) + 1) x + 2∫₀ˣ f` for each `x ∈ (0, f⁻¹(1))`.
pub fn sandwich_check(u: &ConstructedSet, xs: &[f64]) -> Result<SandwichReport> {
    let f = &u.profile;
    let x_max = f.inverse(1.0)?;
    if let Some(bad) = xs.iter().find(|x| !(**x > 0.0 && **x < x_max)) {
        return Err(Error::param("x", format!("{bad} is outside (0, f⁻¹(1)) = (0, {x_max})")));
    }
    let bounds = |x: f64| {
        let fx = f.eval(x);
        ((2.0 * fx - 1.0) * x, (2.0 * fx + 1.0) * x + 2.0 * f.integral_to(x))
    };
    if let Some(&x_min) = xs.iter().min_by(|a, b| a.total_cmp(b)) {
        let (lo, hi) = bounds(x_min);
        let slack = 0.1 * (hi - lo);
        if 2.0 * u.truncation_remainder > slack {
            return Err(Error::TruncationTooCoarse { remainder: 2.0 * u.truncation_remainder, slack });
        }
    }
    let rows: Vec<SandwichRow> = xs
        .iter()
        .map(|&x| {
            let (lower, upper) = bounds(x);
            SandwichRow { x, lower, measure: symdiff_measure(&u.set, x), upper }
        })
        .collect();
    let pass = rows.iter().all(SandwichRow::pass);
    Ok(SandwichReport { rows, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticFit {
    /// Log-log slope of `|(U+x) ⊖ U|` against `x`.
    pub gamma_hat: f64,
    /// `|(U+x) ⊖ U| / x^{γ̂}` at the ends of the window; roughly constant when `L` is.
    pub l_hat_lo: f64,
    pub l_hat_hi: f64,
    pub r_squared: f64,
}

/// Least-squares exponent of `x ↦ |(U+x) ⊖ U|` over `k` log-spaced points in `[lo, hi]`.
pub fn asymptotic_fit(u: &OpenSet, lo: f64, hi: f64, k: usize) -> Result<AsymptoticFit> {
    if !(lo > 0.0 && hi >= 100.0 * lo * (1.0 - 1e-12)) {
        return Err(Error::InsufficientSamples(format!("fit window ({lo}, {hi}) spans less than two decades")));
    }
    if k < 8 {
        return Err(Error::InsufficientSamples(format!("need at least 8 points, got {k}")));
    }
    let xs = quad::log_spaced(lo, hi, k);
    let ms: Vec<f64> = xs.iter().map(|&x| symdiff_measure(u, x)).collect();
    if ms.iter().any(|m| *m <= 0.0) {
        return Err(Error::InsufficientSamples("symmetric difference vanishes inside the window".into()));
    }
    let fit = quad::loglog_fit(&xs, &ms);
    Ok(AsymptoticFit {
        gamma_hat: fit.slope,
        l_hat_lo: ms[0] / lo.powf(fit.slope),
        l_hat_hi: ms[k - 1] / hi.powf(fit.slope),
        r_squared: fit.r_squared,
    })
}
