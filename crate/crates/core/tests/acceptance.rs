//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero on any failure.

use std::time::Instant;

use ccrlab::classify::{self, ClassifyConfig, IsoNecessary, IsoSufficient, Verdict};
use ccrlab::cli::PAIRING_CASES;
use ccrlab::cocycle::{d_cocycle_residual, pairing_battery, CocyclePair};
use ccrlab::grid::{Grid, LambdaGrid};
use ccrlab::kernel::{
    build_kernel, kernel_cocycle_residual, left_inverse_defect, perturbed_matrix, renewal_residual, semigroup_residual,
    shift_matrix, solve_renewal,
};
use ccrlab::openset::{construct_u, sandwich_check, ProfileF};
use ccrlab::phi::PhiSpec;
use ccrlab::quad;
use ccrlab::toeplitz::{
    abs_m2_minus_one_hs, convolution_block, fn_plancherel, hs_divergence_probe, hs_norm, j_operator_check,
    toeplitz_matrix, uncertainty_battery, ProbeThresholds, ProbeVerdict, Symbol,
};
use ccrlab::Result;

type Check = Result<(bool, String)>;

fn ccr_baseline() -> Check {
    let start = Instant::now();
    let h = 1.0 / 256.0;
    let grid = Grid::with_horizon(h, 2.0)?;
    let phi = PhiSpec::zero().materialize(grid)?;
    let psi = solve_renewal(&phi)?;
    let k = build_kernel(&phi, &psi)?;
    let pair = CocyclePair::new(&phi, &psi)?;
    let t = 0.5;
    let tt = perturbed_matrix(grid, t, &k)?;
    let st = shift_matrix(grid, t)?;
    let mut worst = 0.0f64;
    worst = worst.max((tt.matrix() - st.matrix()).abs().max());
    worst = worst.max(renewal_residual(&phi, &psi)?);
    worst = worst.max(kernel_cocycle_residual(&k, t)?);
    worst = worst.max(semigroup_residual(grid, &k, 0.25, t)?);
    worst = worst.max(left_inverse_defect(&tt, &st)?);
    worst = worst.max(d_cocycle_residual(&pair.dm, &k, 0.25, t)?);
    worst = worst.max(pair.cm.values().iter().chain(pair.dm.values()).map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
    let m = toeplitz_matrix(&Symbol::AbsM2, &phi, &psi, 1.0)?;
    worst = worst.max((m.matrix - nalgebra::DMatrix::identity(256, 256)).abs().max());
    let part = [0.0, 0.25, 0.5, 1.0];
    worst = worst.max(j_operator_check(&pair.cm, &pair.dm, &psi, &k, &part)?);
    let cfg = ClassifyConfig::default();
    let g = classify::global_type(&PhiSpec::zero(), &cfg)?.verdict;
    let u = construct_u(&ProfileF::power(0.5)?, 10_000)?.set;
    let l = classify::local_type(&PhiSpec::zero(), &u, &cfg)?.verdict;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst < 1e-12 && g == Verdict::TypeI && l == Verdict::TypeI && elapsed < 1.0;
    Ok((ok, format!("max residual {worst:.1e}, global {g:?}, local {l:?}, {elapsed:.2} s")))
}

fn left_inverse() -> Check {
    let specs = [
        PhiSpec::zero(),
        PhiSpec::indicator(0.25),
        PhiSpec::power_law(0.25, 1.0).with_l1_target(0.3),
        PhiSpec::power_law(0.25, 1.0).truncated().with_l1_target(0.2),
    ];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for spec in &specs {
        for h in [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
            let grid = Grid::with_horizon(h, 2.0)?;
            let phi = spec.materialize(grid)?;
            let k = build_kernel(&phi, &solve_renewal(&phi)?)?;
            for t in [0.25, 0.5, 1.0] {
                let d = left_inverse_defect(&perturbed_matrix(grid, t, &k)?, &shift_matrix(grid, t)?)?;
                worst = worst.max(d);
                cases += 1;
            }
        }
    }
    Ok((worst < 1e-12, format!("max defect {worst:.1e} over {cases} (φ, t, h) cases")))
}

fn renewal_closed_form() -> Check {
    let h = 1.0 / 512.0;
    let grid = Grid::with_horizon(h, 2.0)?;
    let psi = solve_renewal(&PhiSpec::indicator(0.25).materialize(grid)?)?;
    let err = (0..grid.cells(1.0)?)
        .map(|j| {
            let x = grid.midpoint(j);
            (psi.values()[j] - 0.25 * (0.25 * x).exp()).abs()
        })
        .fold(0.0, f64::max);
    Ok((err <= 5.0 * h, format!("max |ψ - 0.25e^(0.25x)| = {err:.3e} (bound {:.3e})", 5.0 * h)))
}

fn refinement_ratios() -> Check {
    let mut kernel = Vec::new();
    let mut semi = Vec::new();
    for h in [1.0 / 256.0, 1.0 / 512.0] {
        let grid = Grid::with_horizon(h, 2.0)?;
        let phi = PhiSpec::indicator(0.25).materialize(grid)?;
        let k = build_kernel(&phi, &solve_renewal(&phi)?)?;
        kernel.push(kernel_cocycle_residual(&k, 0.25)?);
        semi.push(semigroup_residual(grid, &k, 0.25, 0.5)?);
    }
    let (rk, rs) = (kernel[0] / kernel[1], semi[0] / semi[1]);
    let ok = (1.5..=2.5).contains(&rk) && (1.5..=2.5).contains(&rs);
    Ok((ok, format!("kernel ratio {rk:.3}, semigroup ratio {rs:.3}")))
}

fn pairing() -> Check {
    let h = 1.0 / 512.0;
    let grid = Grid::with_horizon(h, 2.0)?;
    let phi = PhiSpec::indicator(0.25).materialize(grid)?;
    let psi = solve_renewal(&phi)?;
    let k = build_kernel(&phi, &psi)?;
    let rows = pairing_battery(&CocyclePair::new(&phi, &psi)?, &k, &PAIRING_CASES)?;
    let worst = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    Ok((rows.len() == 10 && worst <= 5.0 * h, format!("max |pairing - overlap| = {worst:.3e} over {} cases", rows.len())))
}

fn plancherel_constant() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in [1usize, 4, 8, 16] {
        let cutoff = 16384.0 * n as f64;
        let v = fn_plancherel(n, &LambdaGrid::new(cutoff, (4.0 * cutoff) as usize)?)?;
        worst = worst.max((v / (2.0 * std::f64::consts::PI) - 1.0).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok((worst < 0.01 && elapsed < 10.0, format!("max relative defect {worst:.2e}, {elapsed:.2} s")))
}

fn hs_closed_form() -> Check {
    let grid = Grid::with_horizon(1.0 / 256.0, 2.0)?;
    let phi = PhiSpec::indicator(0.25).materialize(grid)?;
    let hs2 = hs_norm(&convolution_block(&phi, 1.0)?).powi(2);
    let rel = (hs2 / 0.0625 - 1.0).abs();
    Ok((rel < 0.02, format!("‖𝒯_Φ P₁‖²_HS = {hs2:.6}, relative error {rel:.2e}")))
}

fn sandwich() -> Check {
    let u = construct_u(&ProfileF::power(0.5)?, 10_000)?;
    let xs = quad::log_spaced(1e-4, 1.0, 52)[1..=50].to_vec();
    let rep = sandwich_check(&u, &xs)?;
    let passed = rep.rows.iter().filter(|r| r.pass()).count();
    Ok((passed == 50, format!("{passed}/50 points within bounds")))
}

fn phase_diagram() -> Check {
    let start = Instant::now();
    let betas = [0.1, 0.2, 0.3, 0.4, 0.5];
    let gammas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let rows = classify::sweep(&betas, &gammas, &ClassifyConfig::default())?;
    let mut wrong = Vec::new();
    let mut checked = 0;
    for r in &rows {
        if (2.0 * r.beta - 2.0 + r.gamma + 1.0).abs() > 0.1 + 1e-9 {
            checked += 1;
            if r.report.verdict != r.expected() {
                wrong.push(format!("({}, {}): {:?}", r.beta, r.gamma, r.report.verdict));
            }
        }
    }
    let monotone = classify::row_is_monotone(&rows);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = wrong.is_empty() && monotone && elapsed < 120.0;
    Ok((ok, format!("{checked} off-boundary cells, {} wrong {wrong:?}, monotone rows {monotone}, {elapsed:.1} s", wrong.len())))
}

fn divergence_probes() -> Check {
    let hs = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0];
    let th = ProbeThresholds::default();
    let pl = hs_divergence_probe(&hs, &th, |h| abs_m2_minus_one_hs(&PhiSpec::power_law(0.25, 1.0), 1.0, h))?;
    let ind = hs_divergence_probe(&hs, &th, |h| abs_m2_minus_one_hs(&PhiSpec::indicator(0.25), 1.0, h))?;
    let ok = pl.verdict == ProbeVerdict::Diverging && ind.verdict == ProbeVerdict::Bounded;
    Ok((ok, format!("PowerLaw β=0.25 {:?} {:.4?}; Indicator {:?} {:.4?}", pl.verdict, pl.norms, ind.verdict, ind.norms)))
}

fn uncertainty() -> Check {
    let trials = uncertainty_battery(20_240_601, 100)?;
    let violations = trials.iter().filter(|t| !t.holds(1e-6)).count();
    let strict = trials.iter().all(|t| t.lhs < t.rhs);
    Ok((violations == 0 && strict, format!("{violations} violations in {} trials, all strict: {strict}", trials.len())))
}

fn iso() -> Check {
    let cfg = ClassifyConfig::default();
    let ts = quad::log_spaced(1e-5, 1e-1, 9);
    let pl = PhiSpec::power_law(0.25, 1.0);
    let doubled = classify::iso_probe(&pl, &pl.scaled(2.0), &ts, &cfg)?;
    let r_dev = doubled.r.iter().map(|(_, r)| (r - 2.0).abs()).fold(0.0, f64::max);
    let perturbed = classify::iso_probe(&pl, &PhiSpec::sum(vec![pl.clone(), PhiSpec::indicator(0.1)]), &ts, &cfg)?;
    let ok = r_dev < 1e-9
        && doubled.necessary == IsoNecessary::NecessaryConditionsFail
        && perturbed.necessary == IsoNecessary::Consistent
        && perturbed.sufficient == IsoSufficient::Isomorphic;
    Ok((
        ok,
        format!(
            "scaled: max |r - 2| {r_dev:.1e}, {:?}; perturbed: {:?}, {:?}",
            doubled.necessary, perturbed.necessary, perturbed.sufficient
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("CCR baseline", ccr_baseline),
        ("left-inverse exactness", left_inverse),
        ("renewal closed form", renewal_closed_form),
        ("kernel equation and semigroup refinement", refinement_ratios),
        ("pairing identity", pairing),
        ("Plancherel constant", plancherel_constant),
        ("HS closed form", hs_closed_form),
        ("sandwich estimate", sandwich),
        ("phase diagram", phase_diagram),
        ("divergence probes", divergence_probes),
        ("uncertainty inequality", uncertainty),
        ("iso probe", iso),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!("criterion {:>2} {}: {name}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
