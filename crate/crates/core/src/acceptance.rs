//! The ten acceptance checks, shared by the `report` subcommand and the
//! acceptance test target.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain_green::{regular_part_bound_check, DomainModel};
use crate::energy_constants::compute_constants;
use crate::error::{LabError, Result};
use crate::exponents::{ExponentPair, Regime};
use crate::ground_state::{extract_tail_constants, solve_ground_state, talenti, RadialProfile, ShootingConfig};
use crate::linearization::{kernel_basis, linearized_residual, mode_kernel_dimension, DEFAULT_DECAY_THRESHOLD};
use crate::projection::{external_norm_scaling, log_space, remainder_sweep};
use crate::reduced_energy::{
    coefficients_for_pair, grid_minimiser, inner_critical_point, reduce_domain, stationarity_residual,
    ReducedCoefficients, WeightData,
};

/// Symmetric pairs with a closed-form ground state.
pub const TALENTI_PAIRS: [(u32, &str); 3] = [(3, "5"), (4, "3"), (5, "7/3")];
/// Symmetric pairs plus one asymmetric FAST and one SLOW pair.
pub const ACCEPTANCE_PAIRS: [(u32, &str); 5] = [(3, "5"), (4, "3"), (5, "7/3"), (4, "2.5"), (5, "1.4")];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}) [{:.1} s]: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

pub const TITLES: [&str; 10] = [
    "Talenti oracle",
    "energy-constant oracle",
    "SLOW tail identity",
    "decay slopes",
    "non-degeneracy",
    "Green's function of the ball",
    "projection bounds",
    "error-component scaling",
    "reduced energy",
    "end-to-end reduce",
];

/// Profiles solved with the default configuration, shared across checks.
fn profile(n: u32, p0: &str) -> Result<RadialProfile> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, String), RadialProfile>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, p0.to_string());
    if let Some(p) = cache.lock().expect("profile cache poisoned").get(&key) {
        return Ok(p.clone());
    }
    let prof = solve_ground_state(&ExponentPair::parse(n, p0)?, &ShootingConfig::default())?;
    cache.lock().expect("profile cache poisoned").insert(key, prof.clone());
    Ok(prof)
}

type Check = Result<(bool, String)>;

pub fn run_criterion(id: u8) -> CriterionOutcome {
    let start = Instant::now();
    let result = match id {
        1 => talenti_oracle(),
        2 => constant_oracle(),
        3 => slow_identity(),
        4 => decay_slopes(),
        5 => nondegeneracy(),
        6 => green_ball(),
        7 => projection_bounds(),
        8 => error_scaling(),
        9 => reduced_energy(),
        10 => end_to_end(),
        _ => Err(LabError::InvalidInput(format!("no criterion {id}"))),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome {
        id,
        title: TITLES.get(id as usize - 1).copied().unwrap_or("unknown"),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Vec<CriterionOutcome> {
    (1..=10).map(run_criterion).collect()
}

fn talenti_oracle() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p0) in TALENTI_PAIRS {
        // timed without the cache
        let start = Instant::now();
        let prof = solve_ground_state(&ExponentPair::parse(n, p0)?, &ShootingConfig::default())?;
        let secs = start.elapsed().as_secs_f64();
        let err = (0..=2000)
            .map(|k| {
                let r = 10.0 * k as f64 / 2000.0;
                let exact = talenti(n, r);
                (prof.eval(r).0 - exact).abs() / exact
            })
            .fold(0.0, f64::max);
        ok &= err <= 1e-4 && secs <= 10.0;
        parts.push(format!("n={n}: err {err:.1e}, {secs:.2} s"));
    }
    Ok((ok, parts.join("; ")))
}

fn constant_oracle() -> Check {
    let sym = compute_constants(&profile(4, "3")?)?;
    let exact = 32.0 * std::f64::consts::PI.powi(2) / 3.0;
    let sym_err = (sym.a1 - exact).abs() / sym.a1;
    let mut ok = sym_err <= 1e-3;
    let mut parts = vec![format!("|A1-32π²/3|/A1 = {sym_err:.1e}")];
    for (n, p0) in [(4, "2.5"), (5, "1.4")] {
        let k = compute_constants(&profile(n, p0)?)?;
        let gap = (k.a1 - k.b1).abs() / k.a1;
        ok &= gap <= 0.01;
        parts.push(format!("({n},{p0}) |A1-B1|/A1 = {gap:.1e}"));
    }
    Ok((ok, parts.join("; ")))
}

fn slow_identity() -> Check {
    let prof = profile(5, "1.4")?;
    let (a, b, _) = extract_tail_constants(&prof);
    let (n, p0) = (5.0, 1.4);
    let lhs = b.powf(p0);
    let gap = (lhs - a * ((n - 2.0) * p0 - 2.0) * (n - (n - 2.0) * p0)).abs() / lhs;
    Ok((gap <= 0.02, format!("relative gap {gap:.2e}")))
}

fn decay_slopes() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p0) in ACCEPTANCE_PAIRS {
        let prof = profile(n, p0)?;
        let t = prof.tail();
        let gu = (t.fitted_exponent_u / t.exponent_u - 1.0).abs();
        let gv = (t.fitted_exponent_v / t.exponent_v - 1.0).abs();
        ok &= gu <= 0.01 && gv <= 0.01;
        parts.push(format!("({n},{p0}) {:.4}/{:.4}", t.fitted_exponent_u, t.exponent_u));
    }
    Ok((ok, parts.join("; ")))
}

fn nondegeneracy() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p0) in ACCEPTANCE_PAIRS {
        let prof = profile(n, p0)?;
        let basis = kernel_basis(&prof);
        let worst = basis.iter().map(|kp| linearized_residual(&prof, kp)).fold(0.0, f64::max);
        let dims: Vec<usize> =
            (0..3).map(|ell| mode_kernel_dimension(&prof, ell, DEFAULT_DECAY_THRESHOLD)).collect::<Result<_>>()?;
        ok &= basis.len() == n as usize + 1 && worst <= 1e-6 && dims == [1, 1, 0];
        parts.push(format!("({n},{p0}) residual {worst:.1e}, modes {dims:?}"));
    }
    Ok((ok, parts.join("; ")))
}

fn green_ball() -> Check {
    let n = 4;
    let domain = DomainModel::ball(vec![0.5, -0.2, 0.0, 0.1], 1.3, vec![])?;
    let c = domain.center().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let point = |rng: &mut ChaCha8Rng, radius: f64| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if s > 1e-3 && s <= 1.0 {
                return c.iter().zip(&v).map(|(ci, x)| ci + radius * x).collect();
            }
        }
    };
    let (mut sym, mut edge, mut harm) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = point(&mut rng, 1.2);
        let y = point(&mut rng, 1.2);
        let gxy = domain.green_ball(&x, &y)?;
        sym = sym.max((gxy - domain.green_ball(&y, &x)?).abs() / gxy.abs());
        // a boundary point in the direction of x
        let dir: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xb: Vec<f64> = c.iter().zip(&dir).map(|(ci, d)| ci + 1.3 * d / len).collect();
        let scale = crate::domain_green::fundamental(n as u32, &xb, &y);
        edge = edge.max(domain.green_ball(&xb, &y)?.abs() / scale);
        let h = domain.regular_part_ball(&x, &y)?;
        harm = harm.max(domain.regular_part_laplacian_fd(&x, &y, 1e-3)?.abs() / h);
    }
    let bound = regular_part_bound_check(&domain, 0.2, 4, 64, 11)?;
    let ok = sym <= 1e-10 && edge <= 1e-10 && harm <= 1e-6 && bound.passes;
    let ratios: Vec<String> = bound.levels.iter().map(|(_, r)| format!("{r:.3}")).collect();
    Ok((
        ok,
        format!("symmetry {sym:.1e}, boundary {edge:.1e}, ΔH/H {harm:.1e}, H-bound ratios [{}]", ratios.join(", ")),
    ))
}

fn projection_bounds() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p0) in [(4u32, "3"), (5, "1.4")] {
        let prof = profile(n, p0)?;
        let domain = DomainModel::ball(vec![0.0; n as usize], 1.0, vec![])?;
        let mut top = vec![0.0; n as usize];
        top[n as usize - 1] = 0.5;
        let xi = domain.nearest_boundary_point(&top)?;
        let sweep = remainder_sweep(&domain, &prof, &xi, 1.0, 1.0, &[0.1, 0.05, 0.025], 1e-6)?;
        let ordered = sweep.levels.iter().all(|l| l.ordered);
        let targets: usize = sweep.levels.iter().map(|l| l.targets.len()).sum();
        ok &= ordered && sweep.bounded;
        let ratios: Vec<String> = sweep.levels.iter().map(|l| format!("{:.3}", l.boundary.ratio_r2)).collect();
        parts.push(format!(
            "({n},{p0}) {} {targets} targets ordered={ordered}, R2 ratios [{}]",
            sweep.regime.name(),
            ratios.join(", ")
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn error_scaling() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p0) in [(4u32, "3"), (4, "2.5"), (5, "1.4")] {
        let start = Instant::now();
        let prof = solve_ground_state(&ExponentPair::parse(n, p0)?, &ShootingConfig::default())?;
        let fit = external_norm_scaling(&prof, &log_space(1e-3, 1e-1, 17))?;
        let secs = start.elapsed().as_secs_f64();
        ok &= fit.relative_gap_u() <= 0.05 && fit.relative_gap_v() <= 0.05 && secs <= 60.0;
        parts.push(format!(
            "({n},{p0}) U {:.3}/{:.3}, V {:.3}/{:.3}, {secs:.1} s",
            fit.slope_u, fit.predicted_u, fit.slope_v, fit.predicted_v
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn reduced_energy_pair(coeffs: &ReducedCoefficients) -> Result<(f64, f64, bool, f64)> {
    let weights = [WeightData { a: 1.0, g: 1.0 }, WeightData { a: 2.5, g: 0.3 }, WeightData { a: 0.2, g: 4.0 }];
    let (mut stat, mut grid, mut invariance) = (0.0f64, 0.0f64, 0.0f64);
    let mut definite = true;
    for w in weights {
        let crit = inner_critical_point(coeffs, w)?;
        stat = stat.max(stationarity_residual(coeffs, w, &crit));
        definite &= crit.hessian_definite;
        let (gl, gt) = grid_minimiser(coeffs, w, crit.lambda, crit.t, 400);
        grid = grid.max((gl / crit.lambda - 1.0).abs()).max((gt / crit.t - 1.0).abs());
        for scale in [1e-3, 0.37, 7.0, 1e3] {
            let s = inner_critical_point(coeffs, WeightData { a: scale * w.a, g: scale * w.g })?;
            invariance = invariance.max((s.lambda / crit.lambda - 1.0).abs()).max((s.t / crit.t - 1.0).abs());
        }
    }
    Ok((stat, grid, definite, invariance))
}

fn reduced_energy() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p0) in [(4u32, "3"), (5, "1.4")] {
        let pair = ExponentPair::parse(n, p0)?;
        let (coeffs, _) = coefficients_for_pair(&pair, 0.01)?;
        let (stat, grid, definite, invariance) = reduced_energy_pair(&coeffs)?;
        let refuses = [0.0, -1.0].iter().all(|&g| {
            matches!(inner_critical_point(&coeffs, WeightData { a: 1.0, g }), Err(LabError::NoInteriorMinimum(_)))
        });
        ok &= stat <= 1e-12 && grid <= 1e-6 && definite && invariance <= 1e-12 && refuses;
        parts.push(format!(
            "({n},{p0}) {}: stationarity {stat:.1e}, grid {grid:.1e}, rescaling {invariance:.1e}, g<=0 refused={refuses}",
            pair.regime().name()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn end_to_end() -> Check {
    let (n, eps) = (4u32, 0.01);
    let pair = ExponentPair::parse(n, "3")?;
    debug_assert_eq!(pair.regime(), Regime::Fast);
    let domain = DomainModel::reference_annulus(n, 2.0);
    let res = reduce_domain(&domain, &pair, 2, eps, 1.0)?;
    let rate = (n as f64 - 1.0) / (n as f64 - 2.0);
    let mut xs: Vec<f64> = res.xi_list.iter().map(|x| x[0]).collect();
    xs.sort_by(f64::total_cmp);
    let on_axis = res.xi_list.iter().all(|x| x[1..].iter().all(|v| v.abs() < 1e-9));
    let points = xs.len() == 2 && (xs[0] - 1.0).abs() < 1e-9 && (xs[1] - 4.0).abs() < 1e-9;
    let definite = res.bubbles.iter().all(|b| b.inner.hessian_definite);
    let delta_gap =
        res.bubbles.iter().map(|b| (b.delta_pred / (eps.powf(rate) * b.inner.lambda) - 1.0).abs()).fold(0.0, f64::max);
    // FAST: Λ* does not depend on ε, so δ scales exactly like ε^{rate}
    let half = reduce_domain(&domain, &pair, 2, eps / 2.0, 1.0)?;
    let scaling_gap = res
        .delta_pred
        .iter()
        .zip(&half.delta_pred)
        .map(|(d1, d2)| (d2 / d1 / 0.5f64.powf(rate) - 1.0).abs())
        .fold(0.0, f64::max);
    let delta_gap = delta_gap.max(scaling_gap);
    let ok = points && on_axis && definite && delta_gap <= 1e-12;
    Ok((
        ok,
        format!(
            "x¹ = {xs:?}, on axis {on_axis}, Hessians definite {definite}, Λ* = {:?}, t* = {:?}, δ gap {delta_gap:.1e}",
            res.lambda_star, res.t_star
        ),
    ))
}
