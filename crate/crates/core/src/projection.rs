//! Projected bubbles on the ball and the size of their boundary corrections.
//!
//! With `f = V_δ^{p0}` (radial about `ξ_ε`) the projection deficit is
//! `U_δ - PU = ∫_{R^n∖Ω} Γ(x-y) f + ∫_Ω H(x,y) f`. Both kernels are smooth for
//! interior `x`, so the deficit is integrated in spherical coordinates about
//! `ξ_ε`: radius outermost, polar angle from the symmetry axis next, and the
//! azimuth towards `x` innermost (dropped for targets on the axis). The
//! inside/outside split of each sphere is a single polar angle.
//!
//! `R = PU - U + (a/γ_n) δ^{n/(p0+1)} H(·,ξ_ε)` is harmonic in `Ω`, so its
//! supremum is reached on `∂Ω` where `PU = 0` and `H = Γ`; there it depends on
//! `|x - ξ_ε|` alone and is evaluated without quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain_green::{dist, dot, gamma_n, BoundaryPoint, DomainModel, Shape};
use crate::energy_constants::{radial_power_tail, Component};
use crate::error::{LabError, Result};
use crate::exponents::{concentration_exponent, ExponentPair, Regime};
use crate::ground_state::RadialProfile;
use crate::quadrature::{integrate_adaptive, unit_sphere_area, Estimate};

/// One bubble placed at distance `η = εt` from the boundary point `ξ` with
/// concentration `δ = ε^{rate} Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubblePlacement {
    pub xi_boundary: BoundaryPoint,
    pub t: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub xi_eps: Vec<f64>,
    pub delta: f64,
}

impl BubblePlacement {
    pub fn new(pair: &ExponentPair, xi_boundary: BoundaryPoint, t: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        if !(t > 0.0 && lambda > 0.0 && epsilon > 0.0) {
            return Err(LabError::InvalidInput(format!("placement needs t, Λ, ε > 0 (got {t}, {lambda}, {epsilon})")));
        }
        let rate = concentration_exponent(pair)?;
        let eta = epsilon * t;
        let xi_eps = xi_boundary.x.iter().zip(&xi_boundary.nu).map(|(x, v)| x + eta * v).collect();
        Ok(BubblePlacement { xi_boundary, t, lambda, epsilon, eta, xi_eps, delta: epsilon.powf(rate) * lambda })
    }

    /// Placement with `ε` chosen so that `δ/η` equals `ratio`.
    pub fn with_ratio(
        pair: &ExponentPair,
        xi_boundary: BoundaryPoint,
        t: f64,
        lambda: f64,
        ratio: f64,
    ) -> Result<Self> {
        let rate = concentration_exponent(pair)?;
        // δ/η = ε^{rate-1} Λ/t
        let epsilon = (ratio * t / lambda).powf(1.0 / (rate - 1.0));
        Self::new(pair, xi_boundary, t, lambda, epsilon)
    }

    pub fn ratio(&self) -> f64 {
        self.delta / self.eta
    }

    /// `(U_δ, V_δ)` at distance `rho` from `ξ_ε`.
    pub fn bubble_at(&self, profile: &RadialProfile, rho: f64) -> (f64, f64) {
        profile.rescale_radial(1.0 / self.delta, rho)
    }
}

/// Projected bubble at one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionValue {
    pub target: Vec<f64>,
    pub distance_to_boundary: f64,
    pub u: f64,
    pub v: f64,
    pub pu: f64,
    pub pv: f64,
    /// `U_δ - PU`.
    pub deficit_u: f64,
    pub deficit_v: f64,
    pub error_u: f64,
    pub error_v: f64,
}

impl ProjectionValue {
    /// `0 <= PU <= U` and `0 <= PV <= V` up to the quadrature error.
    pub fn ordered(&self) -> bool {
        self.deficit_u >= -self.error_u
            && self.pu >= -self.error_u
            && self.deficit_v >= -self.error_v
            && self.pv >= -self.error_v
    }
}

/// Geometry of a ball seen from the bubble centre.
struct BallFrame {
    center: Vec<f64>,
    radius: f64,
    /// `|ξ_ε - c|`.
    offset: f64,
    /// Unit vector from `c` towards `ξ_ε`.
    axis: Vec<f64>,
    n: u32,
}

impl BallFrame {
    fn new(domain: &DomainModel, placement: &BubblePlacement) -> Result<Self> {
        let Shape::Ball { center, radius } = domain.shape() else {
            return Err(LabError::RequiresBall);
        };
        let rel: Vec<f64> = placement.xi_eps.iter().zip(center).map(|(x, c)| x - c).collect();
        let offset = dot(&rel, &rel).sqrt();
        if offset >= *radius {
            return Err(LabError::InvalidInput("bubble centre lies outside the ball".into()));
        }
        let axis = if offset > 0.0 {
            rel.iter().map(|v| v / offset).collect()
        } else {
            placement.xi_boundary.nu.iter().map(|v| -v).collect()
        };
        Ok(BallFrame { center: center.clone(), radius: *radius, offset, axis, n: domain.n() })
    }

    /// `cos` of the polar angle where the sphere `|y - ξ_ε| = ρ` leaves the
    /// ball; directions with a larger cosine point outside.
    fn exit_cosine(&self, rho: f64) -> f64 {
        let (r, s) = (self.radius, self.offset);
        if s == 0.0 {
            return if rho < r { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        (r * r - s * s - rho * rho) / (2.0 * s * rho)
    }
}

/// Target in frame coordinates: axial component, distance from the axis, `|x'|²`.
#[derive(Clone, Copy)]
struct FrameTarget {
    axial: f64,
    lateral: f64,
    norm2: f64,
}

/// Kernel `Γ(x-y)` outside the ball and `H(x,y)` inside, for
/// `y = ξ_ε + ρ(cos θ e + sin θ cos ψ e₂ + …)`.
fn kernel(frame: &BallFrame, x: FrameTarget, rho: f64, cos_t: f64, sin_t: f64, cos_p: f64, inside: bool) -> f64 {
    let n = frame.n as f64;
    let s = frame.offset;
    let y_axial = s + rho * cos_t;
    let y_lateral = rho * sin_t * cos_p;
    let y2 = s * s + rho * rho + 2.0 * s * rho * cos_t;
    let xy = x.axial * y_axial + x.lateral * y_lateral;
    let q = if inside {
        let r2 = frame.radius * frame.radius;
        x.norm2 * y2 / r2 - 2.0 * xy + r2
    } else {
        x.norm2 + y2 - 2.0 * xy
    };
    gamma_n(frame.n) * q.max(0.0).powf((2.0 - n) / 2.0)
}

/// Integral of the kernel over the sphere of radius `rho` about `ξ_ε`.
fn sphere_kernel(frame: &BallFrame, x: FrameTarget, rho: f64, rel_tol: f64) -> f64 {
    let n = frame.n;
    let nf = n as f64;
    let cb = frame.exit_cosine(rho);
    let theta_b = cb.clamp(-1.0, 1.0).acos();
    let on_axis = x.lateral <= 1e-14 * (x.norm2.sqrt() + frame.radius);
    let polar = |lo: f64, hi: f64, inside: bool| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let est = integrate_adaptive(lo, hi, 0.0, rel_tol, 400, |th| {
            let (sin_t, cos_t) = th.sin_cos();
            let weight = sin_t.powf(nf - 2.0);
            if weight == 0.0 {
                return 0.0;
            }
            if on_axis {
                weight * kernel(frame, x, rho, cos_t, sin_t, 1.0, inside)
            } else {
                let az = integrate_adaptive(0.0, std::f64::consts::PI, 0.0, rel_tol, 200, |ps| {
                    let (sin_p, cos_p) = ps.sin_cos();
                    sin_p.powf(nf - 3.0) * kernel(frame, x, rho, cos_t, sin_t, cos_p, inside)
                });
                weight * az.value
            }
        });
        est.value
    };
    let angular = polar(0.0, theta_b, false) + polar(theta_b, std::f64::consts::PI, true);
    let measure = if on_axis { unit_sphere_area(n - 1) } else { unit_sphere_area(n - 2) };
    measure * angular
}

/// `∫ source(ρ) ρ^{n-1} K(ρ) dρ` over `(0, ∞)` in `log ρ`, split at the
/// radii where the kernel changes character.
fn radial_deficit(
    frame: &BallFrame,
    x: FrameTarget,
    placement: &BubblePlacement,
    source: impl Fn(f64) -> f64,
    rel_tol: f64,
    breaks: &[f64],
) -> Estimate {
    let n = frame.n as f64;
    let inner_tol = (rel_tol * 1e-2).max(1e-12);
    let integrand = |u: f64| {
        let rho = u.exp();
        let s = source(rho);
        if s == 0.0 {
            return 0.0;
        }
        s * rho.powf(n) * sphere_kernel(frame, x, rho, inner_tol)
    };
    let mut value = 0.0;
    let mut error = 0.0;
    let mut converged = true;
    for w in breaks.windows(2) {
        let est = integrate_adaptive(w[0].ln(), w[1].ln(), 0.0, rel_tol, 2000, integrand);
        value += est.value;
        error += est.error;
        converged &= est.converged;
    }
    // beyond the ball the kernel is Γ alone and decays; extend until negligible
    let mut a = breaks.last().copied().unwrap_or(placement.eta).ln();
    let mut width = 2.0;
    for _ in 0..30 {
        let est = integrate_adaptive(a, a + width, 0.0, rel_tol, 400, integrand);
        value += est.value;
        error += est.error;
        converged &= est.converged;
        a += width;
        width *= 1.5;
        if est.value.abs() <= 1e-3 * rel_tol * value.abs() {
            break;
        }
    }
    error += inner_tol * value.abs();
    Estimate { value, error, converged }
}

fn frame_target(frame: &BallFrame, x: &[f64]) -> FrameTarget {
    let rel: Vec<f64> = x.iter().zip(&frame.center).map(|(a, c)| a - c).collect();
    let norm2 = dot(&rel, &rel);
    let axial = dot(&rel, &frame.axis);
    FrameTarget { axial, lateral: (norm2 - axial * axial).max(0.0).sqrt(), norm2 }
}

/// Deficits `(U_δ - PU, V_δ - PV)` at an interior target.
pub fn projection_deficit(
    domain: &DomainModel,
    profile: &RadialProfile,
    placement: &BubblePlacement,
    target: &[f64],
    rel_tol: f64,
) -> Result<(Estimate, Estimate)> {
    let frame = BallFrame::new(domain, placement)?;
    let d = domain.boundary_distance(target);
    if !(d > 0.0) {
        return Err(LabError::InvalidInput(format!("target {target:?} is not interior")));
    }
    if d < 1e-3 * placement.eta {
        log::warn!("target {target:?} is within 1e-3 η of the boundary; kernel is nearly singular");
    }
    let x = frame_target(&frame, target);
    let pair = profile.pair();
    let (p0, q0) = (pair.p0(), pair.q0());
    let to_center = dist(target, &placement.xi_eps);
    let delta = placement.delta;
    let mut breaks = vec![
        delta.min(placement.eta) * 1e-6,
        delta,
        placement.eta,
        frame.radius + frame.offset,
        (to_center - d).max(0.0),
        to_center,
        to_center + d,
    ];
    breaks.retain(|b| *b > 0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let du = radial_deficit(&frame, x, placement, |rho| placement.bubble_at(profile, rho).1.powf(p0), rel_tol, &breaks);
    let dv = radial_deficit(&frame, x, placement, |rho| placement.bubble_at(profile, rho).0.powf(q0), rel_tol, &breaks);
    Ok((du, dv))
}

/// `PU`, `PV` at each target. Targets are independent and run in parallel.
pub fn project_bubble(
    domain: &DomainModel,
    profile: &RadialProfile,
    placement: &BubblePlacement,
    targets: &[Vec<f64>],
    rel_tol: f64,
) -> Result<Vec<ProjectionValue>> {
    targets
        .par_iter()
        .map(|x| {
            let (du, dv) = projection_deficit(domain, profile, placement, x, rel_tol)?;
            let (u, v) = placement.bubble_at(profile, dist(x, &placement.xi_eps));
            for (name, est, base) in [("PU", du, u), ("PV", dv, v)] {
                if est.error > 1e-3 * base.max(est.value.abs()) {
                    log::warn!("{name} at {x:?}: quadrature error {:.2e} exceeds 1e-3 relative", est.error);
                }
            }
            Ok(ProjectionValue {
                target: x.clone(),
                distance_to_boundary: domain.boundary_distance(x),
                u,
                v,
                pu: u - du.value,
                pv: v - dv.value,
                deficit_u: du.value,
                deficit_v: dv.value,
                error_u: du.error,
                error_v: dv.error,
            })
        })
        .collect()
}

/// Monte-Carlo estimate of the deficits with its standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloDeficit {
    pub deficit_u: f64,
    pub deficit_v: f64,
    pub stderr_u: f64,
    pub stderr_v: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Importance-sampled deficits: radii from an equal mixture of Lomax laws with
/// scales `δ` and `η`, directions uniform.
pub fn projection_deficit_monte_carlo(
    domain: &DomainModel,
    profile: &RadialProfile,
    placement: &BubblePlacement,
    target: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MonteCarloDeficit> {
    BallFrame::new(domain, placement)?;
    let n = domain.n() as usize;
    let nf = n as f64;
    let pair = profile.pair();
    let (p0, q0) = (pair.p0(), pair.q0());
    // tail of ρ^{n-1} f Γ is ρ^{1-(n-2)p0}; a heavier proposal keeps the variance finite
    let shape = 0.5 * ((nf - 2.0) * p0.min(q0) - 2.0);
    let scales = [placement.delta, placement.eta];
    let density =
        |rho: f64| -> f64 { scales.iter().map(|s| 0.5 * shape / s * (1.0 + rho / s).powf(-shape - 1.0)).sum() };
    let area = unit_sphere_area(domain.n());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut su, mut su2, mut sv, mut sv2) = (0.0, 0.0, 0.0, 0.0);
    let g = gamma_n(domain.n());
    for _ in 0..samples {
        let scale = scales[rng.gen_range(0..2)];
        let uni: f64 = rng.gen();
        let rho = scale * ((1.0 - uni).powf(-1.0 / shape) - 1.0);
        let mut dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = dot(&dir, &dir).sqrt();
        dir.iter_mut().for_each(|v| *v /= len);
        let y: Vec<f64> = placement.xi_eps.iter().zip(&dir).map(|(c, u)| c + rho * u).collect();
        let k = if domain.boundary_distance(&y) > 0.0 {
            domain.regular_part_ball(target, &y)?
        } else {
            g * dist(target, &y).powf(2.0 - nf)
        };
        let (u, v) = placement.bubble_at(profile, rho);
        let w = k * area * rho.powf(nf - 1.0) / density(rho);
        let (a, b) = (w * v.powf(p0), w * u.powf(q0));
        su += a;
        su2 += a * a;
        sv += b;
        sv2 += b * b;
    }
    let m = samples as f64;
    let stderr = |s: f64, s2: f64| ((s2 / m - (s / m).powi(2)).max(0.0) / m).sqrt();
    Ok(MonteCarloDeficit {
        deficit_u: su / m,
        deficit_v: sv / m,
        stderr_u: stderr(su, su2),
        stderr_v: stderr(sv, sv2),
        samples,
        seed,
    })
}

/// Targets on the symmetry axis through `ξ_ε` (towards the boundary, at the
/// bubble, and deeper in), the ball centre, and two off-axis points.
pub fn default_targets(domain: &DomainModel, placement: &BubblePlacement) -> Result<Vec<Vec<f64>>> {
    let Shape::Ball { center, radius } = domain.shape() else {
        return Err(LabError::RequiresBall);
    };
    let nu = &placement.xi_boundary.nu;
    let eta = placement.eta;
    let along = |m: f64| -> Vec<f64> { placement.xi_eps.iter().zip(nu).map(|(x, v)| x + m * eta * v).collect() };
    let mut out: Vec<Vec<f64>> = [-0.5, 0.0, 1.0, 3.0, 10.0].iter().map(|&m| along(m)).collect();
    out.push(center.clone());
    // a direction orthogonal to the normal
    let k = (0..nu.len()).min_by(|&i, &j| nu[i].abs().total_cmp(&nu[j].abs())).unwrap_or(0);
    let mut lateral: Vec<f64> = (0..nu.len()).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
    let proj = dot(&lateral, nu);
    lateral.iter_mut().zip(nu).for_each(|(l, v)| *l -= proj * v);
    let len = dot(&lateral, &lateral).sqrt();
    lateral.iter_mut().for_each(|l| *l /= len);
    out.push(placement.xi_eps.iter().zip(&lateral).map(|(x, l)| x + 2.0 * eta * l).collect());
    out.push(center.iter().zip(&lateral).map(|(c, l)| c + 0.5 * radius * l).collect());
    out.retain(|x| domain.boundary_distance(x) > 0.0);
    Ok(out)
}

/// Remainders of one placement: the boundary supremum of `|R|` for each
/// component, normalised by `δ^{n/(s+1)+1}/η^{n-1}`, and the supremum of the
/// `U` deficit normalised by `δ^{p0 n/(q0+1)} η^{-n(p0+1)/(q0+1)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRemainder {
    /// Sup over `∂Ω` of `|R_1|`; `None` unless `U` decays like `r^{2-n}`.
    pub sup_r1: Option<f64>,
    pub sup_r2: f64,
    pub ratio_r1: Option<f64>,
    pub ratio_r2: f64,
    /// `sup_{∂Ω} U_δ` over its SLOW-regime bound; present in SLOW only.
    pub slow_constant: Option<f64>,
    /// `R_1 >= 0` and `R_2 >= 0` on the boundary, i.e. the deficit sits below
    /// the `H` term (FAST form).
    pub h_bound_holds: bool,
}

/// Boundary values of the remainders, from the profile alone.
pub fn boundary_remainder(
    domain: &DomainModel,
    profile: &RadialProfile,
    placement: &BubblePlacement,
) -> Result<BoundaryRemainder> {
    let frame = BallFrame::new(domain, placement)?;
    let pair = profile.pair();
    let regime = pair.regime();
    if regime == Regime::Log {
        return Err(LabError::UnsupportedRegime("log"));
    }
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    let (a, b) = (profile.tail_a(), profile.tail_b());
    let delta = placement.delta;
    let eta = placement.eta;
    // |x - ξ_ε| over ∂Ω spans [R - s, R + s]
    let lo = frame.radius - frame.offset;
    let hi = frame.radius + frame.offset;
    let steps = 4000;
    let (mut sup1, mut sup2, mut min1, mut min2, mut sup_u) = (0.0f64, 0.0f64, f64::INFINITY, f64::INFINITY, 0.0f64);
    for k in 0..=steps {
        let rho = lo * (hi / lo).powf(k as f64 / steps as f64);
        let (u, v) = placement.bubble_at(profile, rho);
        let r1 = a * delta.powf(n / (p0 + 1.0)) * rho.powf(2.0 - n) - u;
        let r2 = b * delta.powf(n / (q0 + 1.0)) * rho.powf(2.0 - n) - v;
        sup1 = sup1.max(r1.abs());
        sup2 = sup2.max(r2.abs());
        min1 = min1.min(r1);
        min2 = min2.min(r2);
        sup_u = sup_u.max(u);
    }
    let norm = |s: f64| delta.powf(n / (s + 1.0) + 1.0) / eta.powf(n - 1.0);
    let fast = regime == Regime::Fast;
    let slow_scale = delta.powf(p0 * n / (q0 + 1.0)) * eta.powf(-n * (p0 + 1.0) / (q0 + 1.0));
    let tol = |s: f64| -1e-9 * s;
    Ok(BoundaryRemainder {
        sup_r1: fast.then_some(sup1),
        sup_r2: sup2,
        ratio_r1: fast.then(|| sup1 / norm(p0)),
        ratio_r2: sup2 / norm(q0),
        slow_constant: (!fast).then(|| sup_u / slow_scale),
        h_bound_holds: (!fast || min1 >= tol(sup1)) && min2 >= tol(sup2),
    })
}

/// One refinement level of [`remainder_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLevel {
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub boundary: BoundaryRemainder,
    /// Largest interior `|R|` over the boundary supremum (at most 1 by the
    /// maximum principle).
    pub interior_over_boundary: f64,
    /// Every target satisfies `0 <= PU <= U`, `0 <= PV <= V`.
    pub ordered: bool,
    pub targets: Vec<ProjectionValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub regime: Regime,
    pub levels: Vec<ResidualLevel>,
    /// Neither remainder ratio grows by more than 1.5 between successive levels.
    pub bounded: bool,
    /// The same test for the SLOW-regime constant (`None` outside SLOW).
    pub slow_constant_bounded: Option<bool>,
}

/// Remainder ratios and ordering along a refinement in `ε` at fixed `(ξ, t, Λ)`.
pub fn remainder_sweep(
    domain: &DomainModel,
    profile: &RadialProfile,
    xi: &BoundaryPoint,
    t: f64,
    lambda: f64,
    epsilons: &[f64],
    rel_tol: f64,
) -> Result<ResidualSweep> {
    let pair = profile.pair();
    let (a, b) = (profile.tail_a(), profile.tail_b());
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    let g = gamma_n(pair.n());
    let mut levels = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let placement = BubblePlacement::new(pair, xi.clone(), t, lambda, eps)?;
        let boundary = boundary_remainder(domain, profile, &placement)?;
        let targets = default_targets(domain, &placement)?;
        let values = project_bubble(domain, profile, &placement, &targets, rel_tol)?;
        let mut interior: f64 = 0.0;
        for val in &values {
            let h = domain.regular_part_ball(&val.target, &placement.xi_eps)?;
            let r2 = b / g * placement.delta.powf(n / (q0 + 1.0)) * h - val.deficit_v;
            interior = interior.max((r2.abs() - val.error_v).max(0.0) / boundary.sup_r2);
            if let Some(sup1) = boundary.sup_r1 {
                let r1 = a / g * placement.delta.powf(n / (p0 + 1.0)) * h - val.deficit_u;
                interior = interior.max((r1.abs() - val.error_u).max(0.0) / sup1);
            }
        }
        let ordered = values.iter().all(ProjectionValue::ordered);
        levels.push(ResidualLevel {
            epsilon: eps,
            delta: placement.delta,
            eta: placement.eta,
            boundary,
            interior_over_boundary: interior,
            ordered,
            targets: values,
        });
    }
    let grows = |f: &dyn Fn(&ResidualLevel) -> Option<f64>| {
        levels.windows(2).any(|w| match (f(&w[0]), f(&w[1])) {
            (Some(x), Some(y)) => y > 1.5 * x,
            _ => false,
        })
    };
    let bounded = !grows(&|l| l.boundary.ratio_r1) && !grows(&|l| Some(l.boundary.ratio_r2));
    let slow_constant_bounded = (pair.regime() == Regime::Slow).then(|| !grows(&|l| l.boundary.slow_constant));
    Ok(ResidualSweep { regime: pair.regime(), levels, bounded, slow_constant_bounded })
}

/// Exterior norms `‖U_δ^{q0}‖_{L^{(q0+1)/q0}(R^n∖B_η)}` and the `V` analogue
/// against `δ/η`, with fitted and predicted log-log slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalNormScaling {
    pub ratios: Vec<f64>,
    pub norms_u: Vec<f64>,
    pub norms_v: Vec<f64>,
    /// Slopes of `log N = A + e log(δ/η) + B (δ/η)^g`, with `g` the relative
    /// order of the first correction to the component's power-law tail.
    pub slope_u: f64,
    pub slope_v: f64,
    /// Plain least-squares slopes, without the correction term.
    pub plain_slope_u: f64,
    pub plain_slope_v: f64,
    pub predicted_u: f64,
    pub predicted_v: f64,
}

impl ExternalNormScaling {
    pub fn relative_gap_u(&self) -> f64 {
        (self.slope_u - self.predicted_u).abs() / self.predicted_u.abs()
    }
    pub fn relative_gap_v(&self) -> f64 {
        (self.slope_v - self.predicted_v).abs() / self.predicted_v.abs()
    }
}

/// Predicted exponents of the exterior norms in `δ/η`.
pub fn predicted_external_exponents(pair: &ExponentPair) -> Result<(f64, f64)> {
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    match pair.regime() {
        Regime::Fast => Ok((q0 * (n - 2.0) - n * q0 / (q0 + 1.0), p0 * (n - 2.0) - n * p0 / (p0 + 1.0))),
        Regime::Slow => Ok((n * p0 * q0 / (q0 + 1.0), n * p0 / (q0 + 1.0))),
        Regime::Log => Err(LabError::UnsupportedRegime("log")),
    }
}

/// The norms depend on `δ/η` only: `‖U_δ^{q0}‖ = (∫_{|z|>η/δ} U^{q0+1})^{q0/(q0+1)}`.
pub fn external_norm_scaling(profile: &RadialProfile, ratios: &[f64]) -> Result<ExternalNormScaling> {
    let pair = profile.pair();
    let (predicted_u, predicted_v) = predicted_external_exponents(pair)?;
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if ratios.iter().any(|r| !(*r > 0.0)) || hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(LabError::InvalidInput("δ/η ratios must be positive and span two decades".into()));
    }
    let (p0, q0) = (pair.p0(), pair.q0());
    let norms: Vec<(f64, f64)> = ratios
        .par_iter()
        .map(|&r| -> Result<(f64, f64)> {
            let (iu, _) = radial_power_tail(profile, Component::U, q0 + 1.0, 1.0 / r)?;
            let (iv, _) = radial_power_tail(profile, Component::V, p0 + 1.0, 1.0 / r)?;
            Ok((iu.powf(q0 / (q0 + 1.0)), iv.powf(p0 / (p0 + 1.0))))
        })
        .collect::<Result<_>>()?;
    let (norms_u, norms_v): (Vec<f64>, Vec<f64>) = norms.into_iter().unzip();
    let logs: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let tail = profile.tail();
    let gap_u = tail.correction_exponent_u - tail.exponent_u;
    let gap_v = tail.correction_exponent_v - tail.exponent_v;
    Ok(ExternalNormScaling {
        slope_u: corrected_slope(ratios, &norms_u, gap_u),
        slope_v: corrected_slope(ratios, &norms_v, gap_v),
        plain_slope_u: log_log_slope(&logs, &norms_u),
        plain_slope_v: log_log_slope(&logs, &norms_v),
        ratios: ratios.to_vec(),
        norms_u,
        norms_v,
        predicted_u,
        predicted_v,
    })
}

/// Least-squares slope of `log y` against `x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let cov: f64 = x.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Slope `e` of the least-squares fit `log y = A + e log x + B x^g`.
pub fn corrected_slope(x: &[f64], y: &[f64], gap: f64) -> f64 {
    let design = nalgebra::DMatrix::from_fn(x.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => x[i].ln(),
        _ => x[i].powf(gap),
    });
    let rhs = nalgebra::DVector::from_iterator(y.len(), y.iter().map(|v| v.ln()));
    let coef = design.svd(true, true).solve(&rhs, 1e-14).expect("SVD with both factors solves");
    coef[1]
}

/// `count` log-spaced values in `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).collect()
}

/// Rows `component, epsilon, delta, eta, measured_norm, predicted_exponent,
/// fitted_slope` for a sweep realised by placements at fixed `(t, Λ)`.
pub fn write_sweep_csv<W: std::io::Write>(
    out: W,
    pair: &ExponentPair,
    scaling: &ExternalNormScaling,
    t: f64,
    lambda: f64,
) -> Result<()> {
    let rate = concentration_exponent(pair)?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| LabError::Integration(format!("csv: {e}"));
    w.write_record(["component", "epsilon", "delta", "eta", "measured_norm", "predicted_exponent", "fitted_slope"])
        .map_err(io)?;
    for (component, norms, predicted, slope) in [
        ("U", &scaling.norms_u, scaling.predicted_u, scaling.slope_u),
        ("V", &scaling.norms_v, scaling.predicted_v, scaling.slope_v),
    ] {
        for (ratio, norm) in scaling.ratios.iter().zip(norms) {
            let eps = (ratio * t / lambda).powf(1.0 / (rate - 1.0));
            let row = [
                component.to_string(),
                format!("{eps:.17e}"),
                format!("{:.17e}", eps.powf(rate) * lambda),
                format!("{:.17e}", eps * t),
                format!("{norm:.17e}"),
                format!("{predicted:.17e}"),
                format!("{slope:.17e}"),
            ];
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| LabError::Integration(format!("csv: {e}")))?;
    Ok(())
}
