//! Finite-dimensional reduced energy over boundary configurations and its
//! inner critical points.
//!
//! For one bubble at a boundary point with weight `a` and inward normal
//! derivative `g = ⟨∇a, ν⟩`, the `(Λ, t)`-dependent part of the energy is
//! `F(Λ, t) = c4 g t + c5 a (Λ/2t)^m - c6 a log Λ` with `m = n-2` (FAST) or
//! `m = (n-2)p0 - 2` (SLOW). Its unique critical point is
//! `t* = c6 a/(c4 g)`, `(Λ*/2t*)^m = c6/(m c5)`, a strict minimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain_green::{gamma_n, DomainModel};
use crate::energy_constants::{compute_constants, EnergyConstants};
use crate::error::{LabError, Result};
use crate::exponents::{concentration_exponent, ExponentPair, Regime};
use crate::ground_state::{solve_ground_state, RadialProfile, ShootingConfig};
use crate::quadrature::{integrate_adaptive, unit_sphere_area};

/// Exponent of the `σ`-free margin band `c_margin ε^{1.25}`.
pub const MARGIN_EXPONENT: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedCoefficients {
    pub n: u32,
    pub regime: Regime,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// FAST-regime coefficient `b B2/γ_n`.
    pub c5: Option<f64>,
    /// SLOW-regime coefficient `b I/γ_n`.
    pub c5_prime: Option<f64>,
    pub c6: f64,
    /// Power `m` of `Λ/2t` in the interaction term.
    pub interaction_power: f64,
    /// `δ = ε^{rate} Λ`.
    pub rate: f64,
    /// Constant of the displayed margin band `c_margin ε^{1.25}`.
    pub sigma_margin: f64,
}

impl ReducedCoefficients {
    /// Coefficient of `a (Λ/2t)^m`, whichever regime applies.
    pub fn interaction(&self) -> f64 {
        self.c5.or(self.c5_prime).expect("one of c5, c5' is always set")
    }

    pub fn with_sigma_margin(mut self, sigma_margin: f64) -> Self {
        self.sigma_margin = sigma_margin;
        self
    }

    pub fn margin(&self, epsilon: f64) -> f64 {
        self.sigma_margin.abs() * epsilon.powf(MARGIN_EXPONENT)
    }
}

/// `I = ∫_{B_L} V^{p0}(y) |y + 2Lν|^{(n-2)p0-n} dy` for `L = η/δ`, by
/// quadrature in `|y|` and the angle between `y` and `ν`.
pub fn slow_interaction_integral(profile: &RadialProfile, ratio_l: f64) -> Result<f64> {
    let pair = profile.pair();
    if pair.regime() != Regime::Slow {
        return Err(LabError::UnsupportedRegime(pair.regime().name()));
    }
    if !(ratio_l > 0.0) {
        return Err(LabError::InvalidInput(format!("η/δ = {ratio_l} must be positive")));
    }
    let n = pair.n();
    let nf = pair.nf();
    let p0 = pair.p0();
    let s = nf - (nf - 2.0) * p0;
    let big_l = ratio_l;
    let sphere_mean = |rho: f64| {
        let est = integrate_adaptive(0.0, std::f64::consts::PI, 0.0, 1e-12, 200, |th| {
            let d2 = rho * rho + 4.0 * big_l * big_l + 4.0 * big_l * rho * th.cos();
            th.sin().powf(nf - 2.0) * d2.powf(-s / 2.0)
        });
        unit_sphere_area(n - 1) / unit_sphere_area(n) * est.value
    };
    let radial = |rho: f64| profile.eval(rho).1.powf(p0) * rho.powf(nf - 1.0) * sphere_mean(rho);
    let split = big_l.min(1.0);
    let mut total = integrate_adaptive(0.0, split, 0.0, 1e-10, 500, radial).value;
    if big_l > split {
        total += integrate_adaptive(split.ln(), big_l.ln(), 0.0, 1e-10, 2000, |u| {
            let rho = u.exp();
            radial(rho) * rho
        })
        .value;
    }
    Ok(unit_sphere_area(n) * total)
}

/// Coefficients from the energy constants and the tail constant `b`.
/// `slow_integral` is the measured `I`; it is required in SLOW and ignored
/// otherwise.
pub fn assemble_coefficients(
    constants: &EnergyConstants,
    pair: &ExponentPair,
    tail_b: f64,
    slow_integral: Option<f64>,
) -> Result<ReducedCoefficients> {
    let regime = pair.regime();
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    let (alpha, beta) = (pair.alpha(), pair.beta());
    let (a1, b1) = (constants.a1, constants.b1);
    let sq = |x: f64| x * x;
    let mass = a1 / sq(q0 + 1.0) + b1 / sq(p0 + 1.0);
    let g = gamma_n(pair.n());
    let (c5, c5_prime, power) = match regime {
        Regime::Log => return Err(LabError::UnsupportedRegime("log")),
        Regime::Fast => {
            let b2 = constants.get(crate::energy_constants::ConstantId::B2).ok_or(LabError::MissingConstant("B2"))?;
            (Some(tail_b * b2 / g), None, n - 2.0)
        }
        Regime::Slow => {
            let i = slow_integral.ok_or(LabError::MissingConstant("I"))?;
            (None, Some(tail_b * i / g), (n - 2.0) * p0 - 2.0)
        }
    };
    Ok(ReducedCoefficients {
        n: pair.n(),
        regime,
        c1: 2.0 * a1 / n,
        c2: -(n * (n - 1.0) / (n - 2.0)) * mass,
        c3: -(beta * a1 / sq(q0 + 1.0) + alpha * b1 / sq(p0 + 1.0))
            + constants.a3 / (q0 + 1.0)
            + constants.b3 / (p0 + 1.0),
        c4: 2.0 * a1 / n,
        c5,
        c5_prime,
        c6: n * mass,
        interaction_power: power,
        rate: concentration_exponent(pair)?,
        sigma_margin: 1.0,
    })
}

/// Weight data at one boundary point: `a(ξ)` and `⟨∇a(ξ), ν(ξ)⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightData {
    pub a: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub xi_list: Vec<Vec<f64>>,
    pub lambda_list: Vec<f64>,
    pub t_list: Vec<f64>,
    pub epsilon: f64,
}

impl Configuration {
    pub fn new(xi_list: Vec<Vec<f64>>, lambda_list: Vec<f64>, t_list: Vec<f64>, epsilon: f64) -> Result<Self> {
        let k = xi_list.len();
        if lambda_list.len() != k || t_list.len() != k {
            return Err(LabError::InvalidInput("configuration lists differ in length".into()));
        }
        if lambda_list.iter().chain(&t_list).any(|v| !(*v > 0.0)) || !(epsilon > 0.0) {
            return Err(LabError::InvalidInput("Λ, t and ε must be positive".into()));
        }
        for i in 0..k {
            for j in 0..i {
                if xi_list[i] == xi_list[j] {
                    return Err(LabError::InvalidInput(format!("ξ_{} and ξ_{} coincide", j + 1, i + 1)));
                }
            }
        }
        Ok(Configuration { xi_list, lambda_list, t_list, epsilon })
    }
}

/// `F(Λ, t)` for one bubble.
pub fn inner_energy(coeffs: &ReducedCoefficients, w: WeightData, lambda: f64, t: f64) -> f64 {
    let m = coeffs.interaction_power;
    coeffs.c4 * w.g * t + coeffs.interaction() * w.a * (lambda / (2.0 * t)).powf(m) - coeffs.c6 * w.a * lambda.ln()
}

/// `(∂_Λ F, ∂_t F)`.
pub fn inner_gradient(coeffs: &ReducedCoefficients, w: WeightData, lambda: f64, t: f64) -> (f64, f64) {
    let m = coeffs.interaction_power;
    let k = coeffs.interaction() * w.a * m * (lambda / (2.0 * t)).powf(m);
    (k / lambda - coeffs.c6 * w.a / lambda, coeffs.c4 * w.g - k / t)
}

/// Hessian of `F` in `(Λ, t)`.
pub fn inner_hessian(coeffs: &ReducedCoefficients, w: WeightData, lambda: f64, t: f64) -> [[f64; 2]; 2] {
    let m = coeffs.interaction_power;
    let k = coeffs.interaction() * w.a * m * (lambda / (2.0 * t)).powf(m);
    let ll = (k * (m - 1.0) + coeffs.c6 * w.a) / (lambda * lambda);
    let tt = k * (m + 1.0) / (t * t);
    let lt = -k * m / (lambda * t);
    [[ll, lt], [lt, tt]]
}

/// Reduced energy of a configuration, without the `O(ε^{1+σ})` remainder.
pub fn evaluate_j(coeffs: &ReducedCoefficients, weights: &[WeightData], config: &Configuration) -> f64 {
    let eps = config.epsilon;
    let leading = coeffs.c1 + coeffs.c2 * eps * eps.ln();
    weights
        .iter()
        .zip(config.lambda_list.iter().zip(&config.t_list))
        .map(|(w, (&lambda, &t))| leading * w.a + eps * (coeffs.c3 * w.a + inner_energy(coeffs, *w, lambda, t)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerCritical {
    pub lambda: f64,
    pub t: f64,
    pub hessian: [[f64; 2]; 2],
    pub hessian_eigenvalues: [f64; 2],
    pub hessian_definite: bool,
}

/// Closed-form minimiser of `F`.
pub fn inner_critical_point(coeffs: &ReducedCoefficients, w: WeightData) -> Result<InnerCritical> {
    if !(w.g > 0.0) {
        return Err(LabError::NoInteriorMinimum(w.g));
    }
    if !(w.a > 0.0) {
        return Err(LabError::InvalidInput(format!("weight value {} must be positive", w.a)));
    }
    let m = coeffs.interaction_power;
    let t = coeffs.c6 * w.a / (coeffs.c4 * w.g);
    let lambda = 2.0 * t * (coeffs.c6 / (m * coeffs.interaction())).powf(1.0 / m);
    let hessian = inner_hessian(coeffs, w, lambda, t);
    let [[p, q], [_, r]] = hessian;
    let mean = 0.5 * (p + r);
    let radius = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let eig = [mean - radius, mean + radius];
    Ok(InnerCritical { lambda, t, hessian, hessian_eigenvalues: eig, hessian_definite: eig[0] > 0.0 })
}

/// Largest of `|Λ ∂_Λ F|/(c6 a)` and `|t ∂_t F|/(c4 g t)`.
pub fn stationarity_residual(coeffs: &ReducedCoefficients, w: WeightData, crit: &InnerCritical) -> f64 {
    let (gl, gt) = inner_gradient(coeffs, w, crit.lambda, crit.t);
    (crit.lambda * gl / (coeffs.c6 * w.a)).abs().max((gt / (coeffs.c4 * w.g)).abs())
}

/// Brute-force minimiser of `F`: an `m × m` log grid over
/// `[Λ0, t0]·[1/4, 4]²`, re-centred on the best node and shrunk until the
/// cell is below `1e-9` relative.
pub fn grid_minimiser(coeffs: &ReducedCoefficients, w: WeightData, lambda0: f64, t0: f64, m: usize) -> (f64, f64) {
    let (mut cl, mut ct) = (lambda0, t0);
    let mut span = 4f64.ln();
    let node = |k: usize, span: f64| (span * (2.0 * k as f64 / (m - 1) as f64 - 1.0)).exp();
    while span > 1e-9 {
        let mut best = (f64::INFINITY, cl, ct);
        for i in 0..m {
            let l = cl * node(i, span);
            for j in 0..m {
                let t = ct * node(j, span);
                let f = inner_energy(coeffs, w, l, t);
                if f < best.0 {
                    best = (f, l, t);
                }
            }
        }
        cl = best.1;
        ct = best.2;
        span *= 8.0 / (m - 1) as f64;
    }
    (cl, ct)
}

/// One bubble of a [`ConfigurationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedBubble {
    pub xi: Vec<f64>,
    pub nu: Vec<f64>,
    pub weight: WeightData,
    pub inner: InnerCritical,
    /// `ε^{rate} Λ*`.
    pub delta_pred: f64,
    /// `ξ + ε t* ν`.
    pub xi_eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationResult {
    pub epsilon: f64,
    pub xi_list: Vec<Vec<f64>>,
    #[serde(rename = "Lambda_star")]
    pub lambda_star: Vec<f64>,
    pub t_star: Vec<f64>,
    pub delta_pred: Vec<f64>,
    #[serde(rename = "J_model")]
    pub j_model: f64,
    pub margin: f64,
    pub bubbles: Vec<PlacedBubble>,
    pub coefficients: ReducedCoefficients,
}

/// Places `kappa` bubbles at the first admissible boundary points (in
/// coordinate order) and solves each inner problem.
pub fn find_configuration(
    domain: &DomainModel,
    coeffs: &ReducedCoefficients,
    kappa: usize,
    epsilon: f64,
) -> Result<ConfigurationResult> {
    if kappa == 0 || !(epsilon > 0.0) {
        return Err(LabError::InvalidInput("κ must be at least 1 and ε positive".into()));
    }
    let report = domain.boundary_critical_points()?;
    let good = report.admissible_points();
    if good.len() < kappa {
        return Err(LabError::InsufficientCriticalPoints { needed: kappa, found: good.len() });
    }
    let bubbles: Vec<PlacedBubble> = good[..kappa]
        .par_iter()
        .map(|cp| -> Result<PlacedBubble> {
            let weight = WeightData { a: cp.weight, g: cp.normal_derivative };
            let inner = inner_critical_point(coeffs, weight)?;
            Ok(PlacedBubble {
                xi: cp.point.x.clone(),
                nu: cp.point.nu.clone(),
                weight,
                inner,
                delta_pred: epsilon.powf(coeffs.rate) * inner.lambda,
                xi_eps: cp.point.x.iter().zip(&cp.point.nu).map(|(x, v)| x + epsilon * inner.t * v).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let config = Configuration::new(
        bubbles.iter().map(|b| b.xi.clone()).collect(),
        bubbles.iter().map(|b| b.inner.lambda).collect(),
        bubbles.iter().map(|b| b.inner.t).collect(),
        epsilon,
    )?;
    let weights: Vec<WeightData> = bubbles.iter().map(|b| b.weight).collect();
    Ok(ConfigurationResult {
        epsilon,
        xi_list: config.xi_list.clone(),
        lambda_star: config.lambda_list.clone(),
        t_star: config.t_list.clone(),
        delta_pred: bubbles.iter().map(|b| b.delta_pred).collect(),
        j_model: evaluate_j(coeffs, &weights, &config),
        margin: coeffs.margin(epsilon),
        bubbles,
        coefficients: *coeffs,
    })
}

/// Coefficients for `pair` from a freshly solved profile. In SLOW the
/// interaction integral is taken at the reference placement `t = Λ = 1`, so
/// `η/δ = ε^{1-rate}`.
pub fn coefficients_for_pair(pair: &ExponentPair, epsilon: f64) -> Result<(ReducedCoefficients, Option<f64>)> {
    let profile = solve_ground_state(pair, &ShootingConfig::default())?;
    let constants = compute_constants(&profile)?;
    let slow_integral = match pair.regime() {
        Regime::Slow => Some(slow_interaction_integral(&profile, epsilon.powf(1.0 - concentration_exponent(pair)?))?),
        _ => None,
    };
    Ok((assemble_coefficients(&constants, pair, profile.tail_b(), slow_integral)?, slow_integral))
}

/// Full pipeline from a domain and an exponent pair to a configuration.
pub fn reduce_domain(
    domain: &DomainModel,
    pair: &ExponentPair,
    kappa: usize,
    epsilon: f64,
    sigma_margin: f64,
) -> Result<ConfigurationResult> {
    if domain.n() != pair.n() {
        return Err(LabError::InvalidInput(format!("domain has dimension {}, pair has {}", domain.n(), pair.n())));
    }
    let (coeffs, _) = coefficients_for_pair(pair, epsilon)?;
    find_configuration(domain, &coeffs.with_sigma_margin(sigma_margin), kappa, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(regime: Regime, power: f64) -> ReducedCoefficients {
        ReducedCoefficients {
            n: 4,
            regime,
            c1: 3.0,
            c2: -1.7,
            c3: 0.4,
            c4: 2.5,
            c5: (regime == Regime::Fast).then_some(1.3),
            c5_prime: (regime == Regime::Slow).then_some(0.8),
            c6: 0.9,
            interaction_power: power,
            rate: 1.5,
            sigma_margin: 1.0,
        }
    }

    #[test]
    fn closed_form_is_stationary_and_minimal() {
        for (regime, power) in [(Regime::Fast, 2.0), (Regime::Slow, 2.2), (Regime::Fast, 3.0)] {
            let c = synthetic(regime, power);
            let w = WeightData { a: 1.7, g: 0.6 };
            let crit = inner_critical_point(&c, w).unwrap();
            assert!(stationarity_residual(&c, w, &crit) <= 1e-12);
            assert!(crit.hessian_definite);
            // start the oracle off-centre so it has to find the minimum
            let (gl, gt) = grid_minimiser(&c, w, 1.9 * crit.lambda, 0.6 * crit.t, 400);
            assert!((gl - crit.lambda).abs() <= 1e-6 * crit.lambda, "{gl} vs {}", crit.lambda);
            assert!((gt - crit.t).abs() <= 1e-6 * crit.t, "{gt} vs {}", crit.t);
        }
    }

    #[test]
    fn nonpositive_normal_derivative_has_no_minimum() {
        let c = synthetic(Regime::Fast, 2.0);
        assert_eq!(inner_critical_point(&c, WeightData { a: 1.0, g: 0.0 }), Err(LabError::NoInteriorMinimum(0.0)));
        assert!(matches!(
            inner_critical_point(&c, WeightData { a: 1.0, g: -2.0 }),
            Err(LabError::NoInteriorMinimum(_))
        ));
        // with g = 0, re-optimising Λ leaves F strictly decreasing in t
        let w = WeightData { a: 1.0, g: 0.0 };
        let best = |t: f64| {
            let lam = 2.0 * t * (c.c6 / (2.0 * c.interaction())).sqrt();
            inner_energy(&c, w, lam, t)
        };
        assert!(best(2.0) < best(1.0) && best(4.0) < best(2.0));
    }

    #[test]
    fn coercive_in_lambda() {
        let c = synthetic(Regime::Fast, 2.0);
        let w = WeightData { a: 1.0, g: 1.0 };
        let mid = inner_energy(&c, w, 1.0, 1.0);
        assert!(inner_energy(&c, w, 1e-6, 1.0) > mid + 10.0);
        assert!(inner_energy(&c, w, 1e6, 1.0) > mid + 1e10);
    }

    #[test]
    fn homogeneity_and_additivity() {
        let c = synthetic(Regime::Fast, 2.0);
        let w = WeightData { a: 1.2, g: 0.5 };
        let eps = 0.01;
        let one = Configuration::new(vec![vec![0.0]], vec![0.7], vec![1.1], eps).unwrap();
        let doubled = Configuration::new(vec![vec![0.0]], vec![1.4], vec![2.2], eps).unwrap();
        let shift = evaluate_j(&c, &[w], &doubled) - evaluate_j(&c, &[w], &one);
        let expected = eps * (-c.c6 * w.a * 2f64.ln() + c.c4 * w.g * 1.1);
        assert!((shift - expected).abs() < 1e-13);
        let w2 = WeightData { a: 0.3, g: 2.0 };
        let other = Configuration::new(vec![vec![1.0]], vec![0.2], vec![0.4], eps).unwrap();
        let both = Configuration::new(vec![vec![0.0], vec![1.0]], vec![0.7, 0.2], vec![1.1, 0.4], eps).unwrap();
        let sum = evaluate_j(&c, &[w], &one) + evaluate_j(&c, &[w2], &other);
        assert!((evaluate_j(&c, &[w, w2], &both) - sum).abs() < 1e-13);
        assert!(Configuration::new(vec![vec![0.0], vec![0.0]], vec![1.0, 1.0], vec![1.0, 1.0], eps).is_err());
    }

    #[test]
    fn leading_term_limit() {
        let c = synthetic(Regime::Fast, 2.0);
        let w = WeightData { a: 1.2, g: 0.5 };
        for eps in [1e-4, 1e-8] {
            let cfg = Configuration::new(vec![vec![0.0]], vec![1.0], vec![1.0], eps).unwrap();
            let rest = evaluate_j(&c, &[w], &cfg) - c.c2 * eps * eps.ln() * w.a;
            assert!((rest - c.c1 * w.a).abs() <= 10.0 * eps);
        }
    }

    fn talenti_coefficients() -> (ReducedCoefficients, EnergyConstants) {
        let prof = solve_ground_state(&ExponentPair::parse(4, "3").unwrap(), &ShootingConfig::default()).unwrap();
        let k = compute_constants(&prof).unwrap();
        let pair = prof.pair().with_perturbation(1.0, 1.0, 0.0).unwrap();
        (assemble_coefficients(&k, &pair, prof.tail_b(), None).unwrap(), k)
    }

    #[test]
    fn assembled_coefficients_n4() {
        let (c, k) = talenti_coefficients();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((c.c1 - 16.0 * pi2 / 3.0).abs() <= 1e-3 * c.c1);
        assert!((c.c6 / c.c2 + 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(c.c1, c.c4);
        // symmetric pair: c3 = -(α+β)A1/(q0+1)² + 2A3/(q0+1) with α = β = 1
        let expected = -2.0 * k.a1 / 16.0 + 2.0 * k.a3 / 4.0;
        assert!((c.c3 - expected).abs() <= 1e-3 * expected.abs().max(k.a3 / 4.0));
        assert!(c.c5.unwrap() > 0.0 && c.c6 > 0.0 && c.c4 > 0.0);
        assert_eq!(c.interaction_power, 2.0);
    }

    #[test]
    fn slow_coefficients_need_the_integral() {
        let prof = solve_ground_state(&ExponentPair::parse(5, "1.4").unwrap(), &ShootingConfig::default()).unwrap();
        let k = compute_constants(&prof).unwrap();
        assert_eq!(assemble_coefficients(&k, prof.pair(), prof.tail_b(), None), Err(LabError::MissingConstant("I")));
        let values: Vec<f64> =
            [10.0, 100.0, 1000.0].iter().map(|&l| slow_interaction_integral(&prof, l).unwrap()).collect();
        assert!(values.iter().all(|v| *v > 0.0));
        // bounded: successive values settle
        assert!((values[2] - values[1]).abs() < (values[1] - values[0]).abs());
        let c = assemble_coefficients(&k, prof.pair(), prof.tail_b(), Some(values[1])).unwrap();
        assert!((c.interaction_power - 2.2).abs() < 1e-12);
        assert!(c.c5.is_none() && c.c5_prime.unwrap() > 0.0);
        let crit = inner_critical_point(&c, WeightData { a: 1.0, g: 1.0 }).unwrap();
        assert!(crit.hessian_definite);
    }

    #[test]
    fn slow_integral_limit_matches_far_field() {
        // L → ∞: I → b^{p0} ∫_{B_1} |z|^{-(n-2)p0} |z + 2ν|^{(n-2)p0-n} dz
        let prof = solve_ground_state(&ExponentPair::parse(5, "1.4").unwrap(), &ShootingConfig::default()).unwrap();
        let (n, p0, b) = (5.0, 1.4, prof.tail_b());
        let s = n - (n - 2.0) * p0;
        let limit = unit_sphere_area(5)
            * b.powf(p0)
            * integrate_adaptive(0.0, 1.0, 0.0, 1e-10, 500, |rho| {
                let mean = integrate_adaptive(0.0, std::f64::consts::PI, 0.0, 1e-12, 200, |th| {
                    th.sin().powi(3) * (rho * rho + 4.0 + 4.0 * rho * th.cos()).powf(-s / 2.0)
                })
                .value
                    * unit_sphere_area(4)
                    / unit_sphere_area(5);
                rho.powf(n - 1.0 - (n - 2.0) * p0) * mean
            })
            .value;
        let at = slow_interaction_integral(&prof, 1e4).unwrap();
        assert!((at - limit).abs() <= 0.05 * limit, "{at} vs {limit}");
    }

    #[test]
    fn reference_annulus_configuration() {
        let (c, _) = talenti_coefficients();
        let ann = DomainModel::reference_annulus(4, 2.0);
        let res = find_configuration(&ann, &c, 2, 0.01).unwrap();
        let xs: Vec<f64> = res.xi_list.iter().map(|x| x[0]).collect();
        assert!((xs[0] - 1.0).abs() < 1e-9 && (xs[1] - 4.0).abs() < 1e-9);
        for b in &res.bubbles {
            assert!(b.inner.hessian_definite);
            assert!(b.xi[1..].iter().all(|v| v.abs() < 1e-9));
            assert_eq!(b.delta_pred, 0.01f64.powf(1.5) * b.inner.lambda);
        }
        let too_many = find_configuration(&ann, &c, 3, 0.01);
        assert_eq!(too_many, Err(LabError::InsufficientCriticalPoints { needed: 3, found: 2 }));
        let flat = DomainModel::reference_annulus(4, 0.0);
        assert_eq!(
            find_configuration(&flat, &c, 1, 0.01),
            Err(LabError::InsufficientCriticalPoints { needed: 1, found: 0 })
        );
        let ball = DomainModel::ball(vec![3.0, 0.5, 0.0, 0.0], 1.0, vec![2.0]).unwrap();
        let one = find_configuration(&ball, &c, 1, 0.01).unwrap();
        assert!((one.xi_list[0][0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn slow_pipeline_places_two_bubbles() {
        let pair = ExponentPair::parse(5, "1.4").unwrap();
        let ann = DomainModel::reference_annulus(5, 2.0);
        let res = reduce_domain(&ann, &pair, 2, 0.01, 1.0).unwrap();
        let rate = (3.0 * 1.4 - 1.0) / (3.0 * 1.4 - 2.0);
        assert!((res.coefficients.rate - rate).abs() < 1e-14);
        assert!(res.coefficients.c5_prime.unwrap() > 0.0);
        assert!(res.bubbles.iter().all(|b| b.inner.hessian_definite));
        assert!((res.margin - 0.01f64.powf(1.25)).abs() < 1e-18);
        let wrong = reduce_domain(&DomainModel::reference_annulus(4, 2.0), &pair, 1, 0.01, 1.0);
        assert!(matches!(wrong, Err(LabError::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn weight_rescaling_keeps_minimiser(scale in 1e-3f64..1e3, a in 0.1f64..10.0, g in 0.1f64..10.0) {
            let c = synthetic(Regime::Fast, 2.0);
            let w = WeightData { a, g };
            let ws = WeightData { a: scale * a, g: scale * g };
            let base = inner_critical_point(&c, w).unwrap();
            let scaled = inner_critical_point(&c, ws).unwrap();
            prop_assert!((base.lambda - scaled.lambda).abs() <= 1e-12 * base.lambda);
            prop_assert!((base.t - scaled.t).abs() <= 1e-12 * base.t);
            let cfg = Configuration::new(vec![vec![0.0]], vec![base.lambda], vec![base.t], 0.01).unwrap();
            let j = evaluate_j(&c, &[w], &cfg);
            prop_assert!((evaluate_j(&c, &[ws], &cfg) - scale * j).abs() <= 1e-12 * (scale * j).abs());
        }

        #[test]
        fn doubling_g_halves_t(a in 0.1f64..10.0, g in 0.1f64..10.0) {
            let c = synthetic(Regime::Fast, 2.0);
            let one = inner_critical_point(&c, WeightData { a, g }).unwrap();
            let two = inner_critical_point(&c, WeightData { a, g: 2.0 * g }).unwrap();
            prop_assert_eq!(two.t, 0.5 * one.t);
        }
    }
}
