//! Integrals of powers of the ground state over `R^n` entering the reduced energy.
//!
//! The radial integral is split at the start of the tail window. The inner
//! part runs over the profile grid in `t = log r` with 3- and 5-point
//! Gauss–Legendre per grid cell (their gap is the error estimate); the outer
//! part integrates the fitted power-law tail in closed form to first order in
//! the correction term, with the second-order term as its error estimate.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exponents::{ExponentPair, Regime};
use crate::ground_state::RadialProfile;
use crate::quadrature::{integrate_adaptive, unit_sphere_area, GaussLegendre};

/// Which ground-state component an integrand uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    U,
    V,
}

/// The six constants `A1 = ∫U^{q0+1}`, `A2 = ∫U^{q0}`, `A3 = ∫U^{q0+1} log U`
/// and their `V`-counterparts with `p0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstantId {
    A1,
    A2,
    A3,
    B1,
    B2,
    B3,
}

impl ConstantId {
    pub const ALL: [ConstantId; 6] =
        [ConstantId::A1, ConstantId::A2, ConstantId::A3, ConstantId::B1, ConstantId::B2, ConstantId::B3];

    pub fn name(self) -> &'static str {
        match self {
            ConstantId::A1 => "A1",
            ConstantId::A2 => "A2",
            ConstantId::A3 => "A3",
            ConstantId::B1 => "B1",
            ConstantId::B2 => "B2",
            ConstantId::B3 => "B3",
        }
    }

    /// `(component, power, carries a log factor)`.
    pub fn integrand(self, pair: &ExponentPair) -> (Component, f64, bool) {
        let (p0, q0) = (pair.p0(), pair.q0());
        match self {
            ConstantId::A1 => (Component::U, q0 + 1.0, false),
            ConstantId::A2 => (Component::U, q0, false),
            ConstantId::A3 => (Component::U, q0 + 1.0, true),
            ConstantId::B1 => (Component::V, p0 + 1.0, false),
            ConstantId::B2 => (Component::V, p0, false),
            ConstantId::B3 => (Component::V, p0 + 1.0, true),
        }
    }
}

/// True iff the integrand of `which` decays faster than `r^{-n}`.
pub fn integrability_precheck(pair: &ExponentPair, which: ConstantId) -> bool {
    let (component, power, _) = which.integrand(pair);
    let decay = match component {
        Component::U => pair.tail_exponent_u(),
        Component::V => pair.tail_exponent_v(),
    };
    decay * power > pair.nf()
}

/// The constants with a pooled relative error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub n: u32,
    pub p0: f64,
    pub q0: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "A3")]
    pub a3: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    /// `NaN` (serialised as `null`) when `B2_defined` is false.
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "B3")]
    pub b3: f64,
    #[serde(rename = "B2_defined")]
    pub b2_defined: bool,
    /// Largest relative error estimate over the computed constants.
    pub quad_error: f64,
}

impl EnergyConstants {
    pub fn get(&self, which: ConstantId) -> Option<f64> {
        match which {
            ConstantId::A1 => Some(self.a1),
            ConstantId::A2 => Some(self.a2),
            ConstantId::A3 => Some(self.a3),
            ConstantId::B1 => Some(self.b1),
            ConstantId::B2 => self.b2_defined.then_some(self.b2),
            ConstantId::B3 => Some(self.b3),
        }
    }
}

/// All six constants; `B2` is marked undefined when its integral diverges.
pub fn compute_constants(profile: &RadialProfile) -> Result<EnergyConstants> {
    let pair = profile.pair();
    let mut values = [f64::NAN; 6];
    let mut quad_error: f64 = 0.0;
    let mut b2_defined = true;
    for (slot, which) in ConstantId::ALL.into_iter().enumerate() {
        match compute_constant(profile, which) {
            Ok((value, err)) => {
                values[slot] = value;
                quad_error = quad_error.max(err / value.abs());
            }
            Err(LabError::DivergentIntegral(_)) if which == ConstantId::B2 => b2_defined = false,
            Err(e) => return Err(e),
        }
    }
    Ok(EnergyConstants {
        n: pair.n(),
        p0: pair.p0(),
        q0: pair.q0(),
        a1: values[0],
        a2: values[1],
        a3: values[2],
        b1: values[3],
        b2: values[4],
        b3: values[5],
        b2_defined,
        quad_error,
    })
}

/// One constant with its absolute error estimate.
pub fn compute_constant(profile: &RadialProfile, which: ConstantId) -> Result<(f64, f64)> {
    let pair = profile.pair();
    if !integrability_precheck(pair, which) {
        return Err(LabError::DivergentIntegral(which.name()));
    }
    let (component, power, with_log) = which.integrand(pair);
    let r_split = profile.config().tail_fit_window.0;
    let (inner, inner_err) = inner_integral(profile, r_split, |r| {
        let s = profile.state(r);
        let x = match component {
            Component::U => s.u,
            Component::V => s.v,
        };
        let base = x.powf(power);
        if with_log {
            base * x.ln()
        } else {
            base
        }
    });
    let (outer, outer_err) = tail_integral(profile, component, power, with_log, r_split)?;
    Ok((inner + outer, inner_err + outer_err))
}

/// `|S^{n-1}| ∫_0^{upper} f(r) r^{n-1} dr` over the stored grid cells, with
/// the 3-/5-point gap as error estimate. `upper` must not exceed `r_max`.
pub fn inner_integral(profile: &RadialProfile, upper: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let pair = profile.pair();
    let n = pair.nf();
    let area = unit_sphere_area(pair.n());
    let gl3 = GaussLegendre::new(3);
    let gl5 = GaussLegendre::new(5);
    let r0 = profile.config().r_start;
    let upper = upper.min(profile.r_max());

    // core ball, where the series holds
    let core_hi = upper.min(r0);
    let core3 = gl3.integrate(0.0, core_hi, |r| f(r) * r.powf(n - 1.0));
    let core5 = gl5.integrate(0.0, core_hi, |r| f(r) * r.powf(n - 1.0));
    let mut value = core5;
    let mut error = (core5 - core3).abs();
    if upper > r0 {
        let t0 = profile.log_start();
        let dt = profile.log_step();
        let t_hi = upper.ln();
        let g = |t: f64| {
            let r = t.exp();
            f(r) * r.powf(n)
        };
        let mut ta = t0;
        while ta < t_hi {
            let tb = (ta + dt).min(t_hi);
            let i3 = gl3.integrate(ta, tb, g);
            let i5 = gl5.integrate(ta, tb, g);
            value += i5;
            error += (i5 - i3).abs();
            ta = tb;
            if t_hi - ta < 1e-12 * dt {
                break;
            }
        }
    }
    (area * value, area * error)
}

/// `∫_R^∞ r^{-m} dr` and `∫_R^∞ r^{-m} log r dr` for `m > 1`.
fn power_tail(m: f64, big_r: f64) -> (f64, f64) {
    let k = m - 1.0;
    let base = big_r.powf(-k);
    (base / k, base * (big_r.ln() / k + 1.0 / (k * k)))
}

/// `|S^{n-1}| ∫_R^∞ X^s (log X)^{0|1} r^{n-1} dr` from the tail model.
fn tail_integral(
    profile: &RadialProfile,
    component: Component,
    power: f64,
    with_log: bool,
    big_r: f64,
) -> Result<(f64, f64)> {
    let pair = profile.pair();
    let n = pair.nf();
    let area = unit_sphere_area(pair.n());
    let tail = profile.tail();
    if component == Component::U && tail.regime == Regime::Log {
        return numeric_tail(profile, component, power, with_log, big_r);
    }
    let (alpha, k1, beta, k2) = match component {
        Component::U => (tail.a, tail.exponent_u, tail.c, tail.correction_exponent_u),
        Component::V => (tail.b, tail.exponent_v, tail.d, tail.correction_exponent_v),
    };
    let s = power;
    let ratio = beta / alpha;
    let gap = k2 - k1;
    let lead = alpha.powf(s);
    // X = α r^{-k1} (1 + e), e = (β/α) r^{-gap}
    let m0 = k1 * s - (n - 1.0);
    let m1 = m0 + gap;
    let m2 = m0 + 2.0 * gap;
    if !(m0 > 1.0) {
        return Err(LabError::DivergentIntegral("tail power too slow"));
    }
    let (p0, l0) = power_tail(m0, big_r);
    let (p1, l1) = power_tail(m1, big_r);
    let (p2, l2) = power_tail(m2, big_r);
    let log_alpha = alpha.ln();
    let (value, error) = if with_log {
        // X^s log X ≈ α^s r^{-k1 s} [L + e(1 + sL)], L = log α − k1 log r
        let main = log_alpha * p0 - k1 * l0;
        let cross = ratio * ((1.0 + s * log_alpha) * p1 - s * k1 * l1);
        let second =
            ratio * ratio * ((0.5 * s * (s - 1.0)).abs() * (log_alpha.abs() * p2 + k1 * l2) + (s.abs() + 0.5) * p2);
        (lead * (main + cross), lead * second)
    } else {
        let main = p0;
        let cross = s * ratio * p1;
        let second = (0.5 * s * (s - 1.0)).abs() * ratio * ratio * p2;
        (lead * (main + cross), lead * second)
    };
    Ok((area * value, area * error))
}

/// Tail integral by quadrature of the tail model in `t = log r`.
fn numeric_tail(
    profile: &RadialProfile,
    component: Component,
    power: f64,
    with_log: bool,
    big_r: f64,
) -> Result<(f64, f64)> {
    let pair = profile.pair();
    let n = pair.nf();
    let area = unit_sphere_area(pair.n());
    let tail = profile.tail();
    let integrand = |t: f64| {
        let r = t.exp();
        let lx = match component {
            Component::U => tail.log_u(r),
            Component::V => tail.log_v(r),
        };
        let x = (power * lx + n * t).exp();
        if with_log {
            x * lx
        } else {
            x
        }
    };
    let t_lo = big_r.ln();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut a = t_lo;
    // doubling panels until the remaining mass is negligible
    let mut width = 4.0;
    for _ in 0..12 {
        let est = integrate_adaptive(a, a + width, 0.0, 1e-12, 400, integrand);
        total += est.value;
        err += est.error;
        a += width;
        width *= 2.0;
        if est.value.abs() <= 1e-15 * total.abs() {
            break;
        }
    }
    Ok((area * total, area * err))
}

/// `|S^{n-1}| ∫_0^L X^s r^{n-1} dr` for any `L > 0`, using the tail model beyond `r_max`.
pub fn radial_power_integral(profile: &RadialProfile, component: Component, power: f64, upper: f64) -> f64 {
    let n = profile.pair().nf();
    let area = unit_sphere_area(profile.pair().n());
    let f = |r: f64| {
        let s = profile.state(r);
        match component {
            Component::U => s.u.powf(power),
            Component::V => s.v.powf(power),
        }
    };
    let (inner, _) = inner_integral(profile, upper, f);
    if upper <= profile.r_max() {
        return inner;
    }
    let est = integrate_adaptive(profile.r_max().ln(), upper.ln(), 0.0, 1e-12, 2000, |t| {
        let r = t.exp();
        f(r) * r.powf(n)
    });
    inner + area * est.value
}

/// `|S^{n-1}| ∫_L^∞ X^s r^{n-1} dr` with its error estimate; the tail model
/// takes over from the start of the fit window and is integrated by
/// quadrature, since for large `s` its first-order expansion is too coarse.
pub fn radial_power_tail(profile: &RadialProfile, component: Component, power: f64, lower: f64) -> Result<(f64, f64)> {
    let r_split = profile.config().tail_fit_window.0;
    if lower >= r_split {
        return numeric_tail(profile, component, power, false, lower);
    }
    let n = profile.pair().nf();
    let area = unit_sphere_area(profile.pair().n());
    let est = integrate_adaptive(lower.ln(), r_split.ln(), 0.0, 1e-12, 4000, |t| {
        let r = t.exp();
        let s = profile.state(r);
        let x = match component {
            Component::U => s.u,
            Component::V => s.v,
        };
        x.powf(power) * r.powf(n)
    });
    let (outer, outer_err) = numeric_tail(profile, component, power, false, r_split)?;
    Ok((area * est.value + outer, area * est.error + outer_err))
}

/// `∫∇U·∇V = |S^{n-1}| ∫ (rU')(rV') r^{n-2} dr/r` over `R^n`.
pub fn gradient_pairing(profile: &RadialProfile) -> f64 {
    let n = profile.pair().nf();
    let area = unit_sphere_area(profile.pair().n());
    let g = |r: f64| {
        let s = profile.state(r);
        s.w * s.z / (r * r)
    };
    let r_split = profile.config().tail_fit_window.0;
    let (inner, _) = inner_integral(profile, r_split, |r| if r > 0.0 { g(r) } else { 0.0 });
    let mut total = 0.0;
    let mut a = r_split.ln();
    let mut width = 4.0;
    for _ in 0..12 {
        let est = integrate_adaptive(a, a + width, 0.0, 1e-12, 400, |t| {
            let r = t.exp();
            g(r) * r.powf(n)
        });
        total += est.value;
        a += width;
        width *= 2.0;
        if est.value.abs() <= 1e-15 * total.abs() {
            break;
        }
    }
    inner + area * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::{solve_ground_state, ShootingConfig};
    use std::f64::consts::PI;

    fn profile(n: u32, p0: &str) -> RadialProfile {
        solve_ground_state(&ExponentPair::parse(n, p0).unwrap(), &ShootingConfig::default()).unwrap()
    }

    /// `|S^{n-1}| ∫_0^∞ (1 + r²/k)^{-e} r^{n-1} dr = |S| k^{n/2} B(n/2, e - n/2) / 2`
    /// by an independent adaptive quadrature in `x = r²/k`.
    fn talenti_power_oracle(n: u32, e: f64) -> f64 {
        let nf = n as f64;
        let k = nf * (nf - 2.0);
        // ∫_0^∞ x^{n/2-1} (1+x)^{-e} dx with x = tan²θ style map x = s/(1-s)
        let est = integrate_adaptive(0.0, 1.0, 0.0, 1e-13, 4000, |s| {
            if s <= 0.0 || s >= 1.0 {
                return 0.0;
            }
            let x = s / (1.0 - s);
            x.powf(nf / 2.0 - 1.0) * (1.0 + x).powf(-e) / ((1.0 - s) * (1.0 - s))
        });
        unit_sphere_area(n) * k.powf(nf / 2.0) * est.value / 2.0
    }

    #[test]
    fn oracle_reproduces_closed_form() {
        // 2π²·32·B(2,2) = 32π²/3
        assert!((talenti_power_oracle(4, 4.0) - 32.0 * PI * PI / 3.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_n4_a1() {
        let prof = profile(4, "3");
        let c = compute_constants(&prof).unwrap();
        let exact = 32.0 * PI * PI / 3.0;
        assert!((c.a1 - exact).abs() / exact < 1e-6, "A1 = {}", c.a1);
        assert!((c.b1 - c.a1).abs() / c.a1 < 1e-6);
        assert!(c.a3 < 0.0 && c.a3 / c.a1 <= 0.0);
        assert!(c.quad_error <= 1e-4, "quad_error {}", c.quad_error);
        // A2 = ∫U³ with U = (1+r²/8)^{-1}
        let a2 = talenti_power_oracle(4, 3.0);
        assert!((c.a2 - a2).abs() / a2 < 1e-6, "A2 = {} vs {a2}", c.a2);
        assert!(c.b2_defined);
    }

    #[test]
    fn symmetric_n3_a2_matches_oracle() {
        let prof = profile(3, "5");
        let c = compute_constants(&prof).unwrap();
        // U^5 = (1 + r²/3)^{-5/2}
        let a2 = talenti_power_oracle(3, 2.5);
        assert!((c.a2 - a2).abs() / a2 < 1e-6, "A2 = {} vs {a2}", c.a2);
    }

    #[test]
    fn asymmetric_pairs_satisfy_a1_equals_b1() {
        for (n, p0) in [(4, "2.5"), (5, "1.4")] {
            let prof = profile(n, p0);
            let c = compute_constants(&prof).unwrap();
            assert!((c.a1 - c.b1).abs() / c.a1 < 0.01, "{n} {p0}: {} vs {}", c.a1, c.b1);
            assert!(c.quad_error <= 1e-4, "{n} {p0}: {}", c.quad_error);
            assert!(c.a1 > 0.0 && c.a2 > 0.0 && c.b1 > 0.0);
        }
    }

    #[test]
    fn gradient_pairing_chain() {
        for (n, p0) in [(4, "2.5"), (5, "1.4")] {
            let prof = profile(n, p0);
            let c = compute_constants(&prof).unwrap();
            let g = gradient_pairing(&prof);
            assert!((g - c.a1).abs() / c.a1 < 0.005, "{n} {p0}: {g} vs {}", c.a1);
        }
    }

    #[test]
    fn tail_constant_b_is_newton_mass_of_u_power() {
        // V is the Newton potential of U^{q0}: b = A2 / ((n-2)|S^{n-1}|)
        for (n, p0) in [(4, "2.5"), (5, "1.4"), (3, "5")] {
            let prof = profile(n, p0);
            let c = compute_constants(&prof).unwrap();
            let nf = n as f64;
            let b = c.a2 / ((nf - 2.0) * unit_sphere_area(n));
            assert!((b - prof.tail_b()).abs() / b < 1e-3, "{n} {p0}: {b} vs {}", prof.tail_b());
        }
    }

    #[test]
    fn slow_b2_undefined() {
        let prof = profile(5, "1.4");
        let c = compute_constants(&prof).unwrap();
        assert!(!c.b2_defined);
        assert!(c.get(ConstantId::B2).is_none());
        assert_eq!(compute_constant(&prof, ConstantId::B2), Err(LabError::DivergentIntegral("B2")));
        let json = serde_json::to_value(c).unwrap();
        assert!(json["B2"].is_null());
        assert_eq!(json["B2_defined"], false);
    }

    #[test]
    fn precheck_examples() {
        let slow = ExponentPair::parse(5, "1.4").unwrap();
        assert!(!integrability_precheck(&slow, ConstantId::B2));
        assert!(integrability_precheck(&slow, ConstantId::A1));
        let fast = ExponentPair::parse(4, "2.5").unwrap();
        assert!(integrability_precheck(&fast, ConstantId::B2));
        let log = ExponentPair::parse(4, "2").unwrap();
        assert!(!integrability_precheck(&log, ConstantId::B2));
    }

    #[test]
    fn scaling_invariance_of_a1() {
        let prof = profile(4, "2.5");
        let c = compute_constants(&prof).unwrap();
        let n = 4.0;
        for lambda in [0.5, 2.0, 10.0] {
            // ∫ (λ^{n/(q0+1)} U(λr))^{q0+1} in t = log r over a range covering both ends
            let q0 = prof.pair().q0();
            let g = |t: f64| {
                let r = t.exp();
                let (u, _) = prof.rescale_radial(lambda, r);
                u.powf(q0 + 1.0) * r.powf(n)
            };
            let lo = (1e-6 / lambda).ln();
            let est = integrate_adaptive(lo, (1e9 / lambda).ln(), 0.0, 1e-11, 4000, g);
            let value = unit_sphere_area(4) * est.value;
            let tol = 3.0 * c.quad_error * c.a1;
            assert!((value - c.a1).abs() <= tol, "λ = {lambda}: {value} vs {}", c.a1);
        }
    }
}
