//! Exponent pairs on the critical hyperbola `1/(p+1) + 1/(q+1) = (n-2)/n`.
//!
//! Pairs built from rational input keep exact arithmetic so that the regime
//! boundary `p0 = n/(n-2)` is decided without rounding.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Tolerance used for the LOG boundary when the exponent is a float.
pub const LOG_BOUNDARY_TOL: f64 = 1e-12;

/// Decay regime of the ground state, ordered `Slow < Log < Fast`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Slow,
    Log,
    Fast,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Slow => "slow",
            Regime::Log => "log",
            Regime::Fast => "fast",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An exponent that is either an exact rational or a plain float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Exact(Rational64),
    Approx(f64),
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::Exact(r) => ratio_to_f64(r),
            Exponent::Approx(x) => x,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Exponent::Exact(_))
    }
}

impl From<f64> for Exponent {
    fn from(x: f64) -> Self {
        Exponent::Approx(x)
    }
}

impl From<Rational64> for Exponent {
    fn from(r: Rational64) -> Self {
        Exponent::Exact(r)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Exact(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Exponent::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Exponent::Approx(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for Exponent {
    type Err = LabError;

    /// Accepts `a/b`, integers and plain decimals (`1.4` becomes `7/5`).
    /// Scientific notation falls back to a float.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || LabError::InvalidInput(format!("cannot parse exponent {s:?}"));
        if let Some((num, den)) = s.split_once('/') {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            let den: i64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            return Ok(Exponent::Exact(Rational64::new(num, den)));
        }
        if s.contains(['e', 'E']) {
            return s.parse::<f64>().map(Exponent::Approx).map_err(|_| bad());
        }
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        if frac_part.len() > 15 || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return s.parse::<f64>().map(Exponent::Approx).map_err(|_| bad());
        }
        let negative = int_part.starts_with('-');
        let int_val: i64 =
            if int_part.is_empty() || int_part == "-" { 0 } else { int_part.parse().map_err(|_| bad())? };
        let den = 10_i64.pow(frac_part.len() as u32);
        let frac_val: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| bad())? };
        let mag = int_val.abs().checked_mul(den).and_then(|v| v.checked_add(frac_val)).ok_or_else(bad)?;
        let num = if negative { -mag } else { mag };
        Ok(Exponent::Exact(Rational64::new(num, den)))
    }
}

fn ratio_to_f64(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn check_dimension(n: u32) -> Result<()> {
    if n < 3 {
        return Err(LabError::InvalidInput(format!("dimension n = {n} must be at least 3")));
    }
    Ok(())
}

/// Partner `q0` of `p0` on the critical hyperbola in dimension `n`.
pub fn critical_partner(n: u32, p0: f64) -> Result<f64> {
    check_dimension(n)?;
    let nf = n as f64;
    if !(p0 > -1.0) || !p0.is_finite() {
        return Err(LabError::NoCriticalPartner { n, p0 });
    }
    let gap = (nf - 2.0) / nf - 1.0 / (p0 + 1.0);
    if gap <= 0.0 {
        return Err(LabError::NoCriticalPartner { n, p0 });
    }
    Ok(1.0 / gap - 1.0)
}

/// Exact-arithmetic version of [`critical_partner`].
pub fn critical_partner_exact(n: u32, p0: Rational64) -> Result<Rational64> {
    check_dimension(n)?;
    let one = Rational64::from_integer(1);
    let nn = Rational64::from_integer(n as i64);
    if p0 + one <= Rational64::zero() {
        return Err(LabError::NoCriticalPartner { n, p0: ratio_to_f64(p0) });
    }
    let gap = (nn - 2) / nn - one / (p0 + one);
    if gap <= Rational64::zero() {
        return Err(LabError::NoCriticalPartner { n, p0: ratio_to_f64(p0) });
    }
    Ok(one / gap - one)
}

/// Lower admissible bound `p_n = max{1, (3 + sqrt(4n+1)) / (2(n-2))}`.
///
/// Only defined for `n >= 4`: for `n = 3` the formula exceeds `n/(n-2)`.
pub fn pn_threshold(n: u32) -> Result<f64> {
    if n < 4 {
        return Err(LabError::InvalidInput(format!("p_n threshold is only meaningful for n >= 4 (got n = {n})")));
    }
    let nf = n as f64;
    Ok(f64::max(1.0, (3.0 + (4.0 * nf + 1.0).sqrt()) / (2.0 * (nf - 2.0))))
}

/// Regime of a float exponent; the LOG boundary uses [`LOG_BOUNDARY_TOL`].
pub fn classify_regime(n: u32, p0: f64) -> Regime {
    let threshold = n as f64 / (n as f64 - 2.0);
    let diff = p0 - threshold;
    if diff.abs() <= LOG_BOUNDARY_TOL * threshold {
        Regime::Log
    } else if diff < 0.0 {
        Regime::Slow
    } else {
        Regime::Fast
    }
}

/// Regime of a rational exponent, decided exactly.
pub fn classify_regime_exact(n: u32, p0: Rational64) -> Regime {
    let threshold = Rational64::new(n as i64, n as i64 - 2);
    match p0.cmp(&threshold) {
        Ordering::Less => Regime::Slow,
        Ordering::Equal => Regime::Log,
        Ordering::Greater => Regime::Fast,
    }
}

fn classify(n: u32, p0: Exponent) -> Regime {
    match p0 {
        Exponent::Exact(r) => classify_regime_exact(n, r),
        Exponent::Approx(x) => classify_regime(n, x),
    }
}

/// Exponent pair `(p0, q0)` on the critical hyperbola together with the
/// perturbation `p = p0 - alpha*eps`, `q = q0 - beta*eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPair {
    n: u32,
    p0: Exponent,
    q0: Exponent,
    regime: Regime,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    p: f64,
    q: f64,
}

impl ExponentPair {
    /// Builds the critical pair for `p0` with `1 < p0 <= q0`.
    pub fn new(n: u32, p0: impl Into<Exponent>) -> Result<Self> {
        let p0 = p0.into();
        let q0 = match p0 {
            Exponent::Exact(r) => Exponent::Exact(critical_partner_exact(n, r)?),
            Exponent::Approx(x) => Exponent::Approx(critical_partner(n, x)?),
        };
        let (pv, qv) = (p0.value(), q0.value());
        if pv <= 1.0 {
            return Err(LabError::InvalidInput(format!("p0 = {pv} must exceed 1")));
        }
        if pv > qv * (1.0 + 1e-14) {
            return Err(LabError::InvalidInput(format!(
                "p0 = {pv} exceeds its partner q0 = {qv}; swap the roles of the exponents"
            )));
        }
        Ok(ExponentPair { n, p0, q0, regime: classify(n, p0), alpha: 0.0, beta: 0.0, epsilon: 0.0, p: pv, q: qv })
    }

    /// Parses `p0` from text (see [`Exponent::from_str`]).
    pub fn parse(n: u32, p0: &str) -> Result<Self> {
        Self::new(n, p0.parse::<Exponent>()?)
    }

    /// Symmetric pair `p0 = q0 = (n+2)/(n-2)`.
    pub fn symmetric(n: u32) -> Result<Self> {
        check_dimension(n)?;
        Self::new(n, Rational64::new(n as i64 + 2, n as i64 - 2))
    }

    /// Attaches the perturbation slopes and `epsilon >= 0`.
    pub fn with_perturbation(mut self, alpha: f64, beta: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(LabError::InvalidInput(format!("epsilon = {epsilon} must be >= 0")));
        }
        self.alpha = alpha;
        self.beta = beta;
        self.epsilon = epsilon;
        // stored rather than re-derived: epsilon = 0 returns p0, q0 bit for bit
        self.p = if epsilon == 0.0 { self.p0.value() } else { self.p0.value() - alpha * epsilon };
        self.q = if epsilon == 0.0 { self.q0.value() } else { self.q0.value() - beta * epsilon };
        Ok(self)
    }

    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn nf(&self) -> f64 {
        self.n as f64
    }
    pub fn p0(&self) -> f64 {
        self.p0.value()
    }
    pub fn q0(&self) -> f64 {
        self.q0.value()
    }
    pub fn p0_exponent(&self) -> Exponent {
        self.p0
    }
    pub fn q0_exponent(&self) -> Exponent {
        self.q0
    }
    pub fn regime(&self) -> Regime {
        self.regime
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    /// Perturbed exponent `p = p0 - alpha*eps`.
    pub fn p(&self) -> f64 {
        self.p
    }
    /// Perturbed exponent `q = q0 - beta*eps`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `|1/(p0+1) + 1/(q0+1) - (n-2)/n|`.
    pub fn hyperbola_residual(&self) -> f64 {
        let nf = self.nf();
        (1.0 / (self.p0() + 1.0) + 1.0 / (self.q0() + 1.0) - (nf - 2.0) / nf).abs()
    }

    /// Decay exponent of `U` at infinity: `n-2` (FAST, LOG) or `(n-2)p0-2` (SLOW).
    /// In the LOG regime the power carries an extra `log r` factor.
    pub fn tail_exponent_u(&self) -> f64 {
        match self.regime {
            Regime::Slow => (self.nf() - 2.0) * self.p0() - 2.0,
            Regime::Log | Regime::Fast => self.nf() - 2.0,
        }
    }

    /// Decay exponent of `V` at infinity, always `n-2`.
    pub fn tail_exponent_v(&self) -> f64 {
        self.nf() - 2.0
    }

    pub fn dual_exponents(&self) -> DualExponents {
        DualExponents::of(self)
    }
}

impl fmt::Display for ExponentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n={}, p0={}, q0={}, {})", self.n, self.p0, self.q0, self.regime)
    }
}

/// Sobolev exponents `p*`, `q*` of the gradient spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualExponents {
    pub p_star: f64,
    pub q_star: f64,
}

impl DualExponents {
    pub fn of(pair: &ExponentPair) -> Self {
        let nf = pair.nf();
        let (p0, q0) = (pair.p0(), pair.q0());
        DualExponents { p_star: 1.0 / (p0 / (p0 + 1.0) - 1.0 / nf), q_star: 1.0 / (q0 / (q0 + 1.0) - 1.0 / nf) }
    }
}

/// Exponent of `epsilon` in the concentration scale `delta = eps^rate * Lambda`.
pub fn concentration_exponent(pair: &ExponentPair) -> Result<f64> {
    let nf = pair.nf();
    match pair.regime() {
        Regime::Fast => Ok((nf - 1.0) / (nf - 2.0)),
        Regime::Slow => {
            let k = (nf - 2.0) * pair.p0();
            Ok((k - 1.0) / (k - 2.0))
        }
        Regime::Log => Err(LabError::UnsupportedRegime("log")),
    }
}
