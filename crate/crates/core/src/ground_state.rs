//! Radial ground state of `-ΔU = V^p0`, `-ΔV = U^q0` with `U(0) = 1`, found by
//! shooting on `V(0)`.
//!
//! Integration runs in `t = log r` on the state `(U, rU', V, rV')`, starting
//! from a fourth-order series at a small radius. Stored samples sit on a grid
//! uniform in `t`; evaluation between samples is cubic Hermite in `t` using
//! the exact derivatives.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exponents::{ExponentPair, Regime};
use crate::ode::Dopri5;

/// Signed power `sign(x)|x|^e`, so that trajectories overshooting zero stay defined.
#[inline]
pub(crate) fn spow(x: f64, e: f64) -> f64 {
    if x >= 0.0 {
        x.powf(e)
    } else {
        -(-x).powf(e)
    }
}

/// Shooting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub r_max: f64,
    pub ode_tolerance: f64,
    pub bisection_tolerance: f64,
    pub max_bisections: usize,
    /// Radii used for the tail fit; `r_lo >= r_max / 4`.
    pub tail_fit_window: (f64, f64),
    /// Number of stored samples between the series radius and `r_max`.
    pub grid_points: usize,
    /// Radius where the series start hands over to the integrator.
    pub r_start: f64,
    /// Maximal relative residual accepted from the fixed-exponent tail fit.
    pub fit_tolerance: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self::with_r_max(200.0)
    }
}

impl ShootingConfig {
    pub fn with_r_max(r_max: f64) -> Self {
        ShootingConfig {
            r_max,
            ode_tolerance: 1e-10,
            bisection_tolerance: 1e-12,
            max_bisections: 200,
            tail_fit_window: (r_max / 4.0, r_max),
            grid_points: 5000,
            r_start: 1e-3,
            fit_tolerance: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::InvalidInput(m));
        if !(self.r_max >= 50.0) {
            return bad(format!("r_max = {} must be at least 50", self.r_max));
        }
        if !(self.ode_tolerance > 0.0 && self.bisection_tolerance > 0.0 && self.fit_tolerance > 0.0) {
            return bad("tolerances must be positive".into());
        }
        let (lo, hi) = self.tail_fit_window;
        if !(lo >= self.r_max / 4.0 && hi > lo && hi <= self.r_max) {
            return bad(format!("tail window ({lo}, {hi}) must satisfy r_max/4 <= lo < hi <= r_max"));
        }
        if !(self.r_start > 0.0 && self.r_start <= 1e-2) {
            return bad(format!("series radius {} must lie in (0, 1e-2]", self.r_start));
        }
        if self.grid_points < 100 {
            return bad("grid_points must be at least 100".into());
        }
        Ok(())
    }
}

/// Far-field model fitted on the tail window.
///
/// `U ≈ a r^{-κ} + c r^{-κ₂}` (or `r^{2-n}(a log r + c)` for LOG) and
/// `V ≈ b r^{2-n} + d r^{-κ_V}`, with the exponents fixed at their predicted values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub regime: Regime,
    pub a: f64,
    pub c: f64,
    pub exponent_u: f64,
    pub correction_exponent_u: f64,
    pub b: f64,
    pub d: f64,
    pub exponent_v: f64,
    pub correction_exponent_v: f64,
    /// Leading exponent of `U` when it is left free in the fit.
    pub fitted_exponent_u: f64,
    /// Leading exponent of `V` when it is left free in the fit.
    pub fitted_exponent_v: f64,
    /// Max relative misfit of the fixed-exponent models on the window.
    pub residual: f64,
}

impl TailModel {
    /// `(U, rU')` at radius `r`.
    pub fn u_and_w(&self, r: f64) -> (f64, f64) {
        let lr = r.ln();
        if self.regime == Regime::Log {
            let base = r.powf(-self.exponent_u);
            let u = base * (self.a * lr + self.c);
            (u, base * self.a - self.exponent_u * u)
        } else {
            let p1 = self.a * r.powf(-self.exponent_u);
            let p2 = self.c * r.powf(-self.correction_exponent_u);
            (p1 + p2, -self.exponent_u * p1 - self.correction_exponent_u * p2)
        }
    }

    /// `(V, rV')` at radius `r`.
    pub fn v_and_z(&self, r: f64) -> (f64, f64) {
        let p1 = self.b * r.powf(-self.exponent_v);
        let p2 = self.d * r.powf(-self.correction_exponent_v);
        (p1 + p2, -self.exponent_v * p1 - self.correction_exponent_v * p2)
    }

    /// `log U` from the model, accurate where `U` itself would underflow.
    pub fn log_u(&self, r: f64) -> f64 {
        let lr = r.ln();
        if self.regime == Regime::Log {
            -self.exponent_u * lr + (self.a * lr + self.c).ln()
        } else {
            self.a.ln() - self.exponent_u * lr
                + (self.c / self.a * r.powf(self.exponent_u - self.correction_exponent_u)).ln_1p()
        }
    }

    pub fn log_v(&self, r: f64) -> f64 {
        self.b.ln() - self.exponent_v * r.ln()
            + (self.d / self.b * r.powf(self.exponent_v - self.correction_exponent_v)).ln_1p()
    }
}

/// Radial state `(U, rU', V, rV')` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialState {
    pub u: f64,
    pub w: f64,
    pub v: f64,
    pub z: f64,
}

/// Outcome of one shot from `V(0) = v0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotOutcome {
    /// `U` is exhausted first: `v0` is above the ground-state value.
    TooHigh,
    /// `V` is exhausted first: `v0` is below the ground-state value.
    TooLow,
    /// Neither component failed before the far horizon.
    Undecided,
}

/// Far horizon (in `t = log r`) for shooting decisions.
const SHOOT_T_MAX: f64 = 40.0;
const BRACKET_MIN: f64 = 1e-6;
const BRACKET_MAX: f64 = 1e6;

struct Series {
    n: f64,
    p0: f64,
    q0: f64,
    v0: f64,
}

impl Series {
    fn state(&self, r: f64) -> RadialState {
        let Series { n, p0, q0, v0 } = *self;
        let r2 = r * r;
        let denom4 = 8.0 * n * (n + 2.0);
        let vp = v0.powf(p0);
        let u2 = -vp / (2.0 * n);
        let u4 = p0 * v0.powf(p0 - 1.0) / denom4;
        let v2 = -1.0 / (2.0 * n);
        let v4 = q0 * vp / denom4;
        RadialState {
            u: 1.0 + u2 * r2 + u4 * r2 * r2,
            w: 2.0 * u2 * r2 + 4.0 * u4 * r2 * r2,
            v: v0 + v2 * r2 + v4 * r2 * r2,
            z: 2.0 * v2 * r2 + 4.0 * v4 * r2 * r2,
        }
    }
}

fn rhs(n: f64, p0: f64, q0: f64) -> impl Fn(f64, &[f64; 4]) -> [f64; 4] {
    move |t, y| {
        let r2 = (2.0 * t).exp();
        [y[1], -(n - 2.0) * y[1] - r2 * spow(y[2], p0), y[3], -(n - 2.0) * y[3] - r2 * spow(y[0], q0)]
    }
}

/// Integrates from `V(0) = v0` until one of the decreasing quantities
/// `U + rU'/(n-2)`, `V + rV'/(n-2)` turns negative.
pub fn shoot(pair: &ExponentPair, v0: f64, cfg: &ShootingConfig) -> Result<ShotOutcome> {
    let (n, p0, q0) = (pair.nf(), pair.p0(), pair.q0());
    let s = Series { n, p0, q0, v0 }.state(cfg.r_start);
    let mut stepper =
        Dopri5::new(rhs(n, p0, q0), cfg.r_start.ln(), [s.u, s.w, s.v, s.z], cfg.ode_tolerance).with_max_step(0.5);
    while stepper.t() < SHOOT_T_MAX {
        stepper.step(SHOOT_T_MAX)?;
        let y = stepper.y();
        let au = y[0] + y[1] / (n - 2.0);
        let av = y[2] + y[3] / (n - 2.0);
        if au < 0.0 || av < 0.0 {
            // both may flip inside one step; the relatively deeper one decides
            let ru = au / y[0].abs().max(f64::MIN_POSITIVE);
            let rv = av / y[2].abs().max(f64::MIN_POSITIVE);
            return Ok(if au < 0.0 && (av >= 0.0 || ru <= rv) { ShotOutcome::TooHigh } else { ShotOutcome::TooLow });
        }
    }
    Ok(ShotOutcome::Undecided)
}

fn find_bracket(pair: &ExponentPair, cfg: &ShootingConfig) -> Result<(f64, f64, Option<f64>)> {
    let mut v = 1.0;
    let first = shoot(pair, v, cfg)?;
    match first {
        ShotOutcome::Undecided => Ok((v, v, Some(v))),
        ShotOutcome::TooHigh => {
            let mut hi = v;
            loop {
                v *= 0.5;
                if v < BRACKET_MIN {
                    return Err(LabError::BracketNotFound(format!("no low shot above {BRACKET_MIN}")));
                }
                match shoot(pair, v, cfg)? {
                    ShotOutcome::TooLow => return Ok((v, hi, None)),
                    ShotOutcome::Undecided => return Ok((v, v, Some(v))),
                    ShotOutcome::TooHigh => hi = v,
                }
            }
        }
        ShotOutcome::TooLow => {
            let mut lo = v;
            loop {
                v *= 2.0;
                if v > BRACKET_MAX {
                    return Err(LabError::BracketNotFound(format!("no high shot below {BRACKET_MAX}")));
                }
                match shoot(pair, v, cfg)? {
                    ShotOutcome::TooHigh => return Ok((lo, v, None)),
                    ShotOutcome::Undecided => return Ok((v, v, Some(v))),
                    ShotOutcome::TooLow => lo = v,
                }
            }
        }
    }
}

/// Bisection on `V(0)`; returns `(v0, final bracket width)`.
pub fn shoot_v0(pair: &ExponentPair, cfg: &ShootingConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let (mut lo, mut hi, exact) = find_bracket(pair, cfg)?;
    if let Some(v) = exact {
        return Ok((v, 0.0));
    }
    for _ in 0..cfg.max_bisections {
        if hi - lo <= cfg.bisection_tolerance {
            return Ok((0.5 * (lo + hi), hi - lo));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok((mid, hi - lo));
        }
        match shoot(pair, mid, cfg)? {
            ShotOutcome::TooHigh => hi = mid,
            ShotOutcome::TooLow => lo = mid,
            ShotOutcome::Undecided => return Ok((mid, 0.0)),
        }
    }
    if hi - lo <= cfg.bisection_tolerance {
        return Ok((0.5 * (lo + hi), hi - lo));
    }
    Err(LabError::NoConvergence { iterations: cfg.max_bisections, width: hi - lo })
}

/// Sampled ground state with its fitted far field.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pair: ExponentPair,
    config: ShootingConfig,
    v0: f64,
    bracket_width: f64,
    t0: f64,
    dt: f64,
    r: Vec<f64>,
    u: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
    z: Vec<f64>,
    tail: TailModel,
}

/// Solves for the ground state of the critical pair (the perturbation is ignored).
pub fn solve_ground_state(pair: &ExponentPair, cfg: &ShootingConfig) -> Result<RadialProfile> {
    cfg.validate()?;
    let (v0, bracket_width) = shoot_v0(pair, cfg)?;
    log::debug!("shooting for {pair}: v0 = {v0}, bracket width {bracket_width:e}");
    let (n, p0, q0) = (pair.nf(), pair.p0(), pair.q0());
    let series = Series { n, p0, q0, v0 };
    let m = cfg.grid_points;
    let t0 = cfg.r_start.ln();
    let t1 = cfg.r_max.ln();
    let dt = (t1 - t0) / m as f64;

    let mut r = Vec::with_capacity(m + 2);
    let mut u = Vec::with_capacity(m + 2);
    let mut w = Vec::with_capacity(m + 2);
    let mut v = Vec::with_capacity(m + 2);
    let mut z = Vec::with_capacity(m + 2);
    r.push(0.0);
    u.push(1.0);
    w.push(0.0);
    v.push(v0);
    z.push(0.0);

    let s = series.state(cfg.r_start);
    let mut stepper = Dopri5::new(rhs(n, p0, q0), t0, [s.u, s.w, s.v, s.z], cfg.ode_tolerance).with_max_step(0.5);
    for k in 0..=m {
        let t = if k == m { t1 } else { t0 + k as f64 * dt };
        stepper.advance_to(t)?;
        let y = stepper.y();
        r.push(if k == m { cfg.r_max } else { t.exp() });
        u.push(y[0]);
        w.push(y[1]);
        v.push(y[2]);
        z.push(y[3]);
    }

    for k in 1..r.len() {
        if !(u[k] > 0.0 && v[k] > 0.0 && w[k] < 0.0 && z[k] < 0.0) {
            return Err(LabError::Integration(format!(
                "profile loses positivity or monotonicity at r = {} (v0 = {v0})",
                r[k]
            )));
        }
    }

    let mut profile = RadialProfile {
        pair: *pair,
        config: *cfg,
        v0,
        bracket_width,
        t0,
        dt,
        r,
        u,
        w,
        v,
        z,
        tail: TailModel {
            regime: pair.regime(),
            a: f64::NAN,
            c: 0.0,
            exponent_u: pair.tail_exponent_u(),
            correction_exponent_u: f64::NAN,
            b: f64::NAN,
            d: 0.0,
            exponent_v: pair.tail_exponent_v(),
            correction_exponent_v: f64::NAN,
            fitted_exponent_u: f64::NAN,
            fitted_exponent_v: f64::NAN,
            residual: f64::NAN,
        },
    };
    profile.tail = fit_tail(&profile)?;
    Ok(profile)
}

/// Correction exponents `(κ₂ for U, κ_V for V)` beyond the leading terms.
fn correction_exponents(pair: &ExponentPair) -> (f64, f64) {
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    let ku = pair.tail_exponent_u();
    let cu = match pair.regime() {
        Regime::Fast => (n - 2.0) * p0 - 2.0,
        Regime::Slow => n - 2.0,
        Regime::Log => n - 2.0,
    };
    (cu, ku * q0 - 2.0)
}

/// Two-column relative least squares: minimises `Σ (α f₁/y + β f₂/y − 1)²`.
fn fit_two(rs: &[f64], ys: &[f64], f1: impl Fn(f64) -> f64, f2: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let (mut s11, mut s12, mut s22, mut s1, mut s2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&r, &y) in rs.iter().zip(ys) {
        let g1 = f1(r) / y;
        let g2 = f2(r) / y;
        s11 += g1 * g1;
        s12 += g1 * g2;
        s22 += g2 * g2;
        s1 += g1;
        s2 += g2;
    }
    let det = s11 * s22 - s12 * s12;
    let (alpha, beta) = if det.abs() > 1e-300 * s11 * s22 && det != 0.0 {
        ((s1 * s22 - s2 * s12) / det, (s2 * s11 - s1 * s12) / det)
    } else {
        (s1 / s11, 0.0)
    };
    let misfit = rs.iter().zip(ys).map(|(&r, &y)| ((alpha * f1(r) + beta * f2(r)) / y - 1.0).abs()).fold(0.0, f64::max);
    (alpha, beta, misfit)
}

/// Golden-section search of the leading exponent minimising the fit misfit.
fn free_exponent(center: f64, misfit: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b) = (0.7 * center, 1.3 * center);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (misfit(x1), misfit(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = misfit(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = misfit(x2);
        }
    }
    0.5 * (a + b)
}

fn fit_tail(profile: &RadialProfile) -> Result<TailModel> {
    let pair = &profile.pair;
    let (lo, hi) = profile.config.tail_fit_window;
    let idx: Vec<usize> = (1..profile.r.len()).filter(|&k| profile.r[k] >= lo && profile.r[k] <= hi).collect();
    if idx.len() < 8 {
        return Err(LabError::InvalidInput("tail window holds too few samples".into()));
    }
    let rs: Vec<f64> = idx.iter().map(|&k| profile.r[k]).collect();
    let us: Vec<f64> = idx.iter().map(|&k| profile.u[k]).collect();
    let vs: Vec<f64> = idx.iter().map(|&k| profile.v[k]).collect();

    let regime = pair.regime();
    let ku = pair.tail_exponent_u();
    let kv = pair.tail_exponent_v();
    let (cu, cv) = correction_exponents(pair);

    let (a, c, res_u, fitted_u) = if regime == Regime::Log {
        let (a, c, res) = fit_two(&rs, &us, |r| r.powf(-ku) * r.ln(), |r| r.powf(-ku));
        let fitted = free_exponent(ku, |k| fit_two(&rs, &us, |r| r.powf(-k) * r.ln(), |r| r.powf(-k)).2);
        (a, c, res, fitted)
    } else {
        let (a, c, res) = fit_two(&rs, &us, |r| r.powf(-ku), |r| r.powf(-cu));
        let fitted = free_exponent(ku, |k| fit_two(&rs, &us, |r| r.powf(-k), |r| r.powf(-cu)).2);
        (a, c, res, fitted)
    };
    let (b, d, res_v) = fit_two(&rs, &vs, |r| r.powf(-kv), |r| r.powf(-cv));
    let fitted_v = free_exponent(kv, |k| fit_two(&rs, &vs, |r| r.powf(-k), |r| r.powf(-cv)).2);

    let residual = res_u.max(res_v);
    let tol = profile.config.fit_tolerance;
    if !(residual <= tol) || !(a > 0.0) || !(b > 0.0) {
        return Err(LabError::FitResidualTooLarge { residual, tolerance: tol });
    }
    Ok(TailModel {
        regime,
        a,
        c,
        exponent_u: ku,
        correction_exponent_u: if regime == Regime::Log { ku } else { cu },
        b,
        d,
        exponent_v: kv,
        correction_exponent_v: cv,
        fitted_exponent_u: fitted_u,
        fitted_exponent_v: fitted_v,
        residual,
    })
}

/// Tail constants `(a, b, exponent of U)` of a solved profile.
pub fn extract_tail_constants(profile: &RadialProfile) -> (f64, f64, f64) {
    (profile.tail.a, profile.tail.b, profile.tail.exponent_u)
}

fn hermite(h: f64, s: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

impl RadialProfile {
    pub fn pair(&self) -> &ExponentPair {
        &self.pair
    }
    pub fn config(&self) -> &ShootingConfig {
        &self.config
    }
    pub fn v0(&self) -> f64 {
        self.v0
    }
    pub fn bracket_width(&self) -> f64 {
        self.bracket_width
    }
    /// Sample radii, starting with `r = 0`.
    pub fn radii(&self) -> &[f64] {
        &self.r
    }
    pub fn u_samples(&self) -> &[f64] {
        &self.u
    }
    pub fn v_samples(&self) -> &[f64] {
        &self.v
    }
    /// Samples of `rU'`.
    pub fn w_samples(&self) -> &[f64] {
        &self.w
    }
    /// Samples of `rV'`.
    pub fn z_samples(&self) -> &[f64] {
        &self.z
    }
    pub fn tail(&self) -> &TailModel {
        &self.tail
    }
    pub fn tail_a(&self) -> f64 {
        self.tail.a
    }
    pub fn tail_b(&self) -> f64 {
        self.tail.b
    }
    pub fn tail_exponent_u(&self) -> f64 {
        self.tail.exponent_u
    }
    pub fn r_max(&self) -> f64 {
        self.config.r_max
    }
    /// Grid spacing in `t = log r`.
    pub fn log_step(&self) -> f64 {
        self.dt
    }
    /// `log r` of the first sample after `r = 0`.
    pub fn log_start(&self) -> f64 {
        self.t0
    }

    fn derivs(&self, s: &RadialState, r: f64) -> (f64, f64) {
        let n = self.pair.nf();
        let r2 = r * r;
        (-(n - 2.0) * s.w - r2 * spow(s.v, self.pair.p0()), -(n - 2.0) * s.z - r2 * spow(s.u, self.pair.q0()))
    }

    fn sample(&self, k: usize) -> RadialState {
        RadialState { u: self.u[k], w: self.w[k], v: self.v[k], z: self.z[k] }
    }

    /// Full state at radius `r >= 0`.
    pub fn state(&self, r: f64) -> RadialState {
        let r = r.abs();
        if r < self.config.r_start {
            let s = Series { n: self.pair.nf(), p0: self.pair.p0(), q0: self.pair.q0(), v0: self.v0 };
            return s.state(r);
        }
        if r >= self.config.r_max {
            if r == self.config.r_max {
                return self.sample(self.r.len() - 1);
            }
            let (u, w) = self.tail.u_and_w(r);
            let (v, z) = self.tail.v_and_z(r);
            return RadialState { u, w, v, z };
        }
        let t = r.ln();
        let pos = ((t - self.t0) / self.dt).max(0.0);
        let m = self.r.len() - 2;
        let j = (pos.floor() as usize).min(m - 1);
        let s = (pos - j as f64).clamp(0.0, 1.0);
        // sample index j+1 sits at t0 + j*dt
        let (a, b) = (self.sample(j + 1), self.sample(j + 2));
        let h = self.dt;
        let (wa_t, za_t) = self.derivs(&a, self.r[j + 1]);
        let (wb_t, zb_t) = self.derivs(&b, self.r[j + 2]);
        RadialState {
            u: hermite(h, s, a.u, a.w, b.u, b.w),
            w: hermite(h, s, a.w, wa_t, b.w, wb_t),
            v: hermite(h, s, a.v, a.z, b.v, b.z),
            z: hermite(h, s, a.z, za_t, b.z, zb_t),
        }
    }

    /// `(U(r), V(r))`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let s = self.state(r);
        (s.u, s.v)
    }

    /// `log U(r)`, taken from the tail model beyond the fit window start.
    pub fn log_u(&self, r: f64) -> f64 {
        if r > self.config.tail_fit_window.0 {
            self.tail.log_u(r)
        } else {
            self.state(r).u.ln()
        }
    }

    pub fn log_v(&self, r: f64) -> f64 {
        if r > self.config.tail_fit_window.0 {
            self.tail.log_v(r)
        } else {
            self.state(r).v.ln()
        }
    }

    /// Scaled bubble at `y`: `(λ^{n/(q0+1)} U(λ|y-ξ|), λ^{n/(p0+1)} V(λ|y-ξ|))`.
    pub fn rescale_evaluate(&self, xi: &[f64], lambda: f64, y: &[f64]) -> (f64, f64) {
        debug_assert_eq!(xi.len(), y.len());
        let dist = xi.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        self.rescale_radial(lambda, dist)
    }

    /// Radial form of [`RadialProfile::rescale_evaluate`] at distance `rho` from the centre.
    pub fn rescale_radial(&self, lambda: f64, rho: f64) -> (f64, f64) {
        let n = self.pair.nf();
        let (u, v) = self.eval(lambda * rho);
        (lambda.powf(n / (self.pair.q0() + 1.0)) * u, lambda.powf(n / (self.pair.p0() + 1.0)) * v)
    }

    /// Sup over interior samples of the relative residual of both second-order
    /// equations, with `d/dt` of `rU'` and `rV'` by sixth-order differences.
    pub fn ode_residual(&self) -> f64 {
        let m = self.r.len() - 2;
        let mut worst: f64 = 0.0;
        // samples 1..=m are uniform in t except the last gap
        for k in 4..=(m - 3) {
            let d6 = |x: &[f64]| {
                (x[k + 3] - 9.0 * x[k + 2] + 45.0 * x[k + 1] - 45.0 * x[k - 1] + 9.0 * x[k - 2] - x[k - 3])
                    / (60.0 * self.dt)
            };
            let s = self.sample(k);
            let n = self.pair.nf();
            let r2 = self.r[k] * self.r[k];
            let src_u = r2 * s.v.powf(self.pair.p0());
            let src_v = r2 * s.u.powf(self.pair.q0());
            let wt = d6(&self.w);
            let zt = d6(&self.z);
            let ru = (wt + (n - 2.0) * s.w + src_u).abs() / (wt.abs() + (n - 2.0) * s.w.abs() + src_u);
            let rv = (zt + (n - 2.0) * s.z + src_v).abs() / (zt.abs() + (n - 2.0) * s.z.abs() + src_v);
            worst = worst.max(ru).max(rv);
        }
        worst
    }

    /// Writes `r,U,V` rows for the stored samples.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| LabError::Integration(format!("csv: {e}"));
        wtr.write_record(["r", "U", "V"]).map_err(io)?;
        for k in 0..self.r.len() {
            wtr.write_record([
                format!("{:.17e}", self.r[k]),
                format!("{:.17e}", self.u[k]),
                format!("{:.17e}", self.v[k]),
            ])
            .map_err(io)?;
        }
        wtr.flush().map_err(|e| LabError::Integration(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        ProfileSidecar {
            n: self.pair.n(),
            p0: self.pair.p0(),
            q0: self.pair.q0(),
            v0: self.v0,
            tail_a: self.tail.a,
            tail_b: self.tail.b,
            tail_exponent: self.tail.exponent_u,
        }
    }
}

/// JSON companion of the profile CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub n: u32,
    pub p0: f64,
    pub q0: f64,
    pub v0: f64,
    pub tail_a: f64,
    pub tail_b: f64,
    pub tail_exponent: f64,
}

/// Closed-form bubble `(1 + r²/(n(n-2)))^{-(n-2)/2}` of the symmetric pair.
pub fn talenti(n: u32, r: f64) -> f64 {
    let nf = n as f64;
    (1.0 + r * r / (nf * (nf - 2.0))).powf(-(nf - 2.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn talenti_derivative(n: f64, r: f64) -> f64 {
        let k = n * (n - 2.0);
        -(n - 2.0) / 2.0 * (1.0 + r * r / k).powf(-n / 2.0) * 2.0 * r / k
    }

    #[test]
    fn talenti_solves_the_symmetric_equation() {
        // -U'' - (n-1)/r U' = U^{(n+2)/(n-2)} by central differences
        for n in [3u32, 4, 5, 6] {
            let nf = n as f64;
            let p = (nf + 2.0) / (nf - 2.0);
            for &r in &[0.3, 1.0, 2.7, 9.0] {
                let h = 1e-3;
                let d2 = (talenti(n, r + h) - 2.0 * talenti(n, r) + talenti(n, r - h)) / (h * h);
                let d1 = talenti_derivative(nf, r);
                let lhs = -d2 - (nf - 1.0) / r * d1;
                let rhs = talenti(n, r).powf(p);
                assert!((lhs - rhs).abs() < 1e-6 * rhs.max(1e-3), "n={n} r={r}");
            }
        }
    }

    fn solve(n: u32, p0: &str) -> RadialProfile {
        solve_ground_state(&ExponentPair::parse(n, p0).unwrap(), &ShootingConfig::default()).unwrap()
    }

    #[test]
    fn symmetric_n4_matches_closed_form() {
        let prof = solve(4, "3");
        assert!((prof.v0() - 1.0).abs() < 1e-8);
        let (u1, v1) = prof.eval(1.0);
        assert!((u1 - 8.0 / 9.0).abs() < 1e-8);
        assert!((v1 - 8.0 / 9.0).abs() < 1e-8);
        for &r in &[0.0, 1e-4, 0.01, 0.5, 3.0, 10.0, 55.5, 199.0] {
            let exact = talenti(4, r);
            assert!((prof.eval(r).0 - exact).abs() / exact < 1e-7, "r = {r}");
        }
        let (a, b, k) = extract_tail_constants(&prof);
        assert!((a - 8.0).abs() < 1e-4 && (b - 8.0).abs() < 1e-4, "a={a} b={b}");
        assert_eq!(k, 2.0);
    }

    #[test]
    fn symmetric_n3_matches_closed_form() {
        let prof = solve(3, "5");
        let u = prof.eval(3f64.sqrt()).0;
        assert!((u - 0.5f64.sqrt()).abs() < 1e-8);
        let (a, b, _) = extract_tail_constants(&prof);
        assert!((a - 3f64.sqrt()).abs() < 1e-5 && (b - 3f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn ode_residual_is_small() {
        let prof = solve(5, "1.4");
        let res = prof.ode_residual();
        assert!(res <= 10.0 * prof.config().ode_tolerance, "residual {res:e}");
    }

    #[test]
    fn profile_is_positive_and_decreasing() {
        let prof = solve(4, "2.5");
        for k in 1..prof.radii().len() {
            assert!(prof.u_samples()[k] > 0.0 && prof.v_samples()[k] > 0.0);
            assert!(prof.w_samples()[k] < 0.0 && prof.z_samples()[k] < 0.0);
        }
        assert_eq!(prof.u_samples()[0], 1.0);
    }

    #[test]
    fn slow_identity_holds() {
        let prof = solve(5, "1.4");
        let (a, b, k) = extract_tail_constants(&prof);
        assert!((k - 2.2).abs() < 1e-12);
        let lhs = b.powf(1.4);
        let rhs = a * 2.2 * 0.8;
        assert!((lhs - rhs).abs() / lhs < 0.02, "b^p0 = {lhs}, a(..)(..) = {rhs}");
    }

    #[test]
    fn fitted_slopes_match_predictions() {
        for (n, p0) in [(4, "2.5"), (5, "1.4"), (3, "5")] {
            let prof = solve(n, p0);
            let t = prof.tail();
            assert!((t.fitted_exponent_u / t.exponent_u - 1.0).abs() < 0.01, "{n} {p0}: {t:?}");
            assert!((t.fitted_exponent_v / t.exponent_v - 1.0).abs() < 0.01, "{n} {p0}: {t:?}");
        }
    }

    #[test]
    fn shooting_is_monotone_off_bracket() {
        for (n, p0) in [(4, "3"), (4, "2.5"), (5, "1.4")] {
            let pair = ExponentPair::parse(n, p0).unwrap();
            let cfg = ShootingConfig::default();
            let (v0, _) = shoot_v0(&pair, &cfg).unwrap();
            for f in [1.001, 1.05, 1.5] {
                assert_eq!(shoot(&pair, v0 * f, &cfg).unwrap(), ShotOutcome::TooHigh, "{n} {p0} x{f}");
                assert_eq!(shoot(&pair, v0 / f, &cfg).unwrap(), ShotOutcome::TooLow, "{n} {p0} /{f}");
            }
        }
    }

    #[test]
    fn rescale_examples() {
        let prof = solve(4, "3");
        let (u, v) = prof.rescale_evaluate(&[0.0; 4], 1.0, &[0.0; 4]);
        assert_eq!((u, v), (1.0, prof.v0()));
        let (u2, _) = prof.rescale_evaluate(&[0.0; 4], 2.0, &[0.0; 4]);
        assert!((u2 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn log_u_continuous_across_window_start() {
        let prof = solve(5, "1.4");
        let r = prof.config().tail_fit_window.0;
        let inside = prof.state(r * (1.0 - 1e-9)).u.ln();
        let outside = prof.log_u(r * (1.0 + 1e-9));
        assert!((inside - outside).abs() < 1e-5);
    }

    #[test]
    fn config_validation() {
        let cfg = ShootingConfig { tail_fit_window: (10.0, 200.0), ..ShootingConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(ShootingConfig::with_r_max(20.0).validate().is_err());
    }
}
