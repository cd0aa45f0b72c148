//! Adaptive Dormand–Prince 5(4) stepper over fixed-size states.

use crate::error::{LabError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// fifth-order weights (also the last stage row)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_REJECTS: usize = 200;

/// Stateful integrator for `y' = f(t, y)` with mixed relative/absolute error control.
pub struct Dopri5<const N: usize, F>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    rhs: F,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    rtol: f64,
    atol: f64,
    h_max: f64,
    steps: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let ch = c * h;
        for i in 0..N {
            out[i] += ch * k[i];
        }
    }
    out
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(rhs: F, t0: f64, y0: [f64; N], rtol: f64) -> Self {
        let k1 = rhs(t0, &y0);
        Dopri5 { rhs, t: t0, y: y0, k1, h: 0.0, rtol, atol: rtol * 1e-30, h_max: f64::INFINITY, steps: 0 }
    }

    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    /// Derivative at the current point (first stage of the next step).
    pub fn dy(&self) -> &[f64; N] {
        &self.k1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn initial_step(&self, direction: f64) -> f64 {
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for i in 0..N {
            let sc = self.atol + self.rtol * self.y[i].abs();
            d0 = d0.max((self.y[i] / sc).abs());
            d1 = d1.max((self.k1[i] / sc).abs());
        }
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        direction * h.min(self.h_max)
    }

    /// Takes one accepted step without passing `t_limit`; returns the new time.
    pub fn step(&mut self, t_limit: f64) -> Result<f64> {
        let span = t_limit - self.t;
        if span == 0.0 {
            return Ok(self.t);
        }
        let direction = span.signum();
        if self.h == 0.0 || self.h.signum() != direction {
            self.h = self.initial_step(direction);
        }
        let mut rejects = 0;
        loop {
            let mut h = self.h.abs().min(self.h_max) * direction;
            let clipped = h.abs() >= span.abs();
            if clipped {
                h = span;
            }
            let t = self.t;
            let y = &self.y;
            let k1 = self.k1;
            let k2 = (self.rhs)(t + C2 * h, &axpy(y, h, &[(A21, &k1)]));
            let k3 = (self.rhs)(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = (self.rhs)(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = (self.rhs)(t + C5 * h, &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = (self.rhs)(t + h, &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
            let y_new = axpy(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let t_new = if clipped { t_limit } else { t + h };
            let k7 = (self.rhs)(t_new, &y_new);

            let mut err: f64 = 0.0;
            let mut finite = true;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                let r = e / sc;
                finite &= r.is_finite();
                err = err.max(r.abs());
            }
            if !finite {
                err = f64::INFINITY;
            }

            if err <= 1.0 {
                let factor =
                    if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
                // a clipped step says nothing about the natural step size
                if !clipped || factor < 1.0 {
                    self.h = h.abs() * factor * direction;
                }
                self.t = t_new;
                self.y = y_new;
                self.k1 = k7;
                self.steps += 1;
                return Ok(self.t);
            }
            rejects += 1;
            if rejects > MAX_REJECTS || h.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(LabError::Integration(format!("step size underflow at t = {t}")));
            }
            let factor = if err.is_finite() { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0) } else { MIN_FACTOR };
            self.h = h.abs() * factor * direction;
        }
    }

    /// Steps until `t_target` is reached exactly.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.t != t_target {
            self.step(t_target)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut s = Dopri5::new(|_t, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 1e-12);
        s.advance_to(10.0).unwrap();
        assert!((s.y()[0] - (-10f64).exp()).abs() / (-10f64).exp() < 1e-10);
        assert_eq!(s.t(), 10.0);
    }

    #[test]
    fn harmonic_oscillator_lands_on_grid() {
        let mut s = Dopri5::new(|_t, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 1e-11).with_atol(1e-14);
        for k in 1..=100 {
            let t = 0.1 * k as f64;
            s.advance_to(t).unwrap();
            assert_eq!(s.t(), t);
            assert!((s.y()[0] - t.sin()).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn integrates_backwards() {
        let mut s = Dopri5::new(|t, _y: &[f64; 1]| [t * t], 3.0, [9.0], 1e-12);
        s.advance_to(0.0).unwrap();
        assert!(s.y()[0].abs() < 1e-10);
    }
}
