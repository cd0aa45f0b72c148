//! Kernel of the system linearised at the ground state.
//!
//! The linear system is `-ΔΨ = p0 V^{p0-1} Φ`, `-ΔΦ = q0 U^{q0-1} Ψ`. Its
//! decaying kernel is spanned by the dilation pair (angular mode 0) and the
//! translation pairs (mode 1, one radial factor shared by all n directions).

use crate::error::{LabError, Result};
use crate::ground_state::{spow, RadialProfile};
use crate::ode::Dopri5;

/// One kernel element, stored as radial factors on the profile grid
/// (samples `1..` of the profile; `r = 0` is skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPair {
    /// `0` for the dilation pair, `1..=n` for the translation pairs.
    pub index: usize,
    /// Angular mode of the radial factor.
    pub ell: u32,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// `r dΨ/dr`, exact from the ground-state equations.
    pub psi_t: Vec<f64>,
    /// `r dΦ/dr`, exact from the ground-state equations.
    pub phi_t: Vec<f64>,
}

/// The `n + 1` kernel pairs of the profile.
pub fn kernel_basis(profile: &RadialProfile) -> Vec<KernelPair> {
    let pair = profile.pair();
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    let r = &profile.radii()[1..];
    let u = &profile.u_samples()[1..];
    let v = &profile.v_samples()[1..];
    let w = &profile.w_samples()[1..];
    let z = &profile.z_samples()[1..];
    let len = r.len();

    let mut dil = KernelPair {
        index: 0,
        ell: 0,
        psi: Vec::with_capacity(len),
        phi: Vec::with_capacity(len),
        psi_t: Vec::with_capacity(len),
        phi_t: Vec::with_capacity(len),
    };
    let mut tr = KernelPair { index: 1, ell: 1, ..dil.clone() };
    for k in 0..len {
        let r2 = r[k] * r[k];
        let w_t = -(n - 2.0) * w[k] - r2 * v[k].powf(p0);
        let z_t = -(n - 2.0) * z[k] - r2 * u[k].powf(q0);
        dil.psi.push(w[k] + n * u[k] / (q0 + 1.0));
        dil.phi.push(z[k] + n * v[k] / (p0 + 1.0));
        dil.psi_t.push(w_t + n * w[k] / (q0 + 1.0));
        dil.phi_t.push(z_t + n * z[k] / (p0 + 1.0));
        tr.psi.push(w[k] / r[k]);
        tr.phi.push(z[k] / r[k]);
        tr.psi_t.push((w_t - w[k]) / r[k]);
        tr.phi_t.push((z_t - z[k]) / r[k]);
    }
    let mut out = vec![dil];
    for index in 1..=pair.n() as usize {
        out.push(KernelPair { index, ..tr.clone() });
    }
    out
}

/// Sup over interior samples of the residual of both mode-`ell` equations,
/// each taken relative to the sum of the magnitudes of its terms.
///
/// In `t = log r` the equations read
/// `f_tt + (n-2) f_t - ℓ(ℓ+n-2) f + r² p0 V^{p0-1} g = 0` and the mirror one.
pub fn linearized_residual(profile: &RadialProfile, kp: &KernelPair) -> f64 {
    let pair = profile.pair();
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    let r = &profile.radii()[1..];
    let u = &profile.u_samples()[1..];
    let v = &profile.v_samples()[1..];
    let dt = profile.log_step();
    let ell = kp.ell as f64;
    let mode = ell * (ell + n - 2.0);
    let len = kp.psi.len();
    let d4 = |x: &[f64], k: usize| (-x[k + 2] + 8.0 * x[k + 1] - 8.0 * x[k - 1] + x[k - 2]) / (12.0 * dt);
    let mut worst: f64 = 0.0;
    // the final sample closes a possibly shorter gap; stop before it
    for k in 2..len.saturating_sub(3) {
        let r2 = r[k] * r[k];
        let cu = r2 * p0 * v[k].powf(p0 - 1.0);
        let cv = r2 * q0 * u[k].powf(q0 - 1.0);
        let terms_u = [d4(&kp.psi_t, k), (n - 2.0) * kp.psi_t[k], -mode * kp.psi[k], cu * kp.phi[k]];
        let terms_v = [d4(&kp.phi_t, k), (n - 2.0) * kp.phi_t[k], -mode * kp.phi[k], cv * kp.psi[k]];
        for terms in [terms_u, terms_v] {
            let scale: f64 = terms.iter().map(|x| x.abs()).sum();
            if scale > 0.0 {
                worst = worst.max(terms.iter().sum::<f64>().abs() / scale);
            }
        }
    }
    worst
}

/// Decay measures of the regular mode-`ell` solutions at `r_max/2` and `r_max`.
///
/// The combination of the two regular solutions with no growing `Φ` part is
/// formed first; the measure is its growing `Ψ` amplitude, scaled by `r^ℓ`,
/// over its largest value on `[r_start, r]`. It tends to zero iff a decaying
/// solution exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProbe {
    pub ell: u32,
    pub measure_half: f64,
    pub measure_full: f64,
}

/// Integrates the two regular solutions of the mode-`ell` linear system
/// alongside the ground state and evaluates their decay measure.
///
/// The `Φ` equation is asymptotically free in both regimes, while in SLOW the
/// coefficient `r² p0 V^{p0-1}` of the `Ψ` equation grows; cancelling the `Φ`
/// growth first removes the particular solution it drives in `Ψ`.
pub fn probe_mode(profile: &RadialProfile, ell: u32) -> Result<ModeProbe> {
    let pair = profile.pair();
    let cfg = profile.config();
    let n = pair.nf();
    let (p0, q0) = (pair.p0(), pair.q0());
    let v0 = profile.v0();
    let l = ell as f64;
    let mode = l * (l + n - 2.0);
    let r0 = cfg.r_start;

    let g = profile.state(r0);
    // regular solutions normalised to (r/r0)^ℓ at the start
    let corr = r0 * r0 / (4.0 * l + 2.0 * n);
    let y1 = [1.0, l, -q0 * corr, -(l + 2.0) * q0 * corr];
    let y2 = [-p0 * v0.powf(p0 - 1.0) * corr, -(l + 2.0) * p0 * v0.powf(p0 - 1.0) * corr, 1.0, l];
    let mut y = [0.0; 12];
    y[..4].copy_from_slice(&[g.u, g.w, g.v, g.z]);
    y[4..8].copy_from_slice(&y1);
    y[8..12].copy_from_slice(&y2);

    let rhs = move |t: f64, y: &[f64; 12]| {
        let r2 = (2.0 * t).exp();
        let (u, v) = (y[0], y[2]);
        let cu = r2 * p0 * spow(v, p0 - 1.0);
        let cv = r2 * q0 * spow(u, q0 - 1.0);
        let mut d = [0.0; 12];
        d[0] = y[1];
        d[1] = -(n - 2.0) * y[1] - r2 * spow(v, p0);
        d[2] = y[3];
        d[3] = -(n - 2.0) * y[3] - r2 * spow(u, q0);
        for base in [4, 8] {
            d[base] = y[base + 1];
            d[base + 1] = -(n - 2.0) * y[base + 1] + mode * y[base] - cu * y[base + 2];
            d[base + 2] = y[base + 3];
            d[base + 3] = -(n - 2.0) * y[base + 3] + mode * y[base + 2] - cv * y[base];
        }
        d
    };

    // (r, Ψ1, Φ1, Ψ2, Φ2) with the (r/r0)^ℓ growth divided out
    let mut track: Vec<[f64; 5]> = Vec::new();
    let mut stepper = Dopri5::new(rhs, r0.ln(), y, cfg.ode_tolerance).with_max_step(0.05);
    let record = |s: &Dopri5<12, _>, track: &mut Vec<[f64; 5]>| {
        let y = s.y();
        let r = s.t().exp();
        let scale = (r / r0).powf(l);
        track.push([r, y[4] / scale, y[6] / scale, y[8] / scale, y[10] / scale]);
    };
    record(&stepper, &mut track);
    let measure_at = |r_end: f64, stepper: &mut Dopri5<12, _>, track: &mut Vec<[f64; 5]>| -> Result<f64> {
        let t_end = r_end.ln();
        while stepper.t() < t_end {
            stepper.step(t_end)?;
            record(stepper, track);
        }
        let y = stepper.y();
        let scale = (r_end / r0).powf(l);
        let amp = |w: f64, wt: f64| ((n - 2.0 + l) * w + wt) / ((n - 2.0 + 2.0 * l) * scale);
        let (psi1, phi1) = (amp(y[4], y[5]), amp(y[6], y[7]));
        let (psi2, phi2) = (amp(y[8], y[9]), amp(y[10], y[11]));
        let (c1, c2) = if phi1 == 0.0 && phi2 == 0.0 { (1.0, 0.0) } else { (phi2, -phi1) };
        let grow = (c1 * psi1 + c2 * psi2).abs();
        let size =
            track.iter().map(|e| (c1 * e[1] + c2 * e[3]).abs().max((c1 * e[2] + c2 * e[4]).abs())).fold(0.0, f64::max);
        Ok(if size > 0.0 { grow / size } else { 0.0 })
    };
    let measure_half = measure_at(0.5 * cfg.r_max, &mut stepper, &mut track)?;
    let measure_full = measure_at(cfg.r_max, &mut stepper, &mut track)?;
    Ok(ModeProbe { ell, measure_half, measure_full })
}

/// Number of independent decaying solutions in angular mode `ell`.
///
/// The mode holds a decaying solution when the decay measure at `r_max` is at
/// most `decay_threshold`, none when it is at least ten times that, and the
/// test is inconclusive in between.
pub fn mode_kernel_dimension(profile: &RadialProfile, ell: u32, decay_threshold: f64) -> Result<usize> {
    let probe = probe_mode(profile, ell)?;
    log::debug!("mode {ell}: measures {:.3e} (r_max/2), {:.3e} (r_max)", probe.measure_half, probe.measure_full);
    if probe.measure_full <= decay_threshold {
        Ok(1)
    } else if probe.measure_full >= 10.0 * decay_threshold {
        Ok(0)
    } else {
        Err(LabError::Inconclusive { ratio: probe.measure_full })
    }
}

/// Default threshold for [`mode_kernel_dimension`].
pub const DEFAULT_DECAY_THRESHOLD: f64 = 1e-3;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::ExponentPair;
    use crate::ground_state::{solve_ground_state, ShootingConfig};

    fn profile(n: u32, p0: &str) -> RadialProfile {
        solve_ground_state(&ExponentPair::parse(n, p0).unwrap(), &ShootingConfig::default()).unwrap()
    }

    #[test]
    fn basis_shapes_and_values() {
        let prof = profile(4, "3");
        let basis = kernel_basis(&prof);
        assert_eq!(basis.len(), 5);
        assert_eq!(basis[0].ell, 0);
        assert!(basis[1..].iter().all(|k| k.ell == 1));
        // symmetric pair: Ψ⁰ ≡ Φ⁰ up to the V(0) bracket, compared in sup norm
        let scale = basis[0].psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in basis[0].psi.iter().zip(&basis[0].phi) {
            assert!((a - b).abs() < 1e-8 * scale);
        }
        // Ψ⁰ → nU(0)/(q0+1) = 1 at the origin
        assert!((basis[0].psi[0] - 1.0).abs() < 1e-5);
        // translation factor of the closed form: U' = -(r/4)(1 + r²/8)^{-2}
        let r = &prof.radii()[1..];
        for k in (0..r.len()).step_by(397) {
            let exact = -r[k] / 4.0 * (1.0 + r[k] * r[k] / 8.0).powi(-2);
            assert!((basis[1].psi[k] - exact).abs() <= 1e-7 * exact.abs(), "r = {}", r[k]);
        }
    }

    #[test]
    fn residuals_small_and_detect_broken_pairs() {
        let prof = profile(4, "3");
        for kp in kernel_basis(&prof) {
            let res = linearized_residual(&prof, &kp);
            assert!(res <= 1e-6, "index {}: {res:e}", kp.index);
        }
        let mut broken = kernel_basis(&prof).remove(0);
        for x in broken.psi.iter_mut().chain(broken.psi_t.iter_mut()) {
            *x *= 1.01;
        }
        assert!(linearized_residual(&prof, &broken) > 1e-3);
    }

    #[test]
    fn mode_dimensions_symmetric_n4() {
        let prof = profile(4, "3");
        assert_eq!(mode_kernel_dimension(&prof, 0, DEFAULT_DECAY_THRESHOLD).unwrap(), 1);
        assert_eq!(mode_kernel_dimension(&prof, 1, DEFAULT_DECAY_THRESHOLD).unwrap(), 1);
        assert_eq!(mode_kernel_dimension(&prof, 2, DEFAULT_DECAY_THRESHOLD).unwrap(), 0);
    }
}
