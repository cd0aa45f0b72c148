//! Model domains (ball, shifted annulus) carrying the weight
//! `a(x) = Π (x^i)^{k_i}`: boundary geometry, the Dirichlet Green function of
//! the ball, boundary critical points of the weight, and the lift to the
//! rotation-invariant higher-dimensional domain.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quadrature::unit_sphere_area;

/// Normalisation `γ_n = 1/((n-2)|S^{n-1}|)` of the fundamental solution.
pub fn gamma_n(n: u32) -> f64 {
    1.0 / ((n as f64 - 2.0) * unit_sphere_area(n))
}

/// Fundamental solution `γ_n |x-y|^{2-n}` of `-Δ`.
pub fn fundamental(n: u32, x: &[f64], y: &[f64]) -> f64 {
    gamma_n(n) * dist(x, y).powf(2.0 - n as f64)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    ShiftedAnnulus { center: Vec<f64>, r_in: f64, r_out: f64 },
}

/// A boundary point with its inward unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    /// Distance to the other boundary component (`None` for the ball).
    pub d_to_other_component: Option<f64>,
}

/// JSON form `{shape, center, radii, n, weight_exponents}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: String,
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub n: u32,
    #[serde(default)]
    pub weight_exponents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainModel {
    shape: Shape,
    n: u32,
    weight_exponents: Vec<f64>,
}

impl DomainModel {
    pub fn ball(center: Vec<f64>, radius: f64, weight_exponents: Vec<f64>) -> Result<Self> {
        let n = center.len() as u32;
        Self::new(Shape::Ball { center, radius }, n, weight_exponents)
    }

    pub fn annulus(center: Vec<f64>, r_in: f64, r_out: f64, weight_exponents: Vec<f64>) -> Result<Self> {
        let n = center.len() as u32;
        Self::new(Shape::ShiftedAnnulus { center, r_in, r_out }, n, weight_exponents)
    }

    /// The annulus `1 < |x - (3,0,…,0)| < 2` weighted by `(x¹)^k`.
    pub fn reference_annulus(n: u32, k: f64) -> Self {
        let mut center = vec![0.0; n as usize];
        center[0] = 3.0;
        Self::annulus(center, 1.0, 2.0, vec![k]).expect("template annulus is valid")
    }

    pub fn new(shape: Shape, n: u32, weight_exponents: Vec<f64>) -> Result<Self> {
        let bad = |m: String| Err(LabError::InvalidInput(m));
        if n < 3 {
            return bad(format!("dimension {n} must be at least 3"));
        }
        let (center, outer) = match &shape {
            Shape::Ball { center, radius } => {
                if !(*radius > 0.0) {
                    return bad(format!("radius {radius} must be positive"));
                }
                (center, *radius)
            }
            Shape::ShiftedAnnulus { center, r_in, r_out } => {
                if !(*r_in > 0.0 && r_out > r_in) {
                    return bad(format!("annulus radii ({r_in}, {r_out}) must satisfy 0 < r_in < r_out"));
                }
                (center, *r_out)
            }
        };
        if center.len() != n as usize {
            return bad(format!("center has {} coordinates, expected {n}", center.len()));
        }
        if weight_exponents.len() > n as usize {
            return bad("more weight exponents than coordinates".into());
        }
        for (i, &k) in weight_exponents.iter().enumerate() {
            if !(k >= 0.0) {
                return bad(format!("weight exponent k_{} = {k} must be non-negative", i + 1));
            }
            if k > 0.0 && center[i] - outer <= 0.0 {
                return bad(format!("closure meets x^{} <= 0 where the weight vanishes", i + 1));
            }
        }
        Ok(DomainModel { shape, n, weight_exponents })
    }

    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        let shape = match (spec.shape.to_ascii_lowercase().as_str(), spec.radii.as_slice()) {
            ("ball", [r]) => Shape::Ball { center: spec.center.clone(), radius: *r },
            ("annulus" | "shifted_annulus", [a, b]) => {
                Shape::ShiftedAnnulus { center: spec.center.clone(), r_in: *a, r_out: *b }
            }
            (s, r) => return Err(LabError::InvalidInput(format!("unsupported shape {s:?} with {} radii", r.len()))),
        };
        Self::new(shape, spec.n, spec.weight_exponents.clone())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DomainSpec =
            serde_json::from_str(text).map_err(|e| LabError::InvalidInput(format!("domain JSON: {e}")))?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> DomainSpec {
        let (shape, center, radii) = match &self.shape {
            Shape::Ball { center, radius } => ("ball", center.clone(), vec![*radius]),
            Shape::ShiftedAnnulus { center, r_in, r_out } => ("annulus", center.clone(), vec![*r_in, *r_out]),
        };
        DomainSpec { shape: shape.into(), center, radii, n: self.n, weight_exponents: self.weight_exponents.clone() }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn weight_exponents(&self) -> &[f64] {
        &self.weight_exponents
    }

    pub fn center(&self) -> &[f64] {
        match &self.shape {
            Shape::Ball { center, .. } | Shape::ShiftedAnnulus { center, .. } => center,
        }
    }

    /// Same domain with the weight exponents replaced.
    pub fn with_weight(&self, weight_exponents: Vec<f64>) -> Result<Self> {
        Self::new(self.shape.clone(), self.n, weight_exponents)
    }

    /// Half-width of the boundary collar where reflection is defined.
    pub fn collar_half_width(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 0.25 * radius,
            Shape::ShiftedAnnulus { r_in, r_out, .. } => 0.25 * r_in.min(r_out - r_in),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boundary_distance(x) > 0.0
    }

    /// True on the closure.
    pub fn contains_closure(&self, x: &[f64], tol: f64) -> bool {
        self.boundary_distance(x) >= -tol
    }

    /// Signed distance to the boundary, positive inside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        let rho = dist(x, self.center());
        match &self.shape {
            Shape::Ball { radius, .. } => radius - rho,
            Shape::ShiftedAnnulus { r_in, r_out, .. } => (rho - r_in).min(r_out - rho),
        }
    }

    /// Nearest boundary point with its inward normal.
    pub fn nearest_boundary_point(&self, x: &[f64]) -> Result<BoundaryPoint> {
        let c = self.center();
        let off = sub(x, c);
        let rho = norm(&off);
        if rho == 0.0 {
            return Err(LabError::OutsideCollar {
                distance: self.boundary_distance(x),
                collar: self.collar_half_width(),
            });
        }
        let dir: Vec<f64> = off.iter().map(|v| v / rho).collect();
        let (radius, inward_sign, other) = match &self.shape {
            Shape::Ball { radius, .. } => (*radius, -1.0, None),
            Shape::ShiftedAnnulus { r_in, r_out, .. } => {
                if rho - r_in <= r_out - rho {
                    (*r_in, 1.0, Some(r_out - r_in))
                } else {
                    (*r_out, -1.0, Some(r_out - r_in))
                }
            }
        };
        Ok(BoundaryPoint {
            x: c.iter().zip(&dir).map(|(ci, d)| ci + radius * d).collect(),
            nu: dir.iter().map(|d| inward_sign * d).collect(),
            d_to_other_component: other,
        })
    }

    /// `x̄ = x - 2 d(x) ν(x)` for `x` in the inner collar `0 <= d(x) <= collar`.
    pub fn reflect(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.boundary_distance(x);
        let collar = self.collar_half_width();
        if !(d >= 0.0 && d <= collar) {
            return Err(LabError::OutsideCollar { distance: d, collar });
        }
        let bp = self.nearest_boundary_point(x)?;
        Ok(x.iter().zip(&bp.nu).map(|(xi, ni)| xi - 2.0 * d * ni).collect())
    }

    fn ball_params(&self) -> Result<(&[f64], f64)> {
        match &self.shape {
            Shape::Ball { center, radius } => Ok((center, *radius)),
            Shape::ShiftedAnnulus { .. } => Err(LabError::RequiresBall),
        }
    }

    /// Regular part `H(x,y) = γ_n (|x'|²|y'|²/R² - 2x'·y' + R²)^{(2-n)/2}`,
    /// primes denoting coordinates relative to the centre.
    pub fn regular_part_ball(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (c, big_r) = self.ball_params()?;
        let xp = sub(x, c);
        let yp = sub(y, c);
        let q = dot(&xp, &xp) * dot(&yp, &yp) / (big_r * big_r) - 2.0 * dot(&xp, &yp) + big_r * big_r;
        Ok(gamma_n(self.n) * q.powf((2.0 - self.n as f64) / 2.0))
    }

    /// Dirichlet Green function `γ_n|x-y|^{2-n} - H(x,y)` of the ball.
    pub fn green_ball(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let h = self.regular_part_ball(x, y)?;
        if dist(x, y) == 0.0 {
            return Err(LabError::CoincidentPoints);
        }
        Ok(fundamental(self.n, x, y) - h)
    }

    /// `ΔH(·,y)` at `x` by fourth-order central differences with step `h`.
    pub fn regular_part_laplacian_fd(&self, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
        let mut lap = 0.0;
        let center = self.regular_part_ball(x, y)?;
        let mut xs = x.to_vec();
        for i in 0..x.len() {
            let mut at = |s: f64| -> Result<f64> {
                xs[i] = x[i] + s;
                let v = self.regular_part_ball(&xs, y);
                xs[i] = x[i];
                v
            };
            let d2 = (-at(2.0 * h)? + 16.0 * at(h)? - 30.0 * center + 16.0 * at(-h)? - at(-2.0 * h)?) / (12.0 * h * h);
            lap += d2;
        }
        Ok(lap)
    }

    /// `a(x) = Π (x^i)^{k_i}`.
    pub fn weight(&self, x: &[f64]) -> f64 {
        self.weight_exponents.iter().enumerate().map(|(i, &k)| if k == 0.0 { 1.0 } else { x[i].powf(k) }).product()
    }

    pub fn weight_gradient(&self, x: &[f64]) -> Vec<f64> {
        let a = self.weight(x);
        (0..x.len()).map(|i| if self.k(i) == 0.0 { 0.0 } else { self.k(i) * a / x[i] }).collect()
    }

    pub fn weight_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let a = self.weight(x);
        let n = x.len();
        DMatrix::from_fn(n, n, |i, j| {
            let (ki, kj) = (self.k(i), self.k(j));
            if ki == 0.0 || kj == 0.0 {
                0.0
            } else if i == j {
                a * ki * (ki - 1.0) / (x[i] * x[i])
            } else {
                a * ki * kj / (x[i] * x[j])
            }
        })
    }

    fn k(&self, i: usize) -> f64 {
        self.weight_exponents.get(i).copied().unwrap_or(0.0)
    }

    /// Spheres making up the boundary: `(radius, inward normal sign relative to x - c)`.
    fn boundary_spheres(&self) -> Vec<(f64, f64)> {
        match &self.shape {
            Shape::Ball { radius, .. } => vec![(*radius, -1.0)],
            Shape::ShiftedAnnulus { r_in, r_out, .. } => vec![(*r_out, -1.0), (*r_in, 1.0)],
        }
    }

    /// Critical points of the weight restricted to the boundary.
    pub fn boundary_critical_points(&self) -> Result<CriticalPointReport> {
        let weighted: Vec<usize> = (0..self.n as usize).filter(|&i| self.k(i) > 0.0).collect();
        if weighted.is_empty() {
            return Ok(CriticalPointReport { points: Vec::new(), whole_boundary_critical: true });
        }
        let c = self.center().to_vec();
        let mut points: Vec<CriticalPoint> = Vec::new();
        for (radius, sign) in self.boundary_spheres() {
            for x in sphere_critical_candidates(&c, radius, &weighted, |i| self.k(i)) {
                if points.iter().any(|p| dist(&p.point.x, &x) < 1e-9 * radius) {
                    continue;
                }
                points.push(self.classify_critical(&x, radius, sign));
            }
        }
        points.sort_by(|a, b| {
            a.point
                .x
                .iter()
                .zip(&b.point.x)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(CriticalPointReport { points, whole_boundary_critical: false })
    }

    fn classify_critical(&self, x: &[f64], radius: f64, sign: f64) -> CriticalPoint {
        let n = x.len();
        let c = self.center();
        let outward: Vec<f64> = x.iter().zip(c).map(|(xi, ci)| (xi - ci) / radius).collect();
        let nu: Vec<f64> = outward.iter().map(|v| sign * v).collect();
        let grad = self.weight_gradient(x);
        let a = self.weight(x);
        let g = dot(&grad, &nu);
        // Riemannian Hessian P ∇²a P - (∇a·N)/ρ P with N = (x - c)/ρ
        let nvec = DMatrix::from_column_slice(n, 1, &outward);
        let proj = DMatrix::<f64>::identity(n, n) - &nvec * nvec.transpose();
        let grad_n = dot(&grad, &outward);
        let hess = &proj * self.weight_hessian(x) * &proj - &proj * (grad_n / radius);
        // restrict to an orthonormal tangent basis
        let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
        for i in 0..n {
            let mut v = proj.column(i).into_owned();
            for b in &basis {
                let s = b.dot(&v);
                v -= b * s;
            }
            let nv = v.norm();
            if nv > 1e-8 {
                basis.push(v / nv);
            }
            if basis.len() == n - 1 {
                break;
            }
        }
        let b = DMatrix::from_columns(&basis);
        let tangent = b.transpose() * hess * &b;
        let tangent = (&tangent + tangent.transpose()) * 0.5;
        let mut eig: Vec<f64> = tangent.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let scale = eig.iter().fold(a.abs() / (radius * radius), |m, e| m.max(e.abs()));
        let nondegenerate = eig.iter().all(|e| e.abs() > 1e-9 * scale);
        if !nondegenerate {
            log::warn!("degenerate boundary critical point at {x:?}");
        }
        let other = match &self.shape {
            Shape::Ball { .. } => None,
            Shape::ShiftedAnnulus { r_in, r_out, .. } => Some(r_out - r_in),
        };
        CriticalPoint {
            point: BoundaryPoint { x: x.to_vec(), nu, d_to_other_component: other },
            weight: a,
            normal_derivative: g,
            hessian_eigenvalues: eig,
            nondegenerate,
            admissible: nondegenerate && g > 0.0,
        }
    }

    /// Rotation-invariant lift: `y = (y¹,…,y^m, z)` with `y^i ∈ R^{k_i+1}` is
    /// sent to `x = (|y¹|,…,|y^m|, z)` and `f(x)` is returned.
    pub fn lift_to_full_domain(&self, y: &[f64], partition: &[usize], f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let x = lift_point(y, partition, self.n as usize)?;
        if !self.contains_closure(&x, 1e-12) {
            return Err(LabError::OutsideDomain);
        }
        Ok(f(&x))
    }
}

/// `(|y¹|,…,|y^m|, z)` for blocks of sizes `k_i + 1`.
pub fn lift_point(y: &[f64], partition: &[usize], n: usize) -> Result<Vec<f64>> {
    let m = partition.len();
    let blocks: usize = partition.iter().map(|k| k + 1).sum();
    if m > n || y.len() != blocks + (n - m) {
        return Err(LabError::InvalidInput(format!(
            "point of length {} does not match partition {partition:?} in dimension {n}",
            y.len()
        )));
    }
    let mut x = Vec::with_capacity(n);
    let mut at = 0;
    for &k in partition {
        x.push(norm(&y[at..at + k + 1]));
        at += k + 1;
    }
    x.extend_from_slice(&y[at..]);
    Ok(x)
}

/// Points of the sphere `|x - c| = ρ` where `∇a ∥ x - c`. Weighted coordinates
/// satisfy `x^i (x^i - c^i) = k_i λ`; the others sit at `c^j`.
fn sphere_critical_candidates(c: &[f64], radius: f64, weighted: &[usize], k: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    let m = weighted.len();
    let lam_min = weighted.iter().map(|&i| -c[i] * c[i] / (4.0 * k(i))).fold(f64::NEG_INFINITY, f64::max);
    let lam_max = weighted
        .iter()
        .map(|&i| ((2.0 * radius + c[i].abs()).powi(2) - c[i] * c[i]) / (4.0 * k(i)))
        .fold(f64::NEG_INFINITY, f64::max);
    let coords = |lam: f64, signs: u32| -> Vec<f64> {
        let mut x = c.to_vec();
        for (bit, &i) in weighted.iter().enumerate() {
            let root = (c[i] * c[i] + 4.0 * k(i) * lam).max(0.0).sqrt();
            let s = if signs >> bit & 1 == 1 { -1.0 } else { 1.0 };
            x[i] = 0.5 * (c[i] + s * root);
        }
        x
    };
    let residual = |lam: f64, signs: u32| dist(&coords(lam, signs), c).powi(2) - radius * radius;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let samples = 4000;
    for signs in 0..(1u32 << m) {
        // dense near λ_min where the branches meet, uniform beyond
        let lam_at = |j: usize| {
            let s = j as f64 / samples as f64;
            lam_min + (lam_max - lam_min) * s * s
        };
        let mut prev_lam = lam_at(0);
        let mut prev = residual(prev_lam, signs);
        for j in 1..=samples {
            let lam = lam_at(j);
            let cur = residual(lam, signs);
            if prev == 0.0 || prev.signum() != cur.signum() {
                let (mut lo, mut hi, mut flo) = (prev_lam, lam, prev);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let fm = residual(mid, signs);
                    if fm == 0.0 || mid <= lo || mid >= hi {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                let mut x = coords(0.5 * (lo + hi), signs);
                // snap back onto the sphere
                let rho = dist(&x, c);
                for (xi, ci) in x.iter_mut().zip(c) {
                    *xi = ci + (*xi - ci) * radius / rho;
                }
                if weighted.iter().all(|&i| x[i] > 0.0) && !out.iter().any(|p| dist(p, &x) < 1e-9 * radius) {
                    out.push(x);
                }
            }
            prev_lam = lam;
            prev = cur;
        }
    }
    out
}

/// A boundary critical point of the weight with its admissibility test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: BoundaryPoint,
    pub weight: f64,
    /// `⟨∇a, ν⟩` with `ν` the inward normal.
    pub normal_derivative: f64,
    /// Eigenvalues of the boundary Hessian of the weight, ascending.
    pub hessian_eigenvalues: Vec<f64>,
    pub nondegenerate: bool,
    /// Nondegenerate with `⟨∇a, ν⟩ > 0`: a valid concentration site.
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub points: Vec<CriticalPoint>,
    /// Set for a constant weight: every boundary point is critical and none
    /// has a positive normal derivative.
    pub whole_boundary_critical: bool,
}

impl CriticalPointReport {
    pub fn admissible_points(&self) -> Vec<&CriticalPoint> {
        self.points.iter().filter(|p| p.admissible).collect()
    }
}

/// Outcome of the regular-part comparison along a refinement of the collar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularPartBound {
    /// `(d(x), max ratio over the samples at that level)` per dyadic level.
    pub levels: Vec<(f64, f64)>,
    pub max_ratio: f64,
    /// Least-squares slope of log(level max) against log d.
    pub trend_slope: f64,
    pub min_regular_part: f64,
    /// No level exceeds 1.5 times the previous one.
    pub passes: bool,
}

/// Samples `|H(x,y) - γ_n|x̄-y|^{2-n}| · |x̄-y|^{n-2} / d(x)` over `levels`
/// dyadic distances `d = d_max 2^{-j}`, `samples_per_level` pairs each; `y`
/// ranges over the ball and includes `y = x`.
pub fn regular_part_bound_check(
    domain: &DomainModel,
    d_max: f64,
    levels: usize,
    samples_per_level: usize,
    seed: u64,
) -> Result<RegularPartBound> {
    let (c, big_r) = domain.ball_params()?;
    let n = domain.n as usize;
    let g = gamma_n(domain.n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = norm(&v);
            if s > 1e-3 && s <= 1.0 {
                return v.iter().map(|x| x / s).collect();
            }
        }
    };
    let mut out = Vec::with_capacity(levels);
    let mut min_h = f64::INFINITY;
    for j in 0..levels {
        let d = d_max * 0.5f64.powi(j as i32);
        if d > domain.collar_half_width() {
            return Err(LabError::OutsideCollar { distance: d, collar: domain.collar_half_width() });
        }
        let mut worst: f64 = 0.0;
        for s in 0..samples_per_level {
            let dir = unit(&mut rng);
            let x: Vec<f64> = c.iter().zip(&dir).map(|(ci, u)| ci + (big_r - d) * u).collect();
            let y = if s == 0 {
                x.clone()
            } else {
                let v = unit(&mut rng);
                let rho = big_r * rng.gen::<f64>().powf(1.0 / n as f64) * (1.0 - 1e-9);
                c.iter().zip(&v).map(|(ci, u)| ci + rho * u).collect()
            };
            let xbar = domain.reflect(&x)?;
            let h = domain.regular_part_ball(&x, &y)?;
            min_h = min_h.min(h);
            let db = dist(&xbar, &y);
            let ratio = (h - g * db.powf(2.0 - n as f64)).abs() * db.powf(n as f64 - 2.0) / d;
            worst = worst.max(ratio);
        }
        out.push((d, worst));
    }
    let passes = out.windows(2).all(|w| w[1].1 <= 1.5 * w[0].1) && out.iter().all(|l| l.1.is_finite());
    let (sx, sy): (Vec<f64>, Vec<f64>) = out.iter().map(|(d, r)| (d.ln(), r.max(1e-300).ln())).unzip();
    let mx = sx.iter().sum::<f64>() / sx.len() as f64;
    let my = sy.iter().sum::<f64>() / sy.len() as f64;
    let cov: f64 = sx.iter().zip(&sy).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = sx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(RegularPartBound {
        max_ratio: out.iter().map(|l| l.1).fold(0.0, f64::max),
        levels: out,
        trend_slope: if var > 0.0 { cov / var } else { 0.0 },
        min_regular_part: min_h,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit_ball(n: usize) -> DomainModel {
        DomainModel::ball(vec![0.0; n], 1.0, vec![]).unwrap()
    }

    #[test]
    fn regular_part_at_center_is_constant() {
        let d = unit_ball(4);
        let g = gamma_n(4);
        for x in [[0.1, 0.2, 0.0, 0.0], [0.9, 0.0, 0.0, 0.0], [0.0, -0.3, 0.5, 0.1]] {
            assert!((d.regular_part_ball(&x, &[0.0; 4]).unwrap() - g).abs() < 1e-15);
        }
    }

    #[test]
    fn green_vanishes_on_boundary() {
        let d = DomainModel::ball(vec![2.0, 1.0, 0.5], 1.5, vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut u: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = norm(&u);
            u.iter_mut().for_each(|v| *v /= s);
            let x: Vec<f64> = d.center().iter().zip(&u).map(|(c, v)| c + 1.5 * v).collect();
            let y: Vec<f64> = d.center().iter().map(|c| c + rng.gen_range(-0.8..0.8)).collect();
            let gap = d.regular_part_ball(&x, &y).unwrap() - fundamental(3, &x, &y);
            assert!(gap.abs() <= 1e-10 * fundamental(3, &x, &y));
        }
    }

    #[test]
    fn green_is_coincidence_error() {
        let d = unit_ball(3);
        assert_eq!(d.green_ball(&[0.1, 0.0, 0.0], &[0.1, 0.0, 0.0]), Err(LabError::CoincidentPoints));
        let ann = DomainModel::reference_annulus(3, 1.0);
        assert_eq!(ann.regular_part_ball(&[2.5, 0.0, 0.0], &[2.4, 0.0, 0.0]), Err(LabError::RequiresBall));
    }

    #[test]
    fn harmonic_regular_part() {
        let d = DomainModel::ball(vec![0.5, 0.0, 0.0, 0.0], 1.0, vec![]).unwrap();
        let y = [0.9, 0.3, 0.1, 0.0];
        for x in [[0.2, 0.1, 0.0, 0.3], [1.2, -0.2, 0.1, 0.0]] {
            let h = d.regular_part_ball(&x, &y).unwrap();
            let lap = d.regular_part_laplacian_fd(&x, &y, 1e-3).unwrap();
            assert!(lap.abs() <= 1e-6 * h, "ΔH = {lap:e}, H = {h}");
        }
    }

    #[test]
    fn reflection_examples() {
        let d = unit_ball(3);
        let xb = d.reflect(&[0.9, 0.0, 0.0]).unwrap();
        assert!((xb[0] - 1.1).abs() < 1e-15 && xb[1] == 0.0);
        assert!((d.boundary_distance(&[0.9, 0.0, 0.0]) - 0.1).abs() < 1e-15);
        assert!(matches!(d.reflect(&[0.5, 0.0, 0.0]), Err(LabError::OutsideCollar { .. })));
        let ann = DomainModel::reference_annulus(3, 1.0);
        let xb = ann.reflect(&[1.9, 0.0, 0.0]).unwrap();
        assert!((xb[0] - 2.1).abs() < 1e-14);
    }

    #[test]
    fn reference_annulus_critical_points() {
        for n in [3, 4, 5] {
            let ann = DomainModel::reference_annulus(n, 2.0);
            let report = ann.boundary_critical_points().unwrap();
            let xs: Vec<f64> = report.points.iter().map(|p| p.point.x[0]).collect();
            assert_eq!(xs.len(), 4, "{xs:?}");
            for (got, want) in xs.iter().zip([1.0, 2.0, 4.0, 5.0]) {
                assert!((got - want).abs() < 1e-9);
            }
            for p in &report.points {
                assert!(p.point.x[1..].iter().all(|v| v.abs() < 1e-9));
                let expected = (p.point.x[0] - 1.0).abs() < 1e-9 || (p.point.x[0] - 4.0).abs() < 1e-9;
                assert_eq!(p.admissible, expected, "x¹ = {}", p.point.x[0]);
                if expected {
                    assert!((p.point.nu[0] - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn off_axis_ball_has_two_candidates() {
        let d = DomainModel::ball(vec![3.0, 1.0, -0.5], 1.0, vec![3.0]).unwrap();
        let report = d.boundary_critical_points().unwrap();
        assert_eq!(report.points.len(), 2);
        let good = report.admissible_points();
        assert_eq!(good.len(), 1);
        assert!((good[0].point.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn two_weighted_coordinates() {
        // a = x¹ (x²)² on a ball far from the axes
        let d = DomainModel::ball(vec![4.0, 5.0, 0.0], 1.0, vec![1.0, 2.0]).unwrap();
        let report = d.boundary_critical_points().unwrap();
        assert!(report.points.len() >= 2);
        for p in &report.points {
            let grad = d.weight_gradient(&p.point.x);
            let nrm = norm(&grad);
            // gradient parallel to the normal
            let cos = dot(&grad, &p.point.nu) / nrm;
            assert!((cos.abs() - 1.0).abs() < 1e-9, "{p:?}");
            assert!((dist(&p.point.x, d.center()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_weight_flags_whole_boundary() {
        let ann = DomainModel::reference_annulus(3, 0.0);
        let report = ann.boundary_critical_points().unwrap();
        assert!(report.whole_boundary_critical);
        assert!(report.points.is_empty());
    }

    #[test]
    fn weight_rescaling_keeps_admissibility() {
        // a → c·a does not change the sign tests; emulate by multiplying the outcomes
        let ann = DomainModel::reference_annulus(4, 3.0);
        let report = ann.boundary_critical_points().unwrap();
        for p in &report.points {
            for scale in [0.1, 7.0] {
                assert_eq!(scale * p.normal_derivative > 0.0, p.normal_derivative > 0.0);
            }
        }
    }

    #[test]
    fn regular_part_ratio_bounded() {
        let d = unit_ball(4);
        let rep = regular_part_bound_check(&d, 0.2, 8, 64, 11).unwrap();
        assert!(rep.passes, "{rep:?}");
        assert!(rep.min_regular_part >= 0.0);
        assert!(rep.max_ratio.is_finite());
    }

    #[test]
    fn lift_examples() {
        let ann = DomainModel::reference_annulus(3, 1.0);
        let f = |x: &[f64]| x[0] * 100.0 + x[1] * 10.0 + x[2];
        // y = (y¹ ∈ R², z ∈ R²) with k₁ = 1
        let a = ann.lift_to_full_domain(&[3.0, 4.0, 0.0, 0.0], &[1], f).unwrap();
        assert_eq!(a, 500.0);
        let b = ann.lift_to_full_domain(&[5.0, 0.0, 0.0, 0.0], &[1], f).unwrap();
        assert!((a - b).abs() <= 1e-14);
        let z = ann.lift_to_full_domain(&[4.0, 0.0, 0.3, -0.2], &[1], f).unwrap();
        assert!((z - (400.0 + 3.0 - 0.2)).abs() < 1e-12);
        assert_eq!(ann.lift_to_full_domain(&[0.5, 0.0, 0.0, 0.0], &[1], f), Err(LabError::OutsideDomain));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"shape":"annulus","center":[3,0,0,0],"radii":[1,2],"n":4,"weight_exponents":[2]}"#;
        let d = DomainModel::from_json(text).unwrap();
        assert_eq!(d, DomainModel::reference_annulus(4, 2.0));
        assert!(DomainModel::from_json(
            r#"{"shape":"ball","center":[0,0,0],"radii":[1],"n":3,"weight_exponents":[1]}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn green_symmetric_and_positive(
            a in prop::collection::vec(-0.7f64..0.7, 4),
            b in prop::collection::vec(-0.7f64..0.7, 4),
        ) {
            let d = unit_ball(4);
            prop_assume!(dist(&a, &b) > 1e-6 && norm(&a) < 0.999 && norm(&b) < 0.999);
            let gab = d.green_ball(&a, &b).unwrap();
            let gba = d.green_ball(&b, &a).unwrap();
            prop_assert!((gab - gba).abs() <= 1e-12 * gab.abs().max(1.0));
            prop_assert!(gab > 0.0);
            prop_assert!(gab < fundamental(4, &a, &b));
        }

        #[test]
        fn distance_is_lipschitz(
            a in prop::collection::vec(-0.3f64..0.3, 3),
            b in prop::collection::vec(-0.3f64..0.3, 3),
        ) {
            let ann = DomainModel::reference_annulus(3, 1.0);
            let shift = [2.5, 0.0, 0.0];
            let x: Vec<f64> = a.iter().zip(&shift).map(|(u, s)| u + s).collect();
            let y: Vec<f64> = b.iter().zip(&shift).map(|(u, s)| u + s).collect();
            let gap = (ann.boundary_distance(&x) - ann.boundary_distance(&y)).abs();
            prop_assert!(gap <= dist(&x, &y) + 1e-15);
        }
    }
}
