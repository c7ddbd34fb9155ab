//! Velocity-space geometry: vectors, sphere rules, Haar rotations, collision maps.

use crate::error::{Error, Result};
use crate::kernels::RestitutionModel;
use crate::quadrature::gauss_legendre;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Vector in ℝⁿ for `n <= 3`; unused trailing components stay zero.
pub type Vector = [f64; 3];

pub type Rotation = [[f64; 3]; 3];

#[inline]
pub fn dot(a: &Vector, b: &Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Vector) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &Vector, b: &Vector) -> Vector {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Vector, b: &Vector) -> Vector {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(c: f64, a: &Vector) -> Vector {
    [c * a[0], c * a[1], c * a[2]]
}

pub fn apply(r: &Rotation, x: &Vector) -> Vector {
    let mut y = [0.0; 3];
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2];
    }
    y
}

/// Unit vector along the last axis of ℝⁿ.
pub fn pole(n: usize) -> Vector {
    let mut e = [0.0; 3];
    e[n - 1] = 1.0;
    e
}

/// Orthonormal completion `(e1, e2)` of a unit vector `a`; `e2 = 0` when `n = 2`.
pub fn frame(n: usize, a: &Vector) -> (Vector, Vector) {
    if n == 2 {
        return ([-a[1], a[0], 0.0], [0.0; 3]);
    }
    let t = if a[0].abs() <= a[1].abs() && a[0].abs() <= a[2].abs() {
        [1.0, 0.0, 0.0]
    } else if a[1].abs() <= a[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let e1 = {
        let c = [a[1] * t[2] - a[2] * t[1], a[2] * t[0] - a[0] * t[2], a[0] * t[1] - a[1] * t[0]];
        scale(1.0 / norm(&c), &c)
    };
    let e2 = [a[1] * e1[2] - a[2] * e1[1], a[2] * e1[0] - a[0] * e1[2], a[0] * e1[1] - a[1] * e1[0]];
    (e1, e2)
}

/// Node of a sphere rule expressed relative to an axis: `ω = s a + c1 e1 + c2 e2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereNode {
    pub s: f64,
    pub one_plus_s: f64,
    pub one_minus_s: f64,
    pub c1: f64,
    pub c2: f64,
    pub weight: f64,
}

/// Product rule on `S^{n-1}`: Gauss–Legendre in `s = a·ω` times a uniform azimuth
/// for `n = 3`, a uniform angle rule for `n = 2`. Weights sum to `|S^{n-1}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub n: usize,
    pub order: usize,
    pub nodes: Vec<SphereNode>,
}

impl SphereQuadrature {
    /// `order` Gauss points in `s` and `2·order` azimuths (`n = 3`), or `2·order` angles (`n = 2`).
    pub fn new(n: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("sphere order must be positive".into()));
        }
        let nodes = match n {
            3 => {
                let (x, w) = gauss_legendre(order);
                let m = 2 * order;
                let mut nodes = Vec::with_capacity(order * m);
                for (s, ws) in x.iter().zip(&w) {
                    let rho = (1.0 - s * s).sqrt();
                    for j in 0..m {
                        let phi = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                        nodes.push(SphereNode {
                            s: *s,
                            one_plus_s: 1.0 + s,
                            one_minus_s: 1.0 - s,
                            c1: rho * phi.cos(),
                            c2: rho * phi.sin(),
                            weight: ws * 2.0 * PI / m as f64,
                        });
                    }
                }
                nodes
            }
            2 => {
                let m = 2 * order;
                (0..m)
                    .map(|j| {
                        let th = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                        let s = th.cos();
                        let half = 0.5 * th;
                        SphereNode {
                            s,
                            one_plus_s: 2.0 * half.cos().powi(2),
                            one_minus_s: 2.0 * half.sin().powi(2),
                            c1: th.sin(),
                            c2: 0.0,
                            weight: 2.0 * PI / m as f64,
                        }
                    })
                    .collect()
            }
            _ => return Err(Error::InvalidArgument(format!("sphere rule for n = {n} unsupported"))),
        };
        Ok(SphereQuadrature { n, order, nodes })
    }

    pub fn default_for(n: usize) -> Self {
        SphereQuadrature::new(n, 32).expect("default sphere rule")
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|q| q.weight).sum()
    }

    /// Node directions measured from `axis` (a unit vector).
    pub fn directions_about(&self, axis: &Vector) -> Vec<(Vector, SphereNode)> {
        let (e1, e2) = frame(self.n, axis);
        self.nodes
            .iter()
            .map(|q| {
                let w = [
                    q.s * axis[0] + q.c1 * e1[0] + q.c2 * e2[0],
                    q.s * axis[1] + q.c1 * e1[1] + q.c2 * e2[1],
                    q.s * axis[2] + q.c1 * e1[2] + q.c2 * e2[2],
                ];
                (w, *q)
            })
            .collect()
    }

    /// `∫_{S^{n-1}} f(ω) dω`.
    pub fn integrate<F: Fn(&Vector) -> f64>(&self, f: F) -> f64 {
        self.directions_about(&pole(self.n)).iter().map(|(w, q)| q.weight * f(w)).sum()
    }
}

/// Deterministic stream of Haar-distributed rotations in `SO(n)`.
pub struct RotationSampler {
    n: usize,
    rng: ChaCha8Rng,
}

impl RotationSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        RotationSampler { n, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// QR of a Gaussian matrix with the sign of `diag(R)` folded into `Q`,
    /// then a column flip to land in `SO(n)`.
    pub fn next_rotation(&mut self) -> Rotation {
        let n = self.n;
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut self.rng));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                for i in 0..n {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        if q.determinant() < 0.0 {
            for i in 0..n {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = if i < n && j < n { q[(i, j)] } else if i == j { 1.0 } else { 0.0 };
            }
        }
        out
    }

    pub fn sample(&mut self, count: usize) -> Vec<Rotation> {
        (0..count).map(|_| self.next_rotation()).collect()
    }
}

/// Bobylev split `u = u⁻ + u⁺` with `u⁻ = (β/2)(u - |u|ω)`, `β` taken at the
/// impact speed `z = |u| √((1 - û·ω)/2)`.
pub fn bobylev_split(u: &Vector, omega: &Vector, restitution: &RestitutionModel) -> (Vector, Vector) {
    let m = norm(u);
    let d = sub(u, &scale(m, omega));
    let z = 0.5 * norm(&d);
    let beta = restitution.beta(z);
    let um = scale(0.5 * beta, &d);
    (um, sub(u, &um))
}

/// Post-collisional pair `(v', v'★) = (v - u⁻, v★ + u⁻)`.
pub fn post_collision(v: &Vector, vs: &Vector, omega: &Vector, restitution: &RestitutionModel) -> (Vector, Vector) {
    let (um, _) = bobylev_split(&sub(v, vs), omega, restitution);
    (sub(v, &um), add(vs, &um))
}

/// Radial function on `[0, ∞)` with the analytic facts quadrature needs.
#[derive(Clone)]
pub struct RadialProfile {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `κ` with `f(t) ~ t^(-κ)` as `t → 0`; zero when bounded near the origin.
    pub origin_exponent: f64,
    /// `f = 0` beyond this radius.
    pub support: Option<f64>,
    /// Radii where `f` is discontinuous or kinked.
    pub breakpoints: Vec<f64>,
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RadialProfile(kappa={}, support={:?})", self.origin_exponent, self.support)
    }
}

impl RadialProfile {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        RadialProfile { f: Arc::new(f), origin_exponent: 0.0, support: None, breakpoints: vec![] }
    }

    pub fn with_origin_exponent(mut self, kappa: f64) -> Self {
        self.origin_exponent = kappa;
        self
    }

    pub fn with_support(mut self, t: f64) -> Self {
        self.support = Some(t);
        self.breakpoints.push(t);
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.support {
            Some(tmax) if t >= tmax => 0.0,
            _ => (self.f)(t),
        }
    }

    /// The formula inside the support, without the cut-off.
    pub fn eval_inside(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn inside(&self, t: f64) -> bool {
        self.support.is_none_or(|tmax| t < tmax)
    }
}

/// How an orbit average over `SO(n)` is discretized.
pub enum OrbitRule<'a> {
    Sphere(&'a SphereQuadrature),
    Rotations(&'a [Rotation]),
}

/// `(∫_{SO(n)} |f(Rx)|^p dR)^{1/p}`; `p = ∞` gives the orbit maximum.
pub fn haar_average_p<F: Fn(&Vector) -> f64>(f: F, x: &Vector, p: f64, rule: &OrbitRule) -> f64 {
    let values: Vec<(f64, f64)> = match rule {
        OrbitRule::Sphere(q) => {
            let r = norm(x);
            let total = q.total_weight();
            q.directions_about(&pole(q.n))
                .iter()
                .map(|(w, node)| (node.weight / total, f(&scale(r, w)).abs()))
                .collect()
        }
        OrbitRule::Rotations(rs) => {
            let c = 1.0 / rs.len() as f64;
            rs.iter().map(|r| (c, f(&apply(r, x)).abs())).collect()
        }
    };
    if p.is_infinite() {
        values.iter().fold(0.0, |m, &(_, v)| m.max(v))
    } else {
        values.iter().map(|&(w, v)| w * v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Radial `p`-symmetrization `f★_p(t) = (⨍_{S^{n-1}} |f(tθ)|^p dθ)^{1/p}`.
pub fn radial_symmetrize(f: Arc<dyn Fn(&Vector) -> f64 + Send + Sync>, quad: &SphereQuadrature, p: f64) -> RadialProfile {
    let q = quad.clone();
    RadialProfile::new(move |t| haar_average_p(|x| f(x), &scale(t, &pole(q.n)), p, &OrbitRule::Sphere(&q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_rules_have_correct_area() {
        let q3 = SphereQuadrature::new(3, 8).unwrap();
        assert_relative_eq!(q3.total_weight(), 4.0 * PI, max_relative = 1e-14);
        let q2 = SphereQuadrature::new(2, 8).unwrap();
        assert_relative_eq!(q2.total_weight(), 2.0 * PI, max_relative = 1e-14);
        // second moment of a coordinate: 4π/3
        assert_relative_eq!(q3.integrate(|w| w[0] * w[0]), 4.0 * PI / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn directions_are_unit_and_aligned() {
        let q = SphereQuadrature::new(3, 4).unwrap();
        let a = scale(1.0 / 3f64.sqrt(), &[1.0, -1.0, 1.0]);
        for (w, node) in q.directions_about(&a) {
            assert_relative_eq!(norm(&w), 1.0, max_relative = 1e-14);
            assert_relative_eq!(dot(&w, &a), node.s, epsilon = 1e-14);
        }
    }

    #[test]
    fn rotations_are_orthogonal() {
        let mut rs = RotationSampler::new(3, 11);
        for r in rs.sample(20) {
            let m = nalgebra::Matrix3::from_fn(|i, j| r[i][j]);
            assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-12);
            let id = m.transpose() * m;
            assert!((id - nalgebra::Matrix3::identity()).norm() < 1e-12);
        }
        let mut r2 = RotationSampler::new(2, 3);
        let r = r2.next_rotation();
        assert_eq!(r[2], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn bobylev_sticky_and_elastic() {
        let u = [1.0, 0.0, 0.0];
        let w = [0.0, 1.0, 0.0];
        let (um, up) = bobylev_split(&u, &w, &RestitutionModel::Constant(0.0));
        assert_relative_eq!(um[0], 0.25);
        assert_relative_eq!(um[1], -0.25);
        assert_relative_eq!(up[0], 0.75);
        let (um, up) = bobylev_split(&u, &w, &RestitutionModel::Elastic);
        assert_relative_eq!(norm(&um).powi(2) + norm(&up).powi(2), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn haar_average_of_coordinate() {
        let q = SphereQuadrature::new(3, 16).unwrap();
        let v = haar_average_p(|y| y[0], &[0.0, 0.0, 1.0], 2.0, &OrbitRule::Sphere(&q));
        assert_relative_eq!(v, 1.0 / 3f64.sqrt(), max_relative = 1e-12);
        let mut rs = RotationSampler::new(3, 5);
        let rots = rs.sample(20000);
        let v = haar_average_p(|y| y[0], &[0.0, 0.0, 1.0], 2.0, &OrbitRule::Rotations(&rots));
        assert_relative_eq!(v, 1.0 / 3f64.sqrt(), max_relative = 2e-2);
        let m = haar_average_p(|y| y[0], &[0.0, 0.0, 1.0], f64::INFINITY, &OrbitRule::Sphere(&q));
        assert!(m <= 1.0 && m > 0.99);
    }
}
