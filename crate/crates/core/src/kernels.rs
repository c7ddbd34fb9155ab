//! Collision kernels: angular part `b`, restitution law, and relative-speed weight.

use crate::constants::{sphere_area, xi_integral};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, TanhSinh};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type AngularFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Angular kernel `b(s)` for `s = û·ω ∈ [-1, 1]`.
///
/// The closure receives `(s, 1 + s, 1 - s)` so that kernels singular or
/// vanishing at the endpoints stay accurate there. `endpoint_exponents`
/// records the algebraic order `(e₋, e₊)` with `b ~ (1+s)^(-e₋)` near `-1`
/// and `b ~ (1-s)^(-e₊)` near `1`; zero means bounded and nonvanishing.
#[derive(Clone)]
pub struct AngularKernel {
    f: AngularFn,
    descriptor: String,
    pub endpoint_exponents: (f64, f64),
}

impl fmt::Debug for AngularKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AngularKernel({})", self.descriptor)
    }
}

impl AngularKernel {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidAngularKernel(format!("constant {c} must be finite and >= 0")));
        }
        Ok(AngularKernel {
            f: Arc::new(move |_, _, _| c),
            descriptor: format!("constant({c})"),
            endpoint_exponents: (0.0, 0.0),
        })
    }

    /// `b(s) = 1 - s`, which vanishes at grazing collisions.
    pub fn one_minus_s() -> Self {
        AngularKernel {
            f: Arc::new(|_, _, dr| dr),
            descriptor: "one_minus_s".into(),
            endpoint_exponents: (0.0, -1.0),
        }
    }

    /// `b(s) = 1 - s²`, vanishing at both grazing and head-on collisions.
    pub fn one_minus_s_squared() -> Self {
        AngularKernel {
            f: Arc::new(|_, dl, dr| dl * dr),
            descriptor: "one_minus_s_squared".into(),
            endpoint_exponents: (-1.0, -1.0),
        }
    }

    /// Piecewise-linear interpolation of `(s, b)` samples covering `[-1, 1]`.
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidAngularKernel("need at least two samples".into()));
        }
        let mut samples = samples;
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        if samples[0].0 > -1.0 || samples[samples.len() - 1].0 < 1.0 {
            return Err(Error::InvalidAngularKernel("table must cover [-1, 1]".into()));
        }
        if samples.iter().any(|&(s, b)| !s.is_finite() || !b.is_finite() || b < 0.0) {
            return Err(Error::InvalidAngularKernel("table values must be finite and >= 0".into()));
        }
        let n = samples.len();
        let table = Arc::new(samples);
        let t = table.clone();
        Ok(AngularKernel {
            f: Arc::new(move |s, _, _| interp_linear(&t, s)),
            descriptor: format!("table({n} samples)"),
            endpoint_exponents: (0.0, 0.0),
        })
    }

    /// Wraps an arbitrary closure of `(s, 1+s, 1-s)`; values are checked on a sample grid.
    pub fn from_fn<F>(descriptor: impl Into<String>, exponents: (f64, f64), f: F) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        let k = AngularKernel { f: Arc::new(f), descriptor: descriptor.into(), endpoint_exponents: exponents };
        for i in 1..256 {
            let s = -1.0 + 2.0 * i as f64 / 256.0;
            let v = k.eval(s);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidAngularKernel(format!(
                    "{}: b({s}) = {v} is not a finite nonnegative number",
                    k.descriptor
                )));
            }
        }
        Ok(k)
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s, 1.0 + s, 1.0 - s)
    }

    /// Evaluates with endpoint distances supplied by the caller.
    pub fn eval_with(&self, s: f64, one_plus_s: f64, one_minus_s: f64) -> f64 {
        (self.f)(s, one_plus_s, one_minus_s)
    }

    /// `b(s) g(s)` where `g` carries its own endpoint orders.
    pub fn multiplied<G>(&self, descriptor: &str, extra: (f64, f64), g: G) -> AngularKernel
    where
        G: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        let f = self.f.clone();
        AngularKernel {
            f: Arc::new(move |s, dl, dr| f(s, dl, dr) * g(s, dl, dr)),
            descriptor: format!("{}*{}", self.descriptor, descriptor),
            endpoint_exponents: (self.endpoint_exponents.0 + extra.0, self.endpoint_exponents.1 + extra.1),
        }
    }

    pub fn scaled(&self, c: f64) -> AngularKernel {
        let f = self.f.clone();
        AngularKernel {
            f: Arc::new(move |s, dl, dr| c * f(s, dl, dr)),
            descriptor: format!("{c}*{}", self.descriptor),
            endpoint_exponents: self.endpoint_exponents,
        }
    }

    /// Checks integrability against `(1-s²)^((n-3)/2) ds`.
    pub fn validate(&self, n: usize) -> Result<()> {
        grad_cutoff_norm(self, n).map(|_| ()).map_err(|e| {
            Error::InvalidAngularKernel(format!("{} is not integrable in dimension {n}: {e}", self.descriptor))
        })
    }
}

fn interp_linear(t: &[(f64, f64)], s: f64) -> f64 {
    let i = t.partition_point(|&(x, _)| x <= s);
    if i == 0 {
        return t[0].1;
    }
    if i >= t.len() {
        return t[t.len() - 1].1;
    }
    let (x0, y0) = t[i - 1];
    let (x1, y1) = t[i];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (s - x0) / (x1 - x0)
}

/// `‖b‖ = |S^{n-2}| ∫ b(s) (1-s²)^((n-3)/2) ds`, the angular mass of `b` on `S^{n-1}`.
pub fn grad_cutoff_norm(b: &AngularKernel, n: usize) -> Result<f64> {
    Ok(sphere_area(n - 2) * xi_integral(b, n, 0.0, 0.0, 1.0)?.value)
}

/// Restitution law `e(z)` as a function of impact speed `z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum RestitutionModel {
    Elastic,
    Constant(f64),
    /// `e(z) = 1 / (1 + c z)`.
    Viscoelastic(f64),
}

impl RestitutionModel {
    pub fn new_constant(e: f64) -> Result<Self> {
        let m = RestitutionModel::Constant(e);
        m.check_invariants()?;
        Ok(m)
    }

    pub fn new_viscoelastic(c: f64) -> Result<Self> {
        let m = RestitutionModel::Viscoelastic(c);
        m.check_invariants()?;
        Ok(m)
    }

    /// Constant restitution with `β = (1+e)/2`.
    pub fn from_beta(beta: f64) -> Result<Self> {
        if beta == 1.0 {
            Ok(RestitutionModel::Elastic)
        } else {
            Self::new_constant(2.0 * beta - 1.0)
        }
    }

    pub fn e(&self, z: f64) -> f64 {
        match *self {
            RestitutionModel::Elastic => 1.0,
            RestitutionModel::Constant(e) => e,
            RestitutionModel::Viscoelastic(c) => 1.0 / (1.0 + c * z),
        }
    }

    /// `1 - e(z)` without cancellation when `e` is close to one.
    pub fn one_minus_e(&self, z: f64) -> f64 {
        match *self {
            RestitutionModel::Elastic => 0.0,
            RestitutionModel::Constant(e) => 1.0 - e,
            RestitutionModel::Viscoelastic(c) => c * z / (1.0 + c * z),
        }
    }

    /// `β(z) = (1 + e(z)) / 2`.
    pub fn beta(&self, z: f64) -> f64 {
        0.5 * (1.0 + self.e(z))
    }

    /// `β₀ = sup β = β(0)` for a nonincreasing restitution law.
    pub fn beta0(&self) -> f64 {
        self.beta(0.0)
    }

    /// Constant `β` when the law does not depend on impact speed.
    pub fn constant_beta(&self) -> Option<f64> {
        match *self {
            RestitutionModel::Elastic => Some(1.0),
            RestitutionModel::Constant(e) => Some(0.5 * (1.0 + e)),
            RestitutionModel::Viscoelastic(_) => None,
        }
    }

    pub fn is_elastic(&self) -> bool {
        match *self {
            RestitutionModel::Elastic => true,
            RestitutionModel::Constant(e) => e == 1.0,
            RestitutionModel::Viscoelastic(c) => c == 0.0,
        }
    }

    pub fn descriptor(&self) -> String {
        match *self {
            RestitutionModel::Elastic => "elastic".into(),
            RestitutionModel::Constant(e) => format!("constant({e})"),
            RestitutionModel::Viscoelastic(c) => format!("viscoelastic({c})"),
        }
    }

    /// Checks `e ∈ [0, 1]`, `e` nonincreasing and `z e(z)` nondecreasing on a log grid.
    pub fn check_invariants(&self) -> Result<()> {
        match *self {
            RestitutionModel::Constant(e) if !(0.0..=1.0).contains(&e) => {
                return Err(Error::InvalidRestitution(format!("e = {e} outside [0, 1]")));
            }
            RestitutionModel::Viscoelastic(c) if !(c.is_finite() && c >= 0.0) => {
                return Err(Error::InvalidRestitution(format!("c = {c} must be finite and >= 0")));
            }
            _ => {}
        }
        let zs: Vec<f64> = (0..64).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 63.0)).collect();
        let mut prev: Option<(f64, f64)> = None;
        for &z in &zs {
            let e = self.e(z);
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidRestitution(format!("e({z}) = {e} outside [0, 1]")));
            }
            if let Some((pe, pze)) = prev {
                if e > pe * (1.0 + 1e-12) {
                    return Err(Error::InvalidRestitution(format!("e increases near z = {z}")));
                }
                if z * e < pze * (1.0 - 1e-12) {
                    return Err(Error::InvalidRestitution(format!("z e(z) decreases near z = {z}")));
                }
            }
            prev = Some((e, z * e));
        }
        Ok(())
    }
}

/// Integrability class of a radial weight `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiClass {
    Weak,
    Strong,
}

/// Nonincreasing radial weight `Φ(|u|)` with a declared Lebesgue class.
#[derive(Clone)]
pub struct PhiKernel {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub descriptor: String,
    pub s: f64,
    pub class: PhiClass,
    /// `‖Φ‖_{L^s}` or the weak norm `sup_t t |{Φ > t}|^{1/s}`.
    pub norm: f64,
}

impl fmt::Debug for PhiKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhiKernel({}, s={}, {:?}, norm={})", self.descriptor, self.s, self.class, self.norm)
    }
}

impl PhiKernel {
    /// Builds `Φ`, checking monotonicity and, for the strong class, measuring `‖Φ‖_{L^s(ℝⁿ)}`.
    /// A weak-class kernel needs `weak_norm`.
    pub fn new<F>(descriptor: impl Into<String>, n: usize, s: f64, class: PhiClass, weak_norm: Option<f64>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let descriptor = descriptor.into();
        if !(s >= 1.0) {
            return Err(Error::InvalidKernel(format!("{descriptor}: s = {s} must be >= 1")));
        }
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let t = 1e-4 * 1.05f64.powi(i);
            let v = f(t);
            if !(v.is_finite() && v >= 0.0) || v > prev * (1.0 + 1e-12) {
                return Err(Error::InvalidKernel(format!("{descriptor}: not nonincreasing and nonnegative at t = {t}")));
            }
            prev = v;
        }
        let norm = match class {
            PhiClass::Weak => weak_norm
                .ok_or_else(|| Error::InvalidKernel(format!("{descriptor}: weak-class weight needs a declared weak norm")))?,
            PhiClass::Strong => {
                if s.is_infinite() {
                    f(0.0)
                } else {
                    let ts = TanhSinh::default();
                    let m = ts
                        .integrate_to_infinity(|t| f(t).powf(s) * t.powi(n as i32 - 1), 0.0)
                        .map_err(|e| Error::InvalidKernel(format!("{descriptor} not in L^{s}: {e}")))?;
                    (sphere_area(n - 1) * m.value).powf(1.0 / s)
                }
            }
        };
        if !(norm.is_finite() && norm >= 0.0) {
            return Err(Error::InvalidKernel(format!("{descriptor}: norm {norm} is not finite")));
        }
        Ok(PhiKernel { f: Arc::new(f), descriptor, s, class, norm })
    }

    /// `Φ(x) = min(1, |x|^(-n/s))`, whose weak `L^s` norm is `|B₁|^(1/s)`.
    pub fn capped_power(n: usize, s: f64) -> Result<Self> {
        let p = n as f64 / s;
        let ball = sphere_area(n - 1) / n as f64;
        PhiKernel::new(format!("capped_power(s={s})"), n, s, PhiClass::Weak, Some(ball.powf(1.0 / s)), move |t| {
            if t <= 1.0 {
                1.0
            } else {
                t.powf(-p)
            }
        })
    }

    /// `Φ(x) = (1 + |x|²)^(-1)` measured in `L^s`.
    pub fn lorentzian(n: usize, s: f64) -> Result<Self> {
        PhiKernel::new(format!("lorentzian(s={s})"), n, s, PhiClass::Strong, None, |t| 1.0 / (1.0 + t * t))
    }

    /// Piecewise-linear table in `|u|`, constant beyond the last sample.
    pub fn tabulated(n: usize, s: f64, class: PhiClass, weak_norm: Option<f64>, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidKernel("phi table needs at least two samples".into()));
        }
        let mut samples = samples;
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let len = samples.len();
        let t = Arc::new(samples);
        PhiKernel::new(format!("phi_table({len} samples)"), n, s, class, weak_norm, move |x| interp_linear(&t, x))
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

/// Relative-speed part of the collision kernel.
#[derive(Debug, Clone)]
pub enum RadialWeight {
    /// `|u|^λ`.
    Power(f64),
    Phi(PhiKernel),
}

impl RadialWeight {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            RadialWeight::Power(l) => Some(*l),
            RadialWeight::Phi(_) => None,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RadialWeight::Power(l) => {
                if *l == 0.0 {
                    1.0
                } else {
                    t.powf(*l)
                }
            }
            RadialWeight::Phi(p) => p.eval(t),
        }
    }

    /// Weight attached to a lattice separation `t` on a grid of spacing `h`.
    /// A singular power at `t = 0` is replaced by its average over one cell.
    pub fn lattice_eval(&self, t: f64, h: f64, n: usize) -> f64 {
        match self {
            RadialWeight::Power(l) if t == 0.0 && *l < 0.0 => cell_average_power(n, *l) * h.powf(*l),
            _ => self.eval(t),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            RadialWeight::Power(l) => format!("power({l})"),
            RadialWeight::Phi(p) => p.descriptor.clone(),
        }
    }
}

/// Full kernel `B(u, ω) = w(|u|) b(û·ω)` with its restitution law.
#[derive(Debug, Clone)]
pub struct CollisionKernel {
    pub n: usize,
    pub radial: RadialWeight,
    pub angular: AngularKernel,
    pub restitution: RestitutionModel,
}

impl CollisionKernel {
    pub fn new(n: usize, radial: RadialWeight, angular: AngularKernel, restitution: RestitutionModel) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::InvalidKernel(format!("dimension {n} unsupported (2 or 3)")));
        }
        if let RadialWeight::Power(l) = radial {
            if !(l.is_finite() && l > -(n as f64)) {
                return Err(Error::InvalidKernel(format!("lambda = {l} must exceed -n")));
            }
        }
        angular.validate(n)?;
        restitution.check_invariants()?;
        Ok(CollisionKernel { n, radial, angular, restitution })
    }

    pub fn power(n: usize, lambda: f64, angular: AngularKernel, restitution: RestitutionModel) -> Result<Self> {
        Self::new(n, RadialWeight::Power(lambda), angular, restitution)
    }

    pub fn descriptor(&self) -> String {
        format!(
            "n={} radial={} b={} restitution={}",
            self.n,
            self.radial.descriptor(),
            self.angular.descriptor(),
            self.restitution.descriptor()
        )
    }
}

/// Mean of `|x|^λ` over the unit cube `[-1/2, 1/2]^n`.
///
/// By Euler's identity for homogeneous functions the volume integral equals
/// `n/(n+λ)` times a smooth face integral, evaluated by tensor Gauss–Legendre.
pub fn cell_average_power(n: usize, lambda: f64) -> f64 {
    assert!(lambda > -(n as f64));
    let face_dim = n - 1;
    let (x, w) = gauss_legendre(48);
    let face = match face_dim {
        0 => 0.25f64.powf(0.5 * lambda),
        1 => x.iter().zip(&w).map(|(xi, wi)| 0.5 * wi * (0.25 + 0.25 * xi * xi).powf(0.5 * lambda)).sum(),
        2 => {
            let mut acc = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                for (yj, wj) in x.iter().zip(&w) {
                    let r2 = 0.25 + 0.25 * (xi * xi + yj * yj);
                    acc += 0.25 * wi * wj * r2.powf(0.5 * lambda);
                }
            }
            acc
        }
        _ => panic!("cell average only implemented for n <= 3"),
    };
    n as f64 / (n as f64 + lambda) * face
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn angular_norm_constant_kernel() {
        let b = AngularKernel::constant(1.0).unwrap();
        assert_relative_eq!(grad_cutoff_norm(&b, 3).unwrap(), 4.0 * PI, max_relative = 1e-10);
        assert_relative_eq!(grad_cutoff_norm(&b, 2).unwrap(), 2.0 * PI, max_relative = 1e-10);
    }

    #[test]
    fn angular_kernel_rejects_negative() {
        assert!(AngularKernel::constant(-1.0).is_err());
        assert!(AngularKernel::from_fn("neg", (0.0, 0.0), |s, _, _| s).is_err());
        assert!(AngularKernel::tabulated(vec![(-1.0, 1.0), (0.5, 1.0)]).is_err());
    }

    #[test]
    fn tabulated_interpolates() {
        let b = AngularKernel::tabulated(vec![(-1.0, 0.0), (1.0, 2.0)]).unwrap();
        assert_relative_eq!(b.eval(0.0), 1.0);
        assert_relative_eq!(grad_cutoff_norm(&b, 3).unwrap(), 4.0 * PI, max_relative = 1e-10);
    }

    #[test]
    fn nonintegrable_angular_kernel_is_rejected() {
        let b = AngularKernel::from_fn("grazing", (0.0, 1.0), |_, _, dr| 1.0 / dr).unwrap();
        assert!(matches!(b.validate(3), Err(Error::InvalidAngularKernel(_))));
    }

    #[test]
    fn restitution_betas() {
        assert_eq!(RestitutionModel::Elastic.beta(3.0), 1.0);
        assert_eq!(RestitutionModel::Constant(0.5).beta(3.0), 0.75);
        let v = RestitutionModel::Viscoelastic(2.0);
        assert_relative_eq!(v.e(0.5), 0.5);
        assert_eq!(v.beta0(), 1.0);
        assert!(RestitutionModel::Constant(1.5).check_invariants().is_err());
        assert!(RestitutionModel::Viscoelastic(-1.0).check_invariants().is_err());
    }

    #[test]
    fn cell_average_known_values() {
        assert_relative_eq!(cell_average_power(3, 0.0), 1.0, max_relative = 1e-14);
        // mean of |x|² over the cube is n/12
        assert_relative_eq!(cell_average_power(3, 2.0), 0.25, max_relative = 1e-13);
        assert_relative_eq!(cell_average_power(2, 2.0), 2.0 / 12.0, max_relative = 1e-13);
        assert_relative_eq!(cell_average_power(1, -0.5), 0.5f64.powf(-0.5) / 0.5, max_relative = 1e-13);
    }

    #[test]
    fn phi_kernels() {
        let c = PhiKernel::capped_power(3, 3.0).unwrap();
        assert_relative_eq!(c.norm, (4.0 * PI / 3.0).powf(1.0 / 3.0), max_relative = 1e-14);
        assert_eq!(c.eval(0.5), 1.0);
        let l = PhiKernel::lorentzian(3, 2.0).unwrap();
        // ∫ (1+r²)^(-2) 4π r² dr = π², so the L² norm is π
        assert_relative_eq!(l.norm, PI, max_relative = 1e-9);
        assert!(PhiKernel::new("up", 3, 2.0, PhiClass::Strong, None, |t| t).is_err());
    }

    #[test]
    fn collision_kernel_validation() {
        let b = AngularKernel::constant(1.0).unwrap();
        assert!(CollisionKernel::power(3, -3.5, b.clone(), RestitutionModel::Elastic).is_err());
        assert!(CollisionKernel::power(4, 0.0, b.clone(), RestitutionModel::Elastic).is_err());
        let k = CollisionKernel::power(3, 1.0, b, RestitutionModel::Constant(0.5)).unwrap();
        assert!(k.descriptor().contains("power(1)"));
    }
}
