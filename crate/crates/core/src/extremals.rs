//! Extremal families and sharpness sweeps for the radial operator ℬ.
//!
//! Everything here runs in the one-dimensional radial reduction: the extremals are
//! singular at the origin and decay slowly, which no velocity grid resolves.

use crate::constants::{mm_sharp_constants, sharp_constant_const_beta, sphere_area};
use crate::error::{Error, Result};
use crate::geometry::RadialProfile;
use crate::kernels::{AngularKernel, RestitutionModel};
use crate::operators::apply_b1d_with;
use crate::quadrature::{Estimate, TanhSinh};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default ε values of a sweep.
pub const DEFAULT_EPSILONS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// `f_ε(t) = ε^{1/p} t^{-(n+α-ε)/p}` on `(0, 1)`, zero elsewhere; unit norm in
/// `L^p(ℝ⁺, t^{n-1+α} dt)`.
pub fn power_extremal(eps: f64, p: f64, n: usize, alpha: f64) -> Result<RadialProfile> {
    let k = n as f64 + alpha;
    if !(eps > 0.0 && eps < k) {
        return Err(Error::InvalidArgument(format!("epsilon {eps} outside (0, {k})")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent p = {p} must lie in [1, ∞)")));
    }
    let c = eps.powf(1.0 / p);
    let e = (k - eps) / p;
    Ok(RadialProfile::new(move |t| if t > 0.0 { c * t.powf(-e) } else { f64::INFINITY })
        .with_origin_exponent(e)
        .with_support(1.0))
}

/// `(∫₀^∞ |f(t)|^p t^{n-1+α} dt)^{1/p}` by adaptive quadrature.
pub fn radial_norm(f: &RadialProfile, p: f64, n: usize, alpha: f64) -> Result<Estimate> {
    let k = n as f64 + alpha;
    let ts = TanhSinh::default();
    let integrand = |t: f64| f.eval(t).abs().powf(p) * t.powf(k - 1.0);
    let mut edges: Vec<f64> = f.breakpoints.iter().copied().filter(|b| *b > 0.0).collect();
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();
    let first = edges.first().copied().unwrap_or(1.0);
    if edges.is_empty() {
        edges.push(first);
    }
    // below t_h the profile is taken to follow t^{-κ} exactly; between t_h and the
    // first breakpoint the logarithmic variable resolves t^{ε-1}-type mass
    let th = 1e-8 * first;
    let order = k - p * f.origin_exponent;
    if !(order > 0.0) {
        return Err(Error::NonIntegrable(format!("norm diverges at the origin (order {order})")));
    }
    let core = f.eval_inside(th).abs().powf(p) * th.powf(k) / order;
    let mut total = Estimate { value: core, error: 0.0 }
        + ts.integrate(
            |w, _, _| {
                let t = first * (-w).exp();
                f.eval_inside(t).abs().powf(p) * t.powf(k)
            },
            0.0,
            (first / th).ln(),
        )?;
    for w in edges.windows(2) {
        total = total + ts.integrate(|t, _, _| integrand(t), w[0], w[1])?;
    }
    if f.support.is_none() {
        total = total + ts.integrate_to_infinity(integrand, *edges.last().unwrap())?;
    }
    let v = total.value.powf(1.0 / p);
    Ok(Estimate { value: v, error: v * total.rel_error() / p })
}

/// Fourier-side Gaussian `t ↦ e^{-π ε² t²}`, with sup norm one.
pub fn gaussian_extremal(eps: f64) -> RadialProfile {
    let c = PI * eps * eps;
    RadialProfile::new(move |t| (-c * t * t).exp())
}

/// One point of a sharpness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRecord {
    pub eps: f64,
    /// `‖ℬ(f_ε, g_ε)‖` in the target space.
    pub norm: f64,
    pub constant: f64,
    pub ratio: f64,
    /// Relative error estimate of `ratio`.
    pub error: f64,
}

/// How the pair `(f, g)` behaves near the origin: `ℬ(f,g)(x) x^κ` is constant on `(0, x₀]`
/// up to a relative error far below the quadrature tolerance.
#[derive(Debug, Clone, Copy)]
pub struct OriginBehaviour {
    pub kappa: f64,
    pub x0: f64,
}

/// Radius beyond which `ℬ(f,g)` vanishes, for constant `β`; `∞` when it does not.
fn support_radius(f: &RadialProfile, g: &RadialProfile, beta: f64) -> f64 {
    let k = (1.0 - beta).powi(2);
    let c1 = |s: f64| beta * (0.5 * (1.0 - s)).sqrt();
    let c2 = |s: f64| (0.5 * (1.0 + s) + k * 0.5 * (1.0 - s)).sqrt();
    match (f.support, g.support) {
        (None, None) => f64::INFINITY,
        // c₁ reaches zero at s = 1
        (Some(_), None) => f64::INFINITY,
        (None, Some(tg)) => {
            if beta == 1.0 {
                f64::INFINITY
            } else {
                tg / (1.0 - beta)
            }
        }
        (Some(tf), Some(tg)) => {
            // max(c₁/T_f, c₂/T_g) is smallest where the decreasing and increasing branches cross
            let d = |s: f64| c1(s) / tf - c2(s) / tg;
            let (mut lo, mut hi) = (-1.0, 1.0);
            if d(lo) <= 0.0 {
                return 1.0 / (c2(lo) / tg).max(c1(lo) / tf);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if d(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = 0.5 * (lo + hi);
            1.0 / (c1(s) / tf).max(c2(s) / tg)
        }
    }
}

/// `‖ℬ(f,g)‖_{L^r(ℝ⁺, x^{n-1+α} dx)}` for constant `β`.
///
/// The range `(0, x₀]` is integrated in closed form from `ℬ(x₀)` and the origin
/// exponent, `[x₀, 1]` in the logarithmic variable, and the rest directly.
#[allow(clippy::too_many_arguments)]
pub fn b_norm(
    f: &RadialProfile,
    g: &RadialProfile,
    r: f64,
    n: usize,
    alpha: f64,
    beta: f64,
    b: &AngularKernel,
    origin: OriginBehaviour,
) -> Result<Estimate> {
    let rest = RestitutionModel::from_beta(beta)?;
    let k = n as f64 + alpha;
    let delta = k - r * origin.kappa;
    if !(delta > 0.0) {
        return Err(Error::NonIntegrable(format!("norm diverges at the origin (order {delta})")));
    }
    let inner = TanhSinh::with_rel_tol(1e-12);
    let outer = TanhSinh::with_rel_tol(1e-9);
    let bx = |x: f64| -> Result<f64> { Ok(apply_b1d_with(&inner, f, g, x, &rest, b, n)?.value) };
    let x0 = origin.x0;
    let b0 = bx(x0)?;
    let core = b0.powf(r) * x0.powf(k) / delta;
    let mut total = Estimate { value: core, error: 0.0 };
    let failure = std::cell::RefCell::new(None);
    let guarded = |x: f64| match bx(x) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    if x0 < 1.0 {
        let w1 = -x0.ln();
        total = total + outer.integrate(|w, _, _| {
            let x = (-w).exp();
            x.powf(k) * guarded(x).powf(r)
        }, 0.0, w1)?;
    }
    let upper = support_radius(f, g, beta);
    let lower = x0.max(1.0);
    if upper > lower {
        let mut breaks: Vec<f64> = Vec::new();
        if let Some(tf) = f.support {
            breaks.push(tf / beta);
        }
        if let Some(tg) = g.support {
            breaks.push(tg);
            if beta < 1.0 {
                breaks.push(tg / (1.0 - beta));
            }
        }
        breaks.retain(|x| *x > lower && *x < upper);
        breaks.sort_by(|a, c| a.partial_cmp(c).unwrap());
        breaks.dedup();
        let integrand = |x: f64| x.powf(k - 1.0) * guarded(x).powf(r);
        let mut edges = vec![lower];
        edges.extend(breaks);
        for w in edges.windows(2) {
            total = total + outer.integrate(|x, _, _| integrand(x), w[0], w[1])?;
        }
        let last = *edges.last().unwrap();
        total = total
            + if upper.is_finite() {
                outer.integrate(|x, _, _| integrand(x), last, upper)?
            } else {
                outer.integrate_to_infinity(integrand, last)?
            };
    }
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let v = total.value.powf(1.0 / r);
    Ok(Estimate { value: v, error: v * total.rel_error() / r })
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta = {beta} outside [1/2, 1]")));
    }
    Ok(())
}

/// Ratios `‖ℬ(f_ε, g_ε)‖_r / C` for the power extremals, `1/r = 1/p + 1/q`,
/// against the sharp constant for constant `β`.
pub fn sharpness_sweep(
    p: f64,
    q: f64,
    n: usize,
    alpha: f64,
    b: &AngularKernel,
    beta: f64,
    eps: &[f64],
) -> Result<Vec<SharpnessRecord>> {
    check_beta(beta)?;
    let r = 1.0 / (1.0 / p + 1.0 / q);
    let c = sharp_constant_const_beta(p, q, alpha, n, b, beta)?;
    let k = n as f64 + alpha;
    eps.par_iter()
        .map(|&e| {
            let f = power_extremal(e, p, n, alpha)?;
            let g = power_extremal(e, q, n, alpha)?;
            let kappa = (k - e) / r;
            // both profiles are pure powers while a₁, a₂ < 1, i.e. for x < 1
            let nb = b_norm(&f, &g, r, n, alpha, beta, b, OriginBehaviour { kappa, x0: 0.5 })?;
            Ok(SharpnessRecord {
                eps: e,
                norm: nb.value,
                constant: c.value,
                ratio: nb.value / c.value,
                error: nb.rel_error() + c.rel_error(),
            })
        })
        .collect()
}

/// Which Maxwell-molecule constant a Fourier-side sweep targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MmConstant {
    /// Integrand `[(1+s)/2 + (1-β)²(1-s)/2]^{-n/4}`: the `L²` factor sits at `u⁺`.
    C0,
    /// Integrand `β^{-n/2} ((1-s)/2)^{-n/4}`: the `L²` factor sits at `u⁻`.
    C1,
}

/// Fourier-side sweep for Maxwell molecules: `‖𝒫(F_ε, G_ε)‖₂ / (C ‖F_ε‖_∞ ‖G_ε‖₂)` with
/// `F_ε` the Gaussian and `G_ε` the `L²` power extremal, both radial, so that
/// `‖𝒫‖₂ = |S^{n-1}|^{1/2} |S^{n-2}| ‖ℬ‖` and the sphere factors cancel.
pub fn mm_fourier_sharpness(which: MmConstant, eps: &[f64], b: &AngularKernel, beta: f64, n: usize) -> Result<Vec<SharpnessRecord>> {
    check_beta(beta)?;
    let (c0, c1) = mm_sharp_constants(n, b, beta)?;
    let area = sphere_area(n - 2);
    let c = match which {
        MmConstant::C0 => c0,
        MmConstant::C1 => c1,
    };
    eps.par_iter()
        .map(|&e| {
            let gauss = gaussian_extremal(e);
            let power = power_extremal(e, 2.0, n, 0.0)?;
            let kappa = 0.5 * (n as f64 - e);
            // the Gaussian is flat to 1e-12 relative below 1e-6/ε
            let origin = OriginBehaviour { kappa, x0: (1e-6 / e).min(0.5) };
            let nb = match which {
                MmConstant::C0 => b_norm(&gauss, &power, 2.0, n, 0.0, beta, b, origin)?,
                MmConstant::C1 => b_norm(&power, &gauss, 2.0, n, 0.0, beta, b, origin)?,
            };
            let cn = c.value / area;
            Ok(SharpnessRecord {
                eps: e,
                norm: nb.value,
                constant: cn,
                ratio: nb.value / cn,
                error: nb.rel_error() + c.rel_error(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_extremal_has_unit_norm() {
        for (eps, p, n, alpha) in [(0.1, 2.0, 3, 0.0), (0.5, 1.5, 2, 1.0), (1e-3, 3.0, 3, 0.5)] {
            let f = power_extremal(eps, p, n, alpha).unwrap();
            let v = radial_norm(&f, p, n, alpha).unwrap();
            assert_relative_eq!(v.value, 1.0, max_relative = 1e-8);
            assert_relative_eq!(f.eval(1.0 - 1e-15), eps.powf(1.0 / p), max_relative = 1e-12);
            assert_eq!(f.eval(1.0), 0.0);
        }
    }

    #[test]
    fn nearly_flat_extremal() {
        let eps = 3.0 - 1e-6;
        let f = power_extremal(eps, 2.0, 3, 0.0).unwrap();
        assert_relative_eq!(radial_norm(&f, 2.0, 3, 0.0).unwrap().value, 1.0, max_relative = 1e-8);
        assert!(power_extremal(3.0, 2.0, 3, 0.0).is_err());
    }

    #[test]
    fn support_radius_of_power_pair() {
        let f = power_extremal(0.1, 2.0, 3, 0.0).unwrap();
        // β = 1: c₁ = c₂ = 1/√2 at s = 0
        assert_relative_eq!(support_radius(&f, &f, 1.0), 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn b_norm_of_indicators() {
        // f = g = 1_{[0,1)}, β = 1, b ≡ 1, n = 3, r = 1:
        // ℬ(x) = |{s : x² max((1-s)/2, (1+s)/2) < 1}| is 2 below 1 and 4/x² - 2 on [1, √2)
        let one = RadialProfile::new(|_| 1.0).with_support(1.0);
        let b = AngularKernel::constant(1.0).unwrap();
        let v = b_norm(&one, &one, 1.0, 3, 0.0, 1.0, &b, OriginBehaviour { kappa: 0.0, x0: 0.5 }).unwrap();
        let s2 = 2f64.sqrt();
        let exact = 2.0 / 3.0 + 4.0 * (s2 - 1.0) - 2.0 / 3.0 * (2.0 * s2 - 1.0);
        assert_relative_eq!(v.value, exact, max_relative = 1e-8);
    }
}
