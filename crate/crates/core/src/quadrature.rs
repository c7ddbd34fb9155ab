//! One-dimensional quadrature rules.
//!
//! Gauss–Legendre and Gauss–Chebyshev give fixed rules for smooth integrands.
//! [`TanhSinh`] is the adaptive workhorse: it refines by halving the step
//! and copes with integrable algebraic singularities at either endpoint.
//! Integrands receive the abscissa together with its distances to the two
//! endpoints so that factors like `(1 - s)^(-a)` can be evaluated without
//! cancellation.

use crate::error::{Error, Result};
use std::f64::consts::{FRAC_PI_2, PI};

/// Value of a quadrature together with an estimate of its absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn zero() -> Self {
        Estimate { value: 0.0, error: 0.0 }
    }

    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            self.error
        } else {
            self.error / self.value.abs()
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate { value: self.value + o.value, error: self.error + o.error }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wt;
        w[n - 1 - i] = wt;
    }
    if n == 1 {
        x[0] = 0.0;
        w[0] = 2.0;
    }
    (x, w)
}

/// First-kind Gauss–Chebyshev rule: `∫ f(s) (1-s²)^(-1/2) ds ≈ Σ w f(x)`.
pub fn gauss_chebyshev(n: usize) -> (Vec<f64>, Vec<f64>) {
    let x = (1..=n)
        .map(|k| ((2 * k - 1) as f64 * PI / (2 * n) as f64).cos())
        .collect();
    (x, vec![PI / n as f64; n])
}

/// Double-exponential quadrature with step halving.
#[derive(Debug, Clone, Copy)]
pub struct TanhSinh {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_levels: u32,
}

impl Default for TanhSinh {
    fn default() -> Self {
        TanhSinh { rel_tol: 1e-10, abs_tol: 1e-300, max_levels: 14 }
    }
}

// sinh(T_MAX) * pi/2 ≈ 317, so the outermost nodes sit about 1e-275 from an endpoint.
const T_MAX: f64 = 6.0;

impl TanhSinh {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        TanhSinh { rel_tol, ..Default::default() }
    }

    /// Integrates `f(x, x - a, b - x)` over `[a, b]`.
    pub fn integrate<F>(&self, f: F, a: f64, b: f64) -> Result<Estimate>
    where
        F: Fn(f64, f64, f64) -> f64,
    {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument("finite interval required".into()));
        }
        if a == b {
            return Ok(Estimate::zero());
        }
        if a > b {
            let e = self.integrate_ordered(|x, dl, dr| f(x, dr, dl), b, a)?;
            return Ok(Estimate { value: -e.value, error: e.error });
        }
        self.integrate_ordered(f, a, b)
    }

    fn integrate_ordered<F>(&self, f: F, a: f64, b: f64) -> Result<Estimate>
    where
        F: Fn(f64, f64, f64) -> f64,
    {
        let half = 0.5 * (b - a);
        let c = a + half;
        // returns (contribution of the node pair at t, magnitude of that pair)
        let pair = |t: f64| -> (f64, f64) {
            let u = FRAC_PI_2 * t.sinh();
            let q = (-2.0 * u).exp();
            let dr = 2.0 * q / (1.0 + q);
            let w = FRAC_PI_2 * t.cosh() * 4.0 * q / ((1.0 + q) * (1.0 + q));
            let d = half * dr;
            let far = 2.0 * half - d;
            let fr = f(b - d, far, d);
            let fl = f(a + d, d, far);
            let s = w * (fr + fl);
            (s, w * (fr.abs() + fl.abs()))
        };
        let mut sum = FRAC_PI_2 * f(c, half, half);
        let mut tail = 0.0;
        let mut k = 1;
        loop {
            let t = k as f64;
            if t > T_MAX {
                break;
            }
            let (s, m) = pair(t);
            sum += s;
            tail = m;
            k += 1;
        }
        let mut h = 1.0;
        let mut prev = half * h * sum;
        if !prev.is_finite() {
            return Err(Error::NonIntegrable("non-finite integrand value".into()));
        }
        for level in 1..=self.max_levels {
            h *= 0.5;
            let mut t = h;
            while t <= T_MAX {
                let (s, m) = pair(t);
                sum += s;
                if t + 2.0 * h > T_MAX {
                    tail = tail.max(m);
                }
                t += 2.0 * h;
            }
            let cur = half * h * sum;
            if !cur.is_finite() {
                return Err(Error::NonIntegrable("non-finite integrand value".into()));
            }
            let err = (cur - prev).abs();
            let tol = (self.rel_tol * cur.abs()).max(self.abs_tol);
            if level >= 3 && err <= tol {
                let tail_contrib = half * h * tail;
                if tail_contrib > tol.max(1e-14 * cur.abs()) {
                    return Err(Error::NonIntegrable(format!(
                        "endpoint contribution {tail_contrib:e} does not vanish"
                    )));
                }
                return Ok(Estimate { value: cur, error: err.max(f64::EPSILON * cur.abs()) });
            }
            prev = cur;
        }
        Err(Error::NonIntegrable(format!(
            "no convergence after {} refinement levels",
            self.max_levels
        )))
    }

    /// Integrates over `[a, b]` split at the given interior breakpoints.
    pub fn integrate_pieces<F>(&self, f: F, a: f64, b: f64, breaks: &[f64]) -> Result<Estimate>
    where
        F: Fn(f64, f64, f64) -> f64,
    {
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pts.dedup();
        let mut edges = vec![a];
        edges.extend(pts);
        edges.push(b);
        let mut total = Estimate::zero();
        for w in edges.windows(2) {
            if w[1] - w[0] <= 0.0 {
                continue;
            }
            total = total + self.integrate(&f, w[0], w[1])?;
        }
        Ok(total)
    }

    /// Integrates `f(x)` over `[a, ∞)` through `x = a + t/(1-t)`.
    /// The range is cut at `x = a + 1e100`.
    pub fn integrate_to_infinity<F>(&self, f: F, a: f64) -> Result<Estimate>
    where
        F: Fn(f64) -> f64,
    {
        self.integrate(
            |_, t, dr| {
                let y = t / dr;
                if y > 1e100 {
                    return 0.0;
                }
                let v = f(a + y);
                if v == 0.0 {
                    0.0
                } else {
                    v / (dr * dr)
                }
            },
            0.0,
            1.0,
        )
    }
}

/// Adaptive integral over `[a, b]` with the default tolerances.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<Estimate> {
    TanhSinh::default().integrate(|x, _, _| f(x), a, b)
}
