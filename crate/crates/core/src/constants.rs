//! Explicit constants of the gain-operator inequalities.
//!
//! Every constant is assembled from one-dimensional integrals against the
//! measure `dξ = b(s)(1-s²)^((n-3)/2) ds`, see [`xi_integral`].

use crate::error::{Error, Result};
use crate::kernels::{grad_cutoff_norm, AngularKernel, PhiClass, RestitutionModel};
use crate::quadrature::{Estimate, TanhSinh};
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

/// `|S^k|`, the area of the unit sphere in ℝ^{k+1}.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Hölder conjugate `p' = p/(p-1)`, with `1' = ∞` and `∞' = 1`.
pub fn dual(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn inv(p: f64) -> f64 {
    1.0 / p
}

/// `∫ ((1-s)/2)^(-A) [(1+s)/2 + (1-β₀)²(1-s)/2]^(-B) b(s) (1-s²)^((n-3)/2) ds`.
///
/// Endpoint orders are checked first; an infinite integral by exponent
/// counting is [`Error::InvalidWeights`]. Failure of the adaptive refinement
/// is [`Error::NonIntegrable`].
pub fn xi_integral(b: &AngularKernel, n: usize, weight_a: f64, weight_b: f64, beta0: f64) -> Result<Estimate> {
    if !(n == 2 || n == 3) {
        return Err(Error::InvalidArgument(format!("dimension {n} unsupported")));
    }
    if !(0.5..=1.0).contains(&beta0) {
        return Err(Error::InvalidArgument(format!("beta0 = {beta0} outside [1/2, 1]")));
    }
    let m = 0.5 * (3.0 - n as f64);
    let right = weight_a + m + b.endpoint_exponents.1;
    let left = if beta0 == 1.0 { weight_b } else { 0.0 } + m + b.endpoint_exponents.0;
    if right >= 1.0 || left >= 1.0 {
        return Err(Error::InvalidWeights(format!(
            "endpoint orders (s=-1: {left}, s=1: {right}) are not integrable"
        )));
    }
    let g2 = (1.0 - beta0).powi(2);
    let nexp = 0.5 * (n as f64 - 3.0);
    let f = move |s: f64, dl: f64, dr: f64| {
        let bv = b.eval_with(s, dl, dr);
        if bv == 0.0 {
            return 0.0;
        }
        let mut v = bv;
        if weight_a != 0.0 {
            v *= (0.5 * dr).powf(-weight_a);
        }
        if weight_b != 0.0 {
            v *= (0.5 * dl + g2 * 0.5 * dr).powf(-weight_b);
        }
        if nexp != 0.0 {
            v *= (dl * dr).powf(nexp);
        }
        v
    };
    // strong endpoint singularities: 1 ∓ s = u^m on each half makes the integrand bounded
    if left.max(right) < 0.5 {
        return TanhSinh::default().integrate(f, -1.0, 1.0);
    }
    let quad = TanhSinh::default();
    let ml = 1.0 / (1.0 - left.max(0.0));
    let mr = 1.0 / (1.0 - right.max(0.0));
    let lo = quad.integrate(
        |u: f64, du: f64, _| {
            let u = u.max(du);
            let d = u.powf(ml);
            if d < f64::MIN_POSITIVE {
                return 0.0;
            }
            ml * u.powf(ml - 1.0) * f(d - 1.0, d, 2.0 - d)
        },
        0.0,
        1.0,
    )?;
    let hi = quad.integrate(
        |u: f64, du: f64, _| {
            let u = u.max(du);
            let d = u.powf(mr);
            if d < f64::MIN_POSITIVE {
                return 0.0;
            }
            mr * u.powf(mr - 1.0) * f(1.0 - d, 2.0 - d, d)
        },
        0.0,
        1.0,
    )?;
    Ok(Estimate { value: lo.value + hi.value, error: lo.error + hi.error })
}

/// Product `Π vᵢ^{eᵢ}` of estimates with first-order error propagation.
fn product(parts: &[(Estimate, f64)]) -> Estimate {
    let mut value = 1.0;
    let mut rel = 0.0;
    for (est, e) in parts {
        if *e == 0.0 {
            continue;
        }
        value *= est.value.powf(*e);
        rel += e.abs() * est.rel_error();
    }
    Estimate { value, error: rel * value.abs() }
}

fn exact(v: f64) -> Estimate {
    Estimate { value: v, error: 0.0 }
}

fn xi_pow(b: &AngularKernel, n: usize, wa: f64, wb: f64, beta0: f64, power: f64) -> Result<(Estimate, f64)> {
    if power == 0.0 {
        return Ok((exact(1.0), 0.0));
    }
    Ok((xi_integral(b, n, wa, wb, beta0)?, power))
}

fn check_conjugate(p: f64, q: f64) -> Result<()> {
    if (inv(p) + inv(q) - 1.0).abs() > 1e-12 {
        return Err(Error::InfeasibleExponents(format!("1/p + 1/q = 1 fails for p = {p}, q = {q}")));
    }
    Ok(())
}

/// One-dimensional bound `‖ℬ(f, g)‖_{L¹(dσ^α)} ≤ C ‖f‖_{L^p(dσ^α)} ‖g‖_{L^q(dσ^α)}`
/// with `C = 2^((n+α)/p) ∫ ((1-s)/2)^(-(n+α)/(2p)) [β₀-bracket]^(-(n+α)/(2q)) dξ`.
pub fn lemma_b_constant(p: f64, q: f64, alpha: f64, n: usize, b: &AngularKernel, beta0: f64) -> Result<Estimate> {
    check_conjugate(p, q)?;
    let k = n as f64 + alpha;
    let xi = xi_integral(b, n, k / (2.0 * p), k / (2.0 * q), beta0)?;
    Ok(product(&[(exact(2f64.powf(k / p)), 1.0), (xi, 1.0)]))
}

/// Bound for `𝒫` on `L^p × L^q → L¹` with power weights: `|S^{n-2}|` times [`lemma_b_constant`].
pub fn t3_constant(p: f64, q: f64, alpha: f64, n: usize, b: &AngularKernel, beta0: f64) -> Result<Estimate> {
    let c = lemma_b_constant(p, q, alpha, n, b, beta0)?;
    Ok(Estimate { value: sphere_area(n - 2) * c.value, error: sphere_area(n - 2) * c.error })
}

/// Sharp one-dimensional constant for constant `β`:
/// `β^(-(n+α)/p) ∫ ((1-s)/2)^(-(n+α)/(2p)) [β-bracket]^(-(n+α)/(2q)) dξ`.
pub fn sharp_constant_const_beta(p: f64, q: f64, alpha: f64, n: usize, b: &AngularKernel, beta: f64) -> Result<Estimate> {
    check_conjugate(p, q)?;
    let k = n as f64 + alpha;
    let xi = xi_integral(b, n, k / (2.0 * p), k / (2.0 * q), beta)?;
    Ok(product(&[(exact(beta.powf(-k / p)), 1.0), (xi, 1.0)]))
}

/// Variant for a nonincreasing radial weight `Φ`: `2^(n/p) ∫ ((1-s)/2)^(-n/(2p)) [β₀-bracket]^(-n/(2q)) dξ`.
pub fn nonincreasing_phi_constant(p: f64, q: f64, n: usize, b: &AngularKernel, beta0: f64) -> Result<Estimate> {
    check_conjugate(p, q)?;
    let k = n as f64;
    let xi = xi_integral(b, n, k / (2.0 * p), k / (2.0 * q), beta0)?;
    Ok(product(&[(exact(2f64.powf(k / p)), 1.0), (xi, 1.0)]))
}

/// Sharp Maxwell-molecule constants `(C₀, C₁)` for constant `β`:
/// `C₀ = |S^{n-2}| ∫ [β-bracket]^(-n/4) dξ`, `C₁ = |S^{n-2}| β^(-n/2) ∫ ((1-s)/2)^(-n/4) dξ`.
pub fn mm_sharp_constants(n: usize, b: &AngularKernel, beta: f64) -> Result<(Estimate, Estimate)> {
    let area = exact(sphere_area(n - 2));
    let k = n as f64;
    let c0 = product(&[(area, 1.0), (xi_integral(b, n, 0.0, k / 4.0, beta)?, 1.0)]);
    let c1 = product(&[(area, 1.0), (exact(beta.powf(-k / 2.0)), 1.0), (xi_integral(b, n, k / 4.0, 0.0, beta)?, 1.0)]);
    Ok((c0, c1))
}

/// Which inequality an exponent bundle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BundleKind {
    /// `1/p + 1/q = 1 + 1/r`, `λ, α >= 0`.
    Young,
    /// `1/p + 1/q = 1 + λ/n + 1/r`, `-n < λ < 0`.
    Hls,
    /// Gain bound with a nonincreasing `Φ ∈ L^s` or weak `L^s`: `1/p + 1/q + 1/s = 1 + 1/r`.
    PhiGain { s: f64, class: PhiClass },
    /// Loss bound, same relation plus `r < p` (weak) or `r <= p` (strong).
    PhiLoss { s: f64, class: PhiClass },
}

/// Exponents `(p, q, r)` of a trilinear bound together with weights and dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentBundle {
    #[serde(with = "exponent_serde")]
    pub p: f64,
    #[serde(with = "exponent_serde")]
    pub q: f64,
    #[serde(with = "exponent_serde")]
    pub r: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub n: usize,
    pub kind: BundleKind,
}

/// Serializes an exponent in `[1, ∞]`, writing infinity as the string `"inf"`.
pub mod exponent_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Int(i) => Ok(i as f64),
            Raw::Str(s) => parse(&s).map_err(de::Error::custom),
        }
    }

    pub fn parse(s: &str) -> Result<f64, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
            t => {
                if let Some((a, b)) = t.split_once('/') {
                    let a: f64 = a.trim().parse().map_err(|_| format!("bad exponent `{s}`"))?;
                    let b: f64 = b.trim().parse().map_err(|_| format!("bad exponent `{s}`"))?;
                    Ok(a / b)
                } else {
                    t.parse().map_err(|_| format!("bad exponent `{s}`"))
                }
            }
        }
    }
}

const REL_TOL: f64 = 1e-12;

impl ExponentBundle {
    pub fn young(p: f64, q: f64, r: f64, alpha: f64, lambda: f64, n: usize) -> Self {
        ExponentBundle { p, q, r, alpha, lambda, n, kind: BundleKind::Young }
    }

    pub fn hls(p: f64, q: f64, r: f64, lambda: f64, n: usize) -> Self {
        ExponentBundle { p, q, r, alpha: 0.0, lambda, n, kind: BundleKind::Hls }
    }

    /// Effective power `λ` of the convolution weight; `-n/s` for the `Φ` families.
    pub fn effective_lambda(&self) -> f64 {
        match self.kind {
            BundleKind::PhiGain { s, .. } | BundleKind::PhiLoss { s, .. } => -(self.n as f64) / s,
            _ => self.lambda,
        }
    }

    /// Checks the scaling relation and the admissible ranges.
    pub fn check(&self) -> Result<()> {
        let (p, q, r, n) = (self.p, self.q, self.r, self.n as f64);
        let bad = |m: String| Err(Error::InfeasibleExponents(m));
        for (name, v) in [("p", p), ("q", q), ("r", r)] {
            if !(v >= 1.0) {
                return bad(format!("{name} = {v} must satisfy 1 <= {name} <= inf"));
            }
        }
        if !(self.n == 2 || self.n == 3) {
            return bad(format!("dimension n = {} must be 2 or 3", self.n));
        }
        let lhs = inv(p) + inv(q);
        match self.kind {
            BundleKind::Young => {
                if self.lambda < 0.0 || self.alpha < 0.0 {
                    return bad(format!("lambda = {} and alpha = {} must be >= 0", self.lambda, self.alpha));
                }
                let rhs = 1.0 + inv(r);
                if (lhs - rhs).abs() > REL_TOL {
                    return bad(format!("1/p + 1/q = 1 + 1/r violated: {lhs} != {rhs}"));
                }
            }
            BundleKind::Hls => {
                if !(self.lambda < 0.0 && self.lambda > -n) {
                    return bad(format!("-n < lambda < 0 violated: lambda = {}", self.lambda));
                }
                for (name, v) in [("p", p), ("q", q), ("r", r)] {
                    if !(v > 1.0 && v.is_finite()) {
                        return bad(format!("1 < {name} < inf violated: {name} = {v}"));
                    }
                }
                let rhs = 1.0 + self.lambda / n + inv(r);
                if (lhs - rhs).abs() > REL_TOL {
                    return bad(format!("1/p + 1/q = 1 + lambda/n + 1/r violated: {lhs} != {rhs}"));
                }
            }
            BundleKind::PhiGain { s, class } | BundleKind::PhiLoss { s, class } => {
                if !(s >= 1.0) {
                    return bad(format!("s = {s} must be >= 1"));
                }
                if class == PhiClass::Weak {
                    for (name, v) in [("p", p), ("q", q), ("r", r), ("s", s)] {
                        if !(v > 1.0 && v.is_finite()) {
                            return bad(format!("1 < {name} < inf violated: {name} = {v}"));
                        }
                    }
                }
                let rhs = 1.0 + inv(r);
                if (lhs + inv(s) - rhs).abs() > REL_TOL {
                    return bad(format!("1/p + 1/q + 1/s = 1 + 1/r violated: {} != {rhs}", lhs + inv(s)));
                }
                if let BundleKind::PhiLoss { .. } = self.kind {
                    if class == PhiClass::Weak && !(r < p) {
                        return bad(format!("r < p violated: r = {r}, p = {p}"));
                    }
                    if class == PhiClass::Strong && !(r <= p) {
                        return bad(format!("r <= p violated: r = {r}, p = {p}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Angular factor of the Young bound for `λ = α = 0`:
/// `|S^{n-2}| (2^(n/r') ∫((1-s)/2)^(-n/(2r')) dξ)^(r'/q') (∫[β₀-bracket]^(-n/(2r')) dξ)^(r'/p')`.
/// The case `p = q = r = 1` reduces to `|S^{n-2}| ∫ dξ`.
pub fn young_kernel_factor(bundle: &ExponentBundle, b: &AngularKernel, beta0: f64) -> Result<Estimate> {
    bundle.check()?;
    let n = bundle.n;
    let area = exact(sphere_area(n - 2));
    if bundle.r == 1.0 {
        return Ok(product(&[(area, 1.0), (xi_integral(b, n, 0.0, 0.0, beta0)?, 1.0)]));
    }
    let ir = 1.0 - inv(bundle.r);
    let pow_q = (1.0 - inv(bundle.q)) / ir;
    let pow_p = (1.0 - inv(bundle.p)) / ir;
    let w = n as f64 * ir / 2.0;
    let first = xi_pow(b, n, w, 0.0, beta0, pow_q)?;
    let second = xi_pow(b, n, 0.0, w, beta0, pow_p)?;
    let scale = if pow_q == 0.0 { 1.0 } else { 2f64.powf(n as f64 * ir * pow_q) };
    Ok(product(&[(area, 1.0), (exact(scale), 1.0), first, second]))
}

/// Weighted Young constant `2^(λ + 2 + α/2 + 1/r)` times [`young_kernel_factor`].
pub fn young_constant(bundle: &ExponentBundle, b: &AngularKernel, beta0: f64) -> Result<Estimate> {
    if bundle.kind != BundleKind::Young {
        return Err(Error::InvalidArgument("young_constant needs a Young bundle".into()));
    }
    let core = young_kernel_factor(bundle, b, beta0)?;
    let pre = 2f64.powf(bundle.lambda + 2.0 + 0.5 * bundle.alpha + inv(bundle.r));
    Ok(Estimate { value: pre * core.value, error: pre * core.error })
}

/// Branch of the soft-potential exponent system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HlsBranch {
    RLessQ,
    RLessP,
    Interpolated,
}

/// Auxiliary exponents `(a, a', b, c, d, e)` for a soft-potential bound.
///
/// For the direct branches: `1/a + 1/a' = 1`, `ad = r'`, `a'e = q` (or `p`
/// when `r < p`), `1/b = 1/r' - (1+λ/n)/a`, `1/c = 1/q - (1+λ/n)/a'`.
/// The interpolated branch carries two direct solutions and the weight `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlsExponentSolution {
    pub branch: HlsBranch,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub lambda: f64,
    pub n: usize,
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub interpolation: Option<Interpolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    pub t: f64,
    pub delta: f64,
    pub first: Box<HlsExponentSolution>,
    pub second: Box<HlsExponentSolution>,
}

impl HlsExponentSolution {
    /// Largest absolute residual of the defining relations.
    pub fn residual(&self) -> f64 {
        if let Some(ip) = &self.interpolation {
            let t = ip.t;
            let rp = (t / ip.first.p + (1.0 - t) / ip.second.p - 1.0 / self.p).abs();
            let rq = (t / ip.first.q + (1.0 - t) / ip.second.q - 1.0 / self.q).abs();
            return ip.first.residual().max(ip.second.residual()).max(rp).max(rq);
        }
        let k = 1.0 + self.lambda / self.n as f64;
        let (outer, inner) = match self.branch {
            HlsBranch::RLessQ => (self.p, self.q),
            _ => (self.q, self.p),
        };
        let rp = dual(self.r);
        [
            1.0 / self.a + 1.0 / self.a_prime - 1.0,
            1.0 / outer + 1.0 / self.b + 1.0 / self.c - 1.0,
            1.0 + self.a / self.b - (1.0 / self.d - self.lambda / self.n as f64),
            1.0 + self.a_prime / self.c - (1.0 / self.e - self.lambda / self.n as f64),
            self.a_prime * self.e / inner - 1.0,
            self.a * self.d / rp - 1.0,
            1.0 / self.b - (1.0 / rp - k / self.a),
        ]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

fn solve_direct(p: f64, q: f64, r: f64, lambda: f64, n: usize, branch: HlsBranch) -> Result<HlsExponentSolution> {
    let k = 1.0 + lambda / n as f64;
    let irp = 1.0 - inv(r);
    // the exponent paired with a' e
    let inner = if branch == HlsBranch::RLessQ { q } else { p };
    let lo = irp.max(1.0 - 1.0 / (inner * k));
    let hi = (irp / k).min(1.0 - inv(inner));
    if !(lo < hi) {
        return Err(Error::InfeasibleExponents(format!(
            "no admissible a: need max(1/r', 1 - 1/(x(1+λ/n))) < 1/a < min(1/(r'(1+λ/n)), 1/x') with x = {inner}, got [{lo}, {hi}]"
        )));
    }
    let ia = 0.5 * (lo + hi);
    let a = 1.0 / ia;
    let a_prime = 1.0 / (1.0 - ia);
    let b = 1.0 / (irp - k * ia);
    let c = 1.0 / (inv(inner) - k * (1.0 - ia));
    let d = 1.0 / (a * irp);
    let e = inner / a_prime;
    Ok(HlsExponentSolution { branch, p, q, r, lambda, n, a, a_prime, b, c, d, e, interpolation: None })
}

/// Solves the exponent system for a soft-potential bundle.
///
/// `r < q` gives [`HlsBranch::RLessQ`], else `r < p` gives [`HlsBranch::RLessP`],
/// else the bundle is interpolated between `(p₁, r(1+δ), r)` and `(r(1+δ), q₂, r)`
/// with `δ = 0.1`, halved until both auxiliary bundles are admissible.
pub fn solve_hls_exponents(bundle: &ExponentBundle) -> Result<HlsExponentSolution> {
    match bundle.kind {
        BundleKind::Young => return Err(Error::InvalidArgument("Young bundles have no soft-potential system".into())),
        _ => bundle.check()?,
    }
    let lambda = bundle.effective_lambda();
    let (p, q, r, n) = (bundle.p, bundle.q, bundle.r, bundle.n);
    if let BundleKind::PhiLoss { .. } = bundle.kind {
        return solve_direct(p, q, r, lambda, n, HlsBranch::RLessP);
    }
    if r < q {
        return solve_direct(p, q, r, lambda, n, HlsBranch::RLessQ);
    }
    if r < p {
        return solve_direct(p, q, r, lambda, n, HlsBranch::RLessP);
    }
    let total = 1.0 + lambda / n as f64 + inv(r);
    let mut delta = 0.1;
    for _ in 0..40 {
        let q1 = r * (1.0 + delta);
        let p1 = 1.0 / (total - inv(q1));
        let p2 = q1;
        let q2 = 1.0 / (total - inv(p2));
        let t = (inv(p) - inv(p2)) / (inv(p1) - inv(p2));
        let ok = p1 > 1.0 && q2 > 1.0 && p1.is_finite() && q2.is_finite() && t > 0.0 && t < 1.0;
        if ok {
            if let (Ok(first), Ok(second)) = (
                solve_direct(p1, q1, r, lambda, n, HlsBranch::RLessQ),
                solve_direct(p2, q2, r, lambda, n, HlsBranch::RLessP),
            ) {
                return Ok(HlsExponentSolution {
                    branch: HlsBranch::Interpolated,
                    p,
                    q,
                    r,
                    lambda,
                    n,
                    a: f64::NAN,
                    a_prime: f64::NAN,
                    b: f64::NAN,
                    c: f64::NAN,
                    d: f64::NAN,
                    e: f64::NAN,
                    interpolation: Some(Interpolation { t, delta, first: Box::new(first), second: Box::new(second) }),
                });
            }
        }
        delta *= 0.5;
    }
    Err(Error::InfeasibleExponents(format!("no interpolation pair found for (p, q, r) = ({p}, {q}, {r})")))
}

/// Non-sharp Hardy–Littlewood–Sobolev constant for
/// `‖f * |x|^λ‖_{q_out} <= C ‖f‖_{p_in}` with `1/p_in - λ/n = 1 + 1/q_out`.
///
/// Uses the layer-cake bound for the bilinear form with `μ = -λ`, `r = q_out'`:
/// `n/((n-μ) p r) (|S^{n-1}|/n)^(μ/n) [((μ/n)/(1-1/p))^(μ/n) + ((μ/n)/(1-1/r))^(μ/n)]`.
pub fn classical_hls_constant(n: usize, lambda: f64, p_in: f64, q_out: f64) -> Result<f64> {
    let nf = n as f64;
    let mu = -lambda;
    if !(mu > 0.0 && mu < nf) {
        return Err(Error::InfeasibleExponents(format!("0 < -lambda < n violated: lambda = {lambda}")));
    }
    if !(p_in > 1.0 && q_out > p_in && q_out.is_finite()) {
        return Err(Error::InfeasibleExponents(format!("1 < p < q < inf violated: p = {p_in}, q = {q_out}")));
    }
    let resid = inv(p_in) + mu / nf - 1.0 - inv(q_out);
    if resid.abs() > 1e-10 {
        return Err(Error::InfeasibleExponents(format!("1/p + mu/n = 1 + 1/q violated by {resid:e}")));
    }
    let p = p_in;
    let r = dual(q_out);
    let m = mu / nf;
    Ok(nf / ((nf - mu) * p * r)
        * (sphere_area(n - 1) / nf).powf(m)
        * ((m / (1.0 - 1.0 / p)).powf(m) + (m / (1.0 - 1.0 / r)).powf(m)))
}

/// How the convolution with the radial weight is bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvolutionBound {
    /// `|u|^λ`: classical HLS.
    Power,
    /// Nonincreasing `Φ` in weak `L^s`: `Φ(x) <= ‖Φ‖_w |B₁|^(-1/s) |x|^(-n/s)`, then HLS.
    /// The returned constant excludes `‖Φ‖_w`.
    WeakPhi,
    /// `Φ ∈ L^s`: Young's convolution inequality with constant one.
    /// The returned constant excludes `‖Φ‖_s`.
    StrongPhi,
}

fn convolution_constant(sol: &HlsExponentSolution, bound: ConvolutionBound, s: f64) -> Result<(f64, f64)> {
    let (c2, c3) = match bound {
        ConvolutionBound::StrongPhi => (1.0, 1.0),
        _ => (
            classical_hls_constant(sol.n, sol.lambda, sol.d, sol.b / sol.a)?,
            classical_hls_constant(sol.n, sol.lambda, sol.e, sol.c / sol.a_prime)?,
        ),
    };
    let k = match bound {
        ConvolutionBound::WeakPhi => (sphere_area(sol.n - 1) / sol.n as f64).powf(-1.0 / s),
        _ => 1.0,
    };
    // applied with exponents 1/a and 1/a', so the factor k enters exactly once
    Ok((c2 * k, c3 * k))
}

fn direct_constant(sol: &HlsExponentSolution, b: &AngularKernel, beta0: f64, bound: ConvolutionBound, s: f64) -> Result<Estimate> {
    let n = sol.n;
    let nf = n as f64;
    let area = exact(sphere_area(n - 2));
    let homog = match bound {
        ConvolutionBound::Power => nf + sol.lambda,
        _ => nf,
    };
    let angular = match sol.branch {
        HlsBranch::RLessQ => product(&[
            (area, 1.0),
            (exact(2f64.powf(homog / sol.a)), 1.0),
            (xi_integral(b, n, homog / (2.0 * sol.a), 0.0, beta0)?, 1.0),
        ]),
        HlsBranch::RLessP => product(&[(area, 1.0), (xi_integral(b, n, 0.0, homog / (2.0 * sol.a), beta0)?, 1.0)]),
        HlsBranch::Interpolated => unreachable!(),
    };
    let (c2, c3) = convolution_constant(sol, bound, s)?;
    Ok(product(&[(angular, 1.0), (exact(c2), 1.0 / sol.a), (exact(c3), 1.0 / sol.a_prime)]))
}

fn gain_constant(sol: &HlsExponentSolution, b: &AngularKernel, beta0: f64, bound: ConvolutionBound, s: f64) -> Result<Estimate> {
    match &sol.interpolation {
        None => direct_constant(sol, b, beta0, bound, s),
        Some(ip) => {
            let d1 = direct_constant(&ip.first, b, beta0, bound, s)?;
            let d2 = direct_constant(&ip.second, b, beta0, bound, s)?;
            Ok(product(&[(d1, ip.t), (d2, 1.0 - ip.t)]))
        }
    }
}

/// Soft-potential gain constant `D₁ = C₁C₂^(1/a)C₃^(1/a')`, `D₂ = C₄C₅^(1/a)C₆^(1/a')`
/// or `D₁^t D₂^(1-t)` according to the branch of `sol`.
pub fn hls_constant_d(sol: &HlsExponentSolution, b: &AngularKernel, beta0: f64) -> Result<Estimate> {
    gain_constant(sol, b, beta0, ConvolutionBound::Power, f64::NAN)
}

/// Gain constant for a nonincreasing radial weight `Φ`; multiply by `‖Φ‖` of the declared class.
pub fn phi_gain_constant(sol: &HlsExponentSolution, b: &AngularKernel, beta0: f64, class: PhiClass, s: f64) -> Result<Estimate> {
    let bound = match class {
        PhiClass::Weak => ConvolutionBound::WeakPhi,
        PhiClass::Strong => ConvolutionBound::StrongPhi,
    };
    gain_constant(sol, b, beta0, bound, s)
}

/// Loss constant: `C₅^(1/a) C₆^(1/a') ‖b‖₁` (weak `Φ`, `r < p`) or `‖b‖₁` (strong, `r <= p`).
/// Multiply by `‖Φ‖` of the declared class.
pub fn phi_loss_constant(bundle: &ExponentBundle, b: &AngularKernel) -> Result<Estimate> {
    let (s, class) = match bundle.kind {
        BundleKind::PhiLoss { s, class } => (s, class),
        _ => return Err(Error::InvalidArgument("phi_loss_constant needs a PhiLoss bundle".into())),
    };
    bundle.check()?;
    let bnorm = grad_cutoff_norm(b, bundle.n)?;
    match class {
        PhiClass::Strong => Ok(exact(bnorm)),
        PhiClass::Weak => {
            let sol = solve_hls_exponents(bundle)?;
            let (c5, c6) = convolution_constant(&sol, ConvolutionBound::WeakPhi, s)?;
            Ok(exact(bnorm * c5.powf(1.0 / sol.a) * c6.powf(1.0 / sol.a_prime)))
        }
    }
}

/// `C_{λ,a}` with `M_a(v'★)(|v'★|^λ + |v★|^λ) <= C_{λ,a}(1 + |v★|^λ)`, `M_a(x) = exp(-a|x|²)`.
/// The larger of `max(1, (λ/(2ae))^(λ/2))` and a sampled supremum.
pub fn c_lambda_a(lambda: f64, a: f64) -> f64 {
    let closed = if lambda > 0.0 { (lambda / (2.0 * a * E)).powf(0.5 * lambda).max(1.0) } else { 1.0 };
    let xmax = 10.0 / a.sqrt();
    let mut sampled: f64 = 0.0;
    for i in 0..=400 {
        let x = xmax * i as f64 / 400.0;
        let m = (-a * x * x).exp();
        for j in 0..=200 {
            let y = 50.0 * j as f64 / 200.0;
            let v = m * (x.powf(lambda) + y.powf(lambda)) / (1.0 + y.powf(lambda));
            sampled = sampled.max(v);
        }
    }
    closed.max(sampled)
}

/// `b̃(s) = (2/(1-s))^(λ/2) b(s)`.
pub fn tilde_b(b: &AngularKernel, lambda: f64) -> AngularKernel {
    b.multiplied(&format!("(2/(1-s))^{}", 0.5 * lambda), (0.0, 0.5 * lambda), move |_, _, dr| (2.0 / dr).powf(0.5 * lambda))
}

/// Gaussian-weight gain constant for `M_a^{-1} = exp(a|v|²)`, `0 <= λ <= 2`:
/// `2^λ max(2^(λ-1), 1) C_{λ,a} 2^(1-1/q)` times the Young angular factor with `b̃`.
pub fn imw_constant(bundle: &ExponentBundle, b: &AngularKernel, beta0: f64, a: f64) -> Result<Estimate> {
    let lambda = bundle.lambda;
    if !(0.0..=2.0).contains(&lambda) || !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("need 0 <= lambda <= 2 and a > 0, got {lambda}, {a}")));
    }
    let core_bundle = ExponentBundle { alpha: 0.0, lambda: 0.0, ..*bundle };
    let core = young_kernel_factor(&core_bundle, &tilde_b(b, lambda), beta0)?;
    let pre = 2f64.powf(lambda) * 2f64.powf(lambda - 1.0).max(1.0) * c_lambda_a(lambda, a) * 2f64.powf(1.0 - inv(bundle.q));
    Ok(Estimate { value: pre * core.value, error: pre * core.error })
}

/// `|ϑ_β(s)| = √((1-β)² + β² + 2(1-β)βs)` with `β = β(√((1-s)/2))`.
pub fn isw_vartheta(s: f64, restitution: &RestitutionModel) -> f64 {
    let x = (0.5 * (1.0 - s)).sqrt();
    let beta = restitution.beta(x);
    ((1.0 - beta).powi(2) + beta * beta + 2.0 * (1.0 - beta) * beta * s).sqrt()
}

/// `b_β(s) = [1 - ((1 + |ϑ_β(s)|)/2)^(λ/2)]^(-1) b(s)`.
pub fn isw_b_beta(b: &AngularKernel, restitution: &RestitutionModel, lambda: f64) -> Result<AngularKernel> {
    if restitution.is_elastic() {
        return Err(Error::ElasticNotAllowed);
    }
    if !(lambda > 0.0 && lambda <= 2.0) {
        return Err(Error::InvalidArgument(format!("need 0 < lambda <= 2, got {lambda}")));
    }
    let r = *restitution;
    let order = if r.constant_beta().is_some() { 1.0 } else { 1.5 };
    Ok(b.multiplied("isw_bracket", (0.0, order), move |_, _, dr| {
        let x = (0.5 * dr).sqrt();
        let beta = r.beta(x);
        let omb = 0.5 * r.one_minus_e(x);
        // 1 - |ϑ|² = 2β(1-β)(1-s)
        let gap2 = 2.0 * beta * omb * dr;
        let th = (1.0 - gap2).max(0.0).sqrt();
        let gap = gap2 / (1.0 + th);
        1.0 / -((0.5 * lambda) * (-0.5 * gap).ln_1p()).exp_m1()
    }))
}

/// Stretched-exponential constant for `(p, q, r) = (∞, 1, ∞)`:
/// `|S^{n-2}| (1 + 2^(λ/2)/(a e)) ∫ [β(0)-bracket]^(-n/2) b_β dξ`.
pub fn isw_constant(n: usize, lambda: f64, a: f64, b: &AngularKernel, restitution: &RestitutionModel) -> Result<Estimate> {
    let bb = isw_b_beta(b, restitution, lambda)?;
    let xi = xi_integral(&bb, n, 0.0, 0.5 * n as f64, restitution.beta0())?;
    let pre = sphere_area(n - 2) * (1.0 + 2f64.powf(0.5 * lambda) / (a * E));
    Ok(Estimate { value: pre * xi.value, error: pre * xi.error })
}

/// `C₁ + C₂`: Young factor with `b` plus `2^(λ/2)(ae)^(-1)` times the Young factor with `b_β`.
pub fn isw_constant_general(bundle: &ExponentBundle, a: f64, b: &AngularKernel, restitution: &RestitutionModel) -> Result<Estimate> {
    let core_bundle = ExponentBundle { alpha: 0.0, lambda: 0.0, ..*bundle };
    let bb = isw_b_beta(b, restitution, bundle.lambda)?;
    let beta0 = restitution.beta0();
    let c1 = young_kernel_factor(&core_bundle, b, beta0)?;
    let c2 = young_kernel_factor(&core_bundle, &bb, beta0)?;
    let k = 2f64.powf(0.5 * bundle.lambda) / (a * E);
    Ok(Estimate { value: c1.value + k * c2.value, error: c1.error + k * c2.error })
}
