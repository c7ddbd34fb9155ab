//! Verification campaigns: both sides of each bound on a battery of test functions.

use crate::constants::{
    exponent_serde, hls_constant_d, imw_constant, isw_constant, isw_constant_general, phi_gain_constant, phi_loss_constant,
    solve_hls_exponents, sphere_area, young_constant, BundleKind, ExponentBundle,
};
use crate::error::{Error, Result};
use crate::extremals::radial_norm;
use crate::geometry::{norm, radial_symmetrize, RadialProfile, SphereQuadrature, Vector};
use crate::gridfn::GridFunction;
use crate::kernels::{CollisionKernel, RadialWeight};
use crate::operators::{apply_b1d_with, apply_p, qminus, qplus_fourier_maxwell, qplus_grid_with_report, QplusReport, WeakFormQuad};
use crate::quadrature::{Estimate, TanhSinh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::E;
use std::fmt;
use std::sync::Arc;

/// The bound a case checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `‖Q⁺(f,g)‖_{L^r_α} <= C ‖f‖_{L^p_{α+λ}} ‖g‖_{L^q_{α+λ}}`, `λ >= 0`.
    Young,
    /// `‖Q⁺(f,g)‖_r <= C ‖f‖_p ‖g‖_q` for `|u|^λ`, `-n < λ < 0`.
    Hls,
    /// Gain bound for a nonincreasing radial `Φ` in `L^s` or weak `L^s`.
    PhiGain,
    /// Loss bound for a nonincreasing radial `Φ`.
    QMinus,
    /// Gaussian-weighted gain bound with `M_a^{-1} = exp(a|v|²)`.
    MaxwellWeight,
    /// Stretched-exponential gain bound with `exp(a|v|^λ)`, strictly inelastic.
    StretchedWeight,
    /// `|∫ 𝒫(f,g) ψ| <= ∫ 𝒫(f★_p, g★_q) ψ★_r`.
    SymmetrizationLemma,
    /// Total mass of `Q⁺` against that of `Q⁻`.
    MassBalance,
    /// Deposition `Q⁺` against the spectral Maxwell-molecule path.
    FourierAgreement,
}

impl Inequality {
    pub const ALL: [Inequality; 9] = [
        Inequality::Young,
        Inequality::Hls,
        Inequality::PhiGain,
        Inequality::QMinus,
        Inequality::MaxwellWeight,
        Inequality::StretchedWeight,
        Inequality::SymmetrizationLemma,
        Inequality::MassBalance,
        Inequality::FourierAgreement,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Inequality::Young => "young",
            Inequality::Hls => "hls",
            Inequality::PhiGain => "phi_gain",
            Inequality::QMinus => "q_minus",
            Inequality::MaxwellWeight => "maxwell_weight",
            Inequality::StretchedWeight => "stretched_weight",
            Inequality::SymmetrizationLemma => "symmetrization_lemma",
            Inequality::MassBalance => "mass_balance",
            Inequality::FourierAgreement => "fourier_agreement",
        }
    }

    /// Whether the case evaluates `Q⁺` on the grid.
    pub fn needs_qplus(&self) -> bool {
        matches!(
            self,
            Inequality::Young
                | Inequality::Hls
                | Inequality::PhiGain
                | Inequality::MaxwellWeight
                | Inequality::StretchedWeight
                | Inequality::MassBalance
                | Inequality::FourierAgreement
        )
    }
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Test functions of the battery. Gaussians are unit-mass densities.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Zero,
    Gaussian { center: Vector, sigma: Vector },
    /// `(1 - tanh((|x| - R)/w))/2`.
    MollifiedBall { radius: f64, width: f64 },
    /// Sum of `amplitude · exp(-|x - c|²/(2σ²))`.
    Bumps(Vec<(Vector, f64, f64)>),
}

/// Names accepted by [`TestFunction::from_name`].
pub const TEST_FUNCTIONS: [&str; 7] =
    ["zero", "gaussian", "maxwellian", "shifted_gaussian", "anisotropic_gaussian", "mollified_ball", "random_bumps"];

impl TestFunction {
    /// Resolves a battery name; `random_bumps` draws from `seed`.
    pub fn from_name(name: &str, n: usize, seed: u64) -> Result<Self> {
        Ok(match name {
            "zero" => TestFunction::Zero,
            "gaussian" | "maxwellian" => TestFunction::Gaussian { center: [0.0; 3], sigma: [1.0; 3] },
            "shifted_gaussian" => TestFunction::Gaussian { center: [1.0, -0.5, 0.5], sigma: [1.0; 3] },
            "anisotropic_gaussian" => TestFunction::Gaussian { center: [0.0; 3], sigma: [0.7, 1.0, 1.4] },
            "mollified_ball" => TestFunction::MollifiedBall { radius: 2.0, width: 0.25 },
            "random_bumps" => random_bumps(n, seed, 4),
            other => return Err(Error::Config(format!("unknown test function `{other}`"))),
        })
    }

    pub fn eval(&self, x: &Vector, n: usize) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::Gaussian { center, sigma } => {
                let mut e = 0.0;
                let mut c = 1.0;
                for k in 0..n {
                    let d = (x[k] - center[k]) / sigma[k];
                    e += d * d;
                    c /= (2.0 * std::f64::consts::PI).sqrt() * sigma[k];
                }
                c * (-0.5 * e).exp()
            }
            TestFunction::MollifiedBall { radius, width } => 0.5 * (1.0 - ((norm(x) - radius) / width).tanh()),
            TestFunction::Bumps(list) => list
                .iter()
                .map(|(c, s, a)| {
                    let d2: f64 = (0..n).map(|k| (x[k] - c[k]).powi(2)).sum();
                    a * (-0.5 * d2 / (s * s)).exp()
                })
                .sum(),
        }
    }

    pub fn sample(&self, n: usize, grid: &GridSpec) -> Result<GridFunction> {
        GridFunction::from_fn(n, grid.size, grid.half_width, |x| self.eval(x, n))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TestFunction::Zero)
    }
}

fn random_bumps(n: usize, seed: u64, count: usize) -> TestFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps = (0..count)
        .map(|_| {
            let mut c = [0.0; 3];
            for ck in c.iter_mut().take(n) {
                *ck = rng.random_range(-2.0..2.0);
            }
            (c, rng.random_range(0.6..1.2), rng.random_range(0.2..1.0))
        })
        .collect();
    TestFunction::Bumps(bumps)
}

/// Grid on `[-L, L]^n` with `N` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size: usize,
    pub half_width: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { size: 32, half_width: 8.0 }
    }
}

/// Discretization shared by the grid-based cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub grid: GridSpec,
    pub sphere_order: usize,
    pub prune: f64,
    /// Multiplier applied to the combined error estimate to form the pass tolerance.
    pub tolerance_multiplier: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { grid: GridSpec::default(), sphere_order: 8, prune: 1e-8, tolerance_multiplier: 3.0 }
    }
}

/// One bound evaluated on one pair (or triple) of inputs.
#[derive(Debug, Clone)]
pub struct VerificationCase {
    pub id: String,
    pub inequality: Inequality,
    pub bundle: ExponentBundle,
    pub kernel: CollisionKernel,
    /// Input names as written in the campaign.
    pub inputs: Vec<String>,
    pub f: TestFunction,
    pub g: TestFunction,
    /// Third function of the symmetrization case.
    pub psi: Option<TestFunction>,
    /// Decay rate `a` of the exponential weights.
    pub weight_a: f64,
    pub numerics: Numerics,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
        })
    }
}

/// Outcome of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub case_id: String,
    pub inequality: Inequality,
    #[serde(with = "exponent_serde")]
    pub p: f64,
    #[serde(with = "exponent_serde")]
    pub q: f64,
    #[serde(with = "exponent_serde")]
    pub r: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub n: usize,
    pub kernel: String,
    pub restitution: String,
    pub inputs: Vec<String>,
    pub constant: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub ratio: Option<f64>,
    /// Relative error estimate of the ratio.
    pub quad_err: f64,
    /// The case passes when `ratio <= 1 + tolerance`.
    pub tolerance: f64,
    pub status: Status,
    pub reason: Option<String>,
    /// Norms and diagnostics entering the two sides.
    pub details: BTreeMap<String, f64>,
    pub grid: GridSpec,
    pub sphere_order: usize,
    pub seed: u64,
}

impl RatioRecord {
    fn blank(case: &VerificationCase) -> Self {
        RatioRecord::skeleton(
            &case.id,
            case.inequality,
            &case.bundle,
            case.kernel.descriptor(),
            case.kernel.restitution.descriptor(),
            case.inputs.clone(),
            &case.numerics,
            case.seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn skeleton(
        id: &str,
        inequality: Inequality,
        bundle: &ExponentBundle,
        kernel: String,
        restitution: String,
        inputs: Vec<String>,
        numerics: &Numerics,
        seed: u64,
    ) -> Self {
        RatioRecord {
            case_id: id.to_string(),
            inequality,
            p: bundle.p,
            q: bundle.q,
            r: bundle.r,
            alpha: bundle.alpha,
            lambda: bundle.lambda,
            n: bundle.n,
            kernel,
            restitution,
            inputs,
            constant: None,
            lhs: None,
            rhs: None,
            ratio: None,
            quad_err: 0.0,
            tolerance: 0.0,
            status: Status::Skipped,
            reason: None,
            details: BTreeMap::new(),
            grid: numerics.grid,
            sphere_order: numerics.sphere_order,
            seed,
        }
    }

    /// A record for a case that could not be set up.
    pub fn skipped(mut self, reason: impl Into<String>) -> Self {
        self.status = Status::Skipped;
        self.reason = Some(reason.into());
        self
    }

    fn finish(mut self, constant: Option<f64>, lhs: f64, rhs: f64, quad_err: f64, multiplier: f64) -> Self {
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        self.constant = constant;
        self.lhs = Some(lhs);
        self.rhs = Some(rhs);
        self.ratio = Some(ratio);
        self.quad_err = quad_err;
        self.tolerance = multiplier * quad_err;
        self.status = if ratio.is_finite() && ratio <= 1.0 + self.tolerance { Status::Pass } else { Status::Fail };
        self
    }
}

/// `Q⁺` results shared by the cases of a campaign.
#[derive(Default)]
pub struct QplusCache {
    map: HashMap<String, Arc<Result<(GridFunction, QplusReport)>>>,
}

fn qplus_key(case: &VerificationCase) -> String {
    format!(
        "{:?}|{:?}|{}|{:?}|{}|{:e}",
        case.f,
        case.g,
        case.kernel.descriptor(),
        case.numerics.grid,
        case.numerics.sphere_order,
        case.numerics.prune
    )
}

fn compute_qplus(case: &VerificationCase) -> Result<(GridFunction, QplusReport)> {
    let n = case.kernel.n;
    let f = case.f.sample(n, &case.numerics.grid)?;
    let g = case.g.sample(n, &case.numerics.grid)?;
    let sphere = SphereQuadrature::new(n, case.numerics.sphere_order)?;
    let quad = WeakFormQuad::new(sphere).with_prune(case.numerics.prune);
    qplus_grid_with_report(&f, &g, &case.kernel, &quad)
}

impl QplusCache {
    /// Computes `Q⁺` for every distinct `(f, g, kernel, numerics)` among `cases`, in order.
    pub fn prepare(cases: &[&VerificationCase]) -> Self {
        let mut cache = QplusCache::default();
        for case in cases.iter().filter(|c| c.inequality.needs_qplus()) {
            let key = qplus_key(case);
            if !cache.map.contains_key(&key) {
                let v = compute_qplus(case);
                cache.map.insert(key, Arc::new(v));
            }
        }
        cache
    }

    fn get(&self, case: &VerificationCase) -> Result<Arc<Result<(GridFunction, QplusReport)>>> {
        match self.map.get(&qplus_key(case)) {
            Some(v) => Ok(v.clone()),
            None => Ok(Arc::new(compute_qplus(case))),
        }
    }
}

/// Relative size of the mass the deposition lost or skipped.
fn report_error(rep: &QplusReport) -> f64 {
    let total = (rep.total() + rep.pruned).abs();
    if total == 0.0 {
        0.0
    } else {
        (rep.dropped.abs() + rep.pruned.abs()) / total
    }
}

fn skippable(e: &Error) -> bool {
    matches!(e, Error::NonIntegrable(_) | Error::InvalidWeights(_) | Error::InfeasibleExponents(_))
}

/// Evaluates one case with its own `Q⁺`.
pub fn verify_case(case: &VerificationCase) -> Result<RatioRecord> {
    verify_case_cached(case, &QplusCache::default())
}

/// Evaluates one case. A constant that does not converge marks the case skipped;
/// other errors propagate.
pub fn verify_case_cached(case: &VerificationCase, cache: &QplusCache) -> Result<RatioRecord> {
    match evaluate(case, cache) {
        Ok(r) => Ok(r),
        Err(e) if skippable(&e) => Ok(RatioRecord::blank(case).skipped(e.to_string())),
        Err(e) => Err(e),
    }
}

fn constant_beta0(case: &VerificationCase) -> f64 {
    case.kernel.restitution.beta0()
}

fn phi_of(case: &VerificationCase) -> Result<&crate::kernels::PhiKernel> {
    match &case.kernel.radial {
        RadialWeight::Phi(phi) => Ok(phi),
        RadialWeight::Power(_) => Err(Error::InvalidArgument(format!("case {} needs a Φ kernel", case.id))),
    }
}

fn evaluate(case: &VerificationCase, cache: &QplusCache) -> Result<RatioRecord> {
    let rec = RatioRecord::blank(case);
    let n = case.kernel.n;
    let grid = &case.numerics.grid;
    let mult = case.numerics.tolerance_multiplier;
    let b = &case.kernel.angular;
    let bundle = &case.bundle;
    let (p, q, r) = (bundle.p, bundle.q, bundle.r);
    if case.inequality == Inequality::SymmetrizationLemma {
        return symmetrization_case(case, rec);
    }
    if !matches!(case.inequality, Inequality::MassBalance | Inequality::FourierAgreement) {
        bundle.check()?;
    }
    let f = case.f.sample(n, grid)?;
    let g = case.g.sample(n, grid)?;
    let mut rec = rec;
    let qp = || -> Result<(GridFunction, QplusReport)> {
        match &*cache.get(case)? {
            Ok(v) => Ok(v.clone()),
            Err(e) => Err(e.clone()),
        }
    };
    let rel = |e: &Estimate| e.rel_error();
    match case.inequality {
        Inequality::Young => {
            let c = young_constant(bundle, b, constant_beta0(case))?;
            let (qv, rep) = qp()?;
            let k = bundle.alpha + bundle.lambda;
            let (nf, ng) = (f.norm_lp(p, k), g.norm_lp(q, k));
            let lhs = qv.norm_lp(r, bundle.alpha);
            rec.details.insert("norm_f".into(), nf);
            rec.details.insert("norm_g".into(), ng);
            rec.details.insert("mass_error".into(), report_error(&rep));
            Ok(rec.finish(Some(c.value), lhs, c.value * nf * ng, rel(&c) + report_error(&rep), mult))
        }
        Inequality::Hls => {
            let sol = solve_hls_exponents(bundle)?;
            let c = hls_constant_d(&sol, b, constant_beta0(case))?;
            let (qv, rep) = qp()?;
            let (nf, ng) = (f.norm_plain(p), g.norm_plain(q));
            rec.details.insert("norm_f".into(), nf);
            rec.details.insert("norm_g".into(), ng);
            rec.details.insert("hls_residual".into(), sol.residual());
            rec.details.insert("mass_error".into(), report_error(&rep));
            Ok(rec.finish(Some(c.value), qv.norm_plain(r), c.value * nf * ng, rel(&c) + report_error(&rep), mult))
        }
        Inequality::PhiGain => {
            let phi = phi_of(case)?;
            let sol = solve_hls_exponents(bundle)?;
            let c = phi_gain_constant(&sol, b, constant_beta0(case), phi.class, phi.s)?;
            let (qv, rep) = qp()?;
            let (nf, ng) = (f.norm_plain(p), g.norm_plain(q));
            rec.details.insert("norm_f".into(), nf);
            rec.details.insert("norm_g".into(), ng);
            rec.details.insert("norm_phi".into(), phi.norm);
            rec.details.insert("mass_error".into(), report_error(&rep));
            let rhs = c.value * phi.norm * nf * ng;
            Ok(rec.finish(Some(c.value), qv.norm_plain(r), rhs, rel(&c) + report_error(&rep), mult))
        }
        Inequality::QMinus => {
            let phi = phi_of(case)?;
            let c = phi_loss_constant(bundle, b)?;
            let qm = qminus(&f, &g, &case.kernel)?;
            let (nf, ng) = (f.norm_plain(p), g.norm_plain(q));
            rec.details.insert("norm_f".into(), nf);
            rec.details.insert("norm_g".into(), ng);
            rec.details.insert("norm_phi".into(), phi.norm);
            let rhs = c.value * phi.norm * nf * ng;
            Ok(rec.finish(Some(c.value), qm.norm_plain(r), rhs, rel(&c), mult))
        }
        Inequality::MaxwellWeight => {
            let a = case.weight_a;
            let c = imw_constant(bundle, b, constant_beta0(case), a)?;
            let (qv, rep) = qp()?;
            let w = |x: &Vector| (a * norm(x).powi(2)).exp();
            let lam = bundle.lambda;
            let nf = f.norm_weighted(p, w);
            let ng = if q.is_infinite() {
                g.norm_weighted(q, |x| w(x) * (1.0 + norm(x).powf(lam)))
            } else {
                g.norm_weighted(q, |x| w(x) * (1.0 + norm(x).powf(q * lam)).powf(1.0 / q))
            };
            let lhs = qv.norm_weighted(r, w);
            rec.details.insert("norm_f".into(), nf);
            rec.details.insert("norm_g".into(), ng);
            rec.details.insert("mass_error".into(), report_error(&rep));
            Ok(rec.finish(Some(c.value), lhs, c.value * nf * ng, rel(&c) + report_error(&rep), mult))
        }
        Inequality::StretchedWeight => {
            let a = case.weight_a;
            let lam = bundle.lambda;
            let rest = &case.kernel.restitution;
            let c = if p.is_infinite() && q == 1.0 && r.is_infinite() {
                isw_constant(n, lam, a, b, rest)?
            } else {
                isw_constant_general(bundle, a, b, rest)?
            };
            let (qv, rep) = qp()?;
            let w = |x: &Vector| (a * norm(x).powf(lam)).exp();
            let (nf, ng) = (f.norm_weighted(p, w), g.norm_weighted(q, w));
            let lhs = qv.norm_weighted(r, w);
            rec.details.insert("norm_f".into(), nf);
            rec.details.insert("norm_g".into(), ng);
            rec.details.insert("mass_error".into(), report_error(&rep));
            Ok(rec.finish(Some(c.value), lhs, c.value * nf * ng, rel(&c) + report_error(&rep), mult))
        }
        Inequality::MassBalance => {
            let (qv, rep) = qp()?;
            let qm = qminus(&f, &g, &case.kernel)?;
            let (mp, mm) = (qv.integrate(), qm.integrate());
            rec.details.insert("mass_qplus".into(), mp);
            rec.details.insert("mass_qminus".into(), mm);
            rec.details.insert("dropped".into(), rep.dropped);
            rec.details.insert("pruned".into(), rep.pruned);
            Ok(rec.finish(None, (mp - mm).abs(), MASS_BALANCE_TOL * mp.abs(), 0.0, mult))
        }
        Inequality::FourierAgreement => {
            let sphere = SphereQuadrature::new(n, case.numerics.sphere_order)?;
            let qf = qplus_fourier_maxwell(&f, &g, b, &case.kernel.restitution, &sphere)?;
            let (qv, _) = qp()?;
            let diff = GridFunction { values: qv.values.iter().zip(&qf.values).map(|(a, c)| a - c).collect(), ..qv.clone() };
            let (nd, nq) = (diff.norm_plain(2.0), qf.norm_plain(2.0));
            rec.details.insert("norm_fourier".into(), nq);
            rec.details.insert("norm_grid".into(), qv.norm_plain(2.0));
            Ok(rec.finish(None, nd, FOURIER_AGREEMENT_TOL * nq, 0.0, mult))
        }
        Inequality::SymmetrizationLemma => unreachable!(),
    }
}

/// Relative mass mismatch accepted between `Q⁺` and `Q⁻`.
pub const MASS_BALANCE_TOL: f64 = 1e-3;
/// Relative `L²` distance accepted between the deposition and spectral `Q⁺`.
pub const FOURIER_AGREEMENT_TOL: f64 = 0.05;

/// Left side `|Σ 𝒫(f,g)(u) ψ(u) hⁿ|` on the grid; right side through the radial reduction
/// of the symmetrized functions.
fn symmetrization_case(case: &VerificationCase, mut rec: RatioRecord) -> Result<RatioRecord> {
    let (p, q, r) = (case.bundle.p, case.bundle.q, case.bundle.r);
    let resid = 1.0 / p + 1.0 / q + 1.0 / r - 1.0;
    if resid.abs() > 1e-12 {
        return Err(Error::InfeasibleExponents(format!("1/p + 1/q + 1/r = 1 violated by {resid:e}")));
    }
    let n = case.kernel.n;
    let psi = case
        .psi
        .clone()
        .ok_or_else(|| Error::InvalidArgument(format!("case {} needs a third function psi", case.id)))?;
    let sphere = SphereQuadrature::new(n, case.numerics.sphere_order)?;
    let grid = GridFunction::zeros(n, case.numerics.grid.size, case.numerics.grid.half_width)?;
    let (f, g) = (case.f.clone(), case.g.clone());
    let lhs_sum: f64 = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let u = grid.node(i);
            let pv = psi.eval(&u, n);
            if pv == 0.0 {
                return 0.0;
            }
            apply_p(|x| f.eval(x, n), |x| g.eval(x, n), &u, &case.kernel, &sphere) * pv
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let lhs = (lhs_sum * grid.cell_volume()).abs();
    let rule = SphereQuadrature::new(n, 2 * case.numerics.sphere_order)?;
    let sym = |t: &TestFunction, e: f64| {
        let t = t.clone();
        radial_symmetrize(Arc::new(move |x: &Vector| t.eval(x, n)), &rule, e)
    };
    let (fs, gs, ps) = (sym(&case.f, p), sym(&case.g, q), sym(&psi, r));
    // absolute floors keep far tails, where the profiles underflow, from stalling the rules
    let peak = |prof: &RadialProfile| (0..=64).map(|i| prof.eval(0.25 * i as f64).abs()).fold(0.0, f64::max);
    let inner = TanhSinh { abs_tol: (1e-15 * peak(&fs) * peak(&gs)).max(1e-300), ..TanhSinh::with_rel_tol(1e-9) };
    let outer = TanhSinh { abs_tol: (1e-9 * lhs).max(1e-300), ..TanhSinh::with_rel_tol(1e-6) };
    let failure = std::cell::RefCell::new(None);
    let integrand = |x: f64| {
        let pv = ps.eval(x);
        if pv == 0.0 {
            return 0.0;
        }
        match apply_b1d_with(&inner, &fs, &gs, x, &case.kernel.restitution, &case.kernel.angular, n) {
            Ok(v) => v.value * pv * x.powi(n as i32 - 1),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let radial = outer.integrate(|x, _, _| integrand(x), 0.0, 1.0)? + outer.integrate_to_infinity(integrand, 1.0)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let rhs = sphere_area(n - 1) * sphere_area(n - 2) * radial.value;
    if case.f.is_zero() || case.g.is_zero() || psi.is_zero() {
        return Ok(rec.finish(None, 0.0, rhs, 0.0, 0.0));
    }
    let norms = [(&fs, p, "norm_f_sym"), (&gs, q, "norm_g_sym")];
    for (prof, e, key) in norms {
        if e.is_finite() {
            if let Ok(v) = radial_norm(prof, e, n, 0.0) {
                rec.details.insert(key.into(), v.value * sphere_area(n - 1).powf(1.0 / e));
            }
        }
    }
    // the sphere rule and the midpoint sum of the left side are the coarse parts
    let err = radial.rel_error() + 1e-6;
    let mult = case.numerics.tolerance_multiplier;
    Ok(rec.finish(None, lhs, rhs, err, mult))
}

/// `(R, ∫_{e <= |x| <= R} |x|^{-n} (ln|x|)^{-1} dx, |S^{n-1}| ln ln R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexamplePoint {
    pub radius: f64,
    pub value: f64,
    pub closed_form: f64,
}

/// Truncations of `(g ∗ Φ)(0)` for `g(x) = |x|^{-n/2}/ln|x|` on `|x| >= e` and `Φ = |x|^{-n/2}`,
/// which grow like `|S^{n-1}| ln ln R` and show that `Q⁻` is unbounded there.
pub fn qminus_counterexample(radii: &[f64], n: usize) -> Result<Vec<CounterexamplePoint>> {
    if !(n == 2 || n == 3) {
        return Err(Error::InvalidArgument(format!("dimension {n} unsupported")));
    }
    if radii.iter().any(|r| !(*r >= E)) || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("radii must be increasing and at least e".into()));
    }
    let ts = TanhSinh::default();
    let area = sphere_area(n - 1);
    radii
        .iter()
        .map(|&radius| {
            // geometric pieces keep each piece well scaled
            let mut edges = vec![E];
            while edges.last().unwrap() * E < radius {
                let next = edges.last().unwrap() * E;
                edges.push(next);
            }
            edges.push(radius);
            let mut total = 0.0;
            for w in edges.windows(2) {
                total += ts.integrate(|t, _, _| t.powi(n as i32 - 1) * t.powi(-(n as i32)) / t.ln(), w[0], w[1])?.value;
            }
            Ok(CounterexamplePoint { radius, value: area * total, closed_form: area * radius.ln().ln() })
        })
        .collect()
}

/// Result of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub seed: u64,
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<RatioRecord>,
}

/// Counts by status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub all_passed: bool,
    pub failed_cases: Vec<String>,
    pub skipped_cases: Vec<String>,
}

impl Report {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(|r| r.status == Status::Fail)
    }

    pub fn summary(&self) -> Summary {
        let ids = |s: Status| self.records.iter().filter(|r| r.status == s).map(|r| r.case_id.clone()).collect::<Vec<_>>();
        let failed_cases = ids(Status::Fail);
        let skipped_cases = ids(Status::Skipped);
        Summary {
            total: self.records.len(),
            passed: self.records.iter().filter(|r| r.status == Status::Pass).count(),
            failed: failed_cases.len(),
            skipped: skipped_cases.len(),
            all_passed: failed_cases.is_empty(),
            failed_cases,
            skipped_cases,
        }
    }
}

/// A case as handed to the runner: ready, or skipped with a reason.
#[derive(Debug, Clone)]
pub enum PlannedCase {
    Ready(Box<VerificationCase>),
    Skipped(RatioRecord),
}

/// Runs the cases of a campaign. Distinct `Q⁺` evaluations are computed once, in
/// order; the cases then run in the worker pool. Errors other than a diverging
/// constant turn into failed records.
pub fn run_cases(planned: &[PlannedCase], seed: u64, metadata: BTreeMap<String, String>) -> Report {
    let ready: Vec<&VerificationCase> = planned
        .iter()
        .filter_map(|c| match c {
            PlannedCase::Ready(v) => Some(v.as_ref()),
            PlannedCase::Skipped(_) => None,
        })
        .collect();
    let cache = QplusCache::prepare(&ready);
    let records = planned
        .par_iter()
        .map(|c| match c {
            PlannedCase::Skipped(r) => r.clone(),
            PlannedCase::Ready(case) => match verify_case_cached(case, &cache) {
                Ok(r) => r,
                Err(e) => {
                    let mut r = RatioRecord::blank(case);
                    r.status = Status::Fail;
                    r.reason = Some(e.to_string());
                    r
                }
            },
        })
        .collect();
    Report { tool_version: env!("CARGO_PKG_VERSION").to_string(), seed, metadata, records }
}

/// Convenience check of the exponent relation a bundle kind needs, for diagnostics.
pub fn bundle_relation(kind: &BundleKind) -> &'static str {
    match kind {
        BundleKind::Young => "1/p + 1/q = 1 + 1/r",
        BundleKind::Hls => "1/p + 1/q = 1 + lambda/n + 1/r",
        BundleKind::PhiGain { .. } => "1/p + 1/q + 1/s = 1 + 1/r",
        BundleKind::PhiLoss { .. } => "1/p + 1/q + 1/s = 1 + 1/r with r < p (weak) or r <= p (strong)",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{AngularKernel, RestitutionModel};

    fn kernel(lambda: f64) -> CollisionKernel {
        CollisionKernel::power(3, lambda, AngularKernel::constant(1.0).unwrap(), RestitutionModel::Elastic).unwrap()
    }

    fn case(inequality: Inequality, bundle: ExponentBundle, f: &str, g: &str) -> VerificationCase {
        VerificationCase {
            id: "t".into(),
            inequality,
            bundle,
            kernel: kernel(bundle.lambda),
            inputs: vec![f.into(), g.into()],
            f: TestFunction::from_name(f, 3, 1).unwrap(),
            g: TestFunction::from_name(g, 3, 2).unwrap(),
            psi: None,
            weight_a: 0.1,
            numerics: Numerics { grid: GridSpec { size: 16, half_width: 6.0 }, sphere_order: 6, ..Default::default() },
            seed: 1,
        }
    }

    #[test]
    fn gaussians_have_unit_mass() {
        let grid = GridSpec { size: 32, half_width: 8.0 };
        for name in ["gaussian", "shifted_gaussian", "anisotropic_gaussian"] {
            let g = TestFunction::from_name(name, 3, 0).unwrap().sample(3, &grid).unwrap();
            assert!((g.integrate() - 1.0).abs() < 1e-7, "{name}");
        }
        assert!(TestFunction::from_name("nope", 3, 0).is_err());
    }

    #[test]
    fn random_bumps_depend_only_on_seed() {
        let a = TestFunction::from_name("random_bumps", 3, 7).unwrap();
        let b = TestFunction::from_name("random_bumps", 3, 7).unwrap();
        let c = TestFunction::from_name("random_bumps", 3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn young_111_on_gaussians_passes() {
        let c = case(Inequality::Young, ExponentBundle::young(1.0, 1.0, 1.0, 0.0, 1.0, 3), "gaussian", "gaussian");
        let r = verify_case(&c).unwrap();
        assert_eq!(r.status, Status::Pass, "{r:?}");
        let ratio = r.ratio.unwrap();
        assert!(ratio > 0.0 && ratio < 1.0);
    }

    #[test]
    fn zero_input_passes_with_zero_lhs() {
        let c = case(Inequality::Young, ExponentBundle::young(2.0, 1.0, 2.0, 0.0, 0.0, 3), "zero", "gaussian");
        let r = verify_case(&c).unwrap();
        assert_eq!(r.lhs, Some(0.0));
        assert_eq!(r.status, Status::Pass);
    }

    #[test]
    fn infeasible_bundle_is_skipped() {
        let c = case(Inequality::Young, ExponentBundle::young(2.0, 2.0, 2.0, 0.0, 0.0, 3), "gaussian", "gaussian");
        let r = verify_case(&c).unwrap();
        assert_eq!(r.status, Status::Skipped);
        assert!(r.reason.unwrap().contains("1/p + 1/q = 1 + 1/r"));
    }

    #[test]
    fn counterexample_grows_like_log_log() {
        let pts = qminus_counterexample(&[E.powf(E), E.powf(E * E)], 3).unwrap();
        assert!((pts[0].value - 4.0 * std::f64::consts::PI).abs() < 1e-8);
        assert!((pts[1].value - 8.0 * std::f64::consts::PI).abs() < 1e-8);
        assert!(qminus_counterexample(&[2.0], 3).is_err());
        assert!(qminus_counterexample(&[10.0, 5.0], 3).is_err());
    }
}
