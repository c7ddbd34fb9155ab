//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.
//!
//! Run alone with `cargo test -p boltzgain --test acceptance`.

use boltzgain::config_io::{load_config, parse_config, run_campaign};
use boltzgain::constants::{isw_constant, mm_sharp_constants, solve_hls_exponents, sphere_area, xi_integral, BundleKind};
use boltzgain::extremals::{mm_fourier_sharpness, sharpness_sweep, MmConstant};
use boltzgain::geometry::{apply, dot, norm, post_collision, radial_symmetrize, scale, RotationSampler, SphereQuadrature, Vector};
use boltzgain::gridfn::GridFunction;
use boltzgain::kernels::{AngularKernel, CollisionKernel, RestitutionModel};
use boltzgain::operators::{apply_p, qminus, qplus_fourier_maxwell, qplus_grid, WeakFormQuad};
use boltzgain::quadrature::TanhSinh;
use boltzgain::verify::{qminus_counterexample, Report, Status};
use boltzgain::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{E, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

// Tolerances pinned by the acceptance criteria.
const SHARP_UPPER: f64 = 1.0 + 1e-6;
const MM_C1_TOL: f64 = 1e-8;
const MAXWELLIAN_L2_TOL: f64 = 0.05;
const MASS_BALANCE_TOL: f64 = 1e-3;
const HLS_RESIDUAL_TOL: f64 = 1e-12;
const COUNTEREXAMPLE_TOL: f64 = 0.01;
const SYMMETRIZATION_NORM_TOL: f64 = 1e-6;
const DEPOSIT_TOL: f64 = 1e-12;
const COLLISION_TRIPLES: usize = 10_000;
const SYMMETRIZATION_TRIPLES: u64 = 20;

// Floors at ε = 1e-3 frozen from the independent angular oracle
// (0.998940 for β = 1 and 0.999116 for β = 0.75), less a 1e-4 margin.
const SHARPNESS_FLOORS: [(f64, f64); 2] = [(1.0, 0.9988), (0.75, 0.9990)];

type Outcome = Result<String, String>;

fn campaign(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("campaigns").join(name)
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn b_one() -> AngularKernel {
    AngularKernel::constant(1.0).unwrap()
}

fn rel_l2(a: &GridFunction, b: &GridFunction) -> f64 {
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = b.values.iter().map(|y| y * y).sum();
    (d / n).sqrt()
}

fn maxwellian(size: usize, half_width: f64) -> GridFunction {
    let c = (2.0 * PI).powf(-1.5);
    GridFunction::from_fn(3, size, half_width, |v| c * (-0.5 * dot(v, v)).exp()).unwrap()
}

fn gaussian_grid(size: usize) -> GridFunction {
    maxwellian(size, 8.0)
}

/// Counts the passing, failing and skipped records of a shipped campaign.
fn campaign_outcome(report: &Report, allow_skipped: &[&str]) -> Outcome {
    let s = report.summary();
    let worst = report.records.iter().filter_map(|r| r.ratio.map(|x| (x, r))).fold(None, |m: Option<(f64, _)>, (x, r)| {
        if m.is_none_or(|(y, _)| x > y) {
            Some((x, r))
        } else {
            m
        }
    });
    let worst_txt = worst.map(|(x, r)| format!("max ratio {x:.4} ({})", r.case_id)).unwrap_or_default();
    ensure(s.failed == 0, format!("{} of {} failed: {:?}", s.failed, s.total, s.failed_cases))?;
    for id in &s.skipped_cases {
        ensure(allow_skipped.iter().any(|p| id.starts_with(p)), format!("unexpected skip {id}"))?;
    }
    Ok(format!("{} passed, {} skipped (infeasible), {worst_txt}", s.passed, s.skipped))
}

fn criterion_1() -> Outcome {
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut notes = vec![];
    for (beta, floor) in SHARPNESS_FLOORS {
        let recs = sharpness_sweep(2.0, 2.0, 3, 0.0, &b_one(), beta, &eps).map_err(|e| e.to_string())?;
        for r in &recs {
            ensure(r.ratio <= SHARP_UPPER, format!("beta {beta} eps {}: ratio {} > 1 + 1e-6", r.eps, r.ratio))?;
        }
        let at = recs.iter().find(|r| r.eps == 1e-3).unwrap();
        ensure(at.ratio > floor, format!("beta {beta}: ratio {} at eps 1e-3 below floor {floor}", at.ratio))?;
        notes.push(format!("beta {beta}: {:.6} at eps 1e-3", at.ratio));
    }
    Ok(notes.join(", "))
}

fn criterion_2() -> Outcome {
    let (_, c1) = mm_sharp_constants(3, &b_one(), 1.0).map_err(|e| e.to_string())?;
    // ξ oracle: |S¹| ∫ ((1-s)/2)^{-3/4} ds, whose closed form is 2π · 8
    let xi = xi_integral(&b_one(), 3, 0.75, 0.0, 1.0).map_err(|e| e.to_string())?;
    let oracle = sphere_area(1) * xi.value;
    ensure((c1.value - 16.0 * PI).abs() < MM_C1_TOL, format!("C1 = {} vs 16π", c1.value))?;
    ensure((c1.value - oracle).abs() < MM_C1_TOL, format!("C1 = {} vs ξ oracle {oracle}", c1.value))?;
    let eps = [1e-1, 1e-2, 1e-3];
    let mut last = vec![];
    for which in [MmConstant::C0, MmConstant::C1] {
        for beta in [1.0, 0.75] {
            let recs = mm_fourier_sharpness(which, &eps, &b_one(), beta, 3).map_err(|e| e.to_string())?;
            ensure(recs.iter().all(|r| r.ratio <= SHARP_UPPER), format!("{which:?} beta {beta}: ratio above 1 + 1e-6"))?;
            ensure(recs.windows(2).all(|w| w[1].ratio > w[0].ratio), format!("{which:?} beta {beta}: not increasing"))?;
            last.push(format!("{which:?}/beta {beta}: {:.5}", recs[2].ratio));
        }
    }
    Ok(format!("C1 - 16π = {:.1e}; ratios at eps 1e-3: {}", c1.value - 16.0 * PI, last.join(", ")))
}

fn criterion_3() -> Outcome {
    let m = maxwellian(32, 8.0);
    let kernel = CollisionKernel::power(3, 0.0, b_one(), RestitutionModel::Elastic).map_err(|e| e.to_string())?;
    let sphere = SphereQuadrature::new(3, 8).map_err(|e| e.to_string())?;
    let quad = WeakFormQuad::new(sphere.clone()).with_prune(1e-8);
    let grid = qplus_grid(&m, &m, &kernel, &quad).map_err(|e| e.to_string())?;
    let fourier = qplus_fourier_maxwell(&m, &m, &b_one(), &RestitutionModel::Elastic, &sphere).map_err(|e| e.to_string())?;
    let target = m.scaled(4.0 * PI);
    let eg = rel_l2(&grid, &target);
    let ef = rel_l2(&fourier, &target);
    let ea = rel_l2(&grid, &fourier);
    ensure(eg < MAXWELLIAN_L2_TOL, format!("grid path error {eg}"))?;
    ensure(ef < MAXWELLIAN_L2_TOL, format!("Fourier path error {ef}"))?;
    ensure(ea < MAXWELLIAN_L2_TOL, format!("paths disagree by {ea}"))?;
    Ok(format!("grid {eg:.4}, Fourier {ef:.2e}, grid vs Fourier {ea:.4} (relative L2)"))
}

fn criterion_4() -> Outcome {
    let f = gaussian_grid(32);
    let shifted = GridFunction::from_fn(3, 32, 8.0, |v| {
        let c = (2.0 * PI).powf(-1.5);
        c * (-0.5 * ((v[0] - 1.0).powi(2) + (v[1] + 0.5).powi(2) + (v[2] - 0.5).powi(2))).exp()
    })
    .unwrap();
    let quad = WeakFormQuad::new(SphereQuadrature::new(3, 8).unwrap()).with_prune(1e-8);
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 1.0] {
        for rest in [RestitutionModel::Elastic, RestitutionModel::new_constant(0.5).unwrap()] {
            let kernel = CollisionKernel::power(3, lambda, b_one(), rest).map_err(|e| e.to_string())?;
            let plus = qplus_grid(&f, &shifted, &kernel, &quad).map_err(|e| e.to_string())?.integrate();
            let minus = qminus(&f, &shifted, &kernel).map_err(|e| e.to_string())?.integrate();
            let rel = (plus - minus).abs() / plus;
            ensure(rel < MASS_BALANCE_TOL, format!("lambda {lambda} {}: relative gap {rel}", rest.descriptor()))?;
            worst = worst.max(rel);
        }
    }
    Ok(format!("4 cases, largest relative mass gap {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let cfg = load_config(&campaign("young_battery.toml")).map_err(|e| e.to_string())?;
    let report = run_campaign(&cfg).map_err(|e| e.to_string())?;
    campaign_outcome(&report, &[])
}

fn criterion_6() -> Outcome {
    let cfg = load_config(&campaign("hls_battery.toml")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut branches = std::collections::BTreeSet::new();
    for plan in cfg.plan().map_err(|e| e.to_string())? {
        if let boltzgain::verify::PlannedCase::Ready(case) = plan {
            ensure(matches!(case.bundle.kind, BundleKind::Hls), "non-HLS case in the HLS battery")?;
            let sol = solve_hls_exponents(&case.bundle).map_err(|e| e.to_string())?;
            ensure(sol.residual() < HLS_RESIDUAL_TOL, format!("{}: residual {}", case.id, sol.residual()))?;
            worst = worst.max(sol.residual());
            branches.insert(format!("{:?}", sol.branch));
        }
    }
    ensure(branches.len() == 3, format!("branches covered: {branches:?}"))?;
    let report = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let runs = campaign_outcome(&report, &["hls-3/2-3/2-3-"])?;
    Ok(format!("max residual {worst:.1e}, branches {branches:?}; {runs}"))
}

fn criterion_7() -> Outcome {
    let cfg = load_config(&campaign("qminus_battery.toml")).map_err(|e| e.to_string())?;
    let report = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let runs = campaign_outcome(&report, &[])?;
    let radii = [E.powf(E), E.powf(E * E), E.powf(E * E * E)];
    let pts = qminus_counterexample(&radii, 3).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for p in &pts {
        let want = 4.0 * PI * p.radius.ln().ln();
        let rel = (p.value - want).abs() / want;
        ensure(rel < COUNTEREXAMPLE_TOL, format!("R = {}: {} vs {want}", p.radius, p.value))?;
        worst = worst.max(rel);
    }
    ensure(pts.windows(2).all(|w| w[1].value > w[0].value), "counterexample values not increasing")?;
    Ok(format!("{runs}; counterexample within {worst:.1e} of 4π ln ln R"))
}

fn criterion_8() -> Outcome {
    let cfg = load_config(&campaign("weights_battery.toml")).map_err(|e| e.to_string())?;
    let report = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let runs = campaign_outcome(&report, &[])?;
    // the (∞, 1, ∞) cases must use the dedicated constant
    for r in report.records.iter().filter(|r| r.inequality == boltzgain::verify::Inequality::StretchedWeight) {
        let a = if r.case_id.contains("a0.25") { 0.25 } else { 0.1 };
        let c = isw_constant(3, 1.0, a, &AngularKernel::one_minus_s(), &RestitutionModel::new_constant(0.5).unwrap())
            .map_err(|e| e.to_string())?;
        ensure(r.constant == Some(c.value), format!("{}: constant {:?} vs {}", r.case_id, r.constant, c.value))?;
    }
    let elastic = r#"
[kernel.hard]
lambda = 1.0
angular = "one_minus_s"

[[case]]
id = "isw-elastic"
inequality = "stretched_weight"
kernel = "hard"
p = "inf"
q = 1
r = "inf"
weight_a = 0.25
f = "gaussian"
g = "gaussian"
"#;
    ensure(matches!(parse_config(elastic), Err(Error::ElasticNotAllowed)), "elastic ISW config accepted")?;
    let direct = isw_constant(3, 1.0, 0.25, &AngularKernel::one_minus_s(), &RestitutionModel::Elastic);
    ensure(matches!(direct, Err(Error::ElasticNotAllowed)), "elastic ISW constant accepted")?;
    Ok(format!("{runs}; elastic ISW rejected"))
}

fn rotation_invariance() -> Result<String, String> {
    let psi = |x: &Vector| (-0.5 * dot(x, x)).exp() * (1.0 + 0.3 * x[0] - 0.2 * x[2]);
    let phi = |x: &Vector| (-((x[0] - 0.5).powi(2) + x[1] * x[1] + 2.0 * x[2] * x[2])).exp();
    let coarse = SphereQuadrature::new(3, 16).unwrap();
    let fine = SphereQuadrature::new(3, 32).unwrap();
    let mut sampler = RotationSampler::new(3, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for rest in [RestitutionModel::Elastic, RestitutionModel::new_constant(0.5).unwrap(), RestitutionModel::new_viscoelastic(1.0).unwrap()] {
        let kernel = CollisionKernel::power(3, 0.0, AngularKernel::one_minus_s(), rest).unwrap();
        for _ in 0..10 {
            let u: Vector = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let r = sampler.next_rotation();
            let rt = [[r[0][0], r[1][0], r[2][0]], [r[0][1], r[1][1], r[2][1]], [r[0][2], r[1][2], r[2][2]]];
            let rpsi = |x: &Vector| psi(&apply(&r, x));
            let rphi = |x: &Vector| phi(&apply(&r, x));
            let ru = apply(&rt, &u);
            let direct = apply_p(psi, phi, &u, &kernel, &coarse);
            let rotated = apply_p(rpsi, rphi, &ru, &kernel, &coarse);
            // quadrature error estimate from doubling the order
            let tol = (direct - apply_p(psi, phi, &u, &kernel, &fine)).abs()
                + (rotated - apply_p(rpsi, rphi, &ru, &kernel, &fine)).abs()
                + 1e-14 * direct.abs().max(1.0);
            let diff = (direct - rotated).abs();
            ensure(diff <= tol, format!("rotation changed 𝒫 by {diff} > quadrature estimate {tol}"))?;
            worst = worst.max(diff / tol);
        }
    }
    Ok(format!("rotations {worst:.2} of quadrature tolerance"))
}

fn symmetrization_norms() -> Result<String, String> {
    let sphere = SphereQuadrature::new(3, 48).unwrap();
    let quad = TanhSinh::with_rel_tol(1e-10);
    let sig = [0.8, 1.0, 1.25];
    let f: Arc<dyn Fn(&Vector) -> f64 + Send + Sync> =
        Arc::new(move |x: &Vector| (-(0..3).map(|k| x[k] * x[k] / (2.0 * sig[k] * sig[k])).sum::<f64>()).exp());
    let mut worst: f64 = 0.0;
    for p in [1.0, 2.0, 3.0] {
        let star = radial_symmetrize(f.clone(), &sphere, p);
        let integrand = |t: f64| t * t * star.eval(t).powf(p);
        let radial = quad.integrate(|t, _, _| integrand(t), 0.0, 12.0).map_err(|e| e.to_string())?.value;
        let norm_star = (4.0 * PI * radial).powf(1.0 / p);
        // ∫ exp(-p Σ x²/(2σ²)) = Π √(2πσ²/p)
        let exact: f64 = sig.iter().map(|s| (2.0 * PI * s * s / p).sqrt()).product::<f64>().powf(1.0 / p);
        let rel = (norm_star - exact).abs() / exact;
        ensure(rel < SYMMETRIZATION_NORM_TOL, format!("p = {p}: relative norm change {rel}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("norms kept to {worst:.1e}"))
}

fn symmetrization_lemma() -> Result<String, String> {
    let mut text = String::from("[defaults]\ngrid = { size = 16, half_width = 6.0 }\nsphere_order = 8\n\n[kernel.maxwell]\nlambda = 0.0\n\n[kernel.inelastic]\nlambda = 0.0\nrestitution = \"constant\"\ne = 0.5\n");
    for i in 0..SYMMETRIZATION_TRIPLES {
        let (p, q, r) = [("3", "3", "3"), ("2", "4", "4"), ("\"3/2\"", "6", "6"), ("4", "2", "4")][(i % 4) as usize];
        let kernel = if i % 2 == 0 { "maxwell" } else { "inelastic" };
        text.push_str(&format!(
            "\n[[case]]\nid = \"triple-{i}\"\ninequality = \"symmetrization_lemma\"\nkernel = \"{kernel}\"\np = {p}\nq = {q}\nr = {r}\nf = \"random_bumps\"\ng = \"random_bumps\"\npsi = \"random_bumps\"\nseed = {}\n",
            1000 + i
        ));
    }
    let cfg = parse_config(&text).map_err(|e| e.to_string())?;
    let report = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let bad: Vec<&str> = report.records.iter().filter(|r| r.status != Status::Pass).map(|r| r.case_id.as_str()).collect();
    ensure(bad.is_empty(), format!("lemma violated on {bad:?}"))?;
    let max = report.records.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
    Ok(format!("{} triples, max lhs/rhs {max:.3}", report.records.len()))
}

fn deposition() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = GridFunction::zeros(3, 32, 8.0).unwrap();
    let pts: Vec<(Vector, f64)> = (0..100_000)
        .map(|_| {
            let x = [rng.random_range(-7.75..7.75), rng.random_range(-7.75..7.75), rng.random_range(-7.75..7.75)];
            (x, rng.random_range(0.0..1.0))
        })
        .collect();
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let rep = g.deposit(&pts);
    let rel = (g.integrate() - total).abs() / total;
    ensure(rep.dropped == 0.0 && rel < DEPOSIT_TOL, format!("mass error {rel}, dropped {}", rep.dropped))?;
    Ok(format!("deposition mass error {rel:.1e}"))
}

fn dissipation() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let laws = [RestitutionModel::Elastic, RestitutionModel::new_constant(0.5).unwrap(), RestitutionModel::new_viscoelastic(0.7).unwrap()];
    let mut violations = 0;
    for i in 0..COLLISION_TRIPLES {
        let mut draw = || -> Vector { [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)] };
        let v = draw();
        let vs = draw();
        let w = draw();
        if norm(&w) < 1e-6 {
            continue;
        }
        let w = scale(1.0 / norm(&w), &w);
        let (vp, vsp) = post_collision(&v, &vs, &w, &laws[i % 3]);
        let before = dot(&v, &v) + dot(&vs, &vs);
        let after = dot(&vp, &vp) + dot(&vsp, &vsp);
        if after > before * (1.0 + 1e-13) {
            violations += 1;
        }
    }
    ensure(violations == 0, format!("{violations} energy violations"))?;
    Ok(format!("{COLLISION_TRIPLES} collisions, no energy gain"))
}

fn criterion_9() -> Outcome {
    let parts = [rotation_invariance()?, symmetrization_norms()?, symmetrization_lemma()?, deposition()?, dissipation()?];
    Ok(parts.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("sharpness of the 1-D reduced operator", criterion_1),
        ("Maxwell-molecule sharp constants", criterion_2),
        ("Maxwellian equilibrium identity", criterion_3),
        ("mass balance", criterion_4),
        ("Young battery", criterion_5),
        ("HLS battery", criterion_6),
        ("Q- battery and counterexample", criterion_7),
        ("exponential-weight batteries", criterion_8),
        ("structural invariants", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let k = i + 1;
        if only.is_some_and(|o| o != k) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {k} PASS [{secs:.0}s] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {k} FAIL [{secs:.0}s] {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
