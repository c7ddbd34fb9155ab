//! Collision operators: the angular average 𝒫, the gain operator Q⁺ in weak form,
//! by deposition and (Maxwell molecules) in Fourier variables, the loss operator Q⁻,
//! and the radial reduction ℬ.

use crate::constants::xi_integral;
use crate::error::{Error, Result};
use crate::geometry::{frame, haar_average_p, norm, pole, scale, sub, OrbitRule, RadialProfile, SphereNode, SphereQuadrature, Vector};
use crate::gridfn::{convolve, fft_nd, GridFunction};
use crate::kernels::{grad_cutoff_norm, AngularKernel, CollisionKernel, RestitutionModel};
use crate::quadrature::{Estimate, TanhSinh};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

/// `(|u|, û)`, with the pole standing in for the direction of `u = 0`.
fn polar(u: &Vector, n: usize) -> (f64, Vector) {
    let m = norm(u);
    if m > 0.0 {
        (m, scale(1.0 / m, u))
    } else {
        (0.0, pole(n))
    }
}

/// `u⁻ = (β/2)(u - |u|ω)` for the node `q` of a rule aligned with `û`.
#[inline]
fn u_minus(m: f64, axis: &Vector, e1: &Vector, e2: &Vector, q: &SphereNode, rest: &RestitutionModel) -> Vector {
    let beta = rest.beta(m * (0.5 * q.one_minus_s).sqrt());
    let c = 0.5 * beta * m;
    [
        c * (q.one_minus_s * axis[0] - q.c1 * e1[0] - q.c2 * e2[0]),
        c * (q.one_minus_s * axis[1] - q.c1 * e1[1] - q.c2 * e2[1]),
        c * (q.one_minus_s * axis[2] - q.c1 * e1[2] - q.c2 * e2[2]),
    ]
}

/// `𝒫(ψ, φ)(u) = ∫ ψ(u⁻) φ(u⁺) b(û·ω) dω` by the sphere rule.
pub fn apply_p<F, G>(psi: F, phi: G, u: &Vector, kernel: &CollisionKernel, sphere: &SphereQuadrature) -> f64
where
    F: Fn(&Vector) -> f64,
    G: Fn(&Vector) -> f64,
{
    debug_assert_eq!(sphere.n, kernel.n);
    let (m, axis) = polar(u, kernel.n);
    let (e1, e2) = frame(kernel.n, &axis);
    sphere
        .nodes
        .iter()
        .map(|q| {
            let bv = kernel.angular.eval_with(q.s, q.one_plus_s, q.one_minus_s);
            if bv == 0.0 {
                return 0.0;
            }
            let um = u_minus(m, &axis, &e1, &e2, q, &kernel.restitution);
            q.weight * bv * psi(&um) * phi(&sub(u, &um))
        })
        .sum()
}

/// Quadrature used by the velocity-space operators: the grid of the inputs,
/// a sphere rule, and a relative threshold below which products `f(v) g(v★)` are skipped.
#[derive(Debug, Clone)]
pub struct WeakFormQuad {
    pub sphere: SphereQuadrature,
    pub prune: f64,
}

impl WeakFormQuad {
    pub fn new(sphere: SphereQuadrature) -> Self {
        WeakFormQuad { sphere, prune: 0.0 }
    }

    /// Skip pairs with `|f(v) g(v★)| <= prune · max|f| · max|g|`.
    pub fn with_prune(mut self, prune: f64) -> Self {
        self.prune = prune;
        self
    }
}

/// Mass bookkeeping of a deposition run.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QplusReport {
    /// Mass landing on grid nodes.
    pub deposited: f64,
    /// Mass carried to nodes outside the grid.
    pub dropped: f64,
    /// Mass of pairs skipped by the prune threshold.
    pub pruned: f64,
}

impl QplusReport {
    pub fn total(&self) -> f64 {
        self.deposited + self.dropped
    }

    pub fn dropped_fraction(&self) -> f64 {
        let t = self.total().abs();
        if t == 0.0 {
            0.0
        } else {
            self.dropped.abs() / t
        }
    }

    pub fn warning(&self) -> Option<String> {
        let frac = self.dropped_fraction();
        (frac > 1e-6).then(|| format!("deposition dropped {frac:.3e} of the gain mass outside the grid"))
    }
}

/// Enumerates node pairs `(v_i, v_j)` grouped by lattice offset `o = i - j`.
struct PairPlan {
    n: usize,
    lo_f: [i64; 3],
    hi_f: [i64; 3],
    lo_g: [i64; 3],
    hi_g: [i64; 3],
    olo: [i64; 3],
    oext: [usize; 3],
    count: usize,
    tau: f64,
}

fn active_box(f: &GridFunction, threshold: f64) -> Option<([i64; 3], [i64; 3])> {
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for k in 0..f.n {
        lo[k] = i64::MAX;
        hi[k] = i64::MIN;
    }
    let mut any = false;
    for (lin, v) in f.values.iter().enumerate() {
        if v.abs() > threshold {
            any = true;
            let idx = f.multi_index(lin);
            for k in 0..f.n {
                lo[k] = lo[k].min(idx[k] as i64);
                hi[k] = hi[k].max(idx[k] as i64);
            }
        }
    }
    any.then_some((lo, hi))
}

impl PairPlan {
    fn new(f: &GridFunction, g: &GridFunction, prune: f64) -> Option<Self> {
        let (mf, mg) = (f.max_abs(), g.max_abs());
        if mf == 0.0 || mg == 0.0 {
            return None;
        }
        let (lo_f, hi_f) = active_box(f, prune * mf)?;
        let (lo_g, hi_g) = active_box(g, prune * mg)?;
        let mut olo = [0i64; 3];
        let mut oext = [1usize; 3];
        for k in 0..f.n {
            olo[k] = lo_f[k] - hi_g[k];
            oext[k] = (hi_f[k] - lo_g[k] - olo[k] + 1) as usize;
        }
        let count = oext.iter().product();
        Some(PairPlan { n: f.n, lo_f, hi_f, lo_g, hi_g, olo, oext, count, tau: prune * mf * mg })
    }

    fn offset(&self, mut c: usize) -> [i64; 3] {
        let mut o = [0i64; 3];
        for k in (0..self.n).rev() {
            o[k] = self.olo[k] + (c % self.oext[k]) as i64;
            c /= self.oext[k];
        }
        o
    }

    /// Largest `|o|` over the offset box.
    fn max_offset_norm(&self) -> f64 {
        (0..self.n)
            .map(|k| {
                let a = self.olo[k].abs().max((self.olo[k] + self.oext[k] as i64 - 1).abs()) as f64;
                a * a
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Calls `visit(i, f_i g_{i-o})` for every kept pair at offset `o`.
    fn visit<V: FnMut(&[usize; 3], f64)>(&self, f: &GridFunction, g: &GridFunction, o: &[i64; 3], mut visit: V) {
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..self.n {
            lo[k] = self.lo_f[k].max(self.lo_g[k] + o[k]);
            hi[k] = self.hi_f[k].min(self.hi_g[k] + o[k]);
            if lo[k] > hi[k] {
                return;
            }
        }
        let size = f.size as i64;
        let off_lin = (0..self.n).fold(0i64, |acc, k| acc * size + o[k]);
        let mut idx = [0usize; 3];
        for i0 in lo[0]..=hi[0] {
            idx[0] = i0 as usize;
            for i1 in lo[1]..=hi[1] {
                idx[1] = i1 as usize;
                for i2 in lo[2]..=hi[2] {
                    idx[2] = i2 as usize;
                    let li = f.linear_index(&idx);
                    let fv = f.values[li];
                    if fv == 0.0 {
                        continue;
                    }
                    let prod = fv * g.values[(li as i64 - off_lin) as usize];
                    if prod.abs() > self.tau {
                        visit(&idx, prod);
                    }
                }
            }
        }
    }

    /// Fixed, thread-count independent partition of the offsets.
    fn chunks(&self) -> Vec<(usize, usize)> {
        let k = self.count.clamp(1, 32);
        (0..k).map(|c| (c * self.count / k, (c + 1) * self.count / k)).collect()
    }
}

fn check_inputs(f: &GridFunction, g: &GridFunction, kernel: &CollisionKernel, sphere: &SphereQuadrature) -> Result<()> {
    f.check_same_grid(g)?;
    if f.n != kernel.n || sphere.n != kernel.n {
        return Err(Error::InvalidArgument(format!(
            "dimensions differ: grid {}, kernel {}, sphere {}",
            f.n, kernel.n, sphere.n
        )));
    }
    Ok(())
}

/// Sphere-rule sum of `b` weights, the discrete `‖b‖₁`.
fn sphere_b_mass(b: &AngularKernel, sphere: &SphereQuadrature) -> f64 {
    sphere.nodes.iter().map(|q| q.weight * b.eval_with(q.s, q.one_plus_s, q.one_minus_s)).sum()
}

/// Weak form `∫ Q⁺(f,g) ψ = Σ_{v,v★,ω} f(v) g(v★) ψ(v') w(|u|) b(û·ω) hⁿ hⁿ w_ω`.
pub fn qplus_weak<P>(f: &GridFunction, g: &GridFunction, psi: P, kernel: &CollisionKernel, quad: &WeakFormQuad) -> Result<f64>
where
    P: Fn(&Vector) -> f64 + Sync,
{
    check_inputs(f, g, kernel, &quad.sphere)?;
    let Some(plan) = PairPlan::new(f, g, quad.prune) else {
        return Ok(0.0);
    };
    let h = f.h();
    let n = f.n;
    let parts: Vec<f64> = plan
        .chunks()
        .into_par_iter()
        .map(|(start, end)| {
            let mut acc = 0.0;
            let mut shifts: Vec<(Vector, f64)> = Vec::with_capacity(quad.sphere.nodes.len());
            for c in start..end {
                let o = plan.offset(c);
                let u = [o[0] as f64 * h, o[1] as f64 * h, o[2] as f64 * h];
                let (m, axis) = polar(&u, n);
                let w = kernel.radial.lattice_eval(m, h, n);
                if w == 0.0 {
                    continue;
                }
                shifts.clear();
                let (e1, e2) = frame(n, &axis);
                for q in &quad.sphere.nodes {
                    let bv = kernel.angular.eval_with(q.s, q.one_plus_s, q.one_minus_s);
                    if bv != 0.0 {
                        shifts.push((u_minus(m, &axis, &e1, &e2, q, &kernel.restitution), q.weight * bv));
                    }
                }
                let mut local = 0.0;
                plan.visit(f, g, &o, |idx, prod| {
                    let v = node_of(f, idx);
                    let s: f64 = shifts.iter().map(|(um, wb)| wb * psi(&sub(&v, um))).sum();
                    local += prod * s;
                });
                acc += w * local;
            }
            acc
        })
        .collect();
    let vol = f.cell_volume();
    Ok(parts.iter().sum::<f64>() * vol * vol)
}

fn node_of(f: &GridFunction, idx: &[usize; 3]) -> Vector {
    let mut x = [0.0; 3];
    for k in 0..f.n {
        x[k] = f.coordinate(idx[k]);
    }
    x
}

/// Dense scratch box for assembling deposition stencils.
struct Scratch {
    n: usize,
    reach: i64,
    side: usize,
    vals: Vec<f64>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n: usize, reach: i64) -> Self {
        let side = (2 * reach + 1) as usize;
        Scratch { n, reach, side, vals: vec![0.0; side.pow(n as u32)], touched: Vec::new() }
    }

    #[inline]
    fn add(&mut self, d: &[i64; 3], v: f64) {
        let mut lin = 0usize;
        for k in 0..self.n {
            lin = lin * self.side + (d[k] + self.reach) as usize;
        }
        if self.vals[lin] == 0.0 {
            self.touched.push(lin);
        }
        self.vals[lin] += v;
    }

    /// Drains the box into `(offset in the padded grid, weight)` pairs.
    fn drain(&mut self, pstrides: &[i64; 3], out: &mut Vec<(i64, f64)>) {
        out.clear();
        self.touched.sort_unstable();
        for &lin in &self.touched {
            let v = self.vals[lin];
            self.vals[lin] = 0.0;
            if v == 0.0 {
                continue;
            }
            let mut rem = lin;
            let mut off = 0i64;
            for k in (0..self.n).rev() {
                let d = (rem % self.side) as i64 - self.reach;
                rem /= self.side;
                off += d * pstrides[k];
            }
            out.push((off, v));
        }
        self.touched.clear();
    }
}

/// Strong-form `Q⁺(f,g)` by deposition: every triple `(v, v★, ω)` places the mass
/// `f(v) g(v★) w(|u|) b(û·ω) hⁿ hⁿ w_ω` at `v' = v - u⁻` with tent weights.
///
/// For a lattice offset `u = v - v★` the displacement `u⁻` does not depend on `v`, so
/// the deposit pattern is assembled once per offset and then swept over all pairs.
pub fn qplus_grid_with_report(
    f: &GridFunction,
    g: &GridFunction,
    kernel: &CollisionKernel,
    quad: &WeakFormQuad,
) -> Result<(GridFunction, QplusReport)> {
    check_inputs(f, g, kernel, &quad.sphere)?;
    let mut out = GridFunction { values: vec![0.0; f.len()], ..f.clone() };
    let Some(plan) = PairPlan::new(f, g, quad.prune) else {
        return Ok((out, QplusReport::default()));
    };
    let n = f.n;
    let h = f.h();
    let size = f.size;
    let pad = plan.max_offset_norm().ceil() as i64 + 2;
    let pside = size as i64 + 2 * pad;
    let mut pstrides = [0i64; 3];
    for k in 0..n {
        pstrides[k] = pside.pow((n - 1 - k) as u32);
    }
    let plen = pside.pow(n as u32) as usize;
    let b_mass = sphere_b_mass(&kernel.angular, &quad.sphere);
    let vol = f.cell_volume();

    let parts: Vec<(Vec<f64>, f64)> = plan
        .chunks()
        .into_par_iter()
        .map(|(start, end)| {
            let mut acc = vec![0.0; plen];
            let mut scratch = Scratch::new(n, pad);
            let mut stencil = Vec::new();
            let mut pairs: Vec<(i64, f64)> = Vec::new();
            for c in start..end {
                let o = plan.offset(c);
                let u = [o[0] as f64 * h, o[1] as f64 * h, o[2] as f64 * h];
                let (m, axis) = polar(&u, n);
                let w = kernel.radial.lattice_eval(m, h, n);
                if w == 0.0 {
                    continue;
                }
                pairs.clear();
                plan.visit(f, g, &o, |idx, prod| {
                    let p = (0..n).fold(0i64, |a, k| a + (idx[k] as i64 + pad) * pstrides[k]);
                    pairs.push((p, prod));
                });
                if pairs.is_empty() {
                    continue;
                }
                let (e1, e2) = frame(n, &axis);
                for q in &quad.sphere.nodes {
                    let bv = kernel.angular.eval_with(q.s, q.one_plus_s, q.one_minus_s);
                    if bv == 0.0 {
                        continue;
                    }
                    let um = u_minus(m, &axis, &e1, &e2, q, &kernel.restitution);
                    let mut base = [0i64; 3];
                    let mut frac = [0.0; 3];
                    for k in 0..n {
                        let t = -um[k] / h;
                        let fl = t.floor();
                        base[k] = fl as i64;
                        frac[k] = t - fl;
                    }
                    let wq = q.weight * bv;
                    for corner in 0..(1usize << n) {
                        let mut d = [0i64; 3];
                        let mut tw = wq;
                        for k in 0..n {
                            let up = ((corner >> k) & 1) as i64;
                            d[k] = base[k] + up;
                            tw *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
                        }
                        if tw != 0.0 {
                            scratch.add(&d, tw);
                        }
                    }
                }
                scratch.drain(&pstrides, &mut stencil);
                let scale_o = w * vol;
                for &(off, sv) in &stencil {
                    let c = sv * scale_o;
                    for &(p, prod) in &pairs {
                        acc[(p + off) as usize] += c * prod;
                    }
                }
            }
            // fold the padded accumulator back onto the grid
            let mut interior = vec![0.0; f.len()];
            let mut inside = 0.0;
            for (lin, slot) in interior.iter_mut().enumerate() {
                let idx = f.multi_index(lin);
                let p = (0..n).fold(0i64, |a, k| a + (idx[k] as i64 + pad) * pstrides[k]) as usize;
                *slot = acc[p];
                inside += acc[p];
            }
            let total: f64 = acc.iter().sum();
            (interior, total - inside)
        })
        .collect();

    let mut report = QplusReport::default();
    for (interior, outside) in parts {
        for (o, v) in out.values.iter_mut().zip(&interior) {
            *o += v;
        }
        report.dropped += outside * vol;
    }
    report.deposited = out.integrate();
    if quad.prune > 0.0 {
        // all-pairs mass from one convolution; the shortfall is what pruning skipped
        let conv = convolve(g, &kernel.radial);
        let all: f64 = f.values.iter().zip(&conv.values).map(|(a, c)| a * c).sum::<f64>() * vol * b_mass;
        report.pruned = all - report.total();
    }
    Ok((out, report))
}

/// [`qplus_grid_with_report`] without the bookkeeping; prints a warning when more
/// than `1e-6` of the mass leaves the grid.
pub fn qplus_grid(f: &GridFunction, g: &GridFunction, kernel: &CollisionKernel, quad: &WeakFormQuad) -> Result<GridFunction> {
    let (q, report) = qplus_grid_with_report(f, g, kernel, quad)?;
    if let Some(w) = report.warning() {
        log::warn!("{w}");
    }
    Ok(q)
}

/// Continuous Fourier transform `f̂(ξ) = ∫ f(v) e^{-iv·ξ} dv` of the grid samples on
/// the frequency lattice of a zero-padded grid of side `m`.
fn spectrum(f: &GridFunction, m: usize) -> Vec<Complex64> {
    let n = f.n;
    let total = m.pow(n as u32);
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    for (lin, &v) in f.values.iter().enumerate() {
        let idx = f.multi_index(lin);
        let p = (0..n).fold(0, |a, k| a * m + idx[k]);
        data[p] = Complex64::new(v, 0.0);
    }
    fft_nd(&mut data, n, m, false);
    let h = f.h();
    let x0 = -f.half_width + 0.5 * h;
    let dk = 2.0 * PI / (m as f64 * h);
    let vol = f.cell_volume();
    for (lin, z) in data.iter_mut().enumerate() {
        let mut rem = lin;
        let mut phase = 0.0;
        for _ in 0..n {
            let k = rem % m;
            rem /= m;
            phase += x0 * signed(k, m) as f64 * dk;
        }
        *z *= Complex64::from_polar(vol, -phase);
    }
    data
}

#[inline]
fn signed(k: usize, m: usize) -> i64 {
    if k < m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

/// Points per axis of the Lagrange stencil used to read spectra off the lattice.
const SPECTRAL_STENCIL: usize = 6;

/// Tensor Lagrange interpolation on a frequency lattice; zero past the Nyquist band.
fn interp_spectrum(data: &[Complex64], n: usize, m: usize, dk: f64, xi: &Vector) -> Complex64 {
    const P: usize = SPECTRAL_STENCIL;
    let half = (m / 2) as i64;
    let mut first = [0i64; 3];
    let mut w = [[0.0; P]; 3];
    for k in 0..n {
        let t = xi[k] / dk;
        if t < -(half as f64) || t >= half as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let fl = t.floor();
        first[k] = fl as i64 - (P as i64 / 2 - 1);
        let x = t - first[k] as f64;
        for (i, wi) in w[k].iter_mut().enumerate() {
            let mut c = 1.0;
            for j in 0..P {
                if j != i {
                    c *= (x - j as f64) / (i as f64 - j as f64);
                }
            }
            *wi = c;
        }
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let rows = |k: usize, i: usize| (first[k] + i as i64).rem_euclid(m as i64) as usize;
    match n {
        2 => {
            for i0 in 0..P {
                let r0 = rows(0, i0) * m;
                let mut line = Complex64::new(0.0, 0.0);
                for i1 in 0..P {
                    line += data[r0 + rows(1, i1)] * w[1][i1];
                }
                acc += line * w[0][i0];
            }
        }
        _ => {
            for i0 in 0..P {
                let r0 = rows(0, i0) * m;
                let mut plane = Complex64::new(0.0, 0.0);
                for i1 in 0..P {
                    let r1 = (r0 + rows(1, i1)) * m;
                    let mut line = Complex64::new(0.0, 0.0);
                    for i2 in 0..P {
                        line += data[r1 + rows(2, i2)] * w[2][i2];
                    }
                    plane += line * w[1][i1];
                }
                acc += plane * w[0][i0];
            }
        }
    }
    acc
}

/// `Q⁺(f,g)` for Maxwell molecules (`w ≡ 1`) and constant `β` through
/// `Q̂⁺(f,g)(ξ) = ∫ b(ξ̂·ω) ĝ(ξ⁻) f̂(ξ⁺) dω`.
pub fn qplus_fourier_maxwell(
    f: &GridFunction,
    g: &GridFunction,
    b: &AngularKernel,
    restitution: &RestitutionModel,
    sphere: &SphereQuadrature,
) -> Result<GridFunction> {
    f.check_same_grid(g)?;
    let n = f.n;
    if !(n == 2 || n == 3) || sphere.n != n {
        return Err(Error::InvalidArgument(format!("dimension {n} with sphere rule for n = {}", sphere.n)));
    }
    let beta = restitution
        .constant_beta()
        .ok_or_else(|| Error::UnsupportedKernel(format!("restitution {} has no constant beta", restitution.descriptor())))?;
    let size = f.size;
    let h = f.h();
    let m = if size <= 32 { 4 * size } else { 2 * size };
    let fh = spectrum(f, m);
    let gh = spectrum(g, m);
    let dk_fine = 2.0 * PI / (m as f64 * h);
    let dk = 2.0 * PI / (size as f64 * h);
    let x0 = -f.half_width + 0.5 * h;
    let weights: Vec<(SphereNode, f64)> = sphere
        .nodes
        .iter()
        .map(|q| (*q, q.weight * b.eval_with(q.s, q.one_plus_s, q.one_minus_s)))
        .filter(|(_, w)| *w != 0.0)
        .collect();
    let total = size.pow(n as u32);
    let mut qh: Vec<Complex64> = (0..total)
        .into_par_iter()
        .map(|lin| {
            let mut rem = lin;
            let mut xi = [0.0; 3];
            for k in (0..n).rev() {
                xi[k] = signed(rem % size, size) as f64 * dk;
                rem /= size;
            }
            let (r, axis) = polar(&xi, n);
            let (e1, e2) = frame(n, &axis);
            let mut acc = Complex64::new(0.0, 0.0);
            for (q, w) in &weights {
                let c = 0.5 * beta * r;
                let xm = [
                    c * (q.one_minus_s * axis[0] - q.c1 * e1[0] - q.c2 * e2[0]),
                    c * (q.one_minus_s * axis[1] - q.c1 * e1[1] - q.c2 * e2[1]),
                    c * (q.one_minus_s * axis[2] - q.c1 * e1[2] - q.c2 * e2[2]),
                ];
                let xp = sub(&xi, &xm);
                let gv = interp_spectrum(&gh, n, m, dk_fine, &xm);
                if gv == Complex64::new(0.0, 0.0) {
                    continue;
                }
                acc += gv * interp_spectrum(&fh, n, m, dk_fine, &xp) * *w;
            }
            let phase: f64 = xi[..n].iter().map(|x| x * x0).sum();
            acc * Complex64::from_polar(1.0, phase)
        })
        .collect();
    fft_nd(&mut qh, n, size, true);
    let c = (size as f64 * h).powi(-(n as i32));
    let mut out = GridFunction { values: vec![0.0; total], ..f.clone() };
    for (o, z) in out.values.iter_mut().zip(&qh) {
        *o = z.re * c;
    }
    Ok(out)
}

/// `Q⁻(f,g) = ‖b‖₁ f (g ∗ w)`.
pub fn qminus(f: &GridFunction, g: &GridFunction, kernel: &CollisionKernel) -> Result<GridFunction> {
    f.check_same_grid(g)?;
    if f.n != kernel.n {
        return Err(Error::InvalidArgument(format!("grid dimension {} vs kernel {}", f.n, kernel.n)));
    }
    let bn = grad_cutoff_norm(&kernel.angular, kernel.n)?;
    let conv = convolve(g, &kernel.radial);
    let values = f.values.iter().zip(&conv.values).map(|(a, c)| bn * a * c).collect();
    Ok(GridFunction { values, ..f.clone() })
}

/// Radial `p`-symmetrization of grid data, read through multilinear interpolation.
pub fn radial_symmetrize_grid(f: &GridFunction, p: f64, sphere: &SphereQuadrature) -> RadialProfile {
    let f = Arc::new(f.clone());
    let q = sphere.clone();
    let reach = f.half_width * (f.n as f64).sqrt();
    RadialProfile::new(move |t| haar_average_p(|x| f.interpolate(x), &scale(t, &pole(q.n)), p, &OrbitRule::Sphere(&q)))
        .with_support(reach)
}

/// Scaling maps `(a₁, a₂)` at `|u| = x` for the angle with `1 + s = op`, `1 - s = om`.
#[inline]
fn scaling_maps(x: f64, op: f64, om: f64, rest: &RestitutionModel) -> (f64, f64) {
    let z = x * (0.5 * om).sqrt();
    let beta = rest.beta(z);
    let k = (1.0 - beta).powi(2);
    (beta * z, x * (0.5 * (op + k * om)).sqrt())
}

/// Values of `s` in `(-1, 1)` where `a(s)` crosses one of `knots`.
fn crossings<A: Fn(f64) -> f64>(a: A, knots: &[f64]) -> Vec<f64> {
    const SAMPLES: usize = 256;
    let mut out = Vec::new();
    for &t in knots {
        let mut prev_s = -1.0;
        let mut prev = a(-1.0) - t;
        for i in 1..=SAMPLES {
            let s = -1.0 + 2.0 * i as f64 / SAMPLES as f64;
            let cur = a(s) - t;
            if cur == 0.0 {
                out.push(s);
            } else if prev * cur < 0.0 {
                let (mut lo, mut hi) = (prev_s, s);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if (a(mid) - t) * prev < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
            prev = cur;
            prev_s = s;
        }
    }
    out
}

/// `ℬ(f̃, g̃)(x) = ∫ f̃(a₁(x,s)) g̃(a₂(x,s)) dξ(s)` with `dξ = b(s)(1-s²)^{(n-3)/2} ds`.
pub fn apply_b1d(
    f: &RadialProfile,
    g: &RadialProfile,
    x: f64,
    restitution: &RestitutionModel,
    b: &AngularKernel,
    n: usize,
) -> Result<Estimate> {
    apply_b1d_with(&TanhSinh::default(), f, g, x, restitution, b, n)
}

pub fn apply_b1d_with(
    quad: &TanhSinh,
    f: &RadialProfile,
    g: &RadialProfile,
    x: f64,
    restitution: &RestitutionModel,
    b: &AngularKernel,
    n: usize,
) -> Result<Estimate> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius {x} must be nonnegative")));
    }
    if x == 0.0 {
        let c = f.eval(0.0) * g.eval(0.0);
        if !c.is_finite() {
            return Err(Error::InvalidArgument("profiles are singular at the origin".into()));
        }
        let xi = xi_integral(b, n, 0.0, 0.0, 1.0)?;
        return Ok(Estimate { value: c * xi.value, error: c.abs() * xi.error });
    }
    let a1 = |s: f64| scaling_maps(x, 1.0 + s, 1.0 - s, restitution).0;
    let a2 = |s: f64| scaling_maps(x, 1.0 + s, 1.0 - s, restitution).1;
    let mut edges = crossings(a1, &f.breakpoints);
    edges.extend(crossings(a2, &g.breakpoints));
    edges.retain(|s| *s > -1.0 && *s < 1.0);
    edges.push(-1.0);
    edges.push(1.0);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();
    let nexp = 0.5 * (n as f64 - 3.0);
    let mut total = Estimate::zero();
    for w in edges.windows(2) {
        let (sa, sb) = (w[0], w[1]);
        if sb <= sa {
            continue;
        }
        // decide support membership once per piece; rounding near a cut must not
        // reintroduce the jump inside the piece
        let mid = 0.5 * (sa + sb);
        let (m1, m2) = scaling_maps(x, 1.0 + mid, 1.0 - mid, restitution);
        if !(f.inside(m1) && g.inside(m2)) {
            continue;
        }
        let value = |s: f64, op: f64, om: f64| {
            let bv = b.eval_with(s, op, om);
            if bv == 0.0 {
                return 0.0;
            }
            let (t1, t2) = scaling_maps(x, op, om, restitution);
            let fv = f.eval_inside(t1);
            if fv == 0.0 {
                return 0.0;
            }
            let mut v = bv * fv * g.eval_inside(t2);
            if nexp != 0.0 {
                v *= (op * om).powf(nexp);
            }
            v
        };
        let plain = |lo: f64, hi: f64| {
            quad.integrate(
                |s: f64, dl: f64, dr: f64| {
                    let op = if lo == -1.0 { dl } else { 1.0 + s };
                    let om = if hi == 1.0 { dr } else { 1.0 - s };
                    value(s, op, om)
                },
                lo,
                hi,
            )
        };
        // a cut just inside ±1 leaves the endpoint singularity a hair outside the
        // piece; integrate that half in log(1 ± s) instead
        let width = sb - sa;
        let near_left = sa > -1.0 && 1.0 + sa < 1e-3 * width;
        let near_right = sb < 1.0 && 1.0 - sb < 1e-3 * width;
        if !(near_left || near_right) {
            total = total + plain(sa, sb)?;
            continue;
        }
        let (mut lo, mut hi) = (sa, sb);
        if near_left {
            lo = mid;
            total = total
                + quad.integrate(
                    |tau: f64, _, _| {
                        let op = tau.exp();
                        op * value(op - 1.0, op, 2.0 - op)
                    },
                    (1.0 + sa).ln(),
                    (1.0 + mid).ln(),
                )?;
        }
        if near_right {
            hi = mid;
            total = total
                + quad.integrate(
                    |tau: f64, _, _| {
                        let om = tau.exp();
                        om * value(1.0 - om, 2.0 - om, om)
                    },
                    (1.0 - sb).ln(),
                    (1.0 - mid).ln(),
                )?;
        }
        if hi > lo {
            total = total + plain(lo, hi)?;
        }
    }
    Ok(total)
}
