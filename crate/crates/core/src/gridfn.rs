//! Uniform Cartesian grid functions on `[-L, L]^n`.
//!
//! Nodes sit at cell centres `x_i = -L + (i + 1/2) h`, `h = 2L/N`, so sums
//! weighted by `h^n` are midpoint-rule integrals. Values are stored row-major
//! with the last index fastest.

use crate::error::{Error, Result};
use crate::geometry::{norm, Vector};
use crate::kernels::RadialWeight;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub n: usize,
    pub size: usize,
    pub half_width: f64,
    pub values: Vec<f64>,
}

/// Outcome of a deposition: mass that fell outside the node hull.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DepositReport {
    pub deposited: f64,
    pub dropped: f64,
}

impl GridFunction {
    pub fn zeros(n: usize, size: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidArgument(format!("grid dimension {n} unsupported")));
        }
        if size < 4 || !(half_width > 0.0) {
            return Err(Error::InvalidArgument(format!("grid needs N >= 4 and L > 0, got N = {size}, L = {half_width}")));
        }
        Ok(GridFunction { n, size, half_width, values: vec![0.0; size.pow(n as u32)] })
    }

    /// Samples `f` at the nodes.
    pub fn from_fn<F: Fn(&Vector) -> f64>(n: usize, size: usize, half_width: f64, f: F) -> Result<Self> {
        let mut g = GridFunction::zeros(n, size, half_width)?;
        for i in 0..g.values.len() {
            let x = g.node(i);
            g.values[i] = f(&x);
        }
        Ok(g)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.size as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.n == other.n && self.size == other.size && self.half_width == other.half_width
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(n, N, L) = ({}, {}, {}) vs ({}, {}, {})",
                self.n, self.size, self.half_width, other.n, other.size, other.half_width
            )))
        }
    }

    pub fn multi_index(&self, mut lin: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for k in (0..self.n).rev() {
            idx[k] = lin % self.size;
            lin /= self.size;
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize; 3]) -> usize {
        (0..self.n).fold(0, |acc, k| acc * self.size + idx[k])
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h()
    }

    pub fn node(&self, lin: usize) -> Vector {
        let idx = self.multi_index(lin);
        let mut x = [0.0; 3];
        for k in 0..self.n {
            x[k] = self.coordinate(idx[k]);
        }
        x
    }

    /// Midpoint-rule integral `Σ f h^n`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// `(Σ |f w|^p h^n)^{1/p}`, or `max |f w|` for `p = ∞`.
    pub fn norm_weighted<W: Fn(&Vector) -> f64>(&self, p: f64, w: W) -> f64 {
        if p.is_infinite() {
            return (0..self.len()).fold(0.0, |m, i| m.max((self.values[i] * w(&self.node(i))).abs()));
        }
        let s: f64 = (0..self.len()).map(|i| (self.values[i] * w(&self.node(i))).abs().powf(p)).sum();
        (s * self.cell_volume()).powf(1.0 / p)
    }

    /// `‖f‖_{L^p_k} = (∫ |f|^p (1 + |v|^{pk}))^{1/p}` for `k > 0`; `k = 0` is the unweighted norm.
    /// For `p = ∞` the weight is `1 + |v|^k`.
    pub fn norm_lp(&self, p: f64, k: f64) -> f64 {
        if k == 0.0 {
            return self.norm_plain(p);
        }
        if p.is_infinite() {
            return self.norm_weighted(p, |x| 1.0 + norm(x).powf(k));
        }
        self.norm_weighted(p, |x| (1.0 + norm(x).powf(p * k)).powf(1.0 / p))
    }

    /// Plain `L^p` norm.
    pub fn norm_plain(&self, p: f64) -> f64 {
        self.norm_weighted(p, |_| 1.0)
    }

    /// Multilinear interpolation, zero outside the node hull.
    pub fn interpolate(&self, x: &Vector) -> f64 {
        let h = self.h();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..self.n {
            let t = (x[k] + self.half_width) / h - 0.5;
            if !(t >= 0.0 && t <= (self.size - 1) as f64) {
                return 0.0;
            }
            let i = (t.floor() as usize).min(self.size - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.n) {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for k in 0..self.n {
                let up = (corner >> k) & 1;
                idx[k] = base[k] + up;
                w *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * self.values[self.linear_index(&idx)];
            }
        }
        acc
    }

    /// Adds point masses with multilinear tent weights, so node `j` gains
    /// `m ∏ₖ (1 - |x_k - x_{j,k}|/h) / h^n`. Mass reaching nodes outside the grid is dropped.
    pub fn deposit(&mut self, points: &[(Vector, f64)]) -> DepositReport {
        let h = self.h();
        let inv_vol = 1.0 / self.cell_volume();
        let mut rep = DepositReport::default();
        for (x, m) in points {
            let mut base = [0i64; 3];
            let mut frac = [0.0; 3];
            for k in 0..self.n {
                let t = (x[k] + self.half_width) / h - 0.5;
                let f = t.floor();
                base[k] = f as i64;
                frac[k] = t - f;
            }
            for corner in 0..(1usize << self.n) {
                let mut w = 1.0;
                let mut inside = true;
                let mut idx = [0usize; 3];
                for k in 0..self.n {
                    let up = ((corner >> k) & 1) as i64;
                    let i = base[k] + up;
                    w *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
                    if i < 0 || i >= self.size as i64 {
                        inside = false;
                    } else {
                        idx[k] = i as usize;
                    }
                }
                if w == 0.0 {
                    continue;
                }
                if inside {
                    let li = self.linear_index(&idx);
                    self.values[li] += m * w * inv_vol;
                    rep.deposited += m * w;
                } else {
                    rep.dropped += m * w;
                }
            }
        }
        rep
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    pub fn pointwise<F: Fn(f64, &Vector) -> f64>(&self, f: F) -> GridFunction {
        let values = (0..self.len()).map(|i| f(self.values[i], &self.node(i))).collect();
        GridFunction { values, ..self.clone() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes the header `n: u32, N: u32, L: f64` and the row-major payload, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.size as u32).to_le_bytes())?;
        w.write_all(&self.half_width.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let size = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let l = f64::from_le_bytes(b8);
        let mut g = GridFunction::zeros(n, size, l)?;
        for v in g.values.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        GridFunction::read_binary(std::io::BufReader::new(f))
    }

    /// CSV with one row per node: coordinates then value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names = ["x1", "x2", "x3"];
        writeln!(w, "{},value", names[..self.n].join(","))?;
        for i in 0..self.len() {
            let x = self.node(i);
            let coords: Vec<String> = x[..self.n].iter().map(|c| format!("{c}")).collect();
            writeln!(w, "{},{}", coords.join(","), self.values[i])?;
        }
        Ok(())
    }
}

/// In-place n-dimensional FFT on a cube of side `size`, unnormalized.
pub(crate) fn fft_nd(data: &mut [Complex64], n: usize, size: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(size) } else { planner.plan_fft_forward(size) };
    let mut line = vec![Complex64::new(0.0, 0.0); size];
    let total = size.pow(n as u32);
    for axis in 0..n {
        let stride = size.pow((n - 1 - axis) as u32);
        for start in 0..total {
            // visit each line once: its index along `axis` must be zero
            if (start / stride) % size != 0 {
                continue;
            }
            for (k, c) in line.iter_mut().enumerate() {
                *c = data[start + k * stride];
            }
            fft.process(&mut line);
            for (k, c) in line.iter().enumerate() {
                data[start + k * stride] = *c;
            }
        }
    }
}

/// Unitary discrete Fourier transform of the node values.
pub fn dft(f: &GridFunction) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, f.n, f.size, false);
    let c = (f.len() as f64).powf(-0.5);
    data.iter_mut().for_each(|z| *z *= c);
    data
}

/// Inverse of [`dft`].
pub fn idft(data: &[Complex64], n: usize, size: usize) -> Vec<Complex64> {
    let mut out = data.to_vec();
    fft_nd(&mut out, n, size, true);
    let c = (out.len() as f64).powf(-0.5);
    out.iter_mut().for_each(|z| *z *= c);
    out
}

/// Discrete convolution `(f * K)(v_i) = Σ_j f(v_j) K(|v_i - v_j|) h^n`, evaluated
/// exactly through a zero-padded FFT of side `2N`.
pub fn convolve(f: &GridFunction, kernel: &RadialWeight) -> GridFunction {
    let (n, size) = (f.n, f.size);
    let m = 2 * size;
    let h = f.h();
    let total = m.pow(n as u32);
    let mut fp = vec![Complex64::new(0.0, 0.0); total];
    let mut kp = vec![Complex64::new(0.0, 0.0); total];
    for lin in 0..total {
        let mut rem = lin;
        let mut idx = [0usize; 3];
        for k in (0..n).rev() {
            idx[k] = rem % m;
            rem /= m;
        }
        if idx[..n].iter().all(|&c| c < size) {
            fp[lin] = Complex64::new(f.values[f.linear_index(&idx)], 0.0);
        }
        // offsets wrap to [-N, N); offset -N is never a difference of two nodes
        if idx[..n].iter().any(|&c| c == size) {
            continue;
        }
        let r2: f64 = idx[..n]
            .iter()
            .map(|&c| {
                let o = if c < size { c as f64 } else { c as f64 - m as f64 };
                o * o
            })
            .sum();
        kp[lin] = Complex64::new(kernel.lattice_eval(r2.sqrt() * h, h, n), 0.0);
    }
    fft_nd(&mut fp, n, m, false);
    fft_nd(&mut kp, n, m, false);
    for (a, b) in fp.iter_mut().zip(&kp) {
        *a *= b;
    }
    fft_nd(&mut fp, n, m, true);
    let scale = f.cell_volume() / total as f64;
    let mut out = GridFunction { values: vec![0.0; f.len()], ..f.clone() };
    for i in 0..out.len() {
        let idx = f.multi_index(i);
        let lin = (0..n).fold(0, |acc, k| acc * m + idx[k]);
        out.values[i] = fp[lin].re * scale;
    }
    out
}

/// Direct-sum version of [`convolve`], quadratic in the number of nodes.
pub fn convolve_direct(f: &GridFunction, kernel: &RadialWeight) -> GridFunction {
    let h = f.h();
    let mut out = GridFunction { values: vec![0.0; f.len()], ..f.clone() };
    for i in 0..f.len() {
        let xi = f.node(i);
        let mut acc = 0.0;
        for j in 0..f.len() {
            if f.values[j] == 0.0 {
                continue;
            }
            let xj = f.node(j);
            let d = crate::geometry::sub(&xi, &xj);
            acc += f.values[j] * kernel.lattice_eval(norm(&d), h, f.n);
        }
        out.values[i] = acc * f.cell_volume();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_l2_norm() {
        let g = GridFunction::from_fn(3, 64, 8.0, |x| (-0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()).unwrap();
        assert_relative_eq!(g.norm_lp(2.0, 0.0), PI.powf(0.75), max_relative = 1e-12);
    }

    #[test]
    fn deposit_at_node_and_midpoint() {
        let mut g = GridFunction::zeros(3, 8, 4.0).unwrap();
        let x = g.node(100);
        let rep = g.deposit(&[(x, 2.0)]);
        assert_relative_eq!(g.values[100], 2.0 / g.cell_volume(), max_relative = 1e-14);
        assert_eq!(rep.dropped, 0.0);
        let mut g1 = GridFunction::zeros(1, 8, 4.0).unwrap();
        let mid = 0.5 * (g1.coordinate(3) + g1.coordinate(4));
        g1.deposit(&[([mid, 0.0, 0.0], 1.0)]);
        assert_relative_eq!(g1.values[3], 0.5 / g1.h());
        assert_relative_eq!(g1.values[4], 0.5 / g1.h());
    }

    #[test]
    fn deposit_outside_is_dropped() {
        let mut g = GridFunction::zeros(2, 8, 1.0).unwrap();
        let rep = g.deposit(&[([5.0, 0.0, 0.0], 1.5), ([0.1, 0.2, 0.0], 1.0)]);
        assert_relative_eq!(rep.dropped + rep.deposited, 2.5, max_relative = 1e-14);
        assert_relative_eq!(rep.dropped, 1.5, max_relative = 1e-14);
        assert_relative_eq!(g.integrate(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_convolution() {
        let n = 3;
        let f = GridFunction::from_fn(n, 24, 6.0, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()).unwrap();
        // convolve f against the Gaussian weight by treating it as a radial kernel
        let k = RadialWeight::Phi(
            crate::kernels::PhiKernel::new("gauss", 3, 1.0, crate::kernels::PhiClass::Strong, None, |t| (-t * t).exp()).unwrap(),
        );
        let c = convolve(&f, &k);
        for &i in &[0usize, 7000, f.linear_index(&[12, 12, 12])] {
            let x = f.node(i);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let exact = (PI / 2.0).powf(1.5) * (-r2 / 2.0).exp();
            assert!((c.values[i] - exact).abs() < 1e-10 * (PI / 2.0).powf(1.5), "{} vs {}", c.values[i], exact);
        }
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let f = GridFunction::from_fn(2, 12, 3.0, |x| (-(x[0] - 0.3).powi(2) - 2.0 * x[1] * x[1]).exp()).unwrap();
        for k in [RadialWeight::Power(1.0), RadialWeight::Power(-1.0), RadialWeight::Power(0.0)] {
            let a = convolve(&f, &k);
            let b = convolve_direct(&f, &k);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12 * b.max_abs(), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn dft_roundtrip_and_naive() {
        let f = GridFunction::from_fn(2, 6, 1.0, |x| x[0] + 2.0 * x[1] * x[1]).unwrap();
        let fh = dft(&f);
        let back = idft(&fh, 2, 6);
        for (z, v) in back.iter().zip(&f.values) {
            assert!((z.re - v).abs() < 1e-13 && z.im.abs() < 1e-13);
        }
        // naive O(N^4) transform
        let nn = 6;
        for k0 in 0..nn {
            for k1 in 0..nn {
                let mut acc = Complex64::new(0.0, 0.0);
                for j0 in 0..nn {
                    for j1 in 0..nn {
                        let ph = -2.0 * PI * ((k0 * j0 + k1 * j1) as f64) / nn as f64;
                        acc += f.values[j0 * nn + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                acc /= nn as f64;
                assert!((acc - fh[k0 * nn + k1]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn binary_roundtrip() {
        let f = GridFunction::from_fn(3, 4, 2.0, |x| x[0] - x[2]).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 64);
        let g = GridFunction::read_binary(&buf[..]).unwrap();
        assert_eq!(f, g);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("x1,x2,x3,value\n"));
    }

    #[test]
    fn interpolation_is_exact_for_linear() {
        let f = GridFunction::from_fn(3, 8, 2.0, |x| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2]).unwrap();
        let x = [0.13, -0.41, 0.77];
        assert_relative_eq!(f.interpolate(&x), 1.0 + 0.13 + 0.82 + 0.385, max_relative = 1e-13);
        assert_eq!(f.interpolate(&[5.0, 0.0, 0.0]), 0.0);
    }
}
