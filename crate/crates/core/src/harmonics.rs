//! Real spherical harmonics on a Gauss–Legendre × equispaced grid.
//!
//! All L² quantities use the normalized surface measure (total mass 1), so
//! `b_{0,0} ≡ 1` and `Σ_k |b_{n,k}(x)|² = 2n+1` at every point.
//!
//! The real basis is
//!
//! ```text
//! b_{n,0}  = Q_n^0(cosθ)
//! b_{n,m}  = √2 Q_n^m(cosθ) cos(mφ)     m > 0
//! b_{n,-m} = √2 Q_n^m(cosθ) sin(mφ)     m > 0
//! ```
//!
//! with `Q_n^m` the associated Legendre functions scaled so that
//! `½∫_{-1}^{1} Q² dx = 1` (no Condon–Shortley phase).
//!
//! Transforms are separable: an FFT along each latitude ring followed by
//! Legendre sums, O(N³) per transform.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fields::SpectralField;

pub type C64 = Complex64;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// λ_n² = n² + n + 1, the eigenvalue of −Δ+1 on degree n.
pub fn eigenvalue_sq(n: usize) -> u64 {
    let n = n as u64;
    n * n + n + 1
}

/// λ_n as a float.
pub fn lambda(n: usize) -> f64 {
    (eigenvalue_sq(n) as f64).sqrt()
}

/// Dimension of the degree-n eigenspace.
pub fn eigenspace_dim(n: usize) -> usize {
    2 * n + 1
}

/// Number of coefficients of a field with degrees `0..=n_max`.
pub fn coeff_count(n_max: usize) -> usize {
    (n_max + 1) * (n_max + 1)
}

/// Flat position of `(n, k)` in coefficient storage; `|k| ≤ n`.
#[inline]
pub fn coeff_index(n: usize, k: i64) -> usize {
    debug_assert!(k.unsigned_abs() as usize <= n);
    n * n + (k + n as i64) as usize
}

/// Gauss–Legendre nodes (descending) and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_p_and_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_p_and_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_p_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Smallest integer ≥ n whose only prime factors are 2, 3 and 5.
fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Quadrature grid: Gauss–Legendre in cosθ, equispaced in φ.
#[derive(Clone, Debug)]
pub struct SphericalGrid {
    n_lat: usize,
    n_lon: usize,
    x: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    /// Per-ring weights summing to 1; a point weighs `ring_weight / n_lon`.
    ring_weight: Vec<f64>,
}

impl SphericalGrid {
    pub fn new(n_lat: usize, n_lon: usize) -> Result<Self> {
        if n_lat == 0 || n_lon == 0 {
            return Err(Error::Config("grid must have at least one node per direction".into()));
        }
        let (x, w) = gauss_legendre(n_lat);
        let theta = x.iter().map(|v| v.acos()).collect();
        let phi = (0..n_lon).map(|j| 2.0 * PI * j as f64 / n_lon as f64).collect();
        // Renormalize so the constant integrates to exactly 1.
        let total: f64 = w.iter().sum();
        let ring_weight = w.iter().map(|v| v / total).collect();
        Ok(Self { n_lat, n_lon, x, theta, phi, ring_weight })
    }

    /// Smallest grid that integrates products of four degree-`n_max`
    /// harmonics exactly.
    pub fn for_degree(n_max: usize) -> Self {
        Self::new(2 * n_max + 1, next_smooth(4 * n_max + 1)).expect("nonempty grid")
    }

    /// Whether quartic products of degree `n_max` are integrated exactly.
    pub fn supports(&self, n_max: usize) -> bool {
        self.n_lat >= 2 * n_max + 1 && self.n_lon >= 4 * n_max + 1
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn len(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.x
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn ring_weights(&self) -> &[f64] {
        &self.ring_weight
    }

    /// Quadrature weight of node `(i, j)`, stored at `i * n_lon + j`.
    #[inline]
    pub fn weight(&self, i: usize, _j: usize) -> f64 {
        self.ring_weight[i] / self.n_lon as f64
    }

    /// ∫ f dμ for grid samples `f`.
    pub fn integrate(&self, values: &[C64]) -> C64 {
        let mut total = C64::new(0.0, 0.0);
        for i in 0..self.n_lat {
            let row: C64 = values[i * self.n_lon..(i + 1) * self.n_lon].iter().sum();
            total += row * self.ring_weight[i];
        }
        total / self.n_lon as f64
    }

    /// ∫ f dμ for real grid samples.
    pub fn integrate_real(&self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_lat {
            let row: f64 = values[i * self.n_lon..(i + 1) * self.n_lon].iter().sum();
            total += row * self.ring_weight[i];
        }
        total / self.n_lon as f64
    }
}

/// Normalized associated Legendre values `Q_n^m(x)` for `0 ≤ m ≤ n ≤ n_max`,
/// stored m-major: index `offset(m) + (n − m)`.
pub fn legendre_table(x: f64, n_max: usize) -> Vec<f64> {
    let len = (n_max + 1) * (n_max + 2) / 2;
    let mut out = vec![0.0; len];
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for m in 0..=n_max {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        let off = legendre_offset(m, n_max);
        out[off] = pmm;
        if m == n_max {
            break;
        }
        let mf = m as f64;
        let mut p_prev = pmm;
        let mut p = (2.0 * mf + 3.0).sqrt() * x * pmm;
        out[off + 1] = p;
        for n in m + 2..=n_max {
            let nf = n as f64;
            let denom = (nf - mf) * (nf + mf);
            let a = ((4.0 * nf * nf - 1.0) / denom).sqrt();
            let b = ((2.0 * nf + 1.0) * (nf - mf - 1.0) * (nf + mf - 1.0) / ((2.0 * nf - 3.0) * denom)).sqrt();
            let next = a * x * p - b * p_prev;
            p_prev = p;
            p = next;
            out[off + n - m] = p;
        }
    }
    out
}

#[inline]
fn legendre_offset(m: usize, n_max: usize) -> usize {
    m * (n_max + 1) - m * m.saturating_sub(1) / 2
}

/// Orthonormal real harmonics of degree ≤ `n_max` tabulated on a grid.
///
/// Only the separable factors are stored (Legendre values per ring and the
/// ring FFT plans); full `b_{n,k}` values are produced on demand.
#[derive(Clone)]
pub struct HarmonicBasis {
    n_max: usize,
    grid: SphericalGrid,
    legendre: Vec<f64>,
    table_len: usize,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for HarmonicBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HarmonicBasis")
            .field("n_max", &self.n_max)
            .field("n_lat", &self.grid.n_lat)
            .field("n_lon", &self.grid.n_lon)
            .finish()
    }
}

impl HarmonicBasis {
    pub fn new(n_max: usize, grid: SphericalGrid) -> Result<Self> {
        if !grid.supports(n_max) {
            return Err(Error::Config(format!(
                "grid {}×{} too small for degree {n_max}: need n_lat ≥ {} and n_lon ≥ {}",
                grid.n_lat,
                grid.n_lon,
                2 * n_max + 1,
                4 * n_max + 1
            )));
        }
        let table_len = (n_max + 1) * (n_max + 2) / 2;
        let mut legendre = Vec::with_capacity(table_len * grid.n_lat);
        for &x in &grid.x {
            legendre.extend(legendre_table(x, n_max));
        }
        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft_forward(grid.n_lon);
        let fft_inverse = planner.plan_fft_inverse(grid.n_lon);
        Ok(Self { n_max, grid, legendre, table_len, fft_forward, fft_inverse })
    }

    /// Basis on the smallest admissible grid.
    pub fn for_degree(n_max: usize) -> Self {
        Self::new(n_max, SphericalGrid::for_degree(n_max)).expect("grid built for this degree")
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn grid(&self) -> &SphericalGrid {
        &self.grid
    }

    /// Short description recorded in reports.
    pub fn describe(&self) -> String {
        format!(
            "real orthonormal harmonics (√2·Q_n^|k|·cos/sin, no Condon-Shortley phase), N_max={}, Gauss-Legendre {}×{}",
            self.n_max, self.grid.n_lat, self.grid.n_lon
        )
    }

    #[inline]
    fn q(&self, ring: usize, n: usize, m: usize) -> f64 {
        self.legendre[ring * self.table_len + legendre_offset(m, self.n_max) + n - m]
    }

    /// Legendre factor `Q_n^m(cosθ_ring)`.
    pub fn legendre_at(&self, ring: usize, n: usize, m: usize) -> f64 {
        self.q(ring, n, m)
    }

    /// `b_{n,k}` at grid node `(i, j)`.
    pub fn value(&self, n: usize, k: i64, i: usize, j: usize) -> f64 {
        let m = k.unsigned_abs() as usize;
        let q = self.q(i, n, m);
        let phi = self.grid.phi[j];
        match k.signum() {
            0 => q,
            1 => SQRT2 * q * (m as f64 * phi).cos(),
            _ => SQRT2 * q * (m as f64 * phi).sin(),
        }
    }

    /// All `b_{n,k}` (k = −n..=n) at node `(i, j)`.
    pub fn degree_values(&self, n: usize, i: usize, j: usize) -> Vec<f64> {
        (-(n as i64)..=n as i64).map(|k| self.value(n, k, i, j)).collect()
    }

    /// Samples of `b_{n,k}` over the whole grid.
    pub fn mode_samples(&self, n: usize, k: i64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.n_lat {
            for j in 0..self.grid.n_lon {
                out.push(self.value(n, k, i, j));
            }
        }
        out
    }

    /// Σ_k |b_{n,k}(x)|² at node `(i, j)`.
    pub fn weyl_sum(&self, n: usize, i: usize, j: usize) -> f64 {
        self.degree_values(n, i, j).iter().map(|v| v * v).sum()
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::Input(format!("degree {n} exceeds basis degree {}", self.n_max)));
        }
        Ok(())
    }

    /// Grid samples of `f`.
    pub fn synthesize(&self, f: &SpectralField) -> Result<Vec<C64>> {
        self.synthesize_degrees(f, 0, f.n_max())
    }

    /// Grid samples of the degrees `lo..=hi` of `f` (clamped to `f`'s range).
    pub fn synthesize_degrees(&self, f: &SpectralField, lo: usize, hi: usize) -> Result<Vec<C64>> {
        let hi = hi.min(f.n_max());
        self.check_degree(hi)?;
        let g = &self.grid;
        let mut out = vec![C64::new(0.0, 0.0); g.len()];
        if lo > hi {
            return Ok(out);
        }
        let mut scratch = vec![C64::new(0.0, 0.0); self.fft_inverse.get_inplace_scratch_len()];
        let c = f.coeffs();
        for i in 0..g.n_lat {
            let buf = &mut out[i * g.n_lon..(i + 1) * g.n_lon];
            for m in 0..=hi {
                let mut a = C64::new(0.0, 0.0);
                let mut b = C64::new(0.0, 0.0);
                for n in m.max(lo)..=hi {
                    let q = self.q(i, n, m);
                    a += c[coeff_index(n, m as i64)] * q;
                    if m > 0 {
                        b += c[coeff_index(n, -(m as i64))] * q;
                    }
                }
                if m == 0 {
                    buf[0] += a;
                } else {
                    let ib = C64::new(-b.im, b.re);
                    buf[m] += (a - ib) * FRAC_1_SQRT2;
                    buf[g.n_lon - m] += (a + ib) * FRAC_1_SQRT2;
                }
            }
            self.fft_inverse.process_with_scratch(buf, &mut scratch);
        }
        Ok(out)
    }

    /// Coefficients of degree ≤ `n_out` of grid samples (quadrature inner
    /// products against the basis).
    pub fn analyze(&self, values: &[C64], n_out: usize) -> Result<SpectralField> {
        self.analyze_degrees(values, 0, n_out)
    }

    /// Coefficients of degrees `lo..=hi`; the result has `n_max = hi` and
    /// zeros below `lo`.
    pub fn analyze_degrees(&self, values: &[C64], lo: usize, hi: usize) -> Result<SpectralField> {
        self.check_degree(hi)?;
        let spectrum = self.ring_spectrum(values)?;
        Ok(self.analyze_spectrum(&spectrum, lo, hi))
    }

    /// Normalized ring Fourier coefficients `F_i(m) = (1/n_lon) Σ_j f_ij e^{−imφ_j}`,
    /// stored per ring at FFT index `m mod n_lon`.
    pub fn ring_spectrum(&self, values: &[C64]) -> Result<Vec<C64>> {
        let g = &self.grid;
        if values.len() != g.len() {
            return Err(Error::Input(format!("expected {} grid samples, got {}", g.len(), values.len())));
        }
        let mut buf = values.to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); self.fft_forward.get_inplace_scratch_len()];
        let scale = 1.0 / g.n_lon as f64;
        for ring in buf.chunks_mut(g.n_lon) {
            self.fft_forward.process_with_scratch(ring, &mut scratch);
            for v in ring.iter_mut() {
                *v *= scale;
            }
        }
        Ok(buf)
    }

    fn analyze_spectrum(&self, spectrum: &[C64], lo: usize, hi: usize) -> SpectralField {
        let g = &self.grid;
        let mut out = SpectralField::zeros(hi);
        let c = out.coeffs_mut();
        for i in 0..g.n_lat {
            let ring = &spectrum[i * g.n_lon..(i + 1) * g.n_lon];
            let w = g.ring_weight[i];
            for m in 0..=hi {
                let (cos_part, sin_part) = if m == 0 {
                    (ring[0], C64::new(0.0, 0.0))
                } else {
                    let fp = ring[m];
                    let fm = ring[g.n_lon - m];
                    let d = fp - fm;
                    ((fp + fm) * FRAC_1_SQRT2, C64::new(-d.im, d.re) * FRAC_1_SQRT2)
                };
                for n in m.max(lo)..=hi {
                    let wq = w * self.q(i, n, m);
                    c[coeff_index(n, m as i64)] += cos_part * wq;
                    if m > 0 {
                        c[coeff_index(n, -(m as i64))] += sin_part * wq;
                    }
                }
            }
        }
        out
    }

    /// Evaluates `b_{n,k}` at an arbitrary point.
    pub fn eval_at(n: usize, k: i64, theta: f64, phi: f64) -> f64 {
        let m = k.unsigned_abs() as usize;
        let table = legendre_table(theta.cos(), n);
        let q = table[legendre_offset(m, n) + n - m];
        match k.signum() {
            0 => q,
            1 => SQRT2 * q * (m as f64 * phi).cos(),
            _ => SQRT2 * q * (m as f64 * phi).sin(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_and_dimensions() {
        assert_eq!(eigenvalue_sq(0), 1);
        assert_eq!(eigenvalue_sq(1), 3);
        assert_eq!(eigenvalue_sq(5), 31);
        assert_eq!(eigenspace_dim(0), 1);
        assert_eq!(eigenspace_dim(3), 7);
        assert_eq!(eigenspace_dim(10), 21);
    }

    #[test]
    fn legendre_offsets_are_contiguous() {
        let n_max = 6;
        let mut expected = 0;
        for m in 0..=n_max {
            assert_eq!(legendre_offset(m, n_max), expected);
            expected += n_max + 1 - m;
        }
        assert_eq!(expected, (n_max + 1) * (n_max + 2) / 2);
    }

    #[test]
    fn weights_sum_to_one() {
        let g = SphericalGrid::for_degree(17);
        let s: f64 = (0..g.n_lat()).map(|i| g.weight(i, 0) * g.n_lon() as f64).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        // exact up to degree 11
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((integral - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn low_degree_closed_forms() {
        for &(t, p) in &[(0.3, 1.1), (2.0, 4.0), (1.2, 0.0)] {
            let ct: f64 = f64::cos(t);
            let st: f64 = f64::sin(t);
            assert!((HarmonicBasis::eval_at(0, 0, t, p) - 1.0).abs() < 1e-15);
            assert!((HarmonicBasis::eval_at(1, 0, t, p) - 3f64.sqrt() * ct).abs() < 1e-14);
            assert!((HarmonicBasis::eval_at(1, 1, t, p) - 3f64.sqrt() * st * p.cos()).abs() < 1e-14);
            assert!((HarmonicBasis::eval_at(1, -1, t, p) - 3f64.sqrt() * st * p.sin()).abs() < 1e-14);
            let p20 = 5f64.sqrt() * (3.0 * ct * ct - 1.0) / 2.0;
            assert!((HarmonicBasis::eval_at(2, 0, t, p) - p20).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_too_small_is_rejected() {
        let g = SphericalGrid::new(5, 9).unwrap();
        assert!(matches!(HarmonicBasis::new(3, g), Err(Error::Config(_))));
    }

    #[test]
    fn constant_and_cosine_analysis() {
        let b = HarmonicBasis::for_degree(6);
        let ones = vec![C64::new(1.0, 0.0); b.grid().len()];
        let f = b.analyze(&ones, 6).unwrap();
        assert!((f.get(0, 0) - 1.0).norm() < 1e-13);
        assert!(f.coeffs()[1..].iter().all(|c| c.norm() < 1e-13));

        let g = b.grid();
        let mut cosine = Vec::with_capacity(g.len());
        for i in 0..g.n_lat() {
            for _ in 0..g.n_lon() {
                cosine.push(C64::new(3f64.sqrt() * g.cos_theta()[i], 0.0));
            }
        }
        let f = b.analyze(&cosine, 6).unwrap();
        for n in 0..=6 {
            for k in -(n as i64)..=n as i64 {
                let expected = if (n, k) == (1, 0) { 1.0 } else { 0.0 };
                assert!((f.get(n, k) - expected).norm() < 1e-10, "({n},{k})");
            }
        }
    }

    #[test]
    fn orthogonality_of_mixed_modes() {
        let b = HarmonicBasis::for_degree(4);
        let g = b.grid();
        let u = b.mode_samples(2, 1);
        let v = b.mode_samples(2, -1);
        let prod: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
        assert!(g.integrate_real(&prod).abs() < 1e-14);
    }
}
