//! Spectral fields, projections, norms and the binary snapshot format.

use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::harmonics::{coeff_count, coeff_index, eigenvalue_sq, HarmonicBasis};

type C64 = Complex64;

const SNAPSHOT_MAGIC: &[u8; 4] = b"SNLS";
const SNAPSHOT_VERSION: u32 = 1;

/// Coefficients `c_{n,k}`, `0 ≤ n ≤ n_max`, `|k| ≤ n`, stored by degree
/// with k ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    n_max: usize,
    coeffs: Vec<C64>,
}

/// Spectral projection kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// π_n: degree n only.
    Degree(usize),
    /// Π_N: degrees ≤ N.
    LowPass(usize),
    /// Π_N^⊥ = 1 − Π_N.
    HighPass(usize),
    /// P_N = Π_N − Π_{N/2} (integer halving, so P_1 = π_1).
    Dyadic(usize),
}

impl Projection {
    /// Whether degree `n` survives the projection.
    pub fn keeps(&self, n: usize) -> bool {
        match *self {
            Projection::Degree(m) => n == m,
            Projection::LowPass(m) => n <= m,
            Projection::HighPass(m) => n > m,
            Projection::Dyadic(m) => n <= m && n > m / 2,
        }
    }
}

impl SpectralField {
    pub fn zeros(n_max: usize) -> Self {
        Self { n_max, coeffs: vec![C64::new(0.0, 0.0); coeff_count(n_max)] }
    }

    pub fn from_coeffs(n_max: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != coeff_count(n_max) {
            return Err(Error::Input(format!(
                "degree {n_max} needs {} coefficients, got {}",
                coeff_count(n_max),
                coeffs.len()
            )));
        }
        Ok(Self { n_max, coeffs })
    }

    /// The constant field `c·1`.
    pub fn constant(n_max: usize, c: C64) -> Self {
        let mut f = Self::zeros(n_max);
        f.coeffs[0] = c;
        f
    }

    /// A single basis mode `b_{n,k}`.
    pub fn mode(n_max: usize, n: usize, k: i64) -> Self {
        let mut f = Self::zeros(n_max);
        f.set(n, k, C64::new(1.0, 0.0));
        f
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    /// `c_{n,k}`, zero when `n` is beyond the stored range.
    pub fn get(&self, n: usize, k: i64) -> C64 {
        if n > self.n_max {
            return C64::new(0.0, 0.0);
        }
        self.coeffs[coeff_index(n, k)]
    }

    pub fn set(&mut self, n: usize, k: i64, value: C64) {
        let idx = coeff_index(n, k);
        self.coeffs[idx] = value;
    }

    /// Coefficients of degree n (length 2n+1), or an empty slice if absent.
    pub fn degree(&self, n: usize) -> &[C64] {
        if n > self.n_max {
            return &[];
        }
        &self.coeffs[n * n..(n + 1) * (n + 1)]
    }

    pub fn degree_mut(&mut self, n: usize) -> &mut [C64] {
        &mut self.coeffs[n * n..(n + 1) * (n + 1)]
    }

    /// Copy with degree bound `n_max`, truncating or zero-padding.
    pub fn resized(&self, n_max: usize) -> Self {
        let mut out = Self::zeros(n_max);
        let len = coeff_count(n_max.min(self.n_max));
        out.coeffs[..len].copy_from_slice(&self.coeffs[..len]);
        out
    }

    /// Applies a projection, keeping the degree bound.
    pub fn project(&self, kind: Projection) -> Self {
        let mut out = self.clone();
        for n in 0..=self.n_max {
            if !kind.keeps(n) {
                out.degree_mut(n).fill(C64::new(0.0, 0.0));
            }
        }
        out
    }

    /// ‖π_n f‖²_{L²}.
    pub fn degree_mass(&self, n: usize) -> f64 {
        self.degree(n).iter().map(|c| c.norm_sqr()).sum()
    }

    /// ‖f‖_{L²} from the coefficients (Parseval).
    pub fn norm_l2(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// (Σ_n λ_n^{2s} ‖π_n f‖²)^{1/2}, the H^s norm used throughout.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        (0..=self.n_max).map(|n| (eigenvalue_sq(n) as f64).powf(s) * self.degree_mass(n)).sum::<f64>().sqrt()
    }

    /// ⟨f|g⟩ = ∫ f ḡ. Degrees present in only one field contribute nothing.
    pub fn inner(&self, other: &SpectralField) -> C64 {
        let len = coeff_count(self.n_max.min(other.n_max));
        self.coeffs[..len].iter().zip(&other.coeffs[..len]).map(|(a, b)| a * b.conj()).sum()
    }

    /// Largest coefficient difference, after padding to a common degree.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        let n = self.n_max.max(other.n_max);
        let a = self.resized(n);
        let b = other.resized(n);
        a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    /// ‖f − g‖_{L²} after padding to a common degree.
    pub fn distance(&self, other: &SpectralField) -> f64 {
        let n = self.n_max.max(other.n_max);
        (&self.resized(n) - &other.resized(n)).norm_l2()
    }

    pub fn conj(&self) -> Self {
        Self { n_max: self.n_max, coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { n_max: self.n_max, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// `self += a·other`, padding `other` if needed; `other` must not exceed
    /// `self`'s degree.
    pub fn axpy(&mut self, a: C64, other: &SpectralField) {
        assert!(other.n_max <= self.n_max, "axpy: degree {} into {}", other.n_max, self.n_max);
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// L^p norm by grid quadrature; `p = ∞` returns the grid maximum, a
    /// lower bound of the true supremum.
    pub fn lp_norm(&self, p: f64, basis: &HarmonicBasis) -> Result<f64> {
        let values = basis.synthesize(self)?;
        lp_norm_samples(&values, p, basis)
    }

    /// ⟨f|g⟩ by grid quadrature (cross-check of [`SpectralField::inner`]).
    pub fn inner_quadrature(&self, other: &SpectralField, basis: &HarmonicBasis) -> Result<C64> {
        let a = basis.synthesize(self)?;
        let b = basis.synthesize(other)?;
        let prod: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y.conj()).collect();
        Ok(basis.grid().integrate(&prod))
    }

    /// Writes the binary snapshot: `SNLS`, u32 version, u32 N_max, then the
    /// coefficients as little-endian f64 (re, im) pairs.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_max as u32).to_le_bytes())?;
        for c in &self.coeffs {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Input("not a field snapshot (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Input(format!("unsupported snapshot version {version}")));
        }
        r.read_exact(&mut word)?;
        let n_max = u32::from_le_bytes(word) as usize;
        let mut coeffs = Vec::with_capacity(coeff_count(n_max));
        let mut buf = [0u8; 8];
        for _ in 0..coeff_count(n_max) {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf);
            r.read_exact(&mut buf)?;
            let im = f64::from_le_bytes(buf);
            coeffs.push(C64::new(re, im));
        }
        Ok(Self { n_max, coeffs })
    }
}

/// L^p norm of grid samples under the normalized measure.
pub fn lp_norm_samples(values: &[C64], p: f64, basis: &HarmonicBasis) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Input(format!("L^p exponent must be ≥ 1, got {p}")));
    }
    if values.len() != basis.grid().len() {
        return Err(Error::Input("sample count does not match grid".into()));
    }
    if p.is_infinite() {
        return Ok(values.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    let pw: Vec<f64> = values.iter().map(|v| v.norm().powf(p)).collect();
    Ok(basis.grid().integrate_real(&pw).powf(1.0 / p))
}

fn zip_padded(a: &SpectralField, b: &SpectralField, op: impl Fn(C64, C64) -> C64) -> SpectralField {
    let n = a.n_max.max(b.n_max);
    let mut out = a.resized(n);
    let len = coeff_count(b.n_max);
    for (x, y) in out.coeffs[..len].iter_mut().zip(&b.coeffs) {
        *x = op(*x, *y);
    }
    if b.n_max < n {
        // degrees only in `a` see op(x, 0)
        for x in out.coeffs[len..].iter_mut() {
            *x = op(*x, C64::new(0.0, 0.0));
        }
    }
    out
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        zip_padded(self, rhs, |a, b| a + b)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        zip_padded(self, rhs, |a, b| a - b)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul<C64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: C64) -> SpectralField {
        self.scale(rhs)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl MulAssign<C64> for SpectralField {
    fn mul_assign(&mut self, rhs: C64) {
        for c in &mut self.coeffs {
            *c *= rhs;
        }
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        if rhs.n_max > self.n_max {
            *self = self.resized(rhs.n_max);
        }
        self.axpy(C64::new(1.0, 0.0), rhs);
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        if rhs.n_max > self.n_max {
            *self = self.resized(rhs.n_max);
        }
        self.axpy(C64::new(-1.0, 0.0), rhs);
    }
}
