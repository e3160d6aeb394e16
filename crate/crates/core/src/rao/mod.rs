//! Random averaging operators.
//!
//! For a shell `N/2 < n ≤ N` the operator `H_n(t)` on `E_n` propagates
//! `(i∂_t − λ_n²)b = 2π_n(b · V)` with the Wick square
//! `V = |u_{N/2}|² − ‖u_{N/2}‖²` of the previous truncation. `V` is real,
//! so the potential matrix `P_{ℓk} = ⟨b_k V, b_ℓ⟩` is real symmetric and
//! `H_n(t)` is unitary. Matrices are stored row-major with column `k`
//! holding the evolved `b_{n,k}`.

mod ladder;
mod remainder;

pub use ladder::{
    ansatz_ladder, direct_solution, AnsatzRecord, DiagnosticParams, LadderParams, OperatorNorms, ShellDiagnostics,
    ShellRecord, MAX_LADDER_DEGREE,
};
pub use remainder::{remainder_solve, RemainderOptions, RemainderOutcome, RemainderResult, RhsForm};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_nls_on, FieldTrajectory, ProjectionMode, TimeGrid};
use crate::error::{Error, Result};
use crate::fields::{Projection, SpectralField};
use crate::harmonics::{eigenspace_dim, eigenvalue_sq, lambda, HarmonicBasis};
use crate::stochastic::{ks_critical_1pct, ks_statistic, GaussianStream};

type C64 = Complex64;

/// Default bound on `‖H H* − I‖_F`.
pub const UNITARITY_TOL: f64 = 1e-6;

/// Ring-Fourier data of a real potential at every node of a time grid:
/// `C_i(m) = ⟨V cos mφ⟩_i` and `S_i(m) = ⟨V sin mφ⟩_i` for `m ≤ 2N`.
#[derive(Clone, Debug)]
pub struct PotentialTrack {
    pub grid: TimeGrid,
    pub shell: usize,
    n_lat: usize,
    m_max: usize,
    ring_weight: Vec<f64>,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

impl PotentialTrack {
    /// Builds the track from real grid samples of the potential per node.
    pub fn from_samples(
        grid: TimeGrid,
        shell: usize,
        basis: &HarmonicBasis,
        samples: impl Fn(usize) -> Result<Vec<f64>> + Sync,
    ) -> Result<Self> {
        if basis.n_max() < shell {
            return Err(Error::Config(format!("basis degree {} cannot resolve shell {shell}", basis.n_max())));
        }
        let g = basis.grid();
        let m_max = 2 * shell;
        let (n_lat, n_lon) = (g.n_lat(), g.n_lon());
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..grid.len)
            .into_par_iter()
            .map(|node| {
                let v: Vec<C64> = samples(node)?.into_iter().map(|x| C64::new(x, 0.0)).collect();
                let spec = basis.ring_spectrum(&v)?;
                let mut c = Vec::with_capacity(n_lat * (m_max + 1));
                let mut s = Vec::with_capacity(n_lat * (m_max + 1));
                for i in 0..n_lat {
                    for m in 0..=m_max {
                        let f = spec[i * n_lon + m];
                        c.push(f.re);
                        s.push(-f.im);
                    }
                }
                Ok((c, s))
            })
            .collect::<Result<_>>()?;
        let (cos, sin) = rows.into_iter().unzip();
        Ok(Self { grid, shell, n_lat, m_max, ring_weight: g.ring_weights().to_vec(), cos, sin })
    }

    /// `V = |u|² − ‖u‖²` from the previous truncation.
    pub fn wick_square(u_half: &FieldTrajectory, shell: usize, basis: &HarmonicBasis) -> Result<Self> {
        if 2 * u_half.n_max > shell.max(1) {
            return Err(Error::Input(format!("potential of degree {} does not belong to shell {shell}", u_half.n_max)));
        }
        Self::from_samples(u_half.grid, shell, basis, |node| {
            let u = &u_half.snapshots[node];
            let m = u.norm_sqr();
            Ok(basis.synthesize(u)?.iter().map(|z| z.norm_sqr() - m).collect())
        })
    }

    /// A spatially constant potential `v(t)`.
    pub fn spatially_constant(
        grid: TimeGrid,
        shell: usize,
        basis: &HarmonicBasis,
        v: impl Fn(f64) -> f64 + Sync,
    ) -> Result<Self> {
        let len = basis.grid().len();
        Self::from_samples(grid, shell, basis, |node| Ok(vec![v(grid.t(node)); len]))
    }

    /// Real symmetric `(2n+1)²` matrix of `f ↦ π_n(f V)` at a node,
    /// row-major in the local index `k + n`.
    pub fn matrix(&self, node: usize, legendre: &LegendreColumn) -> Vec<f64> {
        let n = legendre.n;
        let d = 2 * n + 1;
        let stride = self.m_max + 1;
        let (cs, sn) = (&self.cos[node], &self.sin[node]);
        let mut p = vec![0.0; d * d];
        let r2 = std::f64::consts::SQRT_2;
        for a in 0..=n {
            for c in 0..=n {
                let (mut cd, mut csum, mut sd, mut ssum) = (0.0, 0.0, 0.0, 0.0);
                let diff = a.abs_diff(c);
                let sign = if a >= c { 1.0 } else { -1.0 };
                for i in 0..self.n_lat {
                    let base = self.ring_weight[i] * legendre.q(i, a) * legendre.q(i, c);
                    let row = i * stride;
                    cd += base * cs[row + diff];
                    csum += base * cs[row + a + c];
                    sd += sign * base * sn[row + diff];
                    ssum += base * sn[row + a + c];
                }
                let (pa, ma, pc, mc) = (n + a, n - a, n + c, n - c);
                if a == 0 && c == 0 {
                    p[n * d + n] = cd;
                } else if a == 0 {
                    p[n * d + pc] = r2 * csum;
                    p[n * d + mc] = r2 * ssum;
                } else if c == 0 {
                    p[pa * d + n] = r2 * csum;
                    p[ma * d + n] = r2 * ssum;
                } else {
                    p[pa * d + pc] = cd + csum;
                    p[ma * d + mc] = cd - csum;
                    p[pa * d + mc] = ssum - sd;
                    p[ma * d + pc] = ssum + sd;
                }
            }
        }
        p
    }
}

/// Legendre factors `Q_n^m` on every ring for one degree.
#[derive(Clone, Debug)]
pub struct LegendreColumn {
    pub n: usize,
    values: Vec<f64>,
}

impl LegendreColumn {
    pub fn new(basis: &HarmonicBasis, n: usize) -> Self {
        let n_lat = basis.grid().n_lat();
        let values =
            (0..n_lat).flat_map(|i| (0..=n).map(move |m| (i, m))).map(|(i, m)| basis.legendre_at(i, n, m)).collect();
        Self { n, values }
    }

    #[inline]
    fn q(&self, ring: usize, m: usize) -> f64 {
        self.values[ring * (self.n + 1) + m]
    }
}

/// `out = alpha · P · X` for `d × d` row-major matrices.
fn gemm(d: usize, alpha: f64, p: &[f64], x: &[f64], beta: f64, out: &mut [f64]) {
    // SAFETY: all three slices hold d*d elements laid out row-major.
    unsafe {
        matrixmultiply::dgemm(
            d,
            d,
            d,
            alpha,
            p.as_ptr(),
            d as isize,
            1,
            x.as_ptr(),
            d as isize,
            1,
            beta,
            out.as_mut_ptr(),
            d as isize,
            1,
        );
    }
}

/// `‖A A* − I‖_F` for `A = X + iY`.
fn unitarity_defect_parts(d: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut re = vec![0.0; d * d];
    let mut im = vec![0.0; d * d];
    // SAFETY: row-major d×d inputs; the transposes are read through swapped strides.
    unsafe {
        let (di, one) = (d as isize, 1isize);
        matrixmultiply::dgemm(d, d, d, 1.0, x.as_ptr(), di, one, x.as_ptr(), one, di, 0.0, re.as_mut_ptr(), di, one);
        matrixmultiply::dgemm(d, d, d, 1.0, y.as_ptr(), di, one, y.as_ptr(), one, di, 1.0, re.as_mut_ptr(), di, one);
        matrixmultiply::dgemm(d, d, d, 1.0, y.as_ptr(), di, one, x.as_ptr(), one, di, 0.0, im.as_mut_ptr(), di, one);
        matrixmultiply::dgemm(d, d, d, -1.0, x.as_ptr(), di, one, y.as_ptr(), one, di, 1.0, im.as_mut_ptr(), di, one);
    }
    for a in 0..d {
        re[a * d + a] -= 1.0;
    }
    re.iter().chain(&im).map(|v| v * v).sum::<f64>().sqrt()
}

/// `H_n(t)` for one degree of a shell on every node of the potential grid.
#[derive(Clone, Debug)]
pub struct RaoShellEntry {
    pub n: usize,
    pub shell: usize,
    pub grid: TimeGrid,
    /// Row-major `(2n+1)²` matrix per node.
    pub h: Vec<Vec<C64>>,
    /// Largest `‖H H* − I‖_F` over the grid.
    pub max_unitarity: f64,
}

impl RaoShellEntry {
    pub fn dim(&self) -> usize {
        eigenspace_dim(self.n)
    }

    /// `H(t_node)` applied to the degree-`n` coefficients `e`.
    pub fn apply(&self, node: usize, e: &[C64]) -> Vec<C64> {
        let d = self.dim();
        let h = &self.h[node];
        (0..d).map(|a| (0..d).map(|b| h[a * d + b] * e[b]).sum()).collect()
    }

    /// `‖H H* − I‖_F` (rows) and `‖H* H − I‖_F` (columns) at a node.
    pub fn orthonormality_defects(&self, node: usize) -> (f64, f64) {
        let d = self.dim();
        let h = &self.h[node];
        let mut rows: f64 = 0.0;
        let mut cols: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let delta = if a == b { 1.0 } else { 0.0 };
                let r: C64 = (0..d).map(|k| h[a * d + k] * h[b * d + k].conj()).sum();
                let c: C64 = (0..d).map(|k| h[k * d + a].conj() * h[k * d + b]).sum();
                rows += (r - delta).norm_sqr();
                cols += (c - delta).norm_sqr();
            }
        }
        (rows.sqrt(), cols.sqrt())
    }

    /// `h = H − e^{−itλ_n²}I` per node, the deviation from free evolution.
    pub fn deviation(&self) -> Vec<Vec<C64>> {
        let d = self.dim();
        let lam2 = eigenvalue_sq(self.n) as f64;
        self.h
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut out = m.clone();
                let phase = C64::from_polar(1.0, -self.grid.t(i) * lam2);
                for a in 0..d {
                    out[a * d + a] -= phase;
                }
                out
            })
            .collect()
    }

    /// Each matrix multiplied by `χ(t)`.
    pub fn cutoff(mats: &[Vec<C64>], grid: &TimeGrid, chi: impl Fn(f64) -> f64) -> Vec<Vec<C64>> {
        mats.iter().enumerate().map(|(i, m)| m.iter().map(|z| z * chi(grid.t(i))).collect()).collect()
    }
}

/// Integrates `H_n` for one degree of the shell.
///
/// In the interaction picture `H = e^{−itλ_n²}A` with `A' = −2iPA`; the
/// real and imaginary parts `A = X + iY` obey `X' = 2PY`, `Y' = −2PX`.
/// RK4 steps of `2h` use the potential at both ends and the midpoint, and
/// the midpoint node itself is filled by cubic Hermite interpolation.
pub fn rao_solve(n: usize, track: &PotentialTrack, basis: &HarmonicBasis, tol: f64) -> Result<RaoShellEntry> {
    let shell = track.shell;
    if !(2 * n > shell && n <= shell) {
        return Err(Error::Input(format!("degree {n} is not in shell {shell}")));
    }
    let grid = track.grid;
    let (ahead, behind) = (grid.len - 1 - grid.origin, grid.origin);
    if ahead % 2 != 0 || behind % 2 != 0 {
        return Err(Error::Input("the grid must hold whole dt steps on both sides of its origin".into()));
    }
    let legendre = LegendreColumn::new(basis, n);
    let d = 2 * n + 1;
    let lam2 = eigenvalue_sq(n) as f64;

    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); grid.len];
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); grid.len];
    let mut identity = vec![0.0; d * d];
    (0..d).for_each(|a| identity[a * d + a] = 1.0);
    xs[grid.origin] = identity;
    ys[grid.origin] = vec![0.0; d * d];

    // (X', Y') = (2PY, −2PX)
    let deriv = |p: &[f64], x: &[f64], y: &[f64]| {
        let mut dx = vec![0.0; d * d];
        let mut dy = vec![0.0; d * d];
        gemm(d, 2.0, p, y, 0.0, &mut dx);
        gemm(d, -2.0, p, x, 0.0, &mut dy);
        (dx, dy)
    };
    let comb = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + s * v).collect() };

    let mut max_defect: f64 = 0.0;
    for dir in [1i64, -1] {
        let tau = 2.0 * grid.h * dir as f64;
        let count = if dir > 0 { ahead / 2 } else { behind / 2 };
        let mut j = grid.origin as i64;
        let mut p0 = track.matrix(j as usize, &legendre);
        for _ in 0..count {
            let (j1, j2) = ((j + dir) as usize, (j + 2 * dir) as usize);
            let p1 = track.matrix(j1, &legendre);
            let p2 = track.matrix(j2, &legendre);
            let (x, y) = (&xs[j as usize], &ys[j as usize]);
            let k1 = deriv(&p0, x, y);
            let k2 = deriv(&p1, &comb(x, tau / 2.0, &k1.0), &comb(y, tau / 2.0, &k1.1));
            let k3 = deriv(&p1, &comb(x, tau / 2.0, &k2.0), &comb(y, tau / 2.0, &k2.1));
            let k4 = deriv(&p2, &comb(x, tau, &k3.0), &comb(y, tau, &k3.1));
            let step = |a: &[f64], s: [&Vec<f64>; 4]| -> Vec<f64> {
                (0..d * d).map(|e| a[e] + tau / 6.0 * (s[0][e] + 2.0 * s[1][e] + 2.0 * s[2][e] + s[3][e])).collect()
            };
            let x2 = step(x, [&k1.0, &k2.0, &k3.0, &k4.0]);
            let y2 = step(y, [&k1.1, &k2.1, &k3.1, &k4.1]);
            let end = deriv(&p2, &x2, &y2);
            let hermite = |a0: &[f64], a2: &[f64], d0: &[f64], d2: &[f64]| -> Vec<f64> {
                (0..d * d).map(|e| 0.5 * (a0[e] + a2[e]) + tau / 8.0 * (d0[e] - d2[e])).collect()
            };
            xs[j1] = hermite(x, &x2, &k1.0, &end.0);
            ys[j1] = hermite(y, &y2, &k1.1, &end.1);
            xs[j2] = x2;
            ys[j2] = y2;
            for node in [j1, j2] {
                let defect = unitarity_defect_parts(d, &xs[node], &ys[node]);
                if !defect.is_finite() || defect > 10.0 * tol {
                    return Err(Error::Unitarity { n, node, drift: defect });
                }
                max_defect = max_defect.max(defect);
            }
            p0 = p2;
            j += 2 * dir;
        }
    }

    let h = (0..grid.len)
        .map(|i| {
            let phase = C64::from_polar(1.0, -grid.t(i) * lam2);
            xs[i].iter().zip(&ys[i]).map(|(x, y)| C64::new(*x, *y) * phase).collect()
        })
        .collect();
    Ok(RaoShellEntry { n, shell, grid, h, max_unitarity: max_defect })
}

/// All degrees of a shell.
#[derive(Clone, Debug)]
pub struct RaoTrajectory {
    pub shell: usize,
    pub entries: Vec<RaoShellEntry>,
}

impl RaoTrajectory {
    pub fn degrees(shell: usize) -> std::ops::RangeInclusive<usize> {
        shell / 2 + 1..=shell
    }

    pub fn max_unitarity(&self) -> f64 {
        self.entries.iter().map(|e| e.max_unitarity).fold(0.0, f64::max)
    }

    pub fn entry(&self, n: usize) -> Option<&RaoShellEntry> {
        self.entries.iter().find(|e| e.n == n)
    }
}

/// Solves every degree of the shell driven by `u_half`, in parallel over `n`.
pub fn rao_shell(shell: usize, u_half: &FieldTrajectory, basis: &HarmonicBasis, tol: f64) -> Result<RaoTrajectory> {
    let track = PotentialTrack::wick_square(u_half, shell, basis)?;
    rao_shell_with(&track, basis, tol)
}

pub fn rao_shell_with(track: &PotentialTrack, basis: &HarmonicBasis, tol: f64) -> Result<RaoTrajectory> {
    let entries = RaoTrajectory::degrees(track.shell)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|n| rao_solve(n, track, basis, tol))
        .collect::<Result<_>>()?;
    Ok(RaoTrajectory { shell: track.shell, entries })
}

/// Degree weights of a colored field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "alpha")]
pub enum ColorWeights {
    /// `λ_n^{−(α−½)}`.
    Literal(f64),
    /// `λ_n^{−α}√(2n+1)`, so that unit-variance inputs `e_n` reproduce
    /// the degree-n part of `φ_α` at `t = 0`.
    MatchPhiAlpha(f64),
}

impl ColorWeights {
    pub fn weight(&self, n: usize) -> f64 {
        match *self {
            Self::Literal(a) => lambda(n).powf(-(a - 0.5)),
            Self::MatchPhiAlpha(a) => lambda(n).powf(-a) * (eigenspace_dim(n) as f64).sqrt(),
        }
    }
}

/// `ψ(t) = Σ_n w_n H_n(t) e_n` over the shell; `inputs[i]` carries degree
/// `N/2 + 1 + i`.
pub fn colored_field(rao: &RaoTrajectory, inputs: &[SpectralField], weights: ColorWeights) -> Result<FieldTrajectory> {
    if inputs.len() != rao.entries.len() {
        return Err(Error::Input(format!("{} inputs for a shell of {} degrees", inputs.len(), rao.entries.len())));
    }
    let grid = rao.entries.first().map(|e| e.grid).ok_or_else(|| Error::Input("empty shell".into()))?;
    for (e, f) in rao.entries.iter().zip(inputs) {
        if f.n_max() < e.n {
            return Err(Error::Input(format!("input of degree {} lacks degree {}", f.n_max(), e.n)));
        }
    }
    Ok(FieldTrajectory::from_fn(grid, rao.shell, |node, _| {
        let mut psi = SpectralField::zeros(rao.shell);
        for (e, f) in rao.entries.iter().zip(inputs) {
            let w = weights.weight(e.n);
            for (c, v) in psi.degree_mut(e.n).iter_mut().zip(e.apply(node, f.degree(e.n))) {
                *c = v * w;
            }
        }
        psi
    }))
}

/// Largest pointwise residual of the Wick-square expansion of
/// `e_n(t) = H_n(t)e_n` at time `t`:
/// `|e|² − ‖e‖² = Σ_{ℓ≠ℓ′} z_ℓ y_ℓ conj(z_ℓ′ y_ℓ′) + Σ_ℓ |z_ℓ|²(|g_ℓ|²−1)/(2n+1) − Σ_ℓ (|g_ℓ|²−1)/(2n+1)`
/// with `z_ℓ = H b_ℓ`, `g = √(2n+1) e_n` and `y = g/√(2n+1)`.
pub fn wick_cancellation_residual(
    entry: &RaoShellEntry,
    e_n: &SpectralField,
    t: f64,
    basis: &HarmonicBasis,
) -> Result<f64> {
    let node = entry.grid.index_of(t).ok_or_else(|| Error::Input(format!("t = {t} is not a grid node")))?;
    let n = entry.n;
    let d = entry.dim();
    let dim = d as f64;
    let y = e_n.degree(n);
    let g2: Vec<f64> = y.iter().map(|v| v.norm_sqr() * dim).collect();
    let h = &entry.h[node];

    let mut e = SpectralField::zeros(n);
    e.degree_mut(n).copy_from_slice(&entry.apply(node, y));
    let ev = basis.synthesize(&e)?;
    let mass = e.norm_sqr();

    let z: Vec<Vec<C64>> = (0..d)
        .map(|l| {
            let mut col = SpectralField::zeros(n);
            for (k, c) in col.degree_mut(n).iter_mut().enumerate() {
                *c = h[k * d + l];
            }
            basis.synthesize(&col)
        })
        .collect::<Result<_>>()?;
    let constant: f64 = -g2.iter().map(|g| (g - 1.0) / dim).sum::<f64>();

    let mut worst: f64 = 0.0;
    for x in 0..ev.len() {
        let lhs = ev[x].norm_sqr() - mass;
        let zy: Vec<C64> = (0..d).map(|l| z[l][x] * y[l]).collect();
        let mut rhs = C64::new(constant, 0.0);
        for l in 0..d {
            for lp in 0..d {
                if l != lp {
                    rhs += zy[l] * zy[lp].conj();
                }
            }
            rhs += z[l][x].norm_sqr() * (g2[l] - 1.0) / dim;
        }
        worst = worst.max((rhs - lhs).norm());
    }
    Ok(worst)
}

/// Parameters of the law-invariance experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawParams {
    pub n: usize,
    pub shell: usize,
    pub t: f64,
    pub dt: f64,
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
    /// Scale of the low-degree data driving the potential (0 switches it off).
    pub amplitude: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawReport {
    pub n: usize,
    pub t: f64,
    pub samples: usize,
    /// Largest `|mean|` of a scaled coordinate.
    pub mean_max: f64,
    pub mean_bound: f64,
    /// Largest `|E|c_k|² − 1|`.
    pub cov_diag_max_dev: f64,
    pub cov_bound: f64,
    /// Largest off-diagonal `|E c_k c̄_j|`, for information.
    pub cov_offdiag_max: f64,
    pub ks: f64,
    pub ks_critical: f64,
    pub passed: bool,
}

/// Minimum ensemble accepted by [`law_invariance_stat`].
pub const LAW_MIN_SAMPLES: usize = 200;

/// Fixed evaluation point `(θ, φ)` of the KS comparison.
const LAW_POINT: (f64, f64) = (1.0, 0.7);

/// Streams: sample `i` draws its low-degree data and its shell Gaussians
/// from `(seed, i·2¹⁶ + degree)`; the reference ensemble at `t = 0` uses
/// the same layout with the top bit set, so the two are independent.
fn law_stream(seed: u64, sample: usize, degree: usize, reference: bool) -> GaussianStream {
    let id = ((sample as u64) << 16) | degree as u64 | if reference { 1 << 63 } else { 0 };
    GaussianStream::new(seed, id)
}

/// Scaled coordinates `c = √(2n+1) H_n(t) e_n` and the evaluation `|e_n(t,x₀)|²`
/// over an ensemble whose potentials are built from independent low-degree
/// data; compares them to the Gaussian law of `e_n(0)`.
pub fn law_invariance_stat(params: &LawParams) -> Result<LawReport> {
    let LawParams { n, shell, t, dt, alpha, samples, seed, amplitude } = *params;
    if samples < LAW_MIN_SAMPLES {
        return Err(Error::Input(format!("{samples} samples are too few for the law test (need ≥ {LAW_MIN_SAMPLES})")));
    }
    if !(2 * n > shell && n <= shell) {
        return Err(Error::Input(format!("degree {n} is not in shell {shell}")));
    }
    let half = shell / 2;
    let d = eigenspace_dim(n);
    let grid = TimeGrid::forward(t, dt)?;
    let last = grid.len - 1;
    let basis = HarmonicBasis::for_degree(shell);
    let half_basis = HarmonicBasis::for_degree(half);
    let point: Vec<f64> =
        (-(n as i64)..=n as i64).map(|k| HarmonicBasis::eval_at(n, k, LAW_POINT.0, LAW_POINT.1)).collect();
    let at_point = |c: &[C64]| -> f64 { (c.iter().zip(&point).map(|(a, b)| a * b).sum::<C64>()).norm_sqr() / d as f64 };

    let coords: Vec<Vec<C64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut phi = SpectralField::zeros(half);
            for deg in 0..=half {
                let mut s = law_stream(seed, i, deg, false);
                let w = amplitude * lambda(deg).powf(-alpha);
                for c in phi.degree_mut(deg) {
                    *c = s.complex_gaussian() * w;
                }
            }
            let u_half = evolve_nls_on(&phi, half, grid, &half_basis, ProjectionMode::ProjectEachStep)?;
            let track = PotentialTrack::wick_square(&u_half, shell, &basis)?;
            let entry = rao_solve(n, &track, &basis, UNITARITY_TOL)?;
            let g = law_stream(seed, i, n, false).sample_complex_gaussians(d);
            Ok(entry.apply(last, &g))
        })
        .collect::<Result<_>>()
        .map_err(|e| Error::Sample { index: 0, source: Box::new(e) })?;
    let reference: Vec<f64> =
        (0..samples).map(|i| at_point(&law_stream(seed, i, n, true).sample_complex_gaussians(d))).collect();

    let m = samples as f64;
    let mut mean_max: f64 = 0.0;
    let mut cov_diag_max_dev: f64 = 0.0;
    let mut cov_offdiag_max: f64 = 0.0;
    for a in 0..d {
        let mean: C64 = coords.iter().map(|c| c[a]).sum::<C64>() / m;
        mean_max = mean_max.max(mean.norm());
        for b in 0..d {
            let cov: C64 = coords.iter().map(|c| c[a] * c[b].conj()).sum::<C64>() / m;
            if a == b {
                cov_diag_max_dev = cov_diag_max_dev.max((cov.re - 1.0).abs());
            } else {
                cov_offdiag_max = cov_offdiag_max.max(cov.norm());
            }
        }
    }
    let values: Vec<f64> = coords.iter().map(|c| at_point(c)).collect();
    let ks = ks_statistic(&values, &reference);
    let ks_critical = ks_critical_1pct(samples, samples);
    let mean_bound = 5.0 / m.sqrt();
    let cov_bound = 5.0 * (2.0 / m).sqrt();
    Ok(LawReport {
        n,
        t,
        samples,
        mean_max,
        mean_bound,
        cov_diag_max_dev,
        cov_bound,
        cov_offdiag_max,
        ks,
        ks_critical,
        passed: mean_max < mean_bound && cov_diag_max_dev < cov_bound && ks < ks_critical,
    })
}

/// `Π_N` of a field, resized to the shell degree.
pub(crate) fn low_pass(f: &SpectralField, n: usize, n_max: usize) -> SpectralField {
    f.project(Projection::LowPass(n)).resized(n_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{sample_e_n, sample_phi_alpha_by_degree};

    fn driven_shell(shell: usize, t: f64, dt: f64, seed: u64) -> (FieldTrajectory, HarmonicBasis) {
        let half = shell / 2;
        let phi = sample_phi_alpha_by_degree(seed, 1.5, half);
        let grid = TimeGrid::forward(t, dt).unwrap();
        let u =
            evolve_nls_on(&phi, half, grid, &HarmonicBasis::for_degree(half), ProjectionMode::ProjectEachStep).unwrap();
        (u, HarmonicBasis::for_degree(shell))
    }

    #[test]
    fn potential_matrix_matches_quadrature() {
        let (u, basis) = driven_shell(6, 0.01, 1e-3, 4);
        let track = PotentialTrack::wick_square(&u, 6, &basis).unwrap();
        let n = 5;
        let p = track.matrix(3, &LegendreColumn::new(&basis, n));
        let snap = &u.snapshots[3];
        let m = snap.norm_sqr();
        let v: Vec<C64> = basis.synthesize(snap).unwrap().iter().map(|z| C64::new(z.norm_sqr() - m, 0.0)).collect();
        let d = 2 * n + 1;
        for k in 0..d {
            let bk = SpectralField::mode(n, n, k as i64 - n as i64);
            let vals = basis.synthesize(&bk).unwrap();
            let prod: Vec<C64> = vals.iter().zip(&v).map(|(a, b)| a * b).collect();
            let col = basis.analyze_degrees(&prod, n, n).unwrap();
            for l in 0..d {
                assert!((col.degree(n)[l].re - p[l * d + k]).abs() < 1e-12);
                assert!((p[l * d + k] - p[k * d + l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_potential_is_free_phase() {
        let grid = TimeGrid::forward(0.1, 1e-3).unwrap();
        let u = FieldTrajectory::zeros(grid, 2);
        let basis = HarmonicBasis::for_degree(4);
        let rao = rao_shell(4, &u, &basis, UNITARITY_TOL).unwrap();
        for e in &rao.entries {
            let lam2 = eigenvalue_sq(e.n) as f64;
            let d = e.dim();
            for (i, h) in e.h.iter().enumerate() {
                let phase = C64::from_polar(1.0, -grid.t(i) * lam2);
                for a in 0..d {
                    for b in 0..d {
                        let want = if a == b { phase } else { C64::new(0.0, 0.0) };
                        assert_eq!(h[a * d + b], want);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_potential_is_scalar_phase() {
        let grid = TimeGrid::forward(0.1, 1e-3).unwrap();
        let basis = HarmonicBasis::for_degree(4);
        let track = PotentialTrack::spatially_constant(grid, 4, &basis, |t| 3.0 + 10.0 * t).unwrap();
        let e = rao_solve(4, &track, &basis, UNITARITY_TOL).unwrap();
        let lam2 = eigenvalue_sq(4) as f64;
        for (i, h) in e.h.iter().enumerate() {
            let t = grid.t(i);
            let want = C64::from_polar(1.0, -t * lam2 - 2.0 * (3.0 * t + 5.0 * t * t));
            assert!((h[0] - want).norm() < 1e-8, "node {i}");
            assert!(h[1].norm() < 1e-12);
        }
    }

    #[test]
    fn driven_rao_is_unitary_both_ways() {
        let (u, basis) = driven_shell(4, 0.1, 1e-3, 7);
        let rao = rao_shell(4, &u, &basis, UNITARITY_TOL).unwrap();
        assert!(rao.max_unitarity() < 1e-8);
        for e in &rao.entries {
            let (r, c) = e.orthonormality_defects(e.grid.len - 1);
            assert!(r < 1e-8 && c < 1e-8);
        }
    }

    #[test]
    fn solver_rejects_foreign_degree_and_odd_grid() {
        let (u, basis) = driven_shell(4, 0.01, 1e-3, 1);
        let track = PotentialTrack::wick_square(&u, 4, &basis).unwrap();
        assert!(rao_solve(2, &track, &basis, UNITARITY_TOL).is_err());
        let odd = PotentialTrack::wick_square(&u.slice(0, u.len() - 2), 4, &basis).unwrap();
        assert!(rao_solve(3, &odd, &basis, UNITARITY_TOL).is_err());
    }

    #[test]
    fn colored_field_keeps_degree_norms() {
        let (u, basis) = driven_shell(8, 0.05, 1e-3, 2);
        let rao = rao_shell(8, &u, &basis, UNITARITY_TOL).unwrap();
        let inputs: Vec<SpectralField> = RaoTrajectory::degrees(8)
            .map(|n| sample_e_n(&mut GaussianStream::new(9, n as u64), n, n).unwrap())
            .collect();
        let w = ColorWeights::Literal(1.5);
        let psi = colored_field(&rao, &inputs, w).unwrap();
        for (n, e) in RaoTrajectory::degrees(8).zip(&inputs) {
            let want = w.weight(n) * e.norm_l2();
            for s in &psi.snapshots {
                assert!((s.degree_mass(n).sqrt() - want).abs() < 1e-6);
            }
            assert!((psi.snapshots[0].degree(n)[0] - e.degree(n)[0] * w.weight(n)).norm() < 1e-15);
        }
        assert!(colored_field(&rao, &inputs[1..], w).is_err());
    }

    #[test]
    fn match_phi_weights_reproduce_data() {
        let seed = 11;
        let phi = sample_phi_alpha_by_degree(seed, 1.5, 8);
        let grid = TimeGrid::forward(0.01, 1e-3).unwrap();
        let basis = HarmonicBasis::for_degree(8);
        let rao = rao_shell(8, &FieldTrajectory::zeros(grid, 4), &basis, UNITARITY_TOL).unwrap();
        let inputs: Vec<SpectralField> = RaoTrajectory::degrees(8)
            .map(|n| sample_e_n(&mut GaussianStream::new(seed, n as u64), n, n).unwrap())
            .collect();
        let psi = colored_field(&rao, &inputs, ColorWeights::MatchPhiAlpha(1.5)).unwrap();
        let want = phi.project(Projection::Dyadic(8));
        assert!(psi.snapshots[0].max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn wick_identity_trivial_and_generic() {
        let (u, basis) = driven_shell(8, 0.05, 1e-3, 3);
        let rao = rao_shell(8, &u, &basis, UNITARITY_TOL).unwrap();
        let e = rao.entry(7).unwrap();
        let e7 = sample_e_n(&mut GaussianStream::new(5, 7), 7, 7).unwrap();
        assert!(wick_cancellation_residual(e, &e7, 0.0, &basis).unwrap() < 1e-10);
        assert!(wick_cancellation_residual(e, &e7, 0.037, &basis).unwrap() < 1e-8);
        assert!(wick_cancellation_residual(e, &e7, 0.0371, &basis).is_err());
    }

    #[test]
    fn law_test_refuses_small_ensembles() {
        let p = LawParams { n: 4, shell: 4, t: 0.01, dt: 1e-3, alpha: 1.5, samples: 199, seed: 1, amplitude: 1.0 };
        assert!(law_invariance_stat(&p).is_err());
    }

    #[test]
    fn law_test_passes_without_potential_and_at_zero() {
        let base = LawParams { n: 4, shell: 4, t: 0.02, dt: 1e-3, alpha: 1.5, samples: 400, seed: 2, amplitude: 0.0 };
        assert!(law_invariance_stat(&base).unwrap().passed);
        let at_zero = LawParams { t: 0.0, amplitude: 1.0, ..base };
        assert!(law_invariance_stat(&at_zero).unwrap().passed);
    }
}
