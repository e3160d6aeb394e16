//! Fourier-restriction norms of trajectories and operator families, the
//! time cutoff, and empirical probes of eigenfunction estimates.
//!
//! The twisted transform of `π_n F` is `F̃_n(κ) = ∫ e^{itλ_n²} π_n F(t) e^{−itκ} dt`,
//! computed by a zero-padded FFT over the nodes of a [`TimeWindow`]. The
//! κ-integrals use the measure `dκ/2π`, i.e. `1/(LΔ)` per bin for `L`
//! padded samples of spacing `Δ`, which makes the (2,2,2) norm agree with
//! the time-domain L² norm exactly (discrete Parseval).

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FieldTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::fields::SpectralField;
use crate::harmonics::{eigenspace_dim, eigenvalue_sq, HarmonicBasis, SphericalGrid};
use crate::stochastic::GaussianStream;

type C64 = Complex64;

/// Default zero-padding factor of the time-Fourier transforms.
pub const PADDING: usize = 8;

/// The cutoff `χ_T(t)`: 1 for `|t| ≤ T/2`, 0 for `|t| ≥ T`, and
/// `exp(1 − 1/(1 − ρ²))` in between with `ρ = 2|t|/T − 1`.
pub fn bump_chi(t: f64, half_width: f64) -> Result<f64> {
    if !(half_width > 0.0) {
        return Err(Error::Input(format!("cutoff width must be positive, got {half_width}")));
    }
    Ok(bump(t, half_width))
}

pub(crate) fn bump(t: f64, half_width: f64) -> f64 {
    let s = t.abs() / half_width;
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let rho = 2.0 * s - 1.0;
        (1.0 - 1.0 / (1.0 - rho * rho)).exp()
    }
}

/// The nodes of a trajectory grid inside `[−T, T]`, sampled every
/// `stride` nodes from the origin, with the cutoff values there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeWindow {
    pub half_width: f64,
    pub padding: usize,
    /// Time step between window nodes.
    pub spacing: f64,
    /// Grid indices of the window nodes in increasing time.
    pub nodes: Vec<usize>,
    pub times: Vec<f64>,
    pub chi: Vec<f64>,
}

impl TimeWindow {
    pub fn new(grid: &TimeGrid, half_width: f64, stride: usize) -> Result<Self> {
        bump_chi(0.0, half_width)?;
        let stride = stride.max(1);
        let slack = 1e-9 * grid.h.max(half_width);
        if grid.t(0) > -half_width + slack || grid.t_end() < half_width - slack {
            return Err(Error::Input(format!(
                "window [−{half_width}, {half_width}] exceeds trajectory span [{}, {}]",
                grid.t(0),
                grid.t_end()
            )));
        }
        let o = grid.origin as i64;
        let reach = ((half_width + slack) / (grid.h * stride as f64)).floor() as i64;
        let nodes: Vec<usize> = (-reach..=reach).map(|k| (o + k * stride as i64) as usize).collect();
        let times: Vec<f64> = nodes.iter().map(|&i| grid.t(i)).collect();
        let chi = times.iter().map(|&t| bump(t, half_width)).collect();
        Ok(Self { half_width, padding: PADDING, spacing: grid.h * stride as f64, nodes, times, chi })
    }

    /// Window whose node spacing is the largest multiple of `grid.h` not
    /// exceeding `target`.
    pub fn with_spacing(grid: &TimeGrid, half_width: f64, target: f64) -> Result<Self> {
        let stride = ((target / grid.h) * (1.0 + 1e-9)).floor().max(1.0) as usize;
        Self::new(grid, half_width, stride)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn padded_len(&self) -> usize {
        self.padding * self.nodes.len()
    }

    /// Measure `dκ/2π` carried by one bin.
    pub fn bin_measure(&self) -> f64 {
        1.0 / (self.padded_len() as f64 * self.spacing)
    }

    /// κ of every bin in FFT order.
    pub fn kappa(&self) -> Vec<f64> {
        let l = self.padded_len();
        let dk = 2.0 * std::f64::consts::PI / (l as f64 * self.spacing);
        (0..l).map(|m| if m < l.div_ceil(2) { m as f64 } else { m as f64 - l as f64 } * dk).collect()
    }

    /// `χ_T · traj` on the full trajectory grid.
    pub fn apply(&self, traj: &FieldTrajectory) -> FieldTrajectory {
        let t = self.half_width;
        traj.map(traj.n_max, |_, s, f| f * bump(s, t))
    }

    /// Transforms several scalar sequences sampled at the window nodes:
    /// `Δ Σ_j f_j e^{−iκ t_j}` for every bin.
    fn transform_rows(&self, rows: &mut [Vec<C64>]) {
        let l = self.padded_len();
        let fft = FftPlanner::new().plan_fft_forward(l);
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let kappa = self.kappa();
        let t0 = self.times[0];
        let shift: Vec<C64> = kappa.iter().map(|k| C64::from_polar(self.spacing, -k * t0)).collect();
        for row in rows.iter_mut() {
            row.resize(l, C64::new(0.0, 0.0));
            fft.process_with_scratch(row, &mut scratch);
            for (v, s) in row.iter_mut().zip(&shift) {
                *v *= s;
            }
        }
    }
}

fn bracket(k: f64) -> f64 {
    (1.0 + k * k).sqrt()
}

/// κ samples of the E_n-valued twisted transform.
#[derive(Clone, Debug)]
pub struct TwistedTransform {
    pub n: usize,
    pub kappa: Vec<f64>,
    /// Per bin, the `2n+1` coefficients.
    pub coeffs: Vec<Vec<C64>>,
    pub bin_measure: f64,
}

impl TwistedTransform {
    /// Index of the bin carrying the largest coefficient norm.
    pub fn peak_bin(&self) -> usize {
        let norms: Vec<f64> = self.coeffs.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect();
        (0..norms.len()).max_by(|&a, &b| norms[a].total_cmp(&norms[b])).unwrap_or(0)
    }
}

/// Twisted time-Fourier transform of `π_n F` over the window nodes.
/// No cutoff is applied here; see [`TimeWindow::apply`].
pub fn twisted_transform(traj: &FieldTrajectory, n: usize, window: &TimeWindow) -> Result<TwistedTransform> {
    if n > traj.n_max {
        return Err(Error::Input(format!("degree {n} exceeds trajectory degree {}", traj.n_max)));
    }
    if window.nodes.last().is_some_and(|&i| i >= traj.len()) {
        return Err(Error::Input("window exceeds trajectory span".into()));
    }
    let d = eigenspace_dim(n);
    let lam2 = eigenvalue_sq(n) as f64;
    let mut rows: Vec<Vec<C64>> = (0..d)
        .map(|k| {
            window
                .nodes
                .iter()
                .zip(&window.times)
                .map(|(&i, &t)| traj.snapshots[i].degree(n)[k] * C64::from_polar(1.0, t * lam2))
                .collect()
        })
        .collect();
    window.transform_rows(&mut rows);
    let l = window.padded_len();
    let coeffs = (0..l).map(|m| rows.iter().map(|r| r[m]).collect()).collect();
    Ok(TwistedTransform { n, kappa: window.kappa(), coeffs, bin_measure: window.bin_measure() })
}

/// Exponents of `X^{s,γ}_{p,q,r}`: `‖λ_n^s ⟨κ⟩^γ F̃_n(κ)‖_{ℓ^p_n L^q_κ L^r_x}`.
/// Use `f64::INFINITY` for ∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XExponents {
    pub s: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl XExponents {
    /// The Hilbert case `X^{s,b}`.
    pub fn xsb(s: f64, b: f64) -> Self {
        Self { s, gamma: b, p: 2.0, q: 2.0, r: 2.0 }
    }
}

fn lebesgue(values: impl Iterator<Item = f64>, p: f64, measure: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        (values.map(|v| v.powf(p)).sum::<f64>() * measure).powf(1.0 / p)
    }
}

/// The restriction norm of a trajectory over the window nodes.
///
/// `r = 2` uses coefficient norms; `r = ∞` takes the grid maximum of each
/// κ-sample, a lower bound of the true supremum.
pub fn x_norm(traj: &FieldTrajectory, e: XExponents, window: &TimeWindow, basis: &HarmonicBasis) -> Result<f64> {
    for (name, v) in [("p", e.p), ("q", e.q), ("r", e.r)] {
        if !(v >= 1.0) {
            return Err(Error::Input(format!("exponent {name} = {v} outside [1, ∞]")));
        }
    }
    if e.r != 2.0 && e.r.is_finite() {
        return Err(Error::Input(format!("unsupported spatial exponent r = {}", e.r)));
    }
    let mut per_degree = Vec::with_capacity(traj.n_max + 1);
    for n in 0..=traj.n_max {
        if traj.snapshots.iter().all(|s| s.degree_mass(n) == 0.0) {
            per_degree.push(0.0);
            continue;
        }
        let tt = twisted_transform(traj, n, window)?;
        let spatial: Vec<f64> = if e.r == 2.0 {
            tt.coeffs.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect()
        } else {
            let weyl = (eigenspace_dim(n) as f64).sqrt();
            let l2: Vec<f64> = tt.coeffs.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
            let top = l2.iter().cloned().fold(0.0, f64::max);
            let mut field = SpectralField::zeros(n);
            let mut out = Vec::with_capacity(l2.len());
            for (c, norm) in tt.coeffs.iter().zip(&l2) {
                // ‖f‖_∞ ≤ √(2n+1)‖f‖_2 on E_n: negligible bins are skipped.
                if weyl * norm <= 1e-14 * top {
                    out.push(weyl * norm);
                    continue;
                }
                field.degree_mut(n).copy_from_slice(c);
                let vals = basis.synthesize_degrees(&field, n, n)?;
                out.push(vals.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
            out
        };
        let weighted = spatial.iter().zip(&tt.kappa).map(|(v, k)| v * bracket(*k).powf(e.gamma));
        let lam_s = (eigenvalue_sq(n) as f64).powf(e.s / 2.0);
        per_degree.push(lam_s * lebesgue(weighted, e.q, tt.bin_measure));
    }
    Ok(lebesgue(per_degree.into_iter(), e.p, 1.0))
}

/// Which operator the S-norm estimator measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnVariant {
    /// `‖⟨κ⟩^γ T̃(κ)‖_{E_n → L^q_κ E_n}`.
    Plain,
    /// The same with `T̃(κ)*` at every κ: the starred norm of `T(t)*`.
    Adjoint,
}

/// Number of random unit inputs tried by [`sn_operator_norm`].
pub const SN_CANDIDATES: usize = 64;
/// Power-ascent steps from the best candidate.
pub const SN_ASCENT_STEPS: usize = 20;

/// Lower-bound estimate of the operator-valued restriction norm of a
/// matrix family `T(t)` on `E_n` (row-major `(2n+1)²` per grid node).
///
/// Every returned value is attained by an explicit unit input, so it never
/// exceeds the norm of the discretized operator.
pub fn sn_operator_norm(
    n: usize,
    mats: &[Vec<C64>],
    q: f64,
    gamma: f64,
    variant: SnVariant,
    window: &TimeWindow,
    seed: u64,
) -> Result<f64> {
    let d = eigenspace_dim(n);
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::Input(format!("q = {q} must be finite and ≥ 1")));
    }
    if window.nodes.last().is_some_and(|&i| i >= mats.len()) {
        return Err(Error::Input("window exceeds operator trajectory span".into()));
    }
    if let Some(m) = mats.iter().find(|m| m.len() != d * d) {
        return Err(Error::Input(format!("expected {}×{} matrices, got {} entries", d, d, m.len())));
    }
    let lam2 = eigenvalue_sq(n) as f64;
    // One row per matrix entry, transformed along time.
    let mut rows: Vec<Vec<C64>> = (0..d * d)
        .map(|e| {
            window.nodes.iter().zip(&window.times).map(|(&i, &t)| mats[i][e] * C64::from_polar(1.0, t * lam2)).collect()
        })
        .collect();
    window.transform_rows(&mut rows);
    let l = window.padded_len();
    let kappa = window.kappa();
    let mut bins: Vec<Vec<C64>> = (0..l)
        .map(|m| {
            let mut mat: Vec<C64> = rows.iter().map(|r| r[m]).collect();
            if variant == SnVariant::Adjoint {
                let mut t = vec![C64::new(0.0, 0.0); d * d];
                for a in 0..d {
                    for b in 0..d {
                        t[b * d + a] = mat[a * d + b].conj();
                    }
                }
                mat = t;
            }
            mat
        })
        .collect();
    drop(rows);
    let weights: Vec<f64> = kappa.iter().map(|k| bracket(*k).powf(gamma * q)).collect();
    // Bins whose matrix vanishes contribute nothing.
    let keep: Vec<usize> = (0..l).filter(|&m| bins[m].iter().any(|z| z.norm_sqr() > 0.0)).collect();
    bins = keep.iter().map(|&m| std::mem::take(&mut bins[m])).collect();
    let weights: Vec<f64> = keep.iter().map(|&m| weights[m]).collect();
    let measure = window.bin_measure();

    let apply =
        |mat: &[C64], f: &[C64]| -> Vec<C64> { (0..d).map(|a| (0..d).map(|b| mat[a * d + b] * f[b]).sum()).collect() };
    let objective = |f: &[C64]| -> f64 {
        let s: f64 = bins
            .iter()
            .zip(&weights)
            .map(|(mat, w)| w * apply(mat, f).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().powf(q))
            .sum();
        (s * measure).powf(1.0 / q)
    };
    let normalize = |v: &mut Vec<C64>| {
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            v.iter_mut().for_each(|z| *z /= nrm);
        }
        nrm
    };

    let mut stream = GaussianStream::new(seed, 0);
    let mut best = vec![C64::new(0.0, 0.0); d];
    let mut best_val = -1.0;
    for _ in 0..SN_CANDIDATES {
        let mut f = stream.sample_complex_gaussians(d);
        normalize(&mut f);
        let v = objective(&f);
        if v > best_val {
            best_val = v;
            best = f;
        }
    }
    for _ in 0..SN_ASCENT_STEPS {
        // Gradient of Σ w‖M f‖^q, up to a positive factor.
        let mut g = vec![C64::new(0.0, 0.0); d];
        for (mat, w) in bins.iter().zip(&weights) {
            let mf = apply(mat, &best);
            let nrm = mf.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm == 0.0 {
                continue;
            }
            let c = w * nrm.powf(q - 2.0);
            for b in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..d {
                    acc += mat[a * d + b].conj() * mf[a];
                }
                g[b] += acc * c;
            }
        }
        if normalize(&mut g) == 0.0 {
            break;
        }
        let v = objective(&g);
        if v > best_val {
            best_val = v;
            best = g;
        } else {
            break;
        }
    }
    Ok(best_val.max(0.0))
}

/// `‖⟨κ⟩^γ ĝ(κ)‖_{L^q_κ}` of a scalar sequence on the window nodes, twisted
/// by `e^{itλ_n²}`.
pub fn scalar_restriction_norm(values: &[C64], n: usize, q: f64, gamma: f64, window: &TimeWindow) -> f64 {
    let lam2 = eigenvalue_sq(n) as f64;
    let mut rows = vec![window
        .nodes
        .iter()
        .zip(&window.times)
        .map(|(&i, &t)| values[i] * C64::from_polar(1.0, t * lam2))
        .collect()];
    window.transform_rows(&mut rows);
    let kappa = window.kappa();
    lebesgue(rows[0].iter().zip(&kappa).map(|(z, k)| z.norm() * bracket(*k).powf(gamma)), q, window.bin_measure())
}

/// How a reported number was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Exact,
    Quadrature,
    LowerBound,
}

/// One JSON row of a norm report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormReport {
    pub name: String,
    pub parameters: serde_json::Value,
    pub value: f64,
    pub estimator_kind: EstimatorKind,
    pub seed: u64,
}

/// Empirical probes of the eigenfunction and restriction-space estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProbeKind {
    /// `max ‖f‖_{L^p} / n^{e(p)}` over random unit `f ∈ E_n`.
    SoggeLp { p: f64 },
    /// `max ‖fg‖_{L²} / n2^{1/4}` over unit `f ∈ E_{n1}`, `g ∈ E_{n2}`, `n1 ≥ n2`.
    Bilinear,
    /// Hölder quotient of the twisted trajectory over its restriction norm.
    Embedding { q: f64, gamma: f64 },
    /// `‖χ_{T/2}F‖_{γ} / (2^{γ−γ1}‖F‖_{γ1})` in `X^{0,·}_{q,q,2}`.
    TimeCutoff { q: f64, gamma: f64, gamma1: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeParams {
    pub degrees: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Window half-width for the time-dependent probes.
    pub half_width: f64,
    /// Node spacing of the time-dependent probes.
    pub dt: f64,
}

/// Eigenfunction exponent: `½(½ − 1/p)` for `2 ≤ p ≤ 6`, `½ − 2/p` above.
pub fn sogge_exponent(p: f64) -> f64 {
    if p <= 6.0 {
        0.5 * (0.5 - 1.0 / p)
    } else {
        0.5 - 2.0 / p
    }
}

fn unit_eigenfunction(stream: &mut GaussianStream, n: usize, n_max: usize) -> SpectralField {
    let mut f = SpectralField::zeros(n_max);
    let g = stream.sample_complex_gaussians(eigenspace_dim(n));
    let nrm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for (c, z) in f.degree_mut(n).iter_mut().zip(g) {
        *c = z / nrm;
    }
    f
}

/// A random single-degree trajectory `χ_T(t) Σ_j e^{−it(λ_n²+ω_j)} c_j`
/// with three random unit directions and frequencies in `[−50, 50]`.
fn random_wave(stream: &mut GaussianStream, n: usize, grid: TimeGrid, half_width: f64) -> FieldTrajectory {
    let parts: Vec<(f64, SpectralField)> =
        (0..3).map(|_| (100.0 * stream.uniform() - 50.0, unit_eigenfunction(stream, n, n))).collect();
    let lam2 = eigenvalue_sq(n) as f64;
    FieldTrajectory::from_fn(grid, n, |_, t| {
        let mut f = SpectralField::zeros(n);
        for (w, c) in &parts {
            f.axpy(C64::from_polar(bump(t, half_width), -t * (lam2 + w)), c);
        }
        f
    })
}

pub fn estimate_probe(kind: ProbeKind, params: &ProbeParams) -> Result<NormReport> {
    let top = params.degrees.iter().copied().max().ok_or_else(|| Error::Input("probe needs degrees".into()))?;
    if params.samples == 0 {
        return Err(Error::Input("probe needs at least one sample".into()));
    }
    let mut stream = GaussianStream::new(params.seed, 0);
    let (name, value, estimator_kind) = match kind {
        ProbeKind::SoggeLp { p } => {
            if !(p >= 2.0) {
                return Err(Error::Input(format!("Sogge probe needs p ≥ 2, got {p}")));
            }
            // A doubled grid keeps L^p quadrature accurate for p > 4.
            let basis = HarmonicBasis::new(top, SphericalGrid::for_degree(2 * top))?;
            let mut worst: f64 = 0.0;
            for &n in &params.degrees {
                for _ in 0..params.samples {
                    let f = unit_eigenfunction(&mut stream, n, top);
                    let ratio = f.lp_norm(p, &basis)? / (n.max(1) as f64).powf(sogge_exponent(p));
                    worst = worst.max(ratio);
                }
            }
            let kind = if p.is_infinite() { EstimatorKind::LowerBound } else { EstimatorKind::Quadrature };
            ("sogge_lp", worst, kind)
        }
        ProbeKind::Bilinear => {
            let basis = HarmonicBasis::for_degree(top);
            let mut worst: f64 = 0.0;
            for &n1 in &params.degrees {
                for &n2 in params.degrees.iter().filter(|&&n2| n2 <= n1) {
                    for _ in 0..params.samples {
                        let f = basis.synthesize(&unit_eigenfunction(&mut stream, n1, top))?;
                        let g = basis.synthesize(&unit_eigenfunction(&mut stream, n2, top))?;
                        let prod: Vec<f64> = f.iter().zip(&g).map(|(a, b)| (a * b).norm_sqr()).collect();
                        let ratio = basis.grid().integrate_real(&prod).sqrt() / (n2.max(1) as f64).powf(0.25);
                        worst = worst.max(ratio);
                    }
                }
            }
            ("bilinear", worst, EstimatorKind::Quadrature)
        }
        ProbeKind::Embedding { q, gamma } => {
            let a = gamma - (1.0 - 1.0 / q);
            if !(a > 0.0) {
                return Err(Error::Input(format!("embedding needs γ > 1/q′, got γ={gamma}, q={q}")));
            }
            let grid = TimeGrid::symmetric(params.half_width, params.dt)?;
            let window = TimeWindow::with_spacing(&grid, params.half_width, params.dt)?;
            let basis = HarmonicBasis::for_degree(top);
            let mut worst: f64 = 0.0;
            for &n in &params.degrees {
                let lam2 = eigenvalue_sq(n) as f64;
                for _ in 0..params.samples {
                    let f = random_wave(&mut stream, n, grid, params.half_width);
                    let twisted: Vec<SpectralField> = window
                        .nodes
                        .iter()
                        .zip(&window.times)
                        .map(|(&i, &t)| &f.snapshots[i] * C64::from_polar(1.0, t * lam2))
                        .collect();
                    let mut holder: f64 = 0.0;
                    for i in 0..twisted.len() {
                        for j in i + 1..twisted.len() {
                            let dt = window.times[j] - window.times[i];
                            holder = holder.max(twisted[i].distance(&twisted[j]) / dt.powf(a));
                        }
                    }
                    let xn = x_norm(&f, XExponents { s: 0.0, gamma, p: 2.0, q, r: 2.0 }, &window, &basis)?;
                    worst = worst.max(holder / xn);
                }
            }
            ("embedding", worst, EstimatorKind::Quadrature)
        }
        ProbeKind::TimeCutoff { q, gamma, gamma1 } => {
            let grid = TimeGrid::symmetric(params.half_width, params.dt)?;
            let window = TimeWindow::with_spacing(&grid, params.half_width, params.dt)?;
            let basis = HarmonicBasis::for_degree(top);
            let e = |g| XExponents { s: 0.0, gamma: g, p: 2.0, q, r: 2.0 };
            let mut worst: f64 = 0.0;
            for &n in &params.degrees {
                for _ in 0..params.samples {
                    let f = random_wave(&mut stream, n, grid, params.half_width);
                    let cut = f.map(n, |_, t, s| s * bump(t, params.half_width / 2.0));
                    let lhs = x_norm(&cut, e(gamma), &window, &basis)?;
                    let rhs = 0.5f64.powf(gamma1 - gamma) * x_norm(&f, e(gamma1), &window, &basis)?;
                    worst = worst.max(lhs / rhs);
                }
            }
            ("time_cutoff", worst, EstimatorKind::Quadrature)
        }
    };
    Ok(NormReport {
        name: name.to_string(),
        parameters: serde_json::json!({ "probe": kind, "degrees": params.degrees, "samples": params.samples }),
        value,
        estimator_kind,
        seed: params.seed,
    })
}
