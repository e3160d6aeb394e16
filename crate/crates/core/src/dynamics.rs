//! Time integration of the truncated Wick-ordered NLS and of the completely
//! resonant system, the gauge transform and Duhamel integrals.
//!
//! Trajectories live on a uniform grid of spacing `h = dt/2`: every `dt`
//! step stores the full and the half-step snapshot. A grid may extend to
//! negative times; integration always starts from the `origin` node.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Projection, SpectralField};
use crate::harmonics::{eigenvalue_sq, HarmonicBasis};
use crate::nonlinear::{resonant_rhs, wick_cubic_samples};

type C64 = Complex64;

/// Stability guard: `dt · max|u0|²` must stay below this.
pub const STABILITY_LIMIT: f64 = 0.05;

/// Uniform time nodes `t_i = t0 + i·h`, integrated from `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub h: f64,
    pub len: usize,
    pub origin: usize,
}

fn steps_in(t: f64, dt: f64) -> Result<usize> {
    if !(t >= 0.0 && dt > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!("need T ≥ 0 and dt > 0, got T={t}, dt={dt}")));
    }
    let steps = (t / dt).round();
    if (steps * dt - t).abs() > 1e-9 * t.max(dt) {
        return Err(Error::Config(format!("dt={dt} does not divide T={t}")));
    }
    Ok(steps as usize)
}

impl TimeGrid {
    /// Nodes on `[0, T]` with half-step spacing `dt/2`.
    pub fn forward(t: f64, dt: f64) -> Result<Self> {
        let steps = steps_in(t, dt)?;
        Ok(Self { t0: 0.0, h: dt / 2.0, len: 2 * steps + 1, origin: 0 })
    }

    /// Nodes on `[−T, T]` with half-step spacing, integrated outward from 0.
    pub fn symmetric(t: f64, dt: f64) -> Result<Self> {
        let steps = steps_in(t, dt)?;
        Ok(Self { t0: -t, h: dt / 2.0, len: 4 * steps + 1, origin: 2 * steps })
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.len - 1)
    }

    /// Index of the node nearest to `t`, if inside the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = ((t - self.t0) / self.h).round();
        (x >= 0.0 && (x as usize) < self.len && ((self.t0 + x * self.h) - t).abs() < 1e-9 * self.h.max(1.0))
            .then_some(x as usize)
    }
}

/// Snapshots of a field on a [`TimeGrid`].
#[derive(Clone, Debug)]
pub struct FieldTrajectory {
    pub grid: TimeGrid,
    /// Degree bound of every snapshot.
    pub n_max: usize,
    pub snapshots: Vec<SpectralField>,
}

impl FieldTrajectory {
    pub fn zeros(grid: TimeGrid, n_max: usize) -> Self {
        Self { grid, n_max, snapshots: vec![SpectralField::zeros(n_max); grid.len] }
    }

    /// Builds a trajectory node by node.
    pub fn from_fn(grid: TimeGrid, n_max: usize, mut f: impl FnMut(usize, f64) -> SpectralField) -> Self {
        let snapshots = (0..grid.len).map(|i| f(i, grid.t(i)).resized(n_max)).collect();
        Self { grid, n_max, snapshots }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn t(&self, i: usize) -> f64 {
        self.grid.t(i)
    }

    pub fn at_origin(&self) -> &SpectralField {
        &self.snapshots[self.grid.origin]
    }

    pub fn last(&self) -> &SpectralField {
        self.snapshots.last().expect("nonempty trajectory")
    }

    /// Node-wise map keeping the grid.
    pub fn map(&self, n_max: usize, mut f: impl FnMut(usize, f64, &SpectralField) -> SpectralField) -> Self {
        let snapshots = self.snapshots.iter().enumerate().map(|(i, s)| f(i, self.t(i), s).resized(n_max)).collect();
        Self { grid: self.grid, n_max, snapshots }
    }

    pub fn resized(&self, n_max: usize) -> Self {
        self.map(n_max, |_, _, s| s.clone())
    }

    pub fn project(&self, kind: Projection) -> Self {
        self.map(self.n_max, |_, _, s| s.project(kind))
    }

    pub fn add(&self, other: &FieldTrajectory) -> Result<Self> {
        self.check_same_grid(other)?;
        let n = self.n_max.max(other.n_max);
        Ok(self.map(n, |i, _, s| s + &other.snapshots[i]))
    }

    pub fn sub(&self, other: &FieldTrajectory) -> Result<Self> {
        self.check_same_grid(other)?;
        let n = self.n_max.max(other.n_max);
        Ok(self.map(n, |i, _, s| s - &other.snapshots[i]))
    }

    pub fn check_same_grid(&self, other: &FieldTrajectory) -> Result<()> {
        let (a, b) = (self.grid, other.grid);
        if a.len != b.len || a.origin != b.origin || (a.h - b.h).abs() > 1e-15 || (a.t0 - b.t0).abs() > 1e-12 {
            return Err(Error::Input("trajectories live on different time grids".into()));
        }
        Ok(())
    }

    /// sup_t ‖F(t)‖_{H^s}.
    pub fn sup_sobolev(&self, s: f64) -> f64 {
        self.snapshots.iter().map(|f| f.sobolev_norm(s)).fold(0.0, f64::max)
    }

    /// sup_t ‖F(t)‖_{L²}.
    pub fn sup_l2(&self) -> f64 {
        self.sup_sobolev(0.0)
    }

    /// sup_t ‖F(t) − G(t)‖_{L²}.
    pub fn sup_distance(&self, other: &FieldTrajectory) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.snapshots.iter().zip(&other.snapshots).map(|(a, b)| a.distance(b)).fold(0.0, f64::max))
    }

    /// Restriction to the nodes `lo..=hi`, with the origin clamped into range.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        let grid = TimeGrid {
            t0: self.grid.t(lo),
            h: self.grid.h,
            len: hi - lo + 1,
            origin: self.grid.origin.clamp(lo, hi) - lo,
        };
        Self { grid, n_max: self.n_max, snapshots: self.snapshots[lo..=hi].to_vec() }
    }

    /// Writes `manifest.json` plus one binary snapshot per node.
    pub fn write_dir(&self, dir: &Path, meta: serde_json::Value) -> Result<()> {
        fs::create_dir_all(dir)?;
        let files: Vec<String> = (0..self.len()).map(|i| format!("snap_{i:06}.bin")).collect();
        for (f, name) in self.snapshots.iter().zip(&files) {
            let file = fs::File::create(dir.join(name))?;
            f.write_snapshot(std::io::BufWriter::new(file))?;
        }
        let manifest = serde_json::json!({
            "t0": self.grid.t0,
            "dt": self.grid.dt(),
            "half_step": self.grid.h,
            "nodes": self.grid.len,
            "origin": self.grid.origin,
            "n_max": self.n_max,
            "snapshots": files,
            "meta": meta,
        });
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json"))?;
        Ok(())
    }

    /// Reads a trajectory written by [`FieldTrajectory::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Input(e.to_string()))?;
        let get = |k: &str| m.get(k).cloned().ok_or_else(|| Error::Input(format!("manifest lacks {k}")));
        let grid = TimeGrid {
            t0: get("t0")?.as_f64().unwrap_or(0.0),
            h: get("half_step")?.as_f64().unwrap_or(0.0),
            len: get("nodes")?.as_u64().unwrap_or(0) as usize,
            origin: get("origin")?.as_u64().unwrap_or(0) as usize,
        };
        let n_max = get("n_max")?.as_u64().unwrap_or(0) as usize;
        let names = get("snapshots")?;
        let names = names.as_array().ok_or_else(|| Error::Input("snapshots must be a list".into()))?;
        let snapshots = names
            .iter()
            .map(|n| {
                let file = fs::File::open(dir.join(n.as_str().unwrap_or_default()))?;
                SpectralField::read_snapshot(std::io::BufReader::new(file))
            })
            .collect::<Result<_>>()?;
        Ok(Self { grid, n_max, snapshots })
    }
}

/// How the cubic term is truncated during integration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// `Π_N` after every nonlinear substep (the truncated flow).
    ProjectEachStep,
    /// No projection below the basis resolution: the state carries every
    /// degree the basis resolves.
    ProjectNever,
}

/// Per-degree linear propagator `c_n ← e^{−iλ_n² τ} c_n`.
pub fn free_propagate(f: &SpectralField, tau: f64) -> SpectralField {
    let mut out = f.clone();
    for n in 0..=f.n_max() {
        let phase = C64::from_polar(1.0, -(eigenvalue_sq(n) as f64) * tau);
        for c in out.degree_mut(n) {
            *c *= phase;
        }
    }
    out
}

/// Free evolution `e^{it(Δ−1)}f` sampled on `grid`.
pub fn free_trajectory(f: &SpectralField, grid: TimeGrid) -> FieldTrajectory {
    FieldTrajectory::from_fn(grid, f.n_max(), |_, t| free_propagate(f, t))
}

fn check_stability(u0: &SpectralField, dt: f64, basis: &HarmonicBasis) -> Result<()> {
    let vals = basis.synthesize(u0)?;
    let peak = vals.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let product = dt * peak;
    if product > STABILITY_LIMIT {
        return Err(Error::Stability { product, suggested: STABILITY_LIMIT / peak });
    }
    Ok(())
}

/// Strang splitting for `i∂_t u = (−Δ+1)u + Π N(u)`.
///
/// The nonlinear substep is the implicit midpoint rule for
/// `u' = −i Π N(u)`. It conserves `‖u‖²` exactly after projection and is
/// symmetric, so the splitting stays second order. The exact pointwise
/// phase rotation seeds the fixed-point solve.
pub struct NlsStepper<'a> {
    basis: &'a HarmonicBasis,
    degree: usize,
}

impl<'a> NlsStepper<'a> {
    pub fn new(basis: &'a HarmonicBasis, degree: usize) -> Result<Self> {
        if degree > basis.n_max() {
            return Err(Error::Config(format!("truncation {degree} exceeds basis degree {}", basis.n_max())));
        }
        Ok(Self { basis, degree })
    }

    fn nonlinear(&self, u0: &SpectralField, tau: f64) -> Result<SpectralField> {
        let basis = self.basis;
        let n = self.degree;
        let v0 = basis.synthesize(u0)?;
        let m0 = u0.norm_sqr();
        let seed: Vec<C64> =
            v0.iter().map(|z| z * C64::from_polar(1.0, -(z.norm_sqr() - 2.0 * m0) * tau / 2.0)).collect();
        let mut mid = basis.analyze(&seed, n)?;
        let scale = u0.norm_l2().max(1.0);
        for _ in 0..60 {
            let vm = basis.synthesize(&mid)?;
            let nl = basis.analyze(&wick_cubic_samples(&vm, mid.norm_sqr()), n)?;
            let mut next = u0.clone();
            next.axpy(C64::new(0.0, -tau / 2.0), &nl);
            let change = next.distance(&mid);
            mid = next;
            if change <= 1e-15 * scale {
                break;
            }
        }
        let mut u1 = &mid * 2.0;
        u1 -= u0;
        Ok(u1)
    }

    /// One Strang step of signed length `tau`.
    pub fn step(&self, u: &SpectralField, tau: f64) -> Result<SpectralField> {
        let half = free_propagate(u, tau / 2.0);
        let nl = self.nonlinear(&half, tau)?;
        Ok(free_propagate(&nl, tau / 2.0))
    }
}

/// Integrates the truncated NLS over `[0, T]`.
pub fn evolve_nls(u0: &SpectralField, n: usize, t: f64, dt: f64, basis: &HarmonicBasis) -> Result<FieldTrajectory> {
    evolve_nls_on(u0, n, TimeGrid::forward(t, dt)?, basis, ProjectionMode::ProjectEachStep)
}

/// Integrates the NLS on an arbitrary grid, outward from its origin.
///
/// With [`ProjectionMode::ProjectEachStep`] the state is `Π_n`-truncated;
/// with [`ProjectionMode::ProjectNever`] the state keeps all degrees up to
/// `basis.n_max()`.
pub fn evolve_nls_on(
    u0: &SpectralField,
    n: usize,
    grid: TimeGrid,
    basis: &HarmonicBasis,
    mode: ProjectionMode,
) -> Result<FieldTrajectory> {
    let degree = match mode {
        ProjectionMode::ProjectEachStep => n,
        ProjectionMode::ProjectNever => basis.n_max(),
    };
    let start = u0.project(Projection::LowPass(n)).resized(degree);
    check_stability(&start, grid.dt(), basis)?;
    let stepper = NlsStepper::new(basis, degree)?;
    integrate_outward(start, grid, |u, _, tau| stepper.step(u, tau))
}

fn integrate_outward(
    start: SpectralField,
    grid: TimeGrid,
    mut step: impl FnMut(&SpectralField, f64, f64) -> Result<SpectralField>,
) -> Result<FieldTrajectory> {
    let n_max = start.n_max();
    let mut snapshots = vec![SpectralField::zeros(n_max); grid.len];
    snapshots[grid.origin] = start;
    for i in grid.origin + 1..grid.len {
        let next = step(&snapshots[i - 1], grid.t(i - 1), grid.h)?;
        if !next.is_finite() {
            return Err(Error::NotFinite { step: i - grid.origin });
        }
        snapshots[i] = next;
    }
    for i in (0..grid.origin).rev() {
        let next = step(&snapshots[i + 1], grid.t(i + 1), -grid.h)?;
        if !next.is_finite() {
            return Err(Error::NotFinite { step: grid.origin - i });
        }
        snapshots[i] = next;
    }
    Ok(FieldTrajectory { grid, n_max, snapshots })
}

/// Integrates `i∂_t u = −Δu + Σ_n π_n(π_n u · Σ_m |π_m u|²)` over `[0, T]`.
///
/// Interaction picture: `a = e^{−itΔ}u` is advanced by classical RK4 and
/// the per-degree phases `e^{−it n(n+1)}` are applied exactly.
pub fn evolve_resonant(u0: &SpectralField, t: f64, dt: f64, basis: &HarmonicBasis) -> Result<FieldTrajectory> {
    evolve_resonant_on(u0, TimeGrid::forward(t, dt)?, basis)
}

pub fn evolve_resonant_on(u0: &SpectralField, grid: TimeGrid, basis: &HarmonicBasis) -> Result<FieldTrajectory> {
    check_stability(u0, grid.dt(), basis)?;
    let laplace_phase = |f: &SpectralField, tau: f64| {
        let mut out = f.clone();
        for n in 0..=f.n_max() {
            let p = C64::from_polar(1.0, -((n * (n + 1)) as f64) * tau);
            for c in out.degree_mut(n) {
                *c *= p;
            }
        }
        out
    };
    // a' = −i e^{−itΔ} R(e^{itΔ} a), evaluated at time s.
    let rhs = |a: &SpectralField, s: f64| -> Result<SpectralField> {
        let u = laplace_phase(a, s);
        let r = resonant_rhs(&u, basis)?;
        Ok(&laplace_phase(&r, -s) * C64::new(0.0, -1.0))
    };
    integrate_outward(u0.clone(), grid, |u, s, tau| {
        let a = laplace_phase(u, -s);
        let k1 = rhs(&a, s)?;
        let k2 = rhs(&(&a + &(&k1 * (tau / 2.0))), s + tau / 2.0)?;
        let k3 = rhs(&(&a + &(&k2 * (tau / 2.0))), s + tau / 2.0)?;
        let k4 = rhs(&(&a + &(&k3 * tau)), s + tau)?;
        let mut next = a.clone();
        next.axpy(C64::new(tau / 6.0, 0.0), &k1);
        next.axpy(C64::new(tau / 3.0, 0.0), &k2);
        next.axpy(C64::new(tau / 3.0, 0.0), &k3);
        next.axpy(C64::new(tau / 6.0, 0.0), &k4);
        Ok(laplace_phase(&next, s + tau))
    })
}

/// Energy `⟨(−Δ+1)u,u⟩ + ½∫|u|⁴ − ‖u‖⁴`, conserved by the truncated flow
/// (its gradient with respect to ū is `(−Δ+1)u + N(u)`).
pub fn energy(u: &SpectralField, basis: &HarmonicBasis) -> Result<f64> {
    let kinetic: f64 = (0..=u.n_max()).map(|n| eigenvalue_sq(n) as f64 * u.degree_mass(n)).sum();
    let v = basis.synthesize(u)?;
    let quartic: Vec<f64> = v.iter().map(|z| z.norm_sqr().powi(2)).collect();
    let m = u.norm_sqr();
    Ok(kinetic + 0.5 * basis.grid().integrate_real(&quartic) - m * m)
}

/// `v(t) = e^{it − 2it‖u(t)‖²} u(t)`.
pub fn gauge_transform(traj: &FieldTrajectory) -> FieldTrajectory {
    traj.map(traj.n_max, |_, t, u| {
        let m = u.norm_sqr();
        u * C64::from_polar(1.0, t - 2.0 * t * m)
    })
}

/// Residual `‖i∂_t v + Δv − Π(|v|²v)‖_{L²}` at interior nodes.
///
/// The time derivative is a fourth-order central difference of the interaction variable
/// `e^{−itΔ}v`, which removes the fast linear oscillation from the
/// difference quotient. Returns `(t, residual)` pairs.
pub fn gauge_residual(v: &FieldTrajectory, basis: &HarmonicBasis) -> Result<Vec<(f64, f64)>> {
    let interaction = |f: &SpectralField, t: f64| {
        let mut out = f.clone();
        for n in 0..=f.n_max() {
            let p = C64::from_polar(1.0, ((n * (n + 1)) as f64) * t);
            for c in out.degree_mut(n) {
                *c *= p;
            }
        }
        out
    };
    let h = v.grid.h;
    let mut out = Vec::new();
    let z = |j: usize| interaction(&v.snapshots[j], v.t(j));
    for i in 2..v.len().saturating_sub(2) {
        let t = v.t(i);
        let mut dz = &(&z(i + 1) - &z(i - 1)) * (8.0 / (12.0 * h));
        dz.axpy(C64::new(-1.0 / (12.0 * h), 0.0), &(&z(i + 2) - &z(i - 2)));
        let vals = basis.synthesize(&v.snapshots[i])?;
        let cubic: Vec<C64> = vals.iter().map(|z| z * z.norm_sqr()).collect();
        let nl = interaction(&basis.analyze(&cubic, v.n_max)?, t);
        let r = &(&dz * C64::new(0.0, 1.0)) - &nl;
        out.push((t, r.norm_l2()));
    }
    Ok(out)
}

/// Quadrature rule actually used by a Duhamel integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Simpson,
    /// Only two nodes were available on one side of the origin.
    TrapezoidFallback,
}

/// `I F(t) = ∫_0^t e^{i(t−t')(Δ−1)} F(t') dt'` at every node.
///
/// The propagator is applied exactly per degree; the remaining smooth
/// integrand `e^{it'λ²}F(t')` is integrated by cumulative composite Simpson
/// (the last odd interval uses the three-point rule `(5,8,−1)/12`).
pub fn duhamel_trajectory(f: &FieldTrajectory) -> (FieldTrajectory, QuadratureRule) {
    let grid = f.grid;
    let n_max = f.n_max;
    let o = grid.origin;
    let mut rule = QuadratureRule::Simpson;
    let twisted: Vec<SpectralField> =
        f.snapshots.iter().enumerate().map(|(i, s)| free_propagate(s, -grid.t(i))).collect();
    let mut acc = vec![SpectralField::zeros(n_max); grid.len];

    let mut sweep = |nodes: Vec<usize>, h: f64| {
        // nodes[0] is the origin, nodes[k] is k steps away
        let g = |k: usize| &twisted[nodes[k]];
        for k in 1..nodes.len() {
            let mut s = if k >= 2 { acc[nodes[k - 2]].clone() } else { SpectralField::zeros(n_max) };
            if k % 2 == 0 {
                s.axpy(C64::new(h / 3.0, 0.0), g(k - 2));
                s.axpy(C64::new(4.0 * h / 3.0, 0.0), g(k - 1));
                s.axpy(C64::new(h / 3.0, 0.0), g(k));
            } else if k >= 3 {
                s = acc[nodes[k - 1]].clone();
                s.axpy(C64::new(-h / 12.0, 0.0), g(k - 2));
                s.axpy(C64::new(8.0 * h / 12.0, 0.0), g(k - 1));
                s.axpy(C64::new(5.0 * h / 12.0, 0.0), g(k));
            } else if nodes.len() > 2 {
                s.axpy(C64::new(5.0 * h / 12.0, 0.0), g(0));
                s.axpy(C64::new(8.0 * h / 12.0, 0.0), g(1));
                s.axpy(C64::new(-h / 12.0, 0.0), g(2));
            } else {
                rule = QuadratureRule::TrapezoidFallback;
                s.axpy(C64::new(h / 2.0, 0.0), g(0));
                s.axpy(C64::new(h / 2.0, 0.0), g(1));
            }
            acc[nodes[k]] = s;
        }
    };
    sweep((o..grid.len).collect(), grid.h);
    sweep((0..=o).rev().collect(), -grid.h);

    let snapshots = acc.iter().enumerate().map(|(i, s)| free_propagate(s, grid.t(i))).collect();
    (FieldTrajectory { grid, n_max, snapshots }, rule)
}

/// `I F` at a single node.
pub fn duhamel(f: &FieldTrajectory, index: usize) -> Result<(SpectralField, QuadratureRule)> {
    if index >= f.len() {
        return Err(Error::Input(format!("node {index} outside trajectory of {} nodes", f.len())));
    }
    let (traj, rule) = duhamel_trajectory(f);
    Ok((traj.snapshots[index].clone(), rule))
}
