//! Shell-by-shell construction `u_{2N} = u_N + ψ_{2N} + w_{2N}` on a
//! symmetric window, with the induction diagnostics of every shell.
//!
//! The shells are solved without cutoffs, so the reconstruction can be
//! compared with direct solves on the whole window. The diagnostics apply
//! `χ_T` to the stored trajectories, which is where the cut-off objects
//! are evaluated.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_nls_on, free_trajectory, FieldTrajectory, ProjectionMode, TimeGrid};
use crate::error::{Error, Result};
use crate::fields::Projection;
use crate::harmonics::HarmonicBasis;
use crate::rnorms::{bump, sn_operator_norm, x_norm, SnVariant, TimeWindow, XExponents};
use crate::stochastic::{sample_e_n, sample_phi_alpha_by_degree, GaussianStream};

use super::{
    low_pass, rao_solve, remainder_solve, ColorWeights, PotentialTrack, RaoShellEntry, RaoTrajectory, RemainderOptions,
    RemainderOutcome, UNITARITY_TOL,
};

type C64 = Complex64;

/// Largest final truncation the ladder accepts.
pub const MAX_LADDER_DEGREE: usize = 32;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticParams {
    pub q: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub b: f64,
    pub delta: f64,
    /// Node spacing of the time-Fourier windows.
    pub spacing: f64,
    /// Whether to run the operator-norm estimator (the costly part).
    pub sn_norms: bool,
}

impl Default for DiagnosticParams {
    fn default() -> Self {
        Self { q: 8.0, gamma: 0.9, gamma1: 0.92, b: 0.55, delta: 0.01, spacing: 1e-3, sn_norms: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderParams {
    pub alpha: f64,
    pub n_final: usize,
    /// Half-width `T` of the window `[−T, T]` and of the cutoff.
    pub half_width: f64,
    pub dt: f64,
    pub seed: u64,
    /// Scale applied to `φ_α` (1 for the Gaussian data itself).
    pub amplitude: f64,
    pub remainder: RemainderOptions,
    /// `None` skips every diagnostic except the Sobolev norms.
    pub diagnostics: Option<DiagnosticParams>,
}

/// Lower-bound estimates of the operator restriction norms, maximized over
/// the degrees of the shell.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OperatorNorms {
    /// `χ_T(H − e^{−itλ²})` in `S^{q,γ}` and its adjoint in `S^{q,γ,*}`.
    pub h_dev_plain: f64,
    pub h_dev_adjoint: f64,
    /// `χ_T H` likewise.
    pub h_full_plain: f64,
    pub h_full_adjoint: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ShellDiagnostics {
    pub shell: usize,
    pub max_unitarity: f64,
    pub psi_sup_h06: f64,
    pub w_sup_h06: f64,
    pub psi_sup_l2: f64,
    pub w_sup_l2: f64,
    /// `‖χ_T ψ‖_{L^q_t L^∞_x}`.
    pub psi_lq_linf: Option<f64>,
    /// `‖χ_T² Σ_n(|π_nψ|² − ‖π_nψ‖²)‖_{L^q_t L^∞_x}`.
    pub hex_lq_linf: Option<f64>,
    /// `‖χ_T ψ‖_{X^{0,γ}_{q,q,∞}}`.
    pub psi_x_gamma: Option<f64>,
    /// `‖χ_T w‖_{X^{0,b}}`.
    pub w_xb: Option<f64>,
    /// `‖Π_{M/2}^⊥ χ_T w‖_{X^{0,b}}`; tails beyond the shell vanish for the
    /// truncated flow.
    pub w_xb_upper_half: Option<f64>,
    pub operator_norms: Option<OperatorNorms>,
    pub remainder_iterations: usize,
    pub remainder_residual: f64,
}

#[derive(Clone, Debug)]
pub struct ShellRecord {
    pub shell: usize,
    pub psi: FieldTrajectory,
    pub w: FieldTrajectory,
    pub diagnostics: ShellDiagnostics,
}

#[derive(Clone, Debug)]
pub struct AnsatzRecord {
    pub params: LadderParams,
    pub grid: TimeGrid,
    pub shells: Vec<ShellRecord>,
    /// `u` of the last completed shell.
    pub u: FieldTrajectory,
    /// Set when a remainder diverged; the record stops at the last good shell.
    pub aborted: Option<String>,
}

impl AnsatzRecord {
    /// `Σ_M (ψ_M + w_M)` at the final degree.
    pub fn reconstruct(&self) -> Result<FieldTrajectory> {
        let mut total = FieldTrajectory::zeros(self.grid, self.u.n_max);
        for s in &self.shells {
            total = total.add(&s.psi.resized(self.u.n_max))?.add(&s.w.resized(self.u.n_max))?;
        }
        Ok(total)
    }

    pub fn diagnostics(&self) -> Vec<&ShellDiagnostics> {
        self.shells.iter().map(|s| &s.diagnostics).collect()
    }

    /// One directory per shell trajectory plus `diagnostics.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = serde_json::json!({ "alpha": self.params.alpha, "seed": self.params.seed });
        for s in &self.shells {
            s.psi.write_dir(&dir.join(format!("psi_{:03}", s.shell)), meta.clone())?;
            s.w.write_dir(&dir.join(format!("w_{:03}", s.shell)), meta.clone())?;
        }
        let manifest = serde_json::json!({
            "params": self.params,
            "aborted": self.aborted,
            "shells": self.diagnostics(),
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Input(e.to_string()))?;
        fs::write(dir.join("diagnostics.json"), text)?;
        Ok(())
    }
}

fn validate(p: &LadderParams) -> Result<()> {
    if !p.n_final.is_power_of_two() || p.n_final > MAX_LADDER_DEGREE {
        return Err(Error::Config(format!("final degree {} must be a power of two ≤ {MAX_LADDER_DEGREE}", p.n_final)));
    }
    if !(p.half_width > 0.0) {
        return Err(Error::Config(format!("window half-width must be positive, got {}", p.half_width)));
    }
    Ok(())
}

/// Runs the ladder `N = 1, 2, 4, …, n_final` for one seed.
///
/// The data is `φ_α` with degree `n` drawn from stream `(seed, n)`; the
/// shell Gaussians `e_n` come from the same streams, so `ψ_M(0) = P_M φ`.
pub fn ansatz_ladder(params: &LadderParams) -> Result<AnsatzRecord> {
    validate(params)?;
    let grid = TimeGrid::symmetric(params.half_width, params.dt)?;
    let phi = &sample_phi_alpha_by_degree(params.seed, params.alpha, params.n_final) * params.amplitude;

    let basis1 = HarmonicBasis::for_degree(1);
    let data1 = low_pass(&phi, 1, 1);
    let u1 = evolve_nls_on(&data1, 1, grid, &basis1, ProjectionMode::ProjectEachStep)?;
    let psi1 = free_trajectory(&data1, grid);
    let w1 = u1.sub(&psi1)?;
    let diag1 = ShellDiagnostics {
        shell: 1,
        psi_sup_h06: psi1.sup_sobolev(0.6),
        w_sup_h06: w1.sup_sobolev(0.6),
        psi_sup_l2: psi1.sup_l2(),
        w_sup_l2: w1.sup_l2(),
        ..Default::default()
    };
    let mut record = AnsatzRecord {
        params: params.clone(),
        grid,
        shells: vec![ShellRecord { shell: 1, psi: psi1, w: w1, diagnostics: diag1 }],
        u: u1,
        aborted: None,
    };

    let mut shell = 2;
    while shell <= params.n_final {
        let basis = HarmonicBasis::for_degree(shell);
        let track = PotentialTrack::wick_square(&record.u, shell, &basis)?;
        let window = match &params.diagnostics {
            Some(d) => Some((d, TimeWindow::with_spacing(&grid, params.half_width, d.spacing)?)),
            None => None,
        };

        let mut psi = FieldTrajectory::zeros(grid, shell);
        let mut max_unitarity: f64 = 0.0;
        let mut op_norms = window.as_ref().filter(|(d, _)| d.sn_norms).map(|_| OperatorNorms::default());
        for n in RaoTrajectory::degrees(shell) {
            let entry = rao_solve(n, &track, &basis, UNITARITY_TOL)?;
            max_unitarity = max_unitarity.max(entry.max_unitarity);
            let e_n = sample_e_n(&mut GaussianStream::new(params.seed, n as u64), n, n)?;
            let weight = params.amplitude * ColorWeights::MatchPhiAlpha(params.alpha).weight(n);
            for (node, snap) in psi.snapshots.iter_mut().enumerate() {
                for (c, v) in snap.degree_mut(n).iter_mut().zip(entry.apply(node, e_n.degree(n))) {
                    *c = v * weight;
                }
            }
            if let (Some(norms), Some((d, win))) = (op_norms.as_mut(), window.as_ref()) {
                operator_norms(&entry, d, win, params, norms)?;
            }
        }

        let u_half = &record.u;
        let rem = remainder_solve(shell, &psi, u_half, &basis, params.remainder)?;
        if rem.outcome == RemainderOutcome::Diverged {
            record.aborted = Some(format!(
                "remainder diverged at shell {shell}: increments {:?}, iterate norms {:?}",
                rem.increments, rem.iterate_norms
            ));
            return Ok(record);
        }
        let w = rem.w;
        let u = u_half.resized(shell).add(&psi)?.add(&w)?;

        let mut diag = ShellDiagnostics {
            shell,
            max_unitarity,
            psi_sup_h06: psi.sup_sobolev(0.6),
            w_sup_h06: w.sup_sobolev(0.6),
            psi_sup_l2: psi.sup_l2(),
            w_sup_l2: w.sup_l2(),
            operator_norms: op_norms,
            remainder_iterations: rem.iterations,
            remainder_residual: rem.residual,
            ..Default::default()
        };
        if let Some((d, win)) = &window {
            field_diagnostics(&psi, &w, shell, d, win, &basis, &mut diag)?;
        }
        record.shells.push(ShellRecord { shell, psi, w, diagnostics: diag });
        record.u = u;
        shell *= 2;
    }
    Ok(record)
}

fn operator_norms(
    entry: &RaoShellEntry,
    d: &DiagnosticParams,
    window: &TimeWindow,
    params: &LadderParams,
    norms: &mut OperatorNorms,
) -> Result<()> {
    let chi = |t: f64| bump(t, params.half_width);
    let full = RaoShellEntry::cutoff(&entry.h, &entry.grid, chi);
    let dev = RaoShellEntry::cutoff(&entry.deviation(), &entry.grid, chi);
    let seed = params.seed ^ ((entry.n as u64) << 32);
    let est = |mats: &[Vec<C64>], v| sn_operator_norm(entry.n, mats, d.q, d.gamma, v, window, seed);
    norms.h_dev_plain = norms.h_dev_plain.max(est(&dev, SnVariant::Plain)?);
    norms.h_dev_adjoint = norms.h_dev_adjoint.max(est(&dev, SnVariant::Adjoint)?);
    norms.h_full_plain = norms.h_full_plain.max(est(&full, SnVariant::Plain)?);
    norms.h_full_adjoint = norms.h_full_adjoint.max(est(&full, SnVariant::Adjoint)?);
    Ok(())
}

fn field_diagnostics(
    psi: &FieldTrajectory,
    w: &FieldTrajectory,
    shell: usize,
    d: &DiagnosticParams,
    window: &TimeWindow,
    basis: &HarmonicBasis,
    diag: &mut ShellDiagnostics,
) -> Result<()> {
    let mut psi_sum = 0.0;
    let mut hex_sum = 0.0;
    for (&node, &chi) in window.nodes.iter().zip(&window.chi) {
        if chi == 0.0 {
            continue;
        }
        let snap = &psi.snapshots[node];
        let values = basis.synthesize(snap)?;
        let peak = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        psi_sum += (chi * peak).powf(d.q);
        let mut hex = vec![0.0; values.len()];
        for n in RaoTrajectory::degrees(shell) {
            let part = basis.synthesize_degrees(snap, n, n)?;
            let mass = snap.degree_mass(n);
            for (h, z) in hex.iter_mut().zip(&part) {
                *h += z.norm_sqr() - mass;
            }
        }
        let hex_peak = hex.iter().map(|v| v.abs()).fold(0.0, f64::max);
        hex_sum += (chi * chi * hex_peak).powf(d.q);
    }
    diag.psi_lq_linf = Some((psi_sum * window.spacing).powf(1.0 / d.q));
    diag.hex_lq_linf = Some((hex_sum * window.spacing).powf(1.0 / d.q));

    let psi_cut = window.apply(psi);
    let w_cut = window.apply(w);
    let e = XExponents { s: 0.0, gamma: d.gamma, p: d.q, q: d.q, r: f64::INFINITY };
    diag.psi_x_gamma = Some(x_norm(&psi_cut, e, window, basis)?);
    diag.w_xb = Some(x_norm(&w_cut, XExponents::xsb(0.0, d.b), window, basis)?);
    let upper = w_cut.project(Projection::HighPass(shell / 2));
    diag.w_xb_upper_half = Some(x_norm(&upper, XExponents::xsb(0.0, d.b), window, basis)?);
    Ok(())
}

/// Direct truncated solve `u_N` on the ladder's window, the oracle for the
/// reconstruction.
pub fn direct_solution(params: &LadderParams, n: usize) -> Result<FieldTrajectory> {
    let grid = TimeGrid::symmetric(params.half_width, params.dt)?;
    let phi = &sample_phi_alpha_by_degree(params.seed, params.alpha, n) * params.amplitude;
    evolve_nls_on(&phi, n, grid, &HarmonicBasis::for_degree(n), ProjectionMode::ProjectEachStep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_final: usize, dt: f64) -> LadderParams {
        LadderParams {
            alpha: 1.5,
            n_final,
            half_width: 0.05,
            dt,
            seed: 21,
            amplitude: 1.0,
            remainder: RemainderOptions::default(),
            diagnostics: None,
        }
    }

    #[test]
    fn base_case_only() {
        let rec = ansatz_ladder(&params(1, 1e-3)).unwrap();
        assert_eq!(rec.shells.len(), 1);
        let phi = sample_phi_alpha_by_degree(21, 1.5, 1);
        let free = free_trajectory(&phi, rec.grid);
        assert!(rec.shells[0].psi.sup_distance(&free).unwrap() < 1e-15);
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut p = params(4, 1e-3);
        p.amplitude = 0.0;
        let rec = ansatz_ladder(&p).unwrap();
        for s in &rec.shells {
            assert_eq!(s.psi.sup_l2() + s.w.sup_l2(), 0.0);
        }
    }

    #[test]
    fn rejects_non_dyadic() {
        assert!(ansatz_ladder(&params(6, 1e-3)).is_err());
        assert!(ansatz_ladder(&params(64, 1e-3)).is_err());
    }

    #[test]
    fn reconstruction_at_four_with_diagnostics() {
        let mut p = params(4, 2e-4);
        p.diagnostics = Some(DiagnosticParams { spacing: 2e-3, ..Default::default() });
        let rec = ansatz_ladder(&p).unwrap();
        assert!(rec.aborted.is_none());
        let direct = direct_solution(&p, 4).unwrap();
        let err = direct.sup_distance(&rec.reconstruct().unwrap()).unwrap();
        assert!(err < 1e-5, "reconstruction error {err}");
        let d = &rec.shells.last().unwrap().diagnostics;
        let ops = d.operator_norms.as_ref().unwrap();
        assert!(ops.h_full_plain > ops.h_dev_plain);
        assert!(d.psi_x_gamma.unwrap() > 0.0 && d.w_xb.unwrap() > 0.0);
        let dir = tempfile::tempdir().unwrap();
        rec.write_dir(dir.path()).unwrap();
        assert!(dir.path().join("diagnostics.json").exists());
        assert!(dir.path().join("w_004/manifest.json").exists());
    }
}
