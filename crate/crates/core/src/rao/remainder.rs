//! The remainder `w_N = u_N − u_{N/2} − ψ_N` as a Duhamel fixed point.
//!
//! With `u = u_{N/2}` and `v = ψ + w`, `w` solves
//! `i∂_t w = (−Δ+1)w + Π_N N(u+v) − Π_{N/2}N(u) − 2N_{(0,1)}(ψ,u,u)`, `w(0) = 0`,
//! because `ψ` already absorbs the singular interaction `2N_{(0,1)}(ψ,u,u)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{duhamel_trajectory, FieldTrajectory, QuadratureRule};
use crate::error::{Error, Result};
use crate::fields::{Projection, SpectralField};
use crate::harmonics::HarmonicBasis;
use crate::nonlinear::{singular_form_degrees, trilinear, trilinear_pairing, wick_cubic, PairingConstraint};
use crate::rnorms::bump;

type C64 = Complex64;

/// How the right-hand side is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsForm {
    /// `Π_N N(u+ψ+w)` plus the precomputed source.
    Direct,
    /// The expansion of `N(u+v) − N(u)` into its six multilinear pieces,
    /// with the `(0,1)` and `[0,1]` pairings evaluated separately.
    SixTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderOptions {
    /// Stop once successive iterates are this close in `L^∞_T L²`.
    pub tol: f64,
    pub max_iter: usize,
    pub form: RhsForm,
    /// Multiply every iterate by `χ_T` with this half-width.
    pub cutoff: Option<f64>,
}

impl Default for RemainderOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 40, form: RhsForm::Direct, cutoff: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderOutcome {
    Converged,
    MaxIterations,
    /// Successive increments grew three times in a row.
    Diverged,
}

#[derive(Clone, Debug)]
pub struct RemainderResult {
    pub w: FieldTrajectory,
    /// Last increment `sup_t ‖w_{k+1} − w_k‖_{L²}`.
    pub residual: f64,
    pub iterations: usize,
    pub increments: Vec<f64>,
    /// `sup_t ‖w_k‖_{L²}` of every iterate.
    pub iterate_norms: Vec<f64>,
    pub outcome: RemainderOutcome,
    pub quadrature: QuadratureRule,
}

/// `N_{(0,1)}(f,u,u)` through the `(0,1)` pairing.
fn paired(
    f: &SpectralField,
    u: &SpectralField,
    basis: &HarmonicBasis,
    n_out: usize,
    c: &PairingConstraint,
) -> Result<SpectralField> {
    let mut out = trilinear_pairing(f, u, u, c, basis, n_out)?;
    out.axpy(C64::new(-u.norm_sqr(), 0.0), &f.resized(n_out));
    Ok(out)
}

/// The complement `N(f,u,u) − N_{(0,1)}(f,u,u)`: the `[0,1]` pairing
/// together with the `−⟨f|u⟩u` part of the polarized Wick subtraction.
fn unpaired(
    f: &SpectralField,
    u: &SpectralField,
    basis: &HarmonicBasis,
    n_out: usize,
    c: &PairingConstraint,
) -> Result<SpectralField> {
    let mut out = trilinear_pairing(f, u, u, c, basis, n_out)?;
    out.axpy(-f.inner(u), &u.resized(n_out));
    Ok(out)
}

struct Node<'a> {
    u: SpectralField,
    psi: &'a SpectralField,
    source: SpectralField,
}

pub fn remainder_solve(
    shell: usize,
    psi: &FieldTrajectory,
    u_half: &FieldTrajectory,
    basis: &HarmonicBasis,
    opts: RemainderOptions,
) -> Result<RemainderResult> {
    psi.check_same_grid(u_half)?;
    if basis.n_max() < shell {
        return Err(Error::Config(format!("basis degree {} cannot resolve shell {shell}", basis.n_max())));
    }
    if psi.n_max > shell || 2 * u_half.n_max > shell.max(1) {
        return Err(Error::Input(format!(
            "shell {shell} received ψ of degree {} and u of degree {}",
            psi.n_max, u_half.n_max
        )));
    }
    let half = shell / 2;
    let grid = psi.grid;
    let pair01 = PairingConstraint::parse("(0,1)")?;
    let nonpair01 = PairingConstraint::parse("[0,1]")?;

    let nodes: Vec<Node> = (0..grid.len)
        .into_par_iter()
        .map(|i| {
            let u = u_half.snapshots[i].resized(shell);
            let p = &psi.snapshots[i];
            let psi_full = p.resized(shell);
            let source = match opts.form {
                RhsForm::Direct => {
                    let mut s = -&wick_cubic(&u, basis, shell)?.project(Projection::LowPass(half));
                    let sing = singular_form_degrees(&psi_full, &u, &u, basis, half + 1, shell)?;
                    s.axpy(C64::new(-2.0, 0.0), &sing);
                    s
                }
                RhsForm::SixTerm => wick_cubic(&u, basis, shell)?.project(Projection::Dyadic(shell)),
            };
            Ok(Node { u, psi: p, source })
        })
        .collect::<Result<_>>()?;

    let rhs = |node: &Node, w: &SpectralField| -> Result<SpectralField> {
        let mut v = node.psi.resized(shell);
        v += w;
        let mut f = match opts.form {
            RhsForm::Direct => {
                let mut total = node.u.clone();
                total += &v;
                wick_cubic(&total, basis, shell)?
            }
            RhsForm::SixTerm => {
                let u = &node.u;
                let mut f = &paired(w, u, basis, shell, &pair01)? * 2.0;
                f += &(&unpaired(&v, u, basis, shell, &nonpair01)? * 2.0);
                f += &trilinear(u, &v, u, basis, shell)?;
                f += &(&trilinear(&v, &v, u, basis, shell)? * 2.0);
                f += &trilinear(&v, u, &v, basis, shell)?;
                f += &trilinear(&v, &v, &v, basis, shell)?;
                f
            }
        };
        f += &node.source;
        Ok(f)
    };

    let mut w = FieldTrajectory::zeros(grid, shell);
    let mut increments = Vec::new();
    let mut iterate_norms = Vec::new();
    let mut outcome = RemainderOutcome::MaxIterations;
    let mut quadrature = QuadratureRule::Simpson;
    for _ in 0..opts.max_iter {
        let snapshots = nodes.par_iter().zip(&w.snapshots).map(|(node, wi)| rhs(node, wi)).collect::<Result<_>>()?;
        let forcing = FieldTrajectory { grid, n_max: shell, snapshots };
        let (integral, rule) = duhamel_trajectory(&forcing);
        quadrature = rule;
        let next = integral.map(shell, |_, t, f| {
            let scale = opts.cutoff.map_or(1.0, |half_width| bump(t, half_width));
            f * C64::new(0.0, -scale)
        });
        if !next.snapshots.iter().all(SpectralField::is_finite) {
            return Err(Error::NotFinite { step: increments.len() });
        }
        let incr = next.sup_distance(&w)?;
        increments.push(incr);
        iterate_norms.push(next.sup_l2());
        w = next;
        if incr < opts.tol {
            outcome = RemainderOutcome::Converged;
            break;
        }
        let k = increments.len();
        if k >= 4 && (k - 3..k).all(|j| increments[j] > increments[j - 1]) {
            outcome = RemainderOutcome::Diverged;
            break;
        }
    }
    Ok(RemainderResult {
        w,
        residual: *increments.last().unwrap_or(&0.0),
        iterations: increments.len(),
        increments,
        iterate_norms,
        outcome,
        quadrature,
    })
}
