use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use sphere_nls::dynamics::{energy, evolve_nls_on, evolve_resonant_on, FieldTrajectory, ProjectionMode, TimeGrid};
use sphere_nls::harmonics::eigenvalue_sq;
use sphere_nls::rao::{
    ansatz_ladder, direct_solution, law_invariance_stat, rao_shell, wick_cancellation_residual, DiagnosticParams,
    LadderParams, LawParams, RaoTrajectory, RemainderOptions, UNITARITY_TOL,
};
use sphere_nls::rnorms::{estimate_probe, ProbeKind, ProbeParams};
use sphere_nls::stochastic::{
    ensemble_estimate, expected_hs_sq, sample_e_n, sample_phi_alpha, sample_phi_alpha_by_degree, GaussianStream,
};
use sphere_nls::HarmonicBasis;

use crate::config::ExperimentConfig;
use crate::report::{write_csv, write_json, SubResult};

type Job<'a> = Box<dyn Fn() -> Result<SubResult> + Send + Sync + 'a>;

/// Runs independent jobs on the current pool; a failing job is recorded,
/// not propagated.
fn run_jobs(jobs: Vec<(String, Job)>) -> Vec<SubResult> {
    jobs.into_par_iter().map(|(name, job)| job().unwrap_or_else(|e| SubResult::failed(name, &e))).collect()
}

pub fn run(subcommand: &str, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SubResult>> {
    Ok(match subcommand {
        "simulate" => run_jobs(simulate_jobs(cfg, dir)),
        "converge" => run_jobs(converge_jobs(cfg, dir)),
        "rao-verify" => run_jobs(rao_jobs(cfg, dir)),
        "ladder" => run_jobs(ladder_jobs(cfg, dir)),
        "measure-norms" => run_jobs(norm_jobs(cfg, dir)),
        "ensemble" => run_jobs(ensemble_jobs(cfg, dir)),
        other => bail!("unknown subcommand {other}"),
    })
}

fn ladder_params(cfg: &ExperimentConfig, n_final: usize, diagnostics: Option<DiagnosticParams>) -> LadderParams {
    let e = &cfg.experiment;
    LadderParams {
        alpha: e.alpha,
        n_final,
        half_width: e.t,
        dt: e.dt,
        seed: e.master_seed,
        amplitude: e.amplitude,
        remainder: RemainderOptions::default(),
        diagnostics,
    }
}

#[derive(Serialize)]
struct DriftRow {
    n: usize,
    t: f64,
    mass: f64,
    energy: f64,
    h1_sq: f64,
    mass_drift: f64,
    energy_drift: f64,
}

#[derive(Serialize)]
struct PhaseRow {
    n: usize,
    degree: usize,
    free_phase: f64,
    observed_phase: Option<f64>,
}

fn wrap(phase: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    (phase + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI
}

fn simulate_jobs<'a>(cfg: &'a ExperimentConfig, dir: &'a Path) -> Vec<(String, Job<'a>)> {
    let e = &cfg.experiment;
    e.n.iter()
        .map(|&n| {
            let name = format!("simulate_n{n}");
            let job: Job = Box::new(move || {
                let basis = HarmonicBasis::for_degree(n);
                let grid = TimeGrid::forward(e.t, e.dt)?;
                let u0 = &sample_phi_alpha_by_degree(e.master_seed, e.alpha, n) * e.amplitude;
                let traj = if e.system == "resonant" {
                    evolve_resonant_on(&u0, grid, &basis)?
                } else {
                    evolve_nls_on(&u0, n, grid, &basis, ProjectionMode::ProjectEachStep)?
                };
                let (m0, e0) = (u0.norm_sqr(), energy(&u0, &basis)?);
                let rel = |x: f64, x0: f64| if x0 == 0.0 { x.abs() } else { (x - x0).abs() / x0.abs() };
                let rows: Vec<DriftRow> = traj
                    .snapshots
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let en = energy(s, &basis)?;
                        Ok(DriftRow {
                            n,
                            t: traj.t(i),
                            mass: s.norm_sqr(),
                            energy: en,
                            h1_sq: s.sobolev_norm(1.0).powi(2),
                            mass_drift: rel(s.norm_sqr(), m0),
                            energy_drift: rel(en, e0),
                        })
                    })
                    .collect::<sphere_nls::Result<_>>()?;
                write_csv(&dir.join(format!("drift_n{n}.csv")), &rows)?;

                let last = traj.last();
                let phases: Vec<PhaseRow> = (0..=n)
                    .map(|d| {
                        let (a, b) = (u0.get(d, 0), last.get(d, 0));
                        PhaseRow {
                            n,
                            degree: d,
                            free_phase: wrap(-e.t * eigenvalue_sq(d) as f64),
                            observed_phase: (a.norm() > 0.0).then(|| wrap((b / a).arg())),
                        }
                    })
                    .collect();
                write_csv(&dir.join(format!("phases_n{n}.csv")), &phases)?;
                traj.write_dir(
                    &dir.join(format!("trajectory_n{n}")),
                    json!({"system": e.system, "seed": e.master_seed}),
                )?;

                let mass_drift = rows.iter().map(|r| r.mass_drift).fold(0.0, f64::max);
                let energy_drift = rows.iter().map(|r| r.energy_drift).fold(0.0, f64::max);
                Ok(SubResult::ok(
                    format!("simulate_n{n}"),
                    mass_drift < 1e-9,
                    json!({"max_mass_drift": mass_drift, "max_energy_drift": energy_drift}),
                ))
            });
            (name, job)
        })
        .collect()
}

#[derive(Serialize)]
struct DiffRow {
    n: usize,
    two_n: usize,
    sup_hs_difference: f64,
}

fn converge_jobs<'a>(cfg: &'a ExperimentConfig, dir: &'a Path) -> Vec<(String, Job<'a>)> {
    if cfg.experiment.n.len() < 2 {
        return Vec::new();
    }
    let job: Job = Box::new(move || {
        let mut ns = cfg.experiment.n.clone();
        ns.sort_unstable();
        let s = cfg.params.s;
        let params = ladder_params(cfg, *ns.last().unwrap(), None);
        let sols: Vec<FieldTrajectory> =
            ns.par_iter().map(|&n| direct_solution(&params, n)).collect::<sphere_nls::Result<_>>()?;
        let rows: Vec<DiffRow> = sols
            .windows(2)
            .map(|w| {
                let d = w[1].sub(&w[0].resized(w[1].n_max))?;
                Ok(DiffRow { n: w[0].n_max, two_n: w[1].n_max, sup_hs_difference: d.sup_sobolev(s) })
            })
            .collect::<sphere_nls::Result<_>>()?;
        write_csv(&dir.join("differences.csv"), &rows)?;
        let decreasing = rows.windows(2).all(|r| r[1].sup_hs_difference < r[0].sup_hs_difference);
        let diffs: Vec<f64> = rows.iter().map(|r| r.sup_hs_difference).collect();
        Ok(SubResult::ok(
            "converge",
            decreasing,
            json!({"s": s, "differences": diffs, "strictly_decreasing": decreasing}),
        ))
    });
    vec![("converge".into(), job)]
}

#[derive(Serialize)]
struct UnitarityRow {
    shell: usize,
    n: usize,
    max_unitarity: f64,
}

#[derive(Serialize)]
struct WickRow {
    shell: usize,
    n: usize,
    t: f64,
    residual: f64,
}

const WICK_PAIRS: usize = 10;

fn shell_rao(cfg: &ExperimentConfig, shell: usize) -> Result<(RaoTrajectory, FieldTrajectory, HarmonicBasis)> {
    let e = &cfg.experiment;
    let half = shell / 2;
    let grid = TimeGrid::forward(e.t, e.dt)?;
    let phi = &sample_phi_alpha_by_degree(e.master_seed, e.alpha, half) * e.amplitude;
    let u = evolve_nls_on(&phi, half, grid, &HarmonicBasis::for_degree(half), ProjectionMode::ProjectEachStep)?;
    let basis = HarmonicBasis::for_degree(shell);
    Ok((rao_shell(shell, &u, &basis, UNITARITY_TOL)?, u, basis))
}

fn rao_jobs<'a>(cfg: &'a ExperimentConfig, dir: &'a Path) -> Vec<(String, Job<'a>)> {
    let e = &cfg.experiment;
    let mut jobs: Vec<(String, Job)> = Vec::new();
    for &shell in e.n.iter().filter(|&&n| n >= 2) {
        jobs.push((
            format!("unitarity_n{shell}"),
            Box::new(move || {
                let (rao, _, _) = shell_rao(cfg, shell)?;
                let rows: Vec<UnitarityRow> = rao
                    .entries
                    .iter()
                    .map(|en| UnitarityRow { shell, n: en.n, max_unitarity: en.max_unitarity })
                    .collect();
                write_csv(&dir.join(format!("unitarity_n{shell}.csv")), &rows)?;
                let worst = rao.max_unitarity();
                Ok(SubResult::ok(format!("unitarity_n{shell}"), worst < UNITARITY_TOL, json!({"max_unitarity": worst})))
            }),
        ));
        jobs.push((
            format!("wick_n{shell}"),
            Box::new(move || {
                let (rao, u, basis) = shell_rao(cfg, shell)?;
                let lo = shell / 2 + 1;
                let mut pick = GaussianStream::new(e.master_seed, 1 << 40);
                let mut rows = Vec::new();
                for sample in 0..WICK_PAIRS as u64 {
                    let n = lo + pick.index(shell - lo + 1);
                    let node = pick.index(u.len());
                    let en = sample_e_n(&mut GaussianStream::new(e.master_seed, sample), n, n)?;
                    let entry = rao.entry(n).expect("degree lies in the shell");
                    let residual = wick_cancellation_residual(entry, &en, u.t(node), &basis)?;
                    rows.push(WickRow { shell, n, t: u.t(node), residual });
                }
                write_csv(&dir.join(format!("wick_n{shell}.csv")), &rows)?;
                let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
                Ok(SubResult::ok(format!("wick_n{shell}"), worst < 1e-8, json!({"max_residual": worst})))
            }),
        ));
        jobs.push((
            format!("law_n{shell}"),
            Box::new(move || {
                let report = law_invariance_stat(&LawParams {
                    n: shell,
                    shell,
                    t: e.t,
                    dt: e.dt,
                    alpha: e.alpha,
                    samples: e.ensemble,
                    seed: e.master_seed,
                    amplitude: e.amplitude,
                })?;
                write_json(&dir.join(format!("law_n{shell}.json")), &report)?;
                Ok(SubResult::ok(format!("law_n{shell}"), report.passed, serde_json::to_value(&report)?))
            }),
        ));
    }
    jobs
}

#[derive(Serialize)]
struct LadderRow {
    shell: usize,
    max_unitarity: f64,
    psi_sup_h06: f64,
    w_sup_h06: f64,
    psi_sup_l2: f64,
    w_sup_l2: f64,
    psi_lq_linf: Option<f64>,
    hex_lq_linf: Option<f64>,
    psi_x_gamma: Option<f64>,
    w_xb: Option<f64>,
    w_xb_upper_half: Option<f64>,
    remainder_iterations: usize,
    remainder_residual: f64,
}

fn ladder_jobs<'a>(cfg: &'a ExperimentConfig, dir: &'a Path) -> Vec<(String, Job<'a>)> {
    let Some(&n_final) = cfg.experiment.n.iter().max() else {
        return Vec::new();
    };
    let job: Job = Box::new(move || {
        let p = &cfg.params;
        let diag = DiagnosticParams {
            q: p.q,
            gamma: p.gamma,
            gamma1: p.gamma1,
            b: p.b,
            delta: p.delta,
            spacing: p.spacing,
            sn_norms: p.sn_norms,
        };
        let params = ladder_params(cfg, n_final, Some(diag));
        let rec = ansatz_ladder(&params)?;
        rec.write_dir(&dir.join("ladder"))?;
        let rows: Vec<LadderRow> = rec
            .diagnostics()
            .into_iter()
            .map(|d| LadderRow {
                shell: d.shell,
                max_unitarity: d.max_unitarity,
                psi_sup_h06: d.psi_sup_h06,
                w_sup_h06: d.w_sup_h06,
                psi_sup_l2: d.psi_sup_l2,
                w_sup_l2: d.w_sup_l2,
                psi_lq_linf: d.psi_lq_linf,
                hex_lq_linf: d.hex_lq_linf,
                psi_x_gamma: d.psi_x_gamma,
                w_xb: d.w_xb,
                w_xb_upper_half: d.w_xb_upper_half,
                remainder_iterations: d.remainder_iterations,
                remainder_residual: d.remainder_residual,
            })
            .collect();
        write_csv(&dir.join("diagnostics.csv"), &rows)?;
        if let Some(reason) = &rec.aborted {
            return Ok(SubResult::ok("ladder", false, json!({"aborted": reason})));
        }
        let err = direct_solution(&params, n_final)?.sup_distance(&rec.reconstruct()?)?;
        Ok(SubResult::ok("ladder", err < 1e-5, json!({"n_final": n_final, "reconstruction_error": err})))
    });
    vec![("ladder".into(), job)]
}

fn norm_jobs<'a>(cfg: &'a ExperimentConfig, dir: &'a Path) -> Vec<(String, Job<'a>)> {
    let e = &cfg.experiment;
    if e.n.is_empty() {
        return Vec::new();
    }
    let p = &cfg.params;
    let kinds = [
        ProbeKind::SoggeLp { p: 2.0 },
        ProbeKind::SoggeLp { p: 4.0 },
        ProbeKind::SoggeLp { p: 6.0 },
        ProbeKind::SoggeLp { p: f64::INFINITY },
        ProbeKind::Bilinear,
        ProbeKind::Embedding { q: p.q, gamma: p.gamma },
        ProbeKind::TimeCutoff { q: p.q, gamma: p.gamma, gamma1: p.gamma1 },
    ];
    let job: Job = Box::new(move || {
        let params = ProbeParams {
            degrees: e.n.clone(),
            samples: e.ensemble.max(1),
            seed: e.master_seed,
            half_width: e.t,
            dt: e.dt,
        };
        let reports = kinds.par_iter().map(|&k| estimate_probe(k, &params)).collect::<sphere_nls::Result<Vec<_>>>()?;
        write_json(&dir.join("norms.json"), &reports)?;
        #[derive(Serialize)]
        struct Row<'r> {
            name: &'r str,
            value: f64,
            estimator_kind: String,
            seed: u64,
        }
        let rows: Vec<Row> = reports
            .iter()
            .map(|r| Row {
                name: &r.name,
                value: r.value,
                estimator_kind: format!("{:?}", r.estimator_kind),
                seed: r.seed,
            })
            .collect();
        write_csv(&dir.join("norms.csv"), &rows)?;
        let sogge2 = reports[0].value;
        let bilinear = reports[4].value;
        let passed = (sogge2 - 1.0).abs() < 1e-12 && bilinear < 10.0 && reports.iter().all(|r| r.value.is_finite());
        Ok(SubResult::ok("measure_norms", passed, json!({"sogge_p2": sogge2, "bilinear": bilinear})))
    });
    vec![("measure_norms".into(), job)]
}

#[derive(Serialize)]
struct MomentRow {
    n: usize,
    s: f64,
    mean: f64,
    std_error: f64,
    expected: f64,
    z: f64,
}

fn ensemble_jobs<'a>(cfg: &'a ExperimentConfig, dir: &'a Path) -> Vec<(String, Job<'a>)> {
    let e = &cfg.experiment;
    if e.n.is_empty() {
        return Vec::new();
    }
    let job: Job = Box::new(move || {
        let mut rows = Vec::new();
        for &n in &e.n {
            for s in [0.0, cfg.params.s] {
                let est = ensemble_estimate(e.master_seed, "hs_sq", e.ensemble, |stream| {
                    Ok(sample_phi_alpha(stream, e.alpha, n).sobolev_norm(s).powi(2))
                })?;
                let expected = expected_hs_sq(e.alpha, s, n);
                rows.push(MomentRow {
                    n,
                    s,
                    mean: est.mean,
                    std_error: est.std_error,
                    expected,
                    z: est.z_score(expected),
                });
            }
        }
        write_csv(&dir.join("moments.csv"), &rows)?;
        let worst = rows.iter().map(|r| r.z).fold(0.0, f64::max);
        Ok(SubResult::ok("ensemble", worst < 5.0, json!({"max_z": worst})))
    });
    vec![("ensemble".into(), job)]
}
