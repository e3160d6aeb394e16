//! Browser bindings: a random field map, NLS frames and per-degree masses
//! of the shell operators. Every result is an equiangular raster in
//! latitude rows (north to south) by longitude columns, or a flat table.

use wasm_bindgen::prelude::*;

use sphere_nls::dynamics::{evolve_nls_on, ProjectionMode, TimeGrid};
use sphere_nls::rao::{colored_field, rao_shell, ColorWeights, RaoTrajectory, UNITARITY_TOL};
use sphere_nls::stochastic::{sample_e_n, sample_phi_alpha_by_degree, GaussianStream};
use sphere_nls::{HarmonicBasis, SpectralField};

/// Largest degree the page may request; keeps a frame under a second.
pub const MAX_DEGREE: usize = 32;

#[wasm_bindgen]
pub struct Raster {
    width: usize,
    height: usize,
    frames: usize,
    data: Vec<f32>,
    series: Vec<f64>,
}

#[wasm_bindgen]
impl Raster {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `frames · height · width` values, frame-major.
    pub fn data(&self) -> Vec<f32> {
        self.data.clone()
    }

    /// One number per frame (the mass for NLS frames), or a flat table.
    pub fn series(&self) -> Vec<f64> {
        self.series.clone()
    }
}

fn err(e: sphere_nls::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn check_degree(n: usize) -> Result<(), JsValue> {
    if n == 0 || n > MAX_DEGREE {
        return Err(JsValue::from_str(&format!("degree must lie in 1..={MAX_DEGREE}")));
    }
    Ok(())
}

/// `|f|²` on the quadrature grid.
fn density(f: &SpectralField, basis: &HarmonicBasis) -> Result<Vec<f32>, JsValue> {
    Ok(basis.synthesize(f).map_err(err)?.iter().map(|z| z.norm_sqr() as f32).collect())
}

/// `|Π_N φ_α|²` for one draw of the Gaussian data.
#[wasm_bindgen]
pub fn random_field_map(alpha: f64, n: usize, seed: u64) -> Result<Raster, JsValue> {
    check_degree(n)?;
    let basis = HarmonicBasis::for_degree(n);
    let f = sample_phi_alpha_by_degree(seed, alpha, n);
    let g = basis.grid();
    Ok(Raster {
        width: g.n_lon(),
        height: g.n_lat(),
        frames: 1,
        data: density(&f, &basis)?,
        series: vec![f.norm_sqr()],
    })
}

/// `|u(t)|²` at `frames` equally spaced times in `[0, t]` for the truncated flow.
#[wasm_bindgen]
pub fn nls_frames(
    alpha: f64,
    n: usize,
    seed: u64,
    amplitude: f64,
    t: f64,
    dt: f64,
    frames: usize,
) -> Result<Raster, JsValue> {
    check_degree(n)?;
    if frames < 2 {
        return Err(JsValue::from_str("need at least two frames"));
    }
    let basis = HarmonicBasis::for_degree(n);
    let grid = TimeGrid::forward(t, dt).map_err(err)?;
    let u0 = &sample_phi_alpha_by_degree(seed, alpha, n) * amplitude;
    let traj = evolve_nls_on(&u0, n, grid, &basis, ProjectionMode::ProjectEachStep).map_err(err)?;
    let mut data = Vec::new();
    let mut series = Vec::new();
    for k in 0..frames {
        let i = k * (traj.len() - 1) / (frames - 1);
        data.extend(density(&traj.snapshots[i], &basis)?);
        series.push(traj.snapshots[i].norm_sqr());
    }
    let g = basis.grid();
    Ok(Raster { width: g.n_lon(), height: g.n_lat(), frames, data, series })
}

/// Per-degree masses of the colored field of one shell over `[0, t]`, and
/// how far each shell operator has moved from the free propagator.
///
/// The series holds rows `(n, t, ‖π_n ψ(t)‖², ‖H_n(t) − e^{−itλ_n²}‖_F)`;
/// the raster is empty.
#[wasm_bindgen]
pub fn rao_degree_masses(alpha: f64, shell: usize, seed: u64, t: f64, dt: f64) -> Result<Raster, JsValue> {
    check_degree(shell)?;
    if shell < 2 || !shell.is_power_of_two() {
        return Err(JsValue::from_str("shell must be a dyadic degree ≥ 2"));
    }
    let half = shell / 2;
    let grid = TimeGrid::forward(t, dt).map_err(err)?;
    let phi = sample_phi_alpha_by_degree(seed, alpha, half);
    let u = evolve_nls_on(&phi, half, grid, &HarmonicBasis::for_degree(half), ProjectionMode::ProjectEachStep)
        .map_err(err)?;
    let basis = HarmonicBasis::for_degree(shell);
    let rao = rao_shell(shell, &u, &basis, UNITARITY_TOL).map_err(err)?;
    let inputs = RaoTrajectory::degrees(shell)
        .map(|n| sample_e_n(&mut GaussianStream::new(seed, n as u64), n, n))
        .collect::<sphere_nls::Result<Vec<_>>>()
        .map_err(err)?;
    let psi = colored_field(&rao, &inputs, ColorWeights::MatchPhiAlpha(alpha)).map_err(err)?;
    let mut series = Vec::new();
    for entry in &rao.entries {
        let dev = entry.deviation();
        for (i, d) in dev.iter().enumerate() {
            let frob = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            series.extend([entry.n as f64, psi.t(i), psi.snapshots[i].degree_mass(entry.n), frob]);
        }
    }
    Ok(Raster { width: 0, height: 0, frames: 0, data: Vec::new(), series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_has_grid_shape() {
        let r = random_field_map(1.5, 8, 1).unwrap();
        assert_eq!(r.data().len(), r.width() * r.height());
        assert!(r.data().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn frames_conserve_mass() {
        let r = nls_frames(1.5, 4, 2, 1.0, 0.1, 1e-3, 5).unwrap();
        assert_eq!(r.data().len(), 5 * r.width() * r.height());
        let m = r.series();
        assert!(m.iter().all(|x| (x - m[0]).abs() < 1e-10 * m[0]));
    }

    #[test]
    fn rao_table_rows() {
        let r = rao_degree_masses(1.5, 4, 3, 0.02, 1e-3).unwrap();
        let rows = r.series();
        // degrees 3 and 4, 41 nodes each
        assert_eq!(rows.len(), 4 * 2 * 41);
        assert_eq!(rows[3], 0.0);
    }
}
