//! Waveguide and free-space dipole-dipole coupling matrices and the
//! collective (non-Hermitian) modes they induce.

use ndarray::{Array1, Array2};
use ndarray_linalg::Eig;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::Scenario;

/// Dipole-dipole coupling through the free-space vacuum modes, for dipoles at
/// angle `phi` to the emitter chain and dimensionless separation
/// `x = k_a * r_jl`.
pub fn nonwaveguide_coupling(gamma_j: f64, gamma_l: f64, x: f64, phi: f64) -> Result<C64> {
    if gamma_j < 0.0 || gamma_l < 0.0 {
        return Err(Error::Validation(format!(
            "free-space rates must be >= 0, got {gamma_j}, {gamma_l}"
        )));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must also fail
    if !(x > 0.0) {
        return Err(Error::SingularSeparation(format!(
            "k_a * r must be > 0, got {x} (coincident emitters unsupported)"
        )));
    }
    let pref = 0.75 * (gamma_j * gamma_l).sqrt();
    let sin2 = phi.sin().powi(2);
    let near = 1.0 - 3.0 * phi.cos().powi(2);
    // far field -i/x; near field (1 - 3 cos^2 phi)(1/x^2 + i/x^3)
    let val = C64::new(near / (x * x), -sin2 / x + near / (x * x * x));
    Ok(pref * val)
}

/// Coupling matrices for an emitter array.
///
/// `effective` is the non-Hermitian mode matrix `G`: diagonal
/// `(Gamma_p + gamma_p)/2`, off-diagonal `(V^w + V^nw) e^{i k_a z_pq}`.
/// The dk-dependent part of the propagation phase belongs to the spectra
/// solver, not here.
#[derive(Debug, Clone)]
pub struct CouplingMatrices {
    /// Waveguide couplings `sqrt(Gamma_j Gamma_l)/2`, diagonal `Gamma_j/2`.
    pub v_w: Array2<f64>,
    /// Free-space couplings; diagonal `gamma_j/2`. Off-diagonals are zero
    /// when the scenario disables them.
    pub v_nw: Array2<C64>,
    /// Propagation phases `e^{i k_a z_pq}` (unit diagonal).
    pub phase: Array2<C64>,
    /// Effective mode matrix `G`.
    pub effective: Array2<C64>,
}

impl CouplingMatrices {
    /// Total coupling `V_pq` without the propagation phase: off-diagonal
    /// `V^w + V^nw`, diagonal `(Gamma_p + gamma_p)/2`.
    pub fn total(&self, p: usize, q: usize) -> C64 {
        C64::new(self.v_w[(p, q)], 0.0) + self.v_nw[(p, q)]
    }

    pub fn n(&self) -> usize {
        self.v_w.nrows()
    }
}

pub fn build_couplings(scenario: &Scenario) -> Result<CouplingMatrices> {
    let emitters = scenario.array.emitters();
    let n = emitters.len();
    let k_a = scenario.array.units.k_a();
    let phi = scenario.array.phi;

    let mut v_w = Array2::zeros((n, n));
    let mut v_nw = Array2::zeros((n, n));
    let mut phase = Array2::from_elem((n, n), C64::new(1.0, 0.0));
    for j in 0..n {
        v_w[(j, j)] = 0.5 * emitters[j].gamma_wg;
        v_nw[(j, j)] = C64::new(0.5 * emitters[j].gamma_nw, 0.0);
        for l in 0..j {
            let r = scenario.array.separation(j, l);
            if r == 0.0 {
                return Err(Error::SingularSeparation(format!(
                    "emitters {l} and {j} are coincident at z = {}",
                    emitters[j].z
                )));
            }
            v_w[(j, l)] = 0.5 * (emitters[j].gamma_wg * emitters[l].gamma_wg).sqrt();
            v_w[(l, j)] = v_w[(j, l)];
            if scenario.include_nw_coupling {
                let v = nonwaveguide_coupling(
                    emitters[j].gamma_nw,
                    emitters[l].gamma_nw,
                    k_a * r,
                    phi,
                )?;
                v_nw[(j, l)] = v;
                v_nw[(l, j)] = v;
            }
            let p = C64::from_polar(1.0, k_a * r);
            phase[(j, l)] = p;
            phase[(l, j)] = p;
        }
    }

    let mut effective = Array2::zeros((n, n));
    for p in 0..n {
        for q in 0..n {
            let v = C64::new(v_w[(p, q)], 0.0) + v_nw[(p, q)];
            effective[(p, q)] = if p == q { v } else { v * phase[(p, q)] };
        }
    }
    Ok(CouplingMatrices {
        v_w,
        v_nw,
        phase,
        effective,
    })
}

/// `G` with the emitter detunings folded in: `K = G + i diag(dk_p v_g)`.
/// `M(dk) ~= K - i dk I` up to the dk-dependence of the propagation phases,
/// so `Im(eig K)` locates the spectral peaks and `2 Re(eig K)` their widths.
pub fn mode_matrix_with_detuning(scenario: &Scenario, coupling: &CouplingMatrices) -> Array2<C64> {
    let mut k = coupling.effective.clone();
    for (p, e) in scenario.array.emitters().iter().enumerate() {
        k[(p, p)] += C64::new(0.0, e.dk);
    }
    k
}

/// One collective eigenmode of the effective matrix.
#[derive(Debug, Clone)]
pub struct CollectiveMode {
    /// Eigenvalue `mu`: `Re(mu)` is the amplitude decay rate (intensity
    /// linewidth `2 Re(mu)`), `Im(mu)` minus the mean diagonal shift is the
    /// collective energy shift.
    pub eigenvalue: C64,
    pub vector: Array1<C64>,
}

/// Eigenmodes of the effective matrix, sorted by descending decay rate.
pub fn collective_modes(coupling: &CouplingMatrices) -> Result<Vec<CollectiveMode>> {
    eigenmodes(&coupling.effective)
}

/// Eigenmodes of an arbitrary complex mode matrix, sorted by descending real
/// part.
pub fn eigenmodes(matrix: &Array2<C64>) -> Result<Vec<CollectiveMode>> {
    let (vals, vecs) = matrix.eig().map_err(|e| {
        Error::Numerical(format!(
            "eigen-decomposition failed: {e}; matrix = {matrix:?}"
        ))
    })?;
    let mut modes: Vec<CollectiveMode> = vals
        .iter()
        .enumerate()
        .map(|(i, &mu)| CollectiveMode {
            eigenvalue: mu,
            vector: vecs.column(i).to_owned(),
        })
        .collect();
    modes.sort_by(|a, b| b.eigenvalue.re.total_cmp(&a.eigenvalue.re));
    Ok(modes)
}

/// Collective energy shifts relative to the mean diagonal of `G`.
pub fn energy_shifts(coupling: &CouplingMatrices, modes: &[CollectiveMode]) -> Vec<f64> {
    let n = coupling.n();
    let mean_diag: f64 = (0..n).map(|p| coupling.effective[(p, p)].im).sum::<f64>() / n as f64;
    modes.iter().map(|m| m.eigenvalue.im - mean_diag).collect()
}
