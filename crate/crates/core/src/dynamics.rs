//! Time-domain integration of the emitter amplitude equations, with drive,
//! detuning modulation and optional intra-array retardation.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use crate::coupling::{build_couplings, collective_modes, CouplingMatrices};
use crate::error::{Error, Result};
use crate::model::{Input, RetardationMode, Scenario};
use crate::numeric::oscillatory_integral;

/// Uniform-grid complex amplitude histories for all emitters.
#[derive(Debug, Clone)]
pub struct AmplitudeTrajectory {
    pub t: Vec<f64>,
    pub step: f64,
    /// `alpha[j][i]` is emitter j at time `t[i]`.
    pub alpha: Vec<Vec<C64>>,
    /// Stored time derivatives, used for cubic Hermite history lookups.
    pub deriv: Vec<Vec<C64>>,
    /// Drive samples `b_j(t_i)`, recorded when the scenario has an input.
    pub drive_record: Option<Vec<Vec<C64>>>,
}

impl AmplitudeTrajectory {
    pub fn n_emitters(&self) -> usize {
        self.alpha.len()
    }

    pub fn final_survival(&self) -> f64 {
        self.alpha
            .iter()
            .map(|a| a.last().map_or(0.0, |v| v.norm_sqr()))
            .sum()
    }
}

/// Incident-photon excitation amplitude `b_j(t)`.
pub fn drive(scenario: &Scenario, j: usize, t: f64) -> Result<C64> {
    let e = &scenario.array.emitters()[j];
    match &scenario.input {
        Input::None => Err(Error::MissingDrive),
        Input::Gaussian(p) => {
            let k0 = scenario.array.units.k_a() + p.center_dk;
            let u = 0.5 * p.width * (e.z - t);
            let mag = (8.0 * PI).powf(-0.25) * (e.gamma_wg * p.width).sqrt() * (-u * u).exp();
            let phase = k0 * e.z + (e.dk - p.center_dk) * t;
            Ok(C64::new(0.0, -mag) * C64::from_polar(1.0, phase))
        }
        Input::Tabulated(tab) => {
            let amps: Vec<C64> = tab
                .dk
                .iter()
                .zip(tab.re.iter().zip(&tab.im))
                .map(|(_, (re, im))| C64::new(*re, *im))
                .collect();
            let integral = oscillatory_integral(&tab.dk, &amps, e.z - t);
            let pref = C64::new(0.0, -1.0) / (2.0 * PI)
                * (0.5 * e.gamma_wg).sqrt()
                * C64::from_polar(1.0, scenario.array.units.k_a() * e.z + e.dk * t);
            Ok(pref * integral)
        }
    }
}

/// Default integration horizon: ten lifetimes of the slowest collective mode
/// (intensity convention), plus the pulse transit time, capped at 1e4.
pub fn default_t_max(scenario: &Scenario) -> Result<f64> {
    let coupling = build_couplings(scenario)?;
    let modes = collective_modes(&coupling)?;
    let min_rate = modes
        .iter()
        .map(|m| m.eigenvalue.re)
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let tail = 10.0 / (2.0 * min_rate).max(1e-3);
    let lead = match &scenario.input {
        Input::Gaussian(p) => {
            let z_max = scenario
                .array
                .emitters()
                .iter()
                .map(|e| e.z)
                .fold(0.0, f64::max);
            z_max + 10.0 / p.width
        }
        Input::Tabulated(_) => {
            scenario
                .array
                .emitters()
                .iter()
                .map(|e| e.z)
                .fold(0.0, f64::max)
                + 10.0
        }
        Input::None => 0.0,
    };
    Ok((lead + tail).min(1e4))
}

struct System {
    n: usize,
    /// `c[(j, l)] = V_jl e^{i k_l z_jl}` (diagonal `V_jj`).
    c: Vec<C64>,
    /// Detuning differences `dw[(j, l)] = (dk_j - dk_l) v_g`.
    dw: Vec<f64>,
    /// Photon travel times between emitters; all zero in markovian mode.
    delay: Vec<f64>,
    any_delay: bool,
}

impl System {
    fn build(scenario: &Scenario, coupling: &CouplingMatrices) -> Self {
        let emitters = scenario.array.emitters();
        let n = emitters.len();
        let k_a = scenario.array.units.k_a();
        let retarded = scenario.retardation_mode == RetardationMode::Full;
        let mut c = vec![C64::new(0.0, 0.0); n * n];
        let mut dw = vec![0.0; n * n];
        let mut delay = vec![0.0; n * n];
        for j in 0..n {
            for l in 0..n {
                let v = coupling.total(j, l);
                if j == l {
                    c[j * n + l] = v;
                } else {
                    let z = scenario.array.separation(j, l);
                    let k_l = k_a + emitters[l].dk;
                    c[j * n + l] = v * C64::from_polar(1.0, k_l * z);
                    dw[j * n + l] = emitters[j].dk - emitters[l].dk;
                    if retarded {
                        delay[j * n + l] = z; // v_g = 1
                    }
                }
            }
        }
        let any_delay = delay.iter().any(|&d| d > 0.0);
        Self {
            n,
            c,
            dw,
            delay,
            any_delay,
        }
    }

    fn rate_scale(&self, drive_bandwidth: f64) -> f64 {
        let mut coupling_scale: f64 = 0.0;
        let mut dw_scale: f64 = 0.0;
        for j in 0..self.n {
            let row: f64 = (0..self.n).map(|l| self.c[j * self.n + l].norm()).sum();
            coupling_scale = coupling_scale.max(row);
            for l in 0..self.n {
                dw_scale = dw_scale.max(self.dw[j * self.n + l].abs());
            }
        }
        coupling_scale + dw_scale + drive_bandwidth
    }
}

/// Cubic Hermite lookup of one emitter history at time `s` (`s <=` the last
/// stored grid time). Times before zero return zero: the array is unexcited
/// before the simulation starts.
fn history_at(t: &[f64], alpha: &[C64], deriv: &[C64], h: f64, s: f64) -> C64 {
    if s < 0.0 {
        return C64::new(0.0, 0.0);
    }
    let last = alpha.len() - 1;
    let idx = ((s / h) as usize).min(last.saturating_sub(1));
    if last == 0 {
        return alpha[0];
    }
    let theta = ((s - t[idx]) / h).clamp(0.0, 1.0);
    let (y0, y1) = (alpha[idx], alpha[idx + 1]);
    let (m0, m1) = (deriv[idx], deriv[idx + 1]);
    let t2 = theta * theta;
    let t3 = t2 * theta;
    y0 * (1.0 - 3.0 * t2 + 2.0 * t3)
        + m0 * (h * (theta - 2.0 * t2 + t3))
        + y1 * (3.0 * t2 - 2.0 * t3)
        + m1 * (h * (t3 - t2))
}

/// Integrate the amplitude equations with fixed-step RK4.
pub fn evolve(scenario: &Scenario, t_max: f64, h: f64) -> Result<AmplitudeTrajectory> {
    if !(t_max > 0.0 && t_max.is_finite() && h > 0.0 && h.is_finite()) {
        return Err(Error::Validation(format!(
            "need t_max > 0 and h > 0, got t_max = {t_max}, h = {h}"
        )));
    }
    let coupling = build_couplings(scenario)?;
    let sys = System::build(scenario, &coupling);
    let n = sys.n;

    let drive_bandwidth = match &scenario.input {
        Input::Gaussian(p) => p.width,
        Input::Tabulated(t) => t.dk.last().unwrap() - t.dk[0],
        Input::None => 0.0,
    };
    let scale = sys.rate_scale(drive_bandwidth);
    if h * scale > 0.5 {
        return Err(Error::Validation(format!(
            "step h = {h} too large for system rate scale {scale:.3} (need h * scale <= 0.5)"
        )));
    }
    if sys.any_delay {
        let min_delay = sys
            .delay
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        if h > min_delay / 4.0 {
            return Err(Error::Validation(format!(
                "step h = {h} exceeds min_delay/4 = {} in full retardation mode",
                min_delay / 4.0
            )));
        }
    }

    let steps = (t_max / h).ceil() as usize;
    let record_drive = !scenario.input.is_none();

    let mut t_grid = Vec::with_capacity(steps + 1);
    let mut alpha: Vec<Vec<C64>> = vec![Vec::with_capacity(steps + 1); n];
    let mut deriv: Vec<Vec<C64>> = vec![Vec::with_capacity(steps + 1); n];
    let mut drive_rec: Vec<Vec<C64>> = vec![Vec::with_capacity(steps + 1); n];

    let mut state: Vec<C64> = scenario.initial_excitation.clone();
    t_grid.push(0.0);
    for j in 0..n {
        alpha[j].push(state[j]);
    }

    let b_at = |j: usize, t: f64| -> Result<C64> {
        if record_drive {
            drive(scenario, j, t)
        } else {
            Ok(C64::new(0.0, 0.0))
        }
    };

    // RHS; delayed arguments always lie in the already-stored history because
    // h <= min_delay / 4.
    let rhs = |t: f64,
               y: &[C64],
               alpha: &[Vec<C64>],
               deriv: &[Vec<C64>],
               t_grid: &[f64],
               out: &mut [C64]|
     -> Result<()> {
        #[allow(clippy::needless_range_loop)] // j indexes flattened j*n+l tables
        for j in 0..n {
            let mut acc = b_at(j, t)?;
            for l in 0..n {
                let idx = j * n + l;
                let tau = sys.delay[idx];
                let a_l = if tau == 0.0 {
                    y[l]
                } else {
                    history_at(t_grid, &alpha[l], &deriv[l], h, t - tau)
                };
                let mut term = sys.c[idx] * a_l;
                let dw = sys.dw[idx];
                if dw != 0.0 {
                    term *= C64::from_polar(1.0, dw * t);
                }
                acc -= term;
            }
            out[j] = acc;
        }
        Ok(())
    };

    let mut k1 = vec![C64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();

    for step in 0..steps {
        let t = step as f64 * h;
        rhs(t, &state, &alpha, &deriv, &t_grid, &mut k1)?;
        for j in 0..n {
            deriv[j].push(k1[j]);
            if record_drive {
                drive_rec[j].push(b_at(j, t)?);
            }
        }
        for j in 0..n {
            tmp[j] = state[j] + k1[j] * (0.5 * h);
        }
        rhs(t + 0.5 * h, &tmp, &alpha, &deriv, &t_grid, &mut k2)?;
        for j in 0..n {
            tmp[j] = state[j] + k2[j] * (0.5 * h);
        }
        rhs(t + 0.5 * h, &tmp, &alpha, &deriv, &t_grid, &mut k3)?;
        for j in 0..n {
            tmp[j] = state[j] + k3[j] * h;
        }
        rhs(t + h, &tmp, &alpha, &deriv, &t_grid, &mut k4)?;
        for j in 0..n {
            state[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
            if !state[j].re.is_finite() || !state[j].im.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite amplitude for emitter {j} at t = {}",
                    t + h
                )));
            }
        }
        t_grid.push((step + 1) as f64 * h);
        for j in 0..n {
            alpha[j].push(state[j]);
        }
    }
    // derivative at the final point
    rhs(steps as f64 * h, &state, &alpha, &deriv, &t_grid, &mut k1)?;
    for j in 0..n {
        deriv[j].push(k1[j]);
        if record_drive {
            drive_rec[j].push(b_at(j, steps as f64 * h)?);
        }
    }

    Ok(AmplitudeTrajectory {
        t: t_grid,
        step: h,
        alpha,
        deriv,
        drive_record: record_drive.then_some(drive_rec),
    })
}

/// Excitation probabilities `|alpha_j(t)|^2`.
pub fn excitation_probabilities(traj: &AmplitudeTrajectory) -> Vec<Vec<f64>> {
    traj.alpha
        .iter()
        .map(|series| series.iter().map(|a| a.norm_sqr()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gaussian_spectrum;
    use crate::model::{
        EmitterArray, EmitterParams, GaussianPulse, Scenario, TabulatedSpectrum, UnitSystem,
    };
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn single(gamma_nw: f64) -> Scenario {
        let arr = EmitterArray::new(
            vec![EmitterParams {
                z: 0.0,
                gamma_wg: 1.0,
                gamma_nw,
                dk: 0.0,
            }],
            FRAC_PI_2,
            UnitSystem::default(),
        )
        .unwrap();
        Scenario::decay(arr, vec![C64::new(1.0, 0.0)], true).unwrap()
    }

    fn pair(a_over_lambda: f64, gamma_nw: f64, include_nw: bool) -> Scenario {
        let units = UnitSystem::default();
        let sep = a_over_lambda * units.lambda_a;
        let arr = EmitterArray::new(
            vec![
                EmitterParams {
                    z: 0.0,
                    gamma_wg: 1.0,
                    gamma_nw,
                    dk: 0.0,
                },
                EmitterParams {
                    z: sep,
                    gamma_wg: 1.0,
                    gamma_nw,
                    dk: 0.0,
                },
            ],
            FRAC_PI_2,
            units,
        )
        .unwrap();
        Scenario::decay(
            arr,
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            include_nw,
        )
        .unwrap()
    }

    #[test]
    fn drive_peaks_at_arrival_time() {
        let units = UnitSystem::default();
        let arr = EmitterArray::new(
            vec![EmitterParams {
                z: 3.0,
                gamma_wg: 1.0,
                gamma_nw: 0.0,
                dk: 0.0,
            }],
            FRAC_PI_2,
            units,
        )
        .unwrap();
        let s = Scenario::scattering(arr, GaussianPulse::new(2.0, 0.0).unwrap(), true).unwrap();
        let b = drive(&s, 0, 3.0).unwrap();
        assert_relative_eq!(
            b.norm(),
            (8.0 * PI).powf(-0.25) * 2.0f64.sqrt(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn drive_negligible_at_standoff() {
        let width = 1.0;
        let arr = EmitterArray::new(
            vec![EmitterParams {
                z: 20.0 / width,
                gamma_wg: 1.0,
                gamma_nw: 0.0,
                dk: 0.0,
            }],
            FRAC_PI_2,
            UnitSystem::default(),
        )
        .unwrap();
        let s = Scenario::scattering(arr, GaussianPulse::new(width, 0.0).unwrap(), true).unwrap();
        let peak = (8.0 * PI).powf(-0.25) * width.sqrt();
        assert!(drive(&s, 0, 0.0).unwrap().norm() < 1e-8 * peak);
    }

    #[test]
    fn missing_drive_errors() {
        let s = single(0.0);
        assert!(matches!(drive(&s, 0, 1.0), Err(Error::MissingDrive)));
    }

    #[test]
    fn tabulated_drive_matches_closed_form() {
        let width = 1.0;
        let pulse = GaussianPulse::new(width, 0.0).unwrap();
        let n = 16001;
        let (lo, hi) = (-8.0 * width, 8.0 * width);
        let dk: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let re: Vec<f64> = dk.iter().map(|&x| gaussian_spectrum(&pulse, x)).collect();
        let tab = TabulatedSpectrum {
            dk,
            re,
            im: vec![0.0; n],
        };

        let arr = EmitterArray::new(
            vec![EmitterParams {
                z: 4.0,
                gamma_wg: 1.0,
                gamma_nw: 0.0,
                dk: 0.0,
            }],
            FRAC_PI_2,
            UnitSystem::default(),
        )
        .unwrap();
        let closed = Scenario::scattering(arr.clone(), pulse, true).unwrap();
        let tabulated = Scenario::new(
            arr,
            crate::model::Input::Tabulated(tab),
            Vec::new(),
            true,
            RetardationMode::Markovian,
        )
        .unwrap();
        let peak = (8.0 * PI).powf(-0.25);
        for i in 0..=40 {
            let t = 0.25 * i as f64;
            let a = drive(&closed, 0, t).unwrap();
            let b = drive(&tabulated, 0, t).unwrap();
            assert!((a - b).norm() < 1e-6 * peak, "t = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn single_emitter_exponential_decay() {
        let s = single(0.2);
        let traj = evolve(&s, 5.0, 1e-3).unwrap();
        let idx = traj.t.len() - 1;
        let expect = (-1.2 * traj.t[idx]).exp();
        let got = traj.alpha[0][idx].norm_sqr();
        assert!(
            (got - expect).abs() / expect < 1e-6,
            "got {got}, expect {expect}"
        );
        // phase stays zero in the rotating frame
        assert!(traj.alpha[0][idx].im.abs() < 1e-12);
    }

    #[test]
    fn dark_state_trapping() {
        let s = pair(0.5, 0.0, false);
        let traj = evolve(&s, 25.0, 1e-3).unwrap();
        for (i, &t) in traj.t.iter().enumerate().step_by(1000) {
            let a1 = 0.5 * (1.0 + (-t).exp());
            let a2 = 0.5 * (1.0 - (-t).exp());
            assert!((traj.alpha[0][i].norm() - a1).abs() < 1e-6, "t = {t}");
            assert!((traj.alpha[1][i].norm() - a2).abs() < 1e-6, "t = {t}");
        }
        let p = excitation_probabilities(&traj);
        assert!((p[0].last().unwrap() - 0.25).abs() < 1e-3);
        assert!((p[1].last().unwrap() - 0.25).abs() < 1e-3);
    }

    #[test]
    fn identical_pair_matches_mode_decomposition() {
        // markovian identical emitters obey d alpha/dt = -G alpha exactly;
        // diagonalizing the 2x2 with eigenvectors (1, +-1)/sqrt(2) is an
        // independent oracle for the integrator.
        let s = pair(0.05, 0.2, true);
        let c = build_couplings(&s).unwrap();
        let g12 = c.effective[(0, 1)];
        let v11 = c.effective[(0, 0)];
        let traj = evolve(&s, 20.0, 1e-3).unwrap();
        for (i, &t) in traj.t.iter().enumerate().step_by(500) {
            let plus = 0.5 * (C64::new(0.0, 0.0) - (v11 + g12) * t).exp();
            let minus = 0.5 * (C64::new(0.0, 0.0) - (v11 - g12) * t).exp();
            let a1 = plus + minus;
            let a2 = plus - minus;
            assert!((traj.alpha[0][i] - a1).norm() < 1e-6, "t = {t}");
            assert!((traj.alpha[1][i] - a2).norm() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn subradiant_envelope_rate() {
        // close pair with free-space coupling: long-lived excitation exchange
        let s = pair(0.05, 0.2, true);
        let traj = evolve(&s, 60.0, 1e-3).unwrap();
        let p = excitation_probabilities(&traj);
        let total_at = |i: usize| p[0][i] + p[1][i];
        // after the superradiant component is gone the total decays at
        // 2 * 0.026 (the subradiant intensity rate), from 1/2 of the energy
        let i1 = (20.0 / traj.step) as usize;
        let i2 = (50.0 / traj.step) as usize;
        let rate = -(total_at(i2) / total_at(i1)).ln() / (traj.t[i2] - traj.t[i1]);
        assert!((rate - 0.052).abs() < 0.005, "envelope rate {rate}");
        // the two emitters equalize
        assert!((p[0][i2] - p[1][i2]).abs() < 0.1 * total_at(i2));
    }

    #[test]
    fn markovian_and_full_retardation_agree_at_optical_scale() {
        for base in [pair(0.5, 0.2, true), pair(0.05, 0.2, true)] {
            let markov = evolve(&base, 10.0, 1e-4).unwrap();
            let mut retarded_scenario = base.clone();
            retarded_scenario.retardation_mode = RetardationMode::Full;
            let min_delay = retarded_scenario.array.separation(0, 1);
            let h = (min_delay / 4.0).min(1e-4);
            let full = evolve(&retarded_scenario, 10.0, h).unwrap();
            let stride = (1e-4 / h).round() as usize;
            for i in (0..markov.t.len()).step_by(2000) {
                let a = markov.alpha[0][i].norm();
                let b = full.alpha[0][i * stride].norm();
                // the two modes genuinely differ by O(|G_12| tau t), a few
                // 1e-3 at this wavelength; a broken delay solver errs at O(1)
                assert!((a - b).abs() < 5e-3, "t = {}: {a} vs {b}", markov.t[i]);
            }
        }
    }

    #[test]
    fn step_validation() {
        let s = single(0.0);
        assert!(matches!(evolve(&s, 5.0, 2.0), Err(Error::Validation(_))));
        assert!(matches!(evolve(&s, -1.0, 1e-3), Err(Error::Validation(_))));
        let mut retarded = pair(0.5, 0.0, false);
        retarded.retardation_mode = RetardationMode::Full;
        // delay is 5e-4, so h = 1e-3 violates h <= delay/4
        assert!(matches!(
            evolve(&retarded, 5.0, 1e-3),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn norm_never_grows_in_decay() {
        let s = pair(0.05, 0.2, true);
        let traj = evolve(&s, 30.0, 1e-3).unwrap();
        let p = excitation_probabilities(&traj);
        for (p0, p1) in p[0].iter().zip(&p[1]) {
            assert!(p0 + p1 <= 1.0 + 1e-6);
        }
    }
}
