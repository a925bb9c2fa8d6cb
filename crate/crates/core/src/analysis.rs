//! Derived metrics: normalized spectrum difference, peak catalogues
//! (positions, widths, separations), parameter sweeps and conservation audits.

use rayon::prelude::*;

use crate::coupling::build_couplings;
use crate::dynamics::AmplitudeTrajectory;
use crate::error::{Error, Result};
use crate::model::{EmitterArray, Input, Scenario};
use crate::spectra::{
    plane_wave_response, scattering_spectra, waveguide_branching, PlaneWaveResponse, SpectrumGrid,
};

/// One spectral peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub position: f64,
    pub height: f64,
    pub fwhm: f64,
    /// Set when the half-width is sampled by fewer than five grid steps.
    pub resolution_warning: bool,
}

/// Peaks of one intensity series, with the two dominant peaks summarized.
#[derive(Debug, Clone, Default)]
pub struct PeakCatalogue {
    /// Sorted by position.
    pub peaks: Vec<Peak>,
    /// Distance between the two dominant (highest) peaks.
    pub separation: Option<f64>,
    /// |fwhm_1 - fwhm_2| for the two dominant peaks.
    pub linewidth_difference: Option<f64>,
}

/// Local maxima above 1e-3 of the global maximum, with position and height
/// refined by a parabola through the three samples around each maximum and
/// FWHM from linearly interpolated half-maximum crossings. Peaks whose
/// half-maximum crossings leave the grid are dropped (no edge peaks).
pub fn find_peaks(dk: &[f64], intensity: &[f64]) -> PeakCatalogue {
    assert_eq!(dk.len(), intensity.len());
    let n = dk.len();
    let max = intensity.iter().fold(0.0f64, |a, &b| a.max(b));
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must also fail
    if n < 3 || !(max > 0.0) {
        return PeakCatalogue::default();
    }
    let threshold = 1e-3 * max;
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        if !(intensity[i] >= intensity[i - 1]
            && intensity[i] > intensity[i + 1]
            && intensity[i] >= threshold)
        {
            continue;
        }
        let (pos, height) = parabolic_vertex(
            (dk[i - 1], intensity[i - 1]),
            (dk[i], intensity[i]),
            (dk[i + 1], intensity[i + 1]),
        );
        let half = 0.5 * height;
        let left = half_crossing(dk, intensity, i, half, false);
        let right = half_crossing(dk, intensity, i, half, true);
        let (Some(left), Some(right)) = (left, right) else {
            continue;
        };
        let fwhm = right - left;
        let local_step = 0.5 * (dk[i + 1] - dk[i - 1]);
        peaks.push(Peak {
            position: pos,
            height,
            fwhm,
            resolution_warning: fwhm < 5.0 * local_step,
        });
    }
    summarize(peaks)
}

fn summarize(mut peaks: Vec<Peak>) -> PeakCatalogue {
    // dominant pair: two highest, ties broken by larger |position|
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| {
        peaks[b]
            .height
            .total_cmp(&peaks[a].height)
            .then(peaks[b].position.abs().total_cmp(&peaks[a].position.abs()))
    });
    let (separation, linewidth_difference) = if order.len() >= 2 {
        let (a, b) = (peaks[order[0]], peaks[order[1]]);
        (
            Some((a.position - b.position).abs()),
            Some((a.fwhm - b.fwhm).abs()),
        )
    } else {
        (None, None)
    };
    peaks.sort_by(|a, b| a.position.total_cmp(&b.position));
    PeakCatalogue {
        peaks,
        separation,
        linewidth_difference,
    }
}

/// Vertex of the parabola through three points.
fn parabolic_vertex(l: (f64, f64), c: (f64, f64), r: (f64, f64)) -> (f64, f64) {
    let (x0, y0) = l;
    let (x1, y1) = c;
    let (x2, y2) = r;
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let curv = (d1 - d0) / (x2 - x0);
    if curv >= 0.0 {
        return (x1, y1);
    }
    // Newton form y(x) = y0 + d0 (x - x0) + curv (x - x0)(x - x1); dy/dx = 0
    let xv = 0.5 * (x0 + x1) - d0 / (2.0 * curv);
    let yv = y0 + d0 * (xv - x0) + curv * (xv - x0) * (xv - x1);
    // the fit is extrapolation noise when the peak is far narrower than the
    // local spacing (e.g. across a coarse/fine grid boundary); keep the sample
    if !(x0 < xv && xv < x2) || yv > 2.0 * y1 {
        return (x1, y1);
    }
    (xv, yv)
}

/// First half-maximum crossing walking away from sample `i`.
fn half_crossing(dk: &[f64], y: &[f64], i: usize, half: f64, rightward: bool) -> Option<f64> {
    let n = dk.len();
    let mut j = i;
    loop {
        let next = if rightward {
            if j + 1 >= n {
                return None;
            }
            j + 1
        } else {
            if j == 0 {
                return None;
            }
            j - 1
        };
        if y[next] <= half {
            let t = (y[j] - half) / (y[j] - y[next]);
            return Some(dk[j] + t * (dk[next] - dk[j]));
        }
        j = next;
    }
}

/// Normalized difference between two steady-state spectra on a shared grid.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumDifference {
    /// In [0, 1]: 0 for identical spectra, 1 for disjoint ones.
    pub value: f64,
    pub reflection_term: f64,
    pub transmission_term: f64,
}

/// Grid-sum spectral distance between two responses: the reflection term
/// compares reflectances directly, the transmission term compares the
/// transmission dips `1 - I_T` (the background transmission is 1, so comparing
/// `I_T` itself would be dominated by the featureless background).
pub fn spectrum_difference(
    a: &PlaneWaveResponse,
    b: &PlaneWaveResponse,
) -> Result<SpectrumDifference> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!(
            "spectrum difference needs identical grids ({} vs {} points)",
            a.grid.len(),
            b.grid.len()
        )));
    }
    let mut num_r = 0.0;
    let mut den_r = 0.0;
    let mut num_t = 0.0;
    let mut den_t = 0.0;
    for i in 0..a.grid.len() {
        let ir1 = a.reflection[i].norm_sqr();
        let ir2 = b.reflection[i].norm_sqr();
        let it1 = a.transmission[i].norm_sqr();
        let it2 = b.transmission[i].norm_sqr();
        num_r += (ir1 - ir2).abs();
        den_r += ir1 + ir2;
        num_t += (it1 - it2).abs();
        den_t += 2.0 - it1 - it2;
    }
    let reflection_term = if den_r > 0.0 { num_r / den_r } else { 0.0 };
    let transmission_term = if den_t > 0.0 { num_t / den_t } else { 0.0 };
    Ok(SpectrumDifference {
        value: 0.5 * (reflection_term + transmission_term),
        reflection_term,
        transmission_term,
    })
}

fn rebuilt_pair(template: &Scenario, separation: f64) -> Result<Scenario> {
    let emitters = template.array.emitters();
    if emitters.len() != 2 {
        return Err(Error::Validation(format!(
            "pair sweep needs a two-emitter scenario, got {}",
            emitters.len()
        )));
    }
    let mut new = emitters.to_vec();
    new[1].z = new[0].z + separation;
    let array = EmitterArray::new(new, template.array.phi, template.array.units)?;
    Scenario::new(
        array,
        template.input.clone(),
        template.initial_excitation.clone(),
        template.include_nw_coupling,
        template.retardation_mode,
    )
}

/// Spectrum difference with/without the free-space coupling as a function of
/// emitter separation. Returns `(separation, delta_sd)` rows.
pub fn separation_sweep(
    template: &Scenario,
    separations: &[f64],
    grid: &SpectrumGrid,
) -> Result<Vec<(f64, f64)>> {
    separations
        .par_iter()
        .map(|&r| {
            let s = rebuilt_pair(template, r)?;
            let with = plane_wave_response(&s.with_nw_coupling(true), grid)?;
            let without = plane_wave_response(&s.with_nw_coupling(false), grid)?;
            Ok((r, spectrum_difference(&with, &without)?.value))
        })
        .collect()
}

/// Interpolated abscissa where a monotone-in-trend sweep crosses `level`;
/// takes the first bracketing interval.
pub fn sweep_crossing(rows: &[(f64, f64)], level: f64) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if (y0 - level) * (y1 - level) <= 0.0 && y0 != y1 {
            Some(x0 + (level - y0) / (y1 - y0) * (x1 - x0))
        } else {
            None
        }
    })
}

/// One row of the detuning-transition sweep.
#[derive(Debug, Clone, Copy)]
pub struct TransitionRow {
    /// Frequency difference between the two emitters, rate units.
    pub delta_w: f64,
    pub separation: f64,
    pub linewidth_difference: f64,
}

/// Reflection-peak separation and linewidth difference of a two-emitter array
/// as a function of the emitter frequency difference (split symmetrically,
/// `dk_1 = -dk_2 = -delta_w / 2 v_g`).
pub fn coupling_transition_sweep(
    template: &Scenario,
    delta_w: &[f64],
) -> Result<Vec<TransitionRow>> {
    if template.n_emitters() != 2 {
        return Err(Error::Validation(format!(
            "transition sweep needs a two-emitter scenario, got {}",
            template.n_emitters()
        )));
    }
    delta_w
        .par_iter()
        .map(|&dw| {
            let mut emitters = template.array.emitters().to_vec();
            emitters[0].dk = -0.5 * dw;
            emitters[1].dk = 0.5 * dw;
            let array = EmitterArray::new(emitters, template.array.phi, template.array.units)?;
            let s = Scenario::new(
                array,
                template.input.clone(),
                template.initial_excitation.clone(),
                template.include_nw_coupling,
                template.retardation_mode,
            )?;
            let grid = SpectrumGrid::default_for(&s)?;
            let resp = plane_wave_response(&s, &grid)?;
            let reflectance: Vec<f64> = resp.reflection.iter().map(|r| r.norm_sqr()).collect();
            let cat = find_peaks(grid.dk(), &reflectance);
            let (Some(sep), Some(lwd)) = (cat.separation, cat.linewidth_difference) else {
                return Err(Error::Numerical(format!(
                    "expected two reflection peaks at delta_w = {dw}, found {}",
                    cat.peaks.len()
                )));
            };
            Ok(TransitionRow {
                delta_w: dw,
                separation: sep,
                linewidth_difference: lwd,
            })
        })
        .collect()
}

/// Norm bookkeeping for one scenario: where the excitation ended up.
#[derive(Debug, Clone)]
pub struct ConservationAudit {
    /// Initial excitation norm plus incident pulse norm.
    pub input_norm: f64,
    /// Remaining excitation at the end of the trajectory.
    pub survival: f64,
    /// Guided emission captured on the grid (reflection + transmission for
    /// scattering, both decay directions otherwise).
    pub guided: f64,
    /// Estimated guided probability beyond the grid edges.
    pub guided_tail: f64,
    /// `input - survival - guided - tail`: free-space loss, plus any
    /// numerical residual.
    pub inferred_nonguided: f64,
    /// Set when the bookkeeping is inconsistent (e.g. apparent loss in a
    /// lossless system, or negative loss).
    pub flag: Option<String>,
}

pub fn conservation_audit(
    scenario: &Scenario,
    traj: &AmplitudeTrajectory,
    grid: &SpectrumGrid,
) -> Result<ConservationAudit> {
    let initial_norm: f64 = scenario
        .initial_excitation
        .iter()
        .map(|a| a.norm_sqr())
        .sum();
    let survival = traj.final_survival();
    let (input_norm, guided, guided_tail) = match &scenario.input {
        Input::None => {
            let b = waveguide_branching(scenario, grid)?;
            (initial_norm, b.waveguide_fraction, b.truncated_tail)
        }
        _ => {
            let spectra = scattering_spectra(scenario, grid)?;
            let guided = spectra.reflection_probability() + spectra.transmission_probability();
            (initial_norm + spectra.incident_norm(), guided, 0.0)
        }
    };
    let inferred_nonguided = input_norm - survival - guided - guided_tail;
    let lossless = scenario.array.emitters().iter().all(|e| e.gamma_nw == 0.0);
    let flag = if inferred_nonguided < -1e-3 {
        Some(format!("negative inferred loss {inferred_nonguided:.3e}"))
    } else if lossless && inferred_nonguided.abs() > 1e-3 {
        Some(format!(
            "lossless scenario shows unaccounted probability {inferred_nonguided:.3e}"
        ))
    } else {
        None
    };
    let _ = build_couplings(scenario)?; // validates separations early
    Ok(ConservationAudit {
        input_norm,
        survival,
        guided,
        guided_tail,
        inferred_nonguided,
        flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve;
    use crate::model::{EmitterParams, GaussianPulse, UnitSystem};
    use num_complex::Complex64 as C64;
    use std::f64::consts::FRAC_PI_2;

    fn pair(a_over_lambda: f64, gamma_nw: f64) -> Scenario {
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
        Scenario::decay(arr, vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)], true).unwrap()
    }

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

    #[test]
    fn single_lorentzian_peak() {
        let s = single(0.0);
        let grid = SpectrumGrid::uniform(-10.0, 10.0, 4001).unwrap();
        let resp = plane_wave_response(&s, &grid).unwrap();
        let refl: Vec<f64> = resp.reflection.iter().map(|r| r.norm_sqr()).collect();
        let cat = find_peaks(grid.dk(), &refl);
        assert_eq!(cat.peaks.len(), 1);
        let p = cat.peaks[0];
        assert!(p.position.abs() < 1e-6, "position {}", p.position);
        assert!((p.height - 1.0).abs() < 1e-6);
        assert!((p.fwhm - 1.0).abs() < 0.02, "fwhm {}", p.fwhm);
        assert!(!p.resolution_warning);
        assert!(cat.separation.is_none());
    }

    #[test]
    fn close_pair_peak_positions_and_widths() {
        let s = pair(0.05, 0.1);
        let grid = SpectrumGrid::default_for(&s).unwrap();
        let resp = plane_wave_response(&s, &grid).unwrap();
        let refl: Vec<f64> = resp.reflection.iter().map(|r| r.norm_sqr()).collect();
        let cat = find_peaks(grid.dk(), &refl);
        assert!(cat.peaks.len() >= 2, "found {} peaks", cat.peaks.len());
        let sep = cat.separation.unwrap();
        assert!((sep - 4.92).abs() < 0.15 * 4.92, "separation {sep}");
        let mut widths: Vec<f64> = {
            // the two dominant peaks
            let mut ps = cat.peaks.clone();
            ps.sort_by(|a, b| b.height.total_cmp(&a.height));
            vec![ps[0].fwhm, ps[1].fwhm]
        };
        widths.sort_by(f64::total_cmp);
        assert!(
            (widths[1] - 2.13).abs() < 0.15 * 2.13,
            "broad width {}",
            widths[1]
        );
        assert!(
            (widths[0] - 0.06).abs() < 0.15 * 0.06,
            "narrow width {}",
            widths[0]
        );
    }

    #[test]
    fn detuned_pair_peak_separation() {
        let rows = coupling_transition_sweep(&pair(0.05, 0.1), &[10.0]).unwrap();
        let sep = rows[0].separation;
        assert!((sep - 11.0).abs() < 0.15 * 11.0, "separation {sep}");
        let mut widths = [0.0; 2];
        // re-derive widths for the same point to check the catalogue
        let mut emitters = pair(0.05, 0.1).array.emitters().to_vec();
        emitters[0].dk = -5.0;
        emitters[1].dk = 5.0;
        let arr = EmitterArray::new(emitters, FRAC_PI_2, UnitSystem::default()).unwrap();
        let s = Scenario::decay(arr, vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)], true).unwrap();
        let grid = SpectrumGrid::default_for(&s).unwrap();
        let resp = plane_wave_response(&s, &grid).unwrap();
        let refl: Vec<f64> = resp.reflection.iter().map(|r| r.norm_sqr()).collect();
        let cat = find_peaks(grid.dk(), &refl);
        let mut ps = cat.peaks.clone();
        ps.sort_by(|a, b| b.height.total_cmp(&a.height));
        widths[0] = ps[0].fwhm.min(ps[1].fwhm);
        widths[1] = ps[0].fwhm.max(ps[1].fwhm);
        assert!(
            (widths[1] - 1.56).abs() < 0.15 * 1.56,
            "broad width {}",
            widths[1]
        );
        assert!(
            (widths[0] - 0.66).abs() < 0.15 * 0.66,
            "narrow width {}",
            widths[0]
        );
    }

    #[test]
    fn transition_sweep_trends() {
        let template = pair(0.05, 0.1);
        let dws: Vec<f64> = vec![0.0, 2.0, 4.0, 6.0, 10.0, 14.0, 20.0];
        let rows = coupling_transition_sweep(&template, &dws).unwrap();
        // monotone separation, approaching delta_w at large splitting
        for w in rows.windows(2) {
            assert!(w[1].separation >= w[0].separation - 1e-6);
        }
        let last = rows.last().unwrap();
        assert!(
            (last.separation - 20.0).abs() < 0.1 * 20.0,
            "{}",
            last.separation
        );
        // zero-detuning linewidth difference ~ 2.1
        assert!(
            (rows[0].linewidth_difference - 2.1).abs() < 0.15 * 2.1,
            "lwd {}",
            rows[0].linewidth_difference
        );
    }

    #[test]
    fn crossover_linewidth_difference_fraction() {
        let template = pair(0.05, 0.1);
        // the coupling scale: delta_w equal to twice the coherent coupling
        let c = build_couplings(&template).unwrap();
        let v12 = c.effective[(0, 1)].im;
        let rows = coupling_transition_sweep(&template, &[0.0, 2.0 * v12]).unwrap();
        let frac = rows[1].linewidth_difference / rows[0].linewidth_difference;
        assert!((frac - 0.66).abs() < 0.10, "fraction {frac}");
    }

    #[test]
    fn spectrum_difference_basics() {
        let s = pair(0.05, 0.1);
        let grid = SpectrumGrid::canonical();
        let with = plane_wave_response(&s, &grid).unwrap();
        let without = plane_wave_response(&s.with_nw_coupling(false), &grid).unwrap();
        // identical inputs -> 0
        let zero = spectrum_difference(&with, &with).unwrap();
        assert_eq!(zero.value, 0.0);
        // symmetric
        let ab = spectrum_difference(&with, &without).unwrap();
        let ba = spectrum_difference(&without, &with).unwrap();
        assert!((ab.value - ba.value).abs() < 1e-15);
        assert!(ab.value > 0.0 && ab.value <= 1.0);
        // mismatched grids rejected
        let other = SpectrumGrid::uniform(-20.0, 20.0, 8001).unwrap();
        let coarse = plane_wave_response(&s, &other).unwrap();
        assert!(matches!(
            spectrum_difference(&with, &coarse),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn disjoint_reflection_spectra_give_unit_term() {
        let grid = SpectrumGrid::uniform(-5.0, 5.0, 101).unwrap();
        let zero = C64::new(0.0, 0.0);
        let mut a = PlaneWaveResponse {
            grid: grid.clone(),
            reflection: vec![zero; grid.len()],
            transmission: vec![C64::new(1.0, 0.0); grid.len()],
        };
        let mut b = a.clone();
        a.reflection[20] = C64::new(0.8, 0.0);
        b.reflection[80] = C64::new(0.6, 0.0);
        let d = spectrum_difference(&a, &b).unwrap();
        assert!((d.reflection_term - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nw_coupling_significance_at_twentieth_wavelength() {
        let s = pair(0.05, 0.1);
        let grid = SpectrumGrid::canonical();
        let with = plane_wave_response(&s, &grid).unwrap();
        let without = plane_wave_response(&s.with_nw_coupling(false), &grid).unwrap();
        let d = spectrum_difference(&with, &without).unwrap();
        assert!((d.value - 0.5).abs() < 0.05, "delta_sd {}", d.value);
    }

    #[test]
    fn separation_sweep_crossings() {
        let lambda = UnitSystem::default().lambda_a;
        let seps: Vec<f64> = (0..40)
            .map(|i| 0.005 * lambda * (2.0f64 / 0.005).powf(i as f64 / 39.0))
            .collect();
        let grid = SpectrumGrid::canonical();
        for (gamma, expect) in [(0.1, 0.05), (0.5, 0.08)] {
            let rows = separation_sweep(&pair(0.05, gamma), &seps, &grid).unwrap();
            assert!(
                rows[0].1 > 0.8,
                "gamma {gamma}: small-sep value {}",
                rows[0].1
            );
            let tail = rows.iter().filter(|r| r.0 >= lambda).map(|r| r.1);
            for v in tail {
                assert!(v < 0.1, "gamma {gamma}: large-sep value {v}");
            }
            let crossing = sweep_crossing(&rows, 0.5).expect("no 0.5 crossing");
            let got = crossing / lambda;
            assert!(
                (got - expect).abs() < 0.3 * expect,
                "gamma {gamma}: crossing {got} lambda"
            );
        }
    }

    #[test]
    fn audit_decay_branching() {
        for (gamma, guided_expect) in [(0.0, 1.0), (0.2, 5.0 / 6.0)] {
            let s = single(gamma);
            let traj = evolve(&s, 40.0, 1e-3).unwrap();
            let grid = SpectrumGrid::canonical();
            let audit = conservation_audit(&s, &traj, &grid).unwrap();
            let guided = audit.guided + audit.guided_tail;
            assert!(
                (guided - guided_expect).abs() < 1e-3,
                "gamma {gamma}: guided {guided}"
            );
            assert!(
                (audit.inferred_nonguided - (1.0 - guided_expect)).abs() < 1e-3,
                "gamma {gamma}: loss {}",
                audit.inferred_nonguided
            );
            assert!(audit.flag.is_none(), "{:?}", audit.flag);
        }
    }

    #[test]
    fn audit_lossless_scattering_unitarity() {
        let units = UnitSystem::default();
        let arr = EmitterArray::new(
            vec![
                EmitterParams {
                    z: 0.0,
                    gamma_wg: 1.0,
                    gamma_nw: 0.0,
                    dk: 0.0,
                },
                EmitterParams {
                    z: 0.3 * units.lambda_a,
                    gamma_wg: 1.0,
                    gamma_nw: 0.0,
                    dk: 0.0,
                },
            ],
            FRAC_PI_2,
            units,
        )
        .unwrap();
        let s = Scenario::scattering(arr, GaussianPulse::new(1.0, 0.0).unwrap(), false).unwrap();
        let traj = evolve(&s, 50.0, 1e-3).unwrap();
        let grid = SpectrumGrid::default_for(&s).unwrap();
        let audit = conservation_audit(&s, &traj, &grid).unwrap();
        // R + T equals the incident norm exactly for a lossless array, and the
        // array has fully decayed by t_max, so the residual is pure numerics
        assert!(
            audit.inferred_nonguided.abs() < 1e-9,
            "residual {}",
            audit.inferred_nonguided
        );
        assert!(audit.flag.is_none());
    }
}
