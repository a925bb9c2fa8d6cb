//! Deterministic CSV/JSON artifact writers. All floating-point values are
//! written with 17 significant digits so repeated runs produce byte-identical
//! files and values round-trip exactly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;

use crate::analysis::PeakCatalogue;
use crate::dynamics::AmplitudeTrajectory;
use crate::error::Result;
use crate::model::Scenario;
use crate::spectra::{DecaySpectra, PlaneWaveResponse, ScatteringSpectra};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trajectory CSV: `t, re_alpha_0, im_alpha_0, p_0, ...` with one row per
/// stored step (every `stride`-th point; the final point is always included).
pub fn write_trajectory_csv<W: Write>(
    w: &mut W,
    traj: &AmplitudeTrajectory,
    stride: usize,
) -> Result<()> {
    let n = traj.n_emitters();
    let stride = stride.max(1);
    write!(w, "t")?;
    for j in 0..n {
        write!(w, ",re_alpha_{j},im_alpha_{j},p_{j}")?;
    }
    writeln!(w)?;
    let last = traj.t.len() - 1;
    let mut rows: Vec<usize> = (0..traj.t.len()).step_by(stride).collect();
    if *rows.last().unwrap() != last {
        rows.push(last);
    }
    for i in rows {
        write!(w, "{}", fmt(traj.t[i]))?;
        for j in 0..n {
            let a = traj.alpha[j][i];
            write!(w, ",{},{},{}", fmt(a.re), fmt(a.im), fmt(a.norm_sqr()))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Plane-wave response CSV: amplitudes and intensities per frequency.
pub fn write_response_csv<W: Write>(w: &mut W, resp: &PlaneWaveResponse) -> Result<()> {
    writeln!(w, "dk,re_r,im_r,re_t,im_t,reflectance,transmittance")?;
    for (i, &dk) in resp.grid.dk().iter().enumerate() {
        let r = resp.reflection[i];
        let t = resp.transmission[i];
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt(dk),
            fmt(r.re),
            fmt(r.im),
            fmt(t.re),
            fmt(t.im),
            fmt(r.norm_sqr()),
            fmt(t.norm_sqr())
        )?;
    }
    Ok(())
}

/// Scattering-spectra CSV: incident/reflected/transmitted amplitudes and the
/// intensity ratios against the incident spectrum. The ratios are written as
/// 0 where the incident spectrum vanishes or has decayed to within 100 orders
/// of magnitude of underflow (the quotient of two subnormals is noise).
pub fn write_scattering_csv<W: Write>(w: &mut W, s: &ScatteringSpectra) -> Result<()> {
    writeln!(
        w,
        "dk,re_incident,im_incident,re_reflected,im_reflected,re_transmitted,im_transmitted,\
         reflectance,transmittance"
    )?;
    let floor = s.incident.iter().map(|b| b.norm_sqr()).fold(0.0, f64::max) * 1e-200;
    for (i, &dk) in s.grid.dk().iter().enumerate() {
        let b0 = s.incident[i].norm_sqr();
        let (ir, it) = if b0 > floor && b0 > 0.0 {
            (
                s.reflected[i].norm_sqr() / b0,
                s.transmitted[i].norm_sqr() / b0,
            )
        } else {
            (0.0, 0.0)
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt(dk),
            fmt(s.incident[i].re),
            fmt(s.incident[i].im),
            fmt(s.reflected[i].re),
            fmt(s.reflected[i].im),
            fmt(s.transmitted[i].re),
            fmt(s.transmitted[i].im),
            fmt(ir),
            fmt(it)
        )?;
    }
    Ok(())
}

/// Decay-spectra CSV: directional amplitudes and the spectral density
/// `(1/2pi)(|beta_+|^2 + |beta_-|^2)`.
pub fn write_decay_csv<W: Write>(w: &mut W, s: &DecaySpectra) -> Result<()> {
    writeln!(
        w,
        "dk,re_forward,im_forward,re_backward,im_backward,intensity"
    )?;
    for (i, &dk) in s.grid.dk().iter().enumerate() {
        let f = s.forward[i];
        let b = s.backward[i];
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt(dk),
            fmt(f.re),
            fmt(f.im),
            fmt(b.re),
            fmt(b.im),
            fmt((f.norm_sqr() + b.norm_sqr()) / std::f64::consts::TAU)
        )?;
    }
    Ok(())
}

/// Generic sweep table CSV: one row per sweep point.
pub fn write_sweep_csv<W: Write>(w: &mut W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Peak catalogue as JSON.
#[derive(Debug, Serialize)]
struct PeakOut {
    position: f64,
    height: f64,
    fwhm: f64,
    resolution_warning: bool,
}

pub fn write_peaks_json<W: Write>(w: &mut W, cat: &PeakCatalogue) -> Result<()> {
    #[derive(Serialize)]
    struct Out {
        peaks: Vec<PeakOut>,
        separation: Option<f64>,
        linewidth_difference: Option<f64>,
    }
    let out = Out {
        peaks: cat
            .peaks
            .iter()
            .map(|p| PeakOut {
                position: p.position,
                height: p.height,
                fwhm: p.fwhm,
                resolution_warning: p.resolution_warning,
            })
            .collect(),
        separation: cat.separation,
        linewidth_difference: cat.linewidth_difference,
    };
    serde_json::to_writer_pretty(&mut *w, &out)
        .map_err(|e| crate::error::Error::Numerical(format!("JSON encoding failed: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// SHA-256 of the canonical scenario JSON; identifies a run's physics inputs.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let json = serde_json::to_string(scenario).expect("scenario serialization is infallible");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Provenance record written next to every artifact: enough to re-run the
/// same computation and compare outputs byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_sha256: String,
    /// Grid/step parameters actually used (resolved defaults included).
    pub parameters: BTreeMap<String, String>,
    pub version: String,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, scenario: &Scenario) -> Self {
        Self {
            command: command.into(),
            scenario_sha256: scenario_hash(scenario),
            parameters: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        serde_json::to_writer_pretty(&mut *w, self)
            .map_err(|e| crate::error::Error::Numerical(format!("JSON encoding failed: {e}")))?;
        writeln!(w)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve;
    use crate::model::{EmitterArray, EmitterParams, UnitSystem};
    use crate::spectra::{plane_wave_response, SpectrumGrid};
    use num_complex::Complex64 as C64;
    use std::f64::consts::FRAC_PI_2;

    fn scenario() -> Scenario {
        let arr = EmitterArray::new(
            vec![EmitterParams {
                z: 0.0,
                gamma_wg: 1.0,
                gamma_nw: 0.2,
                dk: 0.0,
            }],
            FRAC_PI_2,
            UnitSystem::default(),
        )
        .unwrap();
        Scenario::decay(arr, vec![C64::new(1.0, 0.0)], true).unwrap()
    }

    #[test]
    fn trajectory_csv_shape_and_determinism() {
        let s = scenario();
        let traj = evolve(&s, 1.0, 1e-2).unwrap();
        let mut a = Vec::new();
        write_trajectory_csv(&mut a, &traj, 10).unwrap();
        let mut b = Vec::new();
        write_trajectory_csv(&mut b, &traj, 10).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,re_alpha_0,im_alpha_0,p_0");
        // 0, 0.1, ..., 1.0 -> 11 data rows
        assert_eq!(lines.count(), 11);
        // values round-trip
        let last = text.lines().last().unwrap();
        let cells: Vec<f64> = last.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells[0], *traj.t.last().unwrap());
        assert_eq!(cells[3], traj.alpha[0].last().unwrap().norm_sqr());
    }

    #[test]
    fn response_csv_round_trips_values() {
        let s = scenario();
        let grid = SpectrumGrid::uniform(-2.0, 2.0, 5).unwrap();
        let resp = plane_wave_response(&s, &grid).unwrap();
        let mut buf = Vec::new();
        write_response_csv(&mut buf, &resp).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<f64> = text
            .lines()
            .nth(3)
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(row[0], grid.dk()[2]);
        assert_eq!(row[1], resp.reflection[2].re);
        assert_eq!(row[5], resp.reflection[2].norm_sqr());
    }

    #[test]
    fn scenario_hash_stable_and_sensitive() {
        let s = scenario();
        assert_eq!(scenario_hash(&s), scenario_hash(&s.clone()));
        let t = s.with_nw_coupling(false);
        assert_ne!(scenario_hash(&s), scenario_hash(&t));
    }

    #[test]
    fn manifest_serializes() {
        let s = scenario();
        let mut m = RunManifest::new("simulate", &s);
        m.set("t_max", 10.0);
        m.outputs.push("trajectory.csv".to_string());
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back: RunManifest = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back.command, "simulate");
        assert_eq!(back.parameters["t_max"], "10");
        assert_eq!(back.scenario_sha256, scenario_hash(&s));
    }
}
