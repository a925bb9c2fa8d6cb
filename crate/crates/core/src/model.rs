//! Domain types, unit conventions and scenario configuration.
//!
//! Everything runs in natural units: the reference decay rate is 1, the group
//! velocity is 1 and the waveguide quantization length is 1, so times are in
//! units of the reference lifetime and lengths in units of (group velocity) x
//! (lifetime). The resonance wavelength `lambda_a` is the one free length
//! scale; it sets the reference wavevector `k_a = 2 pi / lambda_a`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Unit conventions for a scenario. `v_g = 1`, rate unit = reference decay
/// rate, `L = 1`; only the resonance wavelength is adjustable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Resonance wavelength in length units (v_g / Gamma_ref).
    pub lambda_a: f64,
}

impl UnitSystem {
    pub const V_G: f64 = 1.0;

    pub fn new(lambda_a: f64) -> Result<Self> {
        if !(lambda_a > 0.0 && lambda_a.is_finite()) {
            return Err(Error::Validation(format!(
                "lambda_a must be positive and finite, got {lambda_a}"
            )));
        }
        Ok(Self { lambda_a })
    }

    /// Reference wavevector `k_a = 2 pi / lambda_a`.
    pub fn k_a(&self) -> f64 {
        TAU / self.lambda_a
    }
}

impl Default for UnitSystem {
    /// Optical regime: one wavelength is 1e-3 of the decay length, so
    /// intra-array photon travel times are negligible against the lifetime.
    fn default() -> Self {
        Self { lambda_a: 1e-3 }
    }
}

/// One two-level emitter coupled to the waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// Position along the waveguide, length units.
    pub z: f64,
    /// Decay rate into the guided modes, rate units.
    pub gamma_wg: f64,
    /// Decay rate into the free-space modes, rate units.
    pub gamma_nw: f64,
    /// Transition-wavevector offset from `k_a`, inverse-length units.
    /// The frequency detuning is `dk * v_g`.
    #[serde(default)]
    pub dk: f64,
}

impl EmitterParams {
    fn check(&self, idx: usize, problems: &mut Vec<String>) {
        if !(self.gamma_wg > 0.0 && self.gamma_wg.is_finite()) {
            problems.push(format!(
                "emitter {idx}: gamma_wg must be > 0, got {}",
                self.gamma_wg
            ));
        }
        if !(self.gamma_nw >= 0.0 && self.gamma_nw.is_finite()) {
            problems.push(format!(
                "emitter {idx}: gamma_nw must be >= 0, got {}",
                self.gamma_nw
            ));
        }
        if !self.z.is_finite() || !self.dk.is_finite() {
            problems.push(format!("emitter {idx}: z and dk must be finite"));
        }
    }
}

/// An ordered, collinear array of emitters. Emitters are kept sorted by
/// position; separations along the waveguide equal the free-space distances.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterArray {
    emitters: Vec<EmitterParams>,
    /// Dipole angle relative to the emitter chain, radians.
    pub phi: f64,
    pub units: UnitSystem,
}

impl EmitterArray {
    /// Build from per-emitter parameters with wavevector offsets relative to
    /// `k_a`. The offsets must average to zero: `k_a` is defined as the mean
    /// emitter wavevector.
    pub fn new(mut emitters: Vec<EmitterParams>, phi: f64, units: UnitSystem) -> Result<Self> {
        let mut problems = Vec::new();
        if emitters.is_empty() {
            problems.push("emitter list is empty".to_string());
        }
        for (idx, e) in emitters.iter().enumerate() {
            e.check(idx, &mut problems);
        }
        if !phi.is_finite() {
            problems.push(format!("phi must be finite, got {phi}"));
        }
        if emitters.len() > 1 {
            let mean = emitters.iter().map(|e| e.dk).sum::<f64>() / emitters.len() as f64;
            let scale = emitters.iter().map(|e| e.dk.abs()).fold(1.0, f64::max);
            if mean.abs() > 1e-9 * scale {
                problems.push(format!(
                    "wavevector offsets must average to zero (k_a is the mean emitter \
                     wavevector); got mean {mean:e}"
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems.join("; ")));
        }
        emitters.sort_by(|a, b| a.z.total_cmp(&b.z));
        Ok(Self {
            emitters,
            phi,
            units,
        })
    }

    /// Build from absolute emitter wavevectors. `k_a` is set to their mean and
    /// the stored offsets are recentered accordingly; `lambda_a = 2 pi / k_a`.
    pub fn from_absolute_wavevectors(specs: Vec<(EmitterParams, f64)>, phi: f64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Validation("emitter list is empty".to_string()));
        }
        let k_a = specs.iter().map(|(_, k)| *k).sum::<f64>() / specs.len() as f64;
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must also fail
        if !(k_a > 0.0) {
            return Err(Error::Validation(format!(
                "mean emitter wavevector must be positive, got {k_a}"
            )));
        }
        let emitters = specs
            .into_iter()
            .map(|(mut e, k)| {
                e.dk = k - k_a;
                e
            })
            .collect();
        Self::new(emitters, phi, UnitSystem::new(TAU / k_a)?)
    }

    pub fn emitters(&self) -> &[EmitterParams] {
        &self.emitters
    }

    pub fn len(&self) -> usize {
        self.emitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emitters.is_empty()
    }

    /// Separation |z_j - z_l|.
    pub fn separation(&self, j: usize, l: usize) -> f64 {
        (self.emitters[j].z - self.emitters[l].z).abs()
    }
}

/// Gaussian single-photon pulse, defined by its spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulse {
    /// Spectral width Delta_0 in inverse-length units. The frequency FWHM of
    /// the spectrum is sqrt(2 ln 2) * Delta_0 * v_g.
    pub width: f64,
    /// Pulse-center detuning from k_a.
    #[serde(default)]
    pub center_dk: f64,
}

impl GaussianPulse {
    pub fn new(width: f64, center_dk: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) || !center_dk.is_finite() {
            return Err(Error::Validation(format!(
                "pulse width must be > 0 and finite (got {width}), center_dk finite (got {center_dk})"
            )));
        }
        Ok(Self { width, center_dk })
    }
}

/// Normalized Gaussian spectrum amplitude: real and positive,
/// `(1/2pi) integral |beta_0|^2 d dk = 1` with `L = 1`.
pub fn gaussian_spectrum(pulse: &GaussianPulse, dk: f64) -> f64 {
    let u = (dk - pulse.center_dk) / pulse.width;
    (8.0 * PI).powf(0.25) / pulse.width.sqrt() * (-u * u).exp()
}

/// A single-photon spectrum given on a sampled dk grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSpectrum {
    pub dk: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl TabulatedSpectrum {
    pub fn validate(&self) -> Result<()> {
        if self.dk.len() < 2 || self.dk.len() != self.re.len() || self.dk.len() != self.im.len() {
            return Err(Error::Validation(
                "tabulated spectrum needs >= 2 points with matching dk/re/im lengths".to_string(),
            ));
        }
        if self.dk.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "tabulated spectrum dk grid must be strictly increasing".to_string(),
            ));
        }
        Ok(())
    }

    /// Linear interpolation; zero outside the tabulated range.
    pub fn amplitude_at(&self, dk: f64) -> C64 {
        let n = self.dk.len();
        if dk < self.dk[0] || dk > self.dk[n - 1] {
            return C64::new(0.0, 0.0);
        }
        let i = match self.dk.partition_point(|&x| x <= dk) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.dk[i], self.dk[i + 1]);
        let t = if x1 > x0 { (dk - x0) / (x1 - x0) } else { 0.0 };
        let a0 = C64::new(self.re[i], self.im[i]);
        let a1 = C64::new(self.re[i + 1], self.im[i + 1]);
        a0 + (a1 - a0) * t
    }
}

/// Photon input channel for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    None,
    Gaussian(GaussianPulse),
    Tabulated(TabulatedSpectrum),
}

impl Input {
    pub fn is_none(&self) -> bool {
        matches!(self, Input::None)
    }

    /// Input spectrum amplitude beta_0(dk).
    pub fn spectrum(&self, dk: f64) -> C64 {
        match self {
            Input::None => C64::new(0.0, 0.0),
            Input::Gaussian(p) => C64::new(gaussian_spectrum(p, dk), 0.0),
            Input::Tabulated(t) => t.amplitude_at(dk),
        }
    }
}

/// Whether intra-array photon travel times are kept in the time-domain
/// equations. Propagation phases are kept exactly in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RetardationMode {
    #[default]
    Markovian,
    Full,
}

/// A complete simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioConfig", into = "ScenarioConfig")]
pub struct Scenario {
    pub array: EmitterArray,
    pub input: Input,
    /// Initial emitter amplitudes alpha_j(0).
    pub initial_excitation: Vec<C64>,
    /// Toggles the off-diagonal free-space couplings; the diagonal loss
    /// gamma_j is kept either way.
    pub include_nw_coupling: bool,
    pub retardation_mode: RetardationMode,
}

impl Scenario {
    pub fn new(
        array: EmitterArray,
        input: Input,
        initial_excitation: Vec<C64>,
        include_nw_coupling: bool,
        retardation_mode: RetardationMode,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        let n = array.len();
        let initial_excitation = if initial_excitation.is_empty() {
            vec![C64::new(0.0, 0.0); n]
        } else {
            initial_excitation
        };
        if initial_excitation.len() != n {
            problems.push(format!(
                "initial_excitation has {} entries for {} emitters",
                initial_excitation.len(),
                n
            ));
        }
        let norm: f64 = initial_excitation.iter().map(|a| a.norm_sqr()).sum();
        if norm > 1.0 + 1e-12 {
            problems.push(format!("sum |alpha_j(0)|^2 = {norm} exceeds 1"));
        }
        if let Input::Tabulated(t) = &input {
            if let Err(Error::Validation(msg)) = t.validate() {
                problems.push(msg);
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems.join("; ")));
        }
        Ok(Self {
            array,
            input,
            initial_excitation,
            include_nw_coupling,
            retardation_mode,
        })
    }

    /// Decay scenario: given initial amplitudes, no photon input.
    pub fn decay(
        array: EmitterArray,
        initial_excitation: Vec<C64>,
        include_nw_coupling: bool,
    ) -> Result<Self> {
        Self::new(
            array,
            Input::None,
            initial_excitation,
            include_nw_coupling,
            RetardationMode::Markovian,
        )
    }

    /// Scattering scenario: photon pulse onto ground-state emitters.
    pub fn scattering(
        array: EmitterArray,
        pulse: GaussianPulse,
        include_nw_coupling: bool,
    ) -> Result<Self> {
        Self::new(
            array,
            Input::Gaussian(pulse),
            Vec::new(),
            include_nw_coupling,
            RetardationMode::Markovian,
        )
    }

    pub fn n_emitters(&self) -> usize {
        self.array.len()
    }

    /// Same scenario with the free-space off-diagonal couplings toggled.
    pub fn with_nw_coupling(&self, include: bool) -> Self {
        let mut s = self.clone();
        s.include_nw_coupling = include;
        s
    }

    /// Carrier wavevector of the input pulse, `k_a + dk_c`.
    pub fn carrier_k(&self) -> f64 {
        let dk_c = match &self.input {
            Input::Gaussian(p) => p.center_dk,
            _ => 0.0,
        };
        self.array.units.k_a() + dk_c
    }
}

/// Serialization schema: flat key-value layout used by config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub emitters: Vec<EmitterParams>,
    pub phi: f64,
    pub lambda_a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<GaussianPulse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabulated_input: Option<TabulatedSpectrum>,
    #[serde(default)]
    pub initial_excitation: Vec<[f64; 2]>,
    #[serde(default = "default_true")]
    pub include_nw_coupling: bool,
    #[serde(default)]
    pub retardation_mode: RetardationMode,
}

fn default_true() -> bool {
    true
}

impl TryFrom<ScenarioConfig> for Scenario {
    type Error = Error;

    fn try_from(cfg: ScenarioConfig) -> Result<Self> {
        let units = UnitSystem::new(cfg.lambda_a)?;
        let array = EmitterArray::new(cfg.emitters, cfg.phi, units)?;
        let input = match (cfg.pulse, cfg.tabulated_input) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation(
                    "config sets both pulse and tabulated_input".to_string(),
                ))
            }
            (Some(p), None) => Input::Gaussian(GaussianPulse::new(p.width, p.center_dk)?),
            (None, Some(t)) => Input::Tabulated(t),
            (None, None) => Input::None,
        };
        let init = cfg
            .initial_excitation
            .iter()
            .map(|[re, im]| C64::new(*re, *im))
            .collect();
        Scenario::new(
            array,
            input,
            init,
            cfg.include_nw_coupling,
            cfg.retardation_mode,
        )
    }
}

impl From<Scenario> for ScenarioConfig {
    fn from(s: Scenario) -> Self {
        ScenarioConfig {
            emitters: s.array.emitters().to_vec(),
            phi: s.array.phi,
            lambda_a: s.array.units.lambda_a,
            pulse: match &s.input {
                Input::Gaussian(p) => Some(*p),
                _ => None,
            },
            tabulated_input: match &s.input {
                Input::Tabulated(t) => Some(t.clone()),
                _ => None,
            },
            initial_excitation: s.initial_excitation.iter().map(|a| [a.re, a.im]).collect(),
            include_nw_coupling: s.include_nw_coupling,
            retardation_mode: s.retardation_mode,
        }
    }
}

/// A scenario expressed in external (dimensionful) units, for round-tripping
/// between lab numbers and the internal natural units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledScenario {
    /// Reference decay rate in external frequency units.
    pub gamma_ref: f64,
    /// Group velocity in external (length/time) units.
    pub v_g: f64,
    pub config: ScenarioConfig,
}

impl Scenario {
    /// Express this scenario in external units with the given reference rate
    /// and group velocity.
    pub fn to_scaled(&self, gamma_ref: f64, v_g: f64) -> ScaledScenario {
        let len = v_g / gamma_ref; // external length per internal length unit
        let inv_len = gamma_ref / v_g;
        let mut config = ScenarioConfig::from(self.clone());
        for e in &mut config.emitters {
            e.z *= len;
            e.gamma_wg *= gamma_ref;
            e.gamma_nw *= gamma_ref;
            e.dk *= inv_len;
        }
        config.lambda_a *= len;
        if let Some(p) = &mut config.pulse {
            p.width *= inv_len;
            p.center_dk *= inv_len;
        }
        if let Some(t) = &mut config.tabulated_input {
            for x in &mut t.dk {
                *x *= inv_len;
            }
        }
        ScaledScenario {
            gamma_ref,
            v_g,
            config,
        }
    }

    /// Convert an externally-scaled scenario back to natural units.
    pub fn from_scaled(s: &ScaledScenario) -> Result<Self> {
        let len = s.v_g / s.gamma_ref;
        let inv_len = s.gamma_ref / s.v_g;
        let mut config = s.config.clone();
        for e in &mut config.emitters {
            e.z /= len;
            e.gamma_wg /= s.gamma_ref;
            e.gamma_nw /= s.gamma_ref;
            e.dk /= inv_len;
        }
        config.lambda_a /= len;
        if let Some(p) = &mut config.pulse {
            p.width /= inv_len;
            p.center_dk /= inv_len;
        }
        if let Some(t) = &mut config.tabulated_input {
            for x in &mut t.dk {
                *x /= inv_len;
            }
        }
        Scenario::try_from(config)
    }
}
