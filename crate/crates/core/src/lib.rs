//! Single-photon transport in a one-dimensional waveguide coupled to a chain
//! of two-level emitters, including their free-space dipole-dipole coupling.
//!
//! The crate covers the full pipeline: scenario description ([`model`]),
//! coupling matrices and collective modes ([`coupling`]), time-domain
//! amplitude dynamics ([`dynamics`]), frequency-domain scattering and decay
//! spectra ([`spectra`]), and derived observables such as peak catalogues and
//! spectral-difference sweeps ([`analysis`]).

pub mod analysis;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod model;
pub mod numeric;
pub mod spectra;
pub mod verify;

pub use analysis::{
    conservation_audit, coupling_transition_sweep, find_peaks, separation_sweep,
    spectrum_difference, sweep_crossing, ConservationAudit, Peak, PeakCatalogue,
    SpectrumDifference, TransitionRow,
};
pub use coupling::{
    build_couplings, collective_modes, energy_shifts, mode_matrix_with_detuning,
    nonwaveguide_coupling, CollectiveMode, CouplingMatrices,
};
pub use dynamics::{default_t_max, drive, evolve, excitation_probabilities, AmplitudeTrajectory};
pub use error::{Error, Result};
pub use export::{
    scenario_hash, write_decay_csv, write_peaks_json, write_response_csv, write_scattering_csv,
    write_sweep_csv, write_trajectory_csv, RunManifest,
};
pub use model::{
    gaussian_spectrum, EmitterArray, EmitterParams, GaussianPulse, Input, RetardationMode,
    ScaledScenario, Scenario, ScenarioConfig, TabulatedSpectrum, UnitSystem,
};
pub use spectra::{
    decay_spectra, m_matrix, plane_wave_response, scattering_spectra, solve_chi,
    waveguide_branching, Branching, DecaySpectra, PlaneWaveResponse, ScatteringSpectra,
    SpectrumGrid,
};
pub use verify::{run_all, CheckResult};
