//! Command-line driver: loads a scenario config, runs the requested
//! computation, and writes deterministic CSV/JSON artifacts plus a run
//! manifest.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use wqed::{
    build_couplings, collective_modes, conservation_audit, coupling_transition_sweep,
    decay_spectra, default_t_max, evolve, find_peaks, plane_wave_response, scattering_spectra,
    separation_sweep, spectrum_difference, sweep_crossing, verify, write_decay_csv,
    write_peaks_json, write_response_csv, write_scattering_csv, write_sweep_csv,
    write_trajectory_csv, EmitterArray, EmitterParams, Error, GaussianPulse, Input,
    RetardationMode, RunManifest, Scenario, SpectrumGrid,
};

#[derive(Parser)]
#[command(
    name = "wqed",
    version,
    about = "Single-photon transport in a waveguide coupled to two-level emitters"
)]
struct Cli {
    /// Worker threads for grid and sweep parallelism (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the time-domain emitter amplitudes and export the trajectory
    Simulate(SimulateArgs),
    /// Compute a frequency-domain spectrum and export it
    Spectrum(SpectrumArgs),
    /// Sweep one parameter and export the derived metric per point
    Sweep(SweepArgs),
    /// Run the built-in verification suite and report each check
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Drop the free-space dipole-dipole off-diagonal couplings
    #[arg(long)]
    no_nw: bool,
    /// Treat intra-array photon travel times as zero (keeps phases exactly)
    #[arg(long, conflicts_with = "retarded")]
    markovian: bool,
    /// Keep the full intra-array retardation in the time-domain equations
    #[arg(long)]
    retarded: bool,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, Error> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| io_context(e, format!("cannot read config {}", self.config.display())))?;
        let mut scenario: Scenario = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("config {}: {e}", self.config.display())))?;
        if self.no_nw {
            scenario.include_nw_coupling = false;
        }
        if self.markovian {
            scenario.retardation_mode = RetardationMode::Markovian;
        }
        if self.retarded {
            scenario.retardation_mode = RetardationMode::Full;
        }
        Ok(scenario)
    }
}

#[derive(Args)]
struct GridArgs {
    /// Half-span of the detuning grid, rate units (default: auto from scenario)
    #[arg(long)]
    grid_span: Option<f64>,
    /// Number of grid points when --grid-span is set
    #[arg(long, default_value_t = 16001)]
    grid_points: usize,
}

impl GridArgs {
    fn build(&self, scenario: &Scenario) -> Result<SpectrumGrid, Error> {
        match self.grid_span {
            Some(span) => SpectrumGrid::uniform(-span, span, self.grid_points),
            None => SpectrumGrid::default_for(scenario),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Integration end time, inverse-rate units (default: auto)
    #[arg(long)]
    t_max: Option<f64>,
    /// Integration step (default: auto)
    #[arg(long)]
    step: Option<f64>,
    /// Keep every Nth trajectory row in the CSV (default: aim for ~2000 rows)
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Channel {
    /// Plane-wave reflection/transmission amplitudes per detuning
    Response,
    /// Pulse scattering: incident, reflected, transmitted spectra
    Scattering,
    /// Emission spectra from an initial excitation
    Decay,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Which spectrum to compute (default: scattering if the config has a
    /// pulse, decay if it has an initial excitation, response otherwise)
    #[arg(long, value_enum)]
    channel: Option<Channel>,
    /// Also write a peak catalogue (positions, heights, FWHMs) as JSON
    #[arg(long)]
    peaks: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    /// Emitter separation; reports the spectrum difference with/without the
    /// free-space coupling
    R12,
    /// Emitter frequency difference; reports peak separation and linewidth
    /// difference
    Dw12,
    /// Free-space decay rate; reports the spectrum difference
    GammaNw,
    /// Pulse spectral width; reports scattering probabilities
    Delta0,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Parameter to sweep
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Range as LO:HI:POINTS, linear spacing (append :log for logarithmic)
    #[arg(long)]
    range: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Write the full JSON report here in addition to the console summary
    #[arg(long)]
    json: Option<PathBuf>,
    /// Debug: perturb rates and separations by this fraction; the suite is
    /// then expected to fail (negative control)
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            e.exit()
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            std::process::exit(1);
        }
    }
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Spectrum(args) => cmd_spectrum(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Verify(args) => cmd_verify(&args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn io_context(e: std::io::Error, msg: String) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{msg}: {e}")))
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, String), Error> {
    fs::create_dir_all(dir)
        .map_err(|e| io_context(e, format!("cannot create {}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| io_context(e, format!("cannot create {}", path.display())))?;
    Ok((BufWriter::new(file), name.to_string()))
}

fn finish_manifest(mut manifest: RunManifest, dir: &Path, started: Instant) -> Result<(), Error> {
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    let (mut w, _) = create(dir, "manifest.json")?;
    manifest.write(&mut w)?;
    Ok(())
}

/// Default integration step: well inside the stability bound, and fine enough
/// to resolve the intra-array delays in full-retardation mode.
fn default_step(scenario: &Scenario) -> f64 {
    let mut h: f64 = 1e-3;
    if scenario.retardation_mode == RetardationMode::Full {
        let emitters = scenario.array.emitters();
        for w in emitters.windows(2) {
            h = h.min((w[1].z - w[0].z) / 8.0);
        }
    }
    h
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let started = Instant::now();
    let scenario = args.scenario.load()?;
    let t_max = match args.t_max {
        Some(t) => t,
        None => default_t_max(&scenario)?,
    };
    let h = args.step.unwrap_or_else(|| default_step(&scenario));
    let traj = evolve(&scenario, t_max, h)?;
    let stride = args.stride.unwrap_or_else(|| (traj.t.len() / 2000).max(1));

    let mut manifest = RunManifest::new("simulate", &scenario);
    manifest.set("t_max", t_max);
    manifest.set("step", h);
    manifest.set("stride", stride);

    let (mut w, name) = create(&args.scenario.out, "trajectory.csv")?;
    write_trajectory_csv(&mut w, &traj, stride)?;
    w.flush()?;
    manifest.outputs.push(name);

    let modes = collective_modes(&build_couplings(&scenario)?)?;
    let slowest = modes.last().map(|m| m.eigenvalue.re).unwrap_or(0.0);
    println!("integrated {} steps to t = {t_max}", traj.t.len() - 1);
    println!("final survival probability: {:.6e}", traj.final_survival());
    println!("slowest collective mode rate: {slowest:.6}");

    if !scenario.input.is_none()
        || scenario
            .initial_excitation
            .iter()
            .any(|a| a.norm_sqr() > 0.0)
    {
        let grid = SpectrumGrid::canonical();
        match conservation_audit(&scenario, &traj, &grid) {
            Ok(audit) => {
                println!(
                    "norm audit: input {:.6}, survival {:.3e}, guided {:.6}, non-guided {:.6}",
                    audit.input_norm,
                    audit.survival,
                    audit.guided + audit.guided_tail,
                    audit.inferred_nonguided
                );
                if let Some(flag) = audit.flag {
                    println!("norm audit warning: {flag}");
                }
            }
            Err(e) => println!("norm audit skipped: {e}"),
        }
    }

    finish_manifest(manifest, &args.scenario.out, started)
}

fn cmd_spectrum(args: &SpectrumArgs) -> Result<(), Error> {
    let started = Instant::now();
    let scenario = args.scenario.load()?;
    let grid = args.grid.build(&scenario)?;
    let channel = args.channel.unwrap_or({
        if !scenario.input.is_none() {
            Channel::Scattering
        } else if scenario
            .initial_excitation
            .iter()
            .any(|a| a.norm_sqr() > 0.0)
        {
            Channel::Decay
        } else {
            Channel::Response
        }
    });

    let mut manifest = RunManifest::new("spectrum", &scenario);
    manifest.set("grid_points", grid.len());
    manifest.set("grid_min", grid.dk()[0]);
    manifest.set("grid_max", grid.dk()[grid.len() - 1]);

    // reflectance-like intensity series used for the peak catalogue
    let intensity: Vec<f64>;
    match channel {
        Channel::Response => {
            manifest.set("channel", "response");
            let resp = plane_wave_response(&scenario, &grid)?;
            let (mut w, name) = create(&args.scenario.out, "spectrum.csv")?;
            write_response_csv(&mut w, &resp)?;
            w.flush()?;
            manifest.outputs.push(name);
            intensity = resp.reflection.iter().map(|r| r.norm_sqr()).collect();
            let mid = resp
                .grid
                .dk()
                .iter()
                .position(|&d| d.abs() < 1e-12)
                .map(|i| resp.reflection[i].norm_sqr());
            if let Some(r0) = mid {
                println!("reflectance at zero detuning: {r0:.6}");
            }
        }
        Channel::Scattering => {
            manifest.set("channel", "scattering");
            let sp = scattering_spectra(&scenario, &grid)?;
            let (mut w, name) = create(&args.scenario.out, "spectrum.csv")?;
            write_scattering_csv(&mut w, &sp)?;
            w.flush()?;
            manifest.outputs.push(name);
            // peak metrology uses the exact plane-wave reflectance: the ratio
            // of scattered to incident spectra is pure noise in the far tails
            // where the incident Gaussian has underflowed
            let resp = plane_wave_response(&scenario, &grid)?;
            intensity = resp.reflection.iter().map(|r| r.norm_sqr()).collect();
            println!(
                "pulse norm {:.6}, reflected {:.6}, transmitted {:.6}",
                sp.incident_norm(),
                sp.reflection_probability(),
                sp.transmission_probability()
            );
        }
        Channel::Decay => {
            manifest.set("channel", "decay");
            let sp = decay_spectra(&scenario, &grid)?;
            let (mut w, name) = create(&args.scenario.out, "spectrum.csv")?;
            write_decay_csv(&mut w, &sp)?;
            w.flush()?;
            manifest.outputs.push(name);
            intensity = sp.total_intensity();
            println!(
                "guided emission: forward {:.6}, backward {:.6}",
                sp.forward_probability(),
                sp.backward_probability()
            );
        }
    }

    if args.peaks {
        let cat = find_peaks(grid.dk(), &intensity);
        let (mut w, name) = create(&args.scenario.out, "peaks.json")?;
        write_peaks_json(&mut w, &cat)?;
        w.flush()?;
        manifest.outputs.push(name);
        println!("peaks found: {}", cat.peaks.len());
        for p in &cat.peaks {
            println!(
                "  at {:+.4}, height {:.4}, fwhm {:.4}{}",
                p.position,
                p.height,
                p.fwhm,
                if p.resolution_warning {
                    " (under-resolved)"
                } else {
                    ""
                }
            );
        }
        if let (Some(s), Some(l)) = (cat.separation, cat.linewidth_difference) {
            println!("dominant pair: separation {s:.4}, linewidth difference {l:.4}");
        }
    }

    finish_manifest(manifest, &args.scenario.out, started)
}

fn parse_range(spec: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = |msg: &str| Error::Validation(format!("range '{spec}': {msg}"));
    if parts.len() < 3 || parts.len() > 4 {
        return Err(bad("expected LO:HI:POINTS or LO:HI:POINTS:log"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad("bad LO"))?;
    let hi: f64 = parts[1].parse().map_err(|_| bad("bad HI"))?;
    let n: usize = parts[2].parse().map_err(|_| bad("bad POINTS"))?;
    let log = match parts.get(3) {
        None => false,
        Some(&"log") => true,
        Some(other) => return Err(bad(&format!("unknown spacing '{other}'"))),
    };
    if !lo.is_finite() || !hi.is_finite() || hi <= lo || n < 2 {
        return Err(bad("need finite LO < HI and POINTS >= 2"));
    }
    if log && lo <= 0.0 {
        return Err(bad("log spacing needs LO > 0"));
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log {
                lo * (hi / lo).powf(t)
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect())
}

fn with_gamma_nw(template: &Scenario, gamma_nw: f64) -> Result<Scenario, Error> {
    let emitters: Vec<EmitterParams> = template
        .array
        .emitters()
        .iter()
        .map(|e| EmitterParams { gamma_nw, ..*e })
        .collect();
    let array = EmitterArray::new(emitters, template.array.phi, template.array.units)?;
    Scenario::new(
        array,
        template.input.clone(),
        template.initial_excitation.clone(),
        template.include_nw_coupling,
        template.retardation_mode,
    )
}

fn delta_sd(scenario: &Scenario, grid: &SpectrumGrid) -> Result<f64, Error> {
    let with = plane_wave_response(&scenario.with_nw_coupling(true), grid)?;
    let without = plane_wave_response(&scenario.with_nw_coupling(false), grid)?;
    Ok(spectrum_difference(&with, &without)?.value)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let started = Instant::now();
    let scenario = args.scenario.load()?;
    let values = parse_range(&args.range)?;
    let grid = match args.grid.grid_span {
        Some(span) => SpectrumGrid::uniform(-span, span, args.grid.grid_points)?,
        None => SpectrumGrid::canonical(),
    };

    let mut manifest = RunManifest::new("sweep", &scenario);
    manifest.set("range", &args.range);
    manifest.set("grid_points", grid.len());

    let (header, rows): (Vec<&str>, Vec<Vec<f64>>) = match args.param {
        SweepParam::R12 => {
            manifest.set("param", "r12");
            let rows = separation_sweep(&scenario, &values, &grid)?;
            if let Some(x) = sweep_crossing(&rows, 0.5) {
                println!(
                    "spectrum difference crosses 0.5 at separation {x:.6e} ({:.4} wavelengths)",
                    x / scenario.array.units.lambda_a
                );
            }
            (
                vec!["r12", "delta_sd"],
                rows.into_iter().map(|(r, d)| vec![r, d]).collect(),
            )
        }
        SweepParam::Dw12 => {
            manifest.set("param", "dw12");
            let rows = coupling_transition_sweep(&scenario, &values)?;
            (
                vec!["dw12", "peak_separation", "linewidth_difference"],
                rows.into_iter()
                    .map(|r| vec![r.delta_w, r.separation, r.linewidth_difference])
                    .collect(),
            )
        }
        SweepParam::GammaNw => {
            manifest.set("param", "gamma_nw");
            let rows: Result<Vec<Vec<f64>>, Error> = values
                .iter()
                .map(|&g| Ok(vec![g, delta_sd(&with_gamma_nw(&scenario, g)?, &grid)?]))
                .collect();
            (vec!["gamma_nw", "delta_sd"], rows?)
        }
        SweepParam::Delta0 => {
            manifest.set("param", "delta0");
            let center = match &scenario.input {
                Input::Gaussian(p) => p.center_dk,
                _ => {
                    return Err(Error::Validation(
                        "delta0 sweep needs a Gaussian pulse in the config".to_string(),
                    ))
                }
            };
            let rows: Result<Vec<Vec<f64>>, Error> = values
                .iter()
                .map(|&d0| {
                    let mut s = scenario.clone();
                    s.input = Input::Gaussian(GaussianPulse::new(d0, center)?);
                    let sp = scattering_spectra(&s, &grid)?;
                    let (r, t) = (sp.reflection_probability(), sp.transmission_probability());
                    Ok(vec![d0, r, t, (sp.incident_norm() - r - t).max(0.0)])
                })
                .collect();
            (vec!["delta0", "reflected", "transmitted", "lost"], rows?)
        }
    };

    let (mut w, name) = create(&args.scenario.out, "sweep.csv")?;
    write_sweep_csv(&mut w, &header, &rows)?;
    w.flush()?;
    manifest.outputs.push(name);
    println!("wrote {} sweep rows", rows.len());

    finish_manifest(manifest, &args.scenario.out, started)
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Error> {
    let results = verify::run_all(args.perturb);
    let mut all_ok = true;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] check {:2}: {}", r.id, r.name);
        for d in &r.details {
            println!("        {d}");
        }
        all_ok &= r.passed;
    }
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&results)
            .map_err(|e| Error::Numerical(format!("JSON encoding failed: {e}")))?;
        fs::write(path, text + "\n")
            .map_err(|e| io_context(e, format!("cannot write {}", path.display())))?;
    }
    if all_ok {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(Error::Numerical(
            "one or more verification checks failed".to_string(),
        ))
    }
}
