//! spinmech: batch CLI over the spin-mechanics toolkit.
//!
//! Every command reads CSV/JSON inputs, writes CSV/JSON to stdout or
//! `--out`, and is deterministic: fixed seeds give byte-identical output
//! regardless of `--threads`.
//!
//! Exit codes: 0 success, 1 usage error, 2 input parse/format error,
//! 3 numerical non-convergence or domain failure, 4 I/O failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use spinmech::constants::{
    DEFAULT_GAMMA_E_HZ_PER_T, DEFAULT_GAMMA_N_HZ_PER_T, DEFAULT_M_EFF_KG,
    DEFAULT_ZERO_FIELD_SPLITTING_HZ,
};
use spinmech::coop::{self, Scenario, ZpSpec};
use spinmech::dipole::{self, Dipole, NvAxis, ScanGeometry};
use spinmech::echo::{self, Coupling, DecoherenceModel};
use spinmech::io as smio;
use spinmech::mech;
use spinmech::register::{self, C13Branch, SequenceConfig};
use spinmech::spinmodel::{self, EsrPair, FieldComponents, SpinParams};
use spinmech::synth;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

enum CliError {
    Usage(String),
    Parse(String),
    Numerics(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Numerics(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Parse(m) | CliError::Numerics(m) | CliError::Io(m) => m,
        }
    }
}

impl From<smio::IoError> for CliError {
    fn from(e: smio::IoError) -> Self {
        match e {
            smio::IoError::Format(m) => CliError::Parse(m),
            smio::IoError::Io(e) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

macro_rules! numeric_error {
    ($($ty:ty),+) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Numerics(e.to_string())
            }
        }
    )+};
}
numeric_error!(
    spinmodel::SpinError,
    dipole::DipoleError,
    mech::MechError,
    echo::EchoError,
    register::RegisterError,
    coop::CoopError
);

// ---------------------------------------------------------------------------
// Run configuration (JSON file merged with flags; flags win)
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    d_hz: Option<f64>,
    gamma_e_hz_per_t: Option<f64>,
    gamma_n_hz_per_t: Option<f64>,
    m_eff_kg: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let file = File::open(p)
                    .map_err(|e| CliError::Io(format!("cannot open {}: {e}", p.display())))?;
                serde_json::from_reader(file)
                    .map_err(|e| CliError::Parse(format!("bad config {}: {e}", p.display())))
            }
        }
    }

    fn spin_params(&self, d_flag: Option<f64>, gamma_flag: Option<f64>) -> SpinParams {
        SpinParams {
            d_hz: d_flag.or(self.d_hz).unwrap_or(DEFAULT_ZERO_FIELD_SPLITTING_HZ),
            gamma_e_hz_per_t: gamma_flag
                .or(self.gamma_e_hz_per_t)
                .unwrap_or(DEFAULT_GAMMA_E_HZ_PER_T),
        }
    }

    fn gamma_e(&self, flag: Option<f64>) -> f64 {
        flag.or(self.gamma_e_hz_per_t).unwrap_or(DEFAULT_GAMMA_E_HZ_PER_T)
    }

    fn gamma_n(&self, flag: Option<f64>) -> f64 {
        flag.or(self.gamma_n_hz_per_t).unwrap_or(DEFAULT_GAMMA_N_HZ_PER_T)
    }

    fn m_eff(&self, flag: Option<f64>) -> f64 {
        flag.or(self.m_eff_kg).unwrap_or(DEFAULT_M_EFF_KG)
    }

    /// Seed resolution with the documented default-0 notice on stderr.
    fn seed(&self, flag: Option<u64>) -> u64 {
        if let Some(s) = flag {
            return s;
        }
        if let Some(s) = self.seed {
            return s;
        }
        eprintln!("notice: --seed not given; using seed 0");
        0
    }
}

// ---------------------------------------------------------------------------
// Command-line surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "spinmech",
    version,
    about = "Spin-mechanics analysis toolkit: ESR field inversion, dipole fits, resonator \
             characterization, Hahn-echo coupling extraction, nuclear-memory transport, and \
             cooperativity accounting"
)]
struct Cli {
    /// JSON run configuration (constants, default seed/threads); flags win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (also SPINMECH_THREADS); results are identical for any value
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Group,
}

#[derive(Subcommand)]
enum Group {
    /// Single-point ESR frequency computations
    #[command(subcommand)]
    Esr(EsrCmd),
    /// Field-map operations (inversion, interpolation, dipole fits)
    #[command(subcommand)]
    Map(MapCmd),
    /// Mechanical-mode characterization
    #[command(subcommand)]
    Mech(MechCmd),
    /// Hahn-echo spin-mechanics signals
    #[command(subcommand)]
    Echo(EchoCmd),
    /// Movement detuning profiles and nuclear phase cancellation
    #[command(subcommand)]
    Transport(TransportCmd),
    /// Two-qubit memory sequence simulation
    #[command(subcommand)]
    Register(RegisterCmd),
    /// Cooperativity accounting
    #[command(subcommand)]
    Coop(CoopCmd),
    /// Deterministic synthetic fixtures
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum EsrCmd {
    /// Transition pair from field components
    Forward(EsrForwardArgs),
    /// Field components from a transition pair
    Invert(EsrInvertArgs),
}

#[derive(Args)]
struct EsrForwardArgs {
    /// Field along the NV axis, Tesla
    #[arg(long = "bz-tesla")]
    bz_tesla: f64,
    /// Field perpendicular to the NV axis, Tesla
    #[arg(long = "bx-tesla", default_value_t = 0.0)]
    bx_tesla: f64,
    /// Zero-field splitting, Hz
    #[arg(long = "d-hz")]
    d_hz: Option<f64>,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
}

#[derive(Args)]
struct EsrInvertArgs {
    /// Lower transition frequency, Hz
    #[arg(long)]
    fminus: f64,
    /// Upper transition frequency, Hz
    #[arg(long)]
    fplus: f64,
    /// Zero-field splitting, Hz
    #[arg(long = "d-hz")]
    d_hz: Option<f64>,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
}

#[derive(Subcommand)]
enum MapCmd {
    /// Invert an ESR map into an axial-field map
    Invert(MapInvertArgs),
    /// Fill invalid pixels by iterative 8-neighbor averaging
    Interp(MapInterpArgs),
    /// Fit a point dipole to an axial-field map
    FitDipole(MapFitArgs),
    /// Evaluate the axial-gradient map of a dipole
    Gradient(MapGradientArgs),
}

#[derive(Args)]
struct MapInvertArgs {
    /// Input ESR map CSV (x_um,y_um,f_minus_hz,f_plus_hz,valid)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero-field splitting, Hz
    #[arg(long = "d-hz")]
    d_hz: Option<f64>,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
}

#[derive(Args)]
struct MapInterpArgs {
    /// Input axial-field map CSV (x_um,y_um,bz_tesla,valid)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapFitArgs {
    /// Input axial-field map CSV (bz_tesla or bz_gauss columns)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// NV axis direction "x,y,z" (dimensionless, normalized internally)
    #[arg(long = "nv-axis", value_parser = parse_vec3, default_value = "0,0,1")]
    nv_axis: Vector3<f64>,
    /// Scan height above the sample frame origin, meters
    #[arg(long = "height-m")]
    height_m: f64,
    /// Optional initial dipole JSON file; omit for a coarse grid-search seed
    #[arg(long, value_name = "FILE")]
    init: Option<PathBuf>,
    /// Maximum fit iterations (count)
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapGradientArgs {
    /// Dipole JSON file ({"moment_am2":[...],"position_m":[...]})
    #[arg(long, value_name = "FILE")]
    dipole: PathBuf,
    /// NV axis direction "x,y,z" (dimensionless)
    #[arg(long = "nv-axis", value_parser = parse_vec3, default_value = "0,0,1")]
    nv_axis: Vector3<f64>,
    /// Motion axis direction "x,y,z" (dimensionless)
    #[arg(long = "motion-axis", value_parser = parse_vec3, default_value = "0,0,1")]
    motion_axis: Vector3<f64>,
    /// Grid pixels along x (count)
    #[arg(long, default_value_t = 11)]
    nx: usize,
    /// Grid pixels along y (count)
    #[arg(long, default_value_t = 11)]
    ny: usize,
    /// Pixel pitch, meters
    #[arg(long = "pitch-m", default_value_t = 0.2e-6)]
    pitch_m: f64,
    /// Scan height, meters
    #[arg(long = "height-m", default_value_t = 1e-6)]
    height_m: f64,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MechCmd {
    /// Zero-point motion of a mode
    Zpm(MechZpmArgs),
    /// Fit a Lorentzian to a PSD record
    FitPsd(MechFitPsdArgs),
    /// Fit an exponential amplitude ringdown
    FitRingdown(MechFitRingdownArgs),
    /// RMS amplitude from a PSD band integral
    Rms(MechRmsArgs),
}

#[derive(Args)]
struct MechZpmArgs {
    /// Effective mass, kg
    #[arg(long = "meff-kg")]
    meff_kg: Option<f64>,
    /// Mode frequency, Hz
    #[arg(long = "fr-hz", default_value_t = 1.4e6)]
    fr_hz: f64,
}

#[derive(Args)]
struct MechFitPsdArgs {
    /// Input PSD CSV (freq_hz,psd_m2_per_hz)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MechFitRingdownArgs {
    /// Input ringdown CSV (t_s,amplitude_m)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Mode frequency, Hz
    #[arg(long = "fr-hz")]
    fr_hz: f64,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MechRmsArgs {
    /// Input PSD CSV (freq_hz,psd_m2_per_hz)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Band lower edge, Hz
    #[arg(long = "flo-hz")]
    flo_hz: f64,
    /// Band upper edge, Hz
    #[arg(long = "fhi-hz")]
    fhi_hz: f64,
}

#[derive(Subcommand)]
enum EchoCmd {
    /// Closed-form echo contrast curve
    Analytic(EchoAnalyticArgs),
    /// Monte Carlo echo contrast at one half-evolution time
    Mc(EchoMcArgs),
    /// Fit the coupling to a normalized echo curve
    Fit(EchoFitArgs),
}

#[derive(Args)]
struct EchoArgsCommon {
    /// Single-phonon coupling λ/2π, Hz
    #[arg(long)]
    lambda: f64,
    /// RMS motion amplitude, meters
    #[arg(long = "deltax-m", default_value_t = 1.86e-9)]
    deltax_m: f64,
    /// Mechanical frequency, Hz
    #[arg(long = "fr-hz", default_value_t = 1.4e6)]
    fr_hz: f64,
    /// Zero-point motion, meters
    #[arg(long = "zp-m", default_value_t = 1.146e-14)]
    zp_m: f64,
}

#[derive(Args)]
struct EchoAnalyticArgs {
    #[command(flatten)]
    common: EchoArgsCommon,
    /// Number of τ points (count)
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Largest half-evolution time, s (default: two mechanical periods)
    #[arg(long = "tau-max-s")]
    tau_max_s: Option<f64>,
    /// Readout contrast scale α (dimensionless)
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Intrinsic coherence time T2, s (enables the decoherence envelope)
    #[arg(long = "t2-s")]
    t2_s: Option<f64>,
    /// Decoherence stretching exponent (dimensionless)
    #[arg(long = "chi-exponent", default_value_t = 3.0)]
    chi_exponent: f64,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EchoMcArgs {
    #[command(flatten)]
    common: EchoArgsCommon,
    /// Half-evolution time τ, s
    #[arg(long = "tau-s")]
    tau_s: f64,
    /// Monte Carlo sample count
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// RNG seed (64-bit; default 0 with a notice)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EchoFitArgs {
    /// Input normalized echo CSV (tau_s,contrast)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// RMS motion amplitude, meters (fixed from interferometry)
    #[arg(long = "deltax-m")]
    deltax_m: f64,
    /// Mechanical frequency, Hz (fixed from interferometry)
    #[arg(long = "fr-hz")]
    fr_hz: f64,
    /// Zero-point motion, meters
    #[arg(long = "zp-m")]
    zp_m: f64,
    /// Also fit the contrast scale α (otherwise fixed to 1)
    #[arg(long = "fit-alpha")]
    fit_alpha: bool,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TransportCmd {
    /// Detuning profile for a sinusoidal out-and-back movement
    Profile(TransportProfileArgs),
    /// Nuclear π-pulse time canceling the transport phase
    PiTime(TransportPiTimeArgs),
    /// Fringe scan: contrast versus π-pulse time
    Fringes(TransportFringesArgs),
}

#[derive(Args)]
struct TransportProfileArgs {
    /// Dipole JSON file
    #[arg(long, value_name = "FILE")]
    dipole: PathBuf,
    /// NV axis direction "x,y,z" (dimensionless)
    #[arg(long = "nv-axis", value_parser = parse_vec3, default_value = "0,0,1")]
    nv_axis: Vector3<f64>,
    /// Start point "x,y,z", meters
    #[arg(long = "start-m", value_parser = parse_vec3)]
    start_m: Vector3<f64>,
    /// Displacement "x,y,z", meters
    #[arg(long = "displacement-m", value_parser = parse_vec3)]
    displacement_m: Vector3<f64>,
    /// Movement duration, s
    #[arg(long = "tmove-s", default_value_t = 1.7e-3)]
    tmove_s: f64,
    /// Grid points (count, ≥ 64)
    #[arg(long, default_value_t = 257)]
    points: usize,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
    /// Nuclear gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-n")]
    gamma_n: Option<f64>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransportPiTimeArgs {
    /// Input profile CSV (t_s,delta_e_hz)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
    /// Nuclear gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-n")]
    gamma_n: Option<f64>,
}

#[derive(Args)]
struct TransportFringesArgs {
    /// Input profile CSV (t_s,delta_e_hz)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Scan points over [0, t_move] (count)
    #[arg(long, default_value_t = 201)]
    points: usize,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
    /// Nuclear gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-n")]
    gamma_n: Option<f64>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RegisterCmd {
    /// Memory-sequence contrast for one configuration
    Simulate(RegisterSimulateArgs),
    /// Contrast versus τ (Ramsey-style scan)
    Ramsey(RegisterRamseyArgs),
}

/// Sequence config JSON with optional ¹³C branches
/// ({"tau_s":..., "theta_rad":..., "c13_branches":[{"detuning_hz":..,"probability":..}]}).
#[derive(Debug, Clone, Deserialize)]
struct RegisterJob {
    #[serde(flatten)]
    sequence: SequenceConfig,
    c13_branches: Option<Vec<C13Branch>>,
}

#[derive(Args)]
struct RegisterSimulateArgs {
    /// Sequence config JSON file
    #[arg(long = "config-json", value_name = "FILE")]
    config_json: PathBuf,
    /// Optional movement profile CSV; omit for a stationary magnet
    #[arg(long, value_name = "FILE")]
    profile: Option<PathBuf>,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
    /// Nuclear gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-n")]
    gamma_n: Option<f64>,
}

#[derive(Args)]
struct RegisterRamseyArgs {
    /// Sequence config JSON file
    #[arg(long = "config-json", value_name = "FILE")]
    config_json: PathBuf,
    /// Optional movement profile CSV; omit for a stationary magnet
    #[arg(long, value_name = "FILE")]
    profile: Option<PathBuf>,
    /// Largest τ, s
    #[arg(long = "tau-max-s", default_value_t = 25.5e-6)]
    tau_max_s: f64,
    /// Scan points (count)
    #[arg(long, default_value_t = 256)]
    points: usize,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
    /// Nuclear gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-n")]
    gamma_n: Option<f64>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CoopCmd {
    /// Cooperativity from (λ/2π, T2, nκ/2π)
    Compute(CoopComputeArgs),
    /// Cooperativity table from comparison rows
    Table(CoopTableArgs),
    /// Full-chain projection for an improvement scenario
    Project(CoopProjectArgs),
}

#[derive(Args)]
struct CoopComputeArgs {
    /// Single-phonon coupling λ/2π, Hz
    #[arg(long)]
    lambda: f64,
    /// Spin coherence time T2, s
    #[arg(long)]
    t2: f64,
    /// Mechanical dissipation product n·κ/2π, Hz
    #[arg(long)]
    nkappa: f64,
}

#[derive(Args)]
struct CoopTableArgs {
    /// Input rows CSV (label,lambda_over_2pi_hz,t2_s,n_kappa_over_2pi_hz)
    #[arg(long = "in", value_name = "FILE", conflicts_with = "builtin")]
    input: Option<PathBuf>,
    /// Use the four shipped comparison rows
    #[arg(long)]
    builtin: bool,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoopProjectArgs {
    /// Field gradient, T/m
    #[arg(long)]
    gradient: f64,
    /// Zero-point motion, meters (alternative to --meff-kg)
    #[arg(long = "zp-m", conflicts_with = "meff_kg")]
    zp_m: Option<f64>,
    /// Effective mass, kg (z_p derived from --fr-hz)
    #[arg(long = "meff-kg")]
    meff_kg: Option<f64>,
    /// Quality factor (dimensionless)
    #[arg(long)]
    q: f64,
    /// Mode frequency, Hz
    #[arg(long = "fr-hz")]
    fr_hz: f64,
    /// Bath temperature, K
    #[arg(long = "temp-k")]
    temp_k: f64,
    /// Spin coherence time T2, s
    #[arg(long)]
    t2: f64,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    /// Normalized echo contrast curve
    Echo,
    /// Axial-field map of a planted dipole
    DipoleMap,
    /// ESR pair map of a planted dipole
    EsrMap,
    /// Lorentzian PSD record
    Psd,
    /// Exponential ringdown record
    Ringdown,
    /// Raised-cosine movement detuning profile
    Profile,
}

#[derive(Args)]
struct SynthArgs {
    /// Fixture kind
    #[arg(long, value_enum)]
    kind: SynthKind,
    /// RNG seed (64-bit; default 0 with a notice)
    #[arg(long)]
    seed: Option<u64>,
    /// Single-phonon coupling λ/2π, Hz (echo)
    #[arg(long, default_value_t = 7.7)]
    lambda: f64,
    /// RMS motion amplitude, meters (echo)
    #[arg(long = "deltax-m", default_value_t = 1.86e-9)]
    deltax_m: f64,
    /// Mechanical frequency, Hz (echo/psd/ringdown)
    #[arg(long = "fr-hz", default_value_t = 1.4e6)]
    fr_hz: f64,
    /// Zero-point motion, meters (echo)
    #[arg(long = "zp-m", default_value_t = 1.146e-14)]
    zp_m: f64,
    /// Sample count (echo: τ points; ringdown: samples; profile: grid)
    #[arg(long)]
    points: Option<usize>,
    /// Noise scale (echo: additive contrast σ; psd/ringdown: fractional σ;
    /// dipole-map: Tesla σ)
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Linewidth κ/2π, Hz (psd)
    #[arg(long, default_value_t = 1.5)]
    kappa: f64,
    /// Peak area, m² (psd; default (1.86 nm)²)
    #[arg(long = "area-m2", default_value_t = 3.4596e-18)]
    area_m2: f64,
    /// Background offset, m²/Hz (psd)
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    /// Record half-span around f_r, Hz (psd)
    #[arg(long = "half-span-hz", default_value_t = 150.0)]
    half_span_hz: f64,
    /// Frequency step, Hz (psd)
    #[arg(long = "step-hz", default_value_t = 0.02)]
    step_hz: f64,
    /// Quality factor (ringdown)
    #[arg(long, default_value_t = 8.25e5)]
    q: f64,
    /// Initial amplitude, meters (ringdown)
    #[arg(long = "a0-m", default_value_t = 2e-9)]
    a0_m: f64,
    /// Record length, s (ringdown)
    #[arg(long = "tmax-s", default_value_t = 0.6)]
    tmax_s: f64,
    /// Peak electron detuning, Hz (profile)
    #[arg(long = "peak-hz", default_value_t = 9.8e6)]
    peak_hz: f64,
    /// Movement duration, s (profile)
    #[arg(long = "tmove-s", default_value_t = 1.7e-3)]
    tmove_s: f64,
    /// Dipole JSON file (dipole-map/esr-map; default: 20 G planted dipole)
    #[arg(long, value_name = "FILE")]
    dipole: Option<PathBuf>,
    /// NV axis direction "x,y,z" (dipole-map/esr-map)
    #[arg(long = "nv-axis", value_parser = parse_vec3, default_value = "0,0,1")]
    nv_axis: Vector3<f64>,
    /// Grid pixels along x (dipole-map/esr-map)
    #[arg(long, default_value_t = 11)]
    nx: usize,
    /// Grid pixels along y (dipole-map/esr-map)
    #[arg(long, default_value_t = 11)]
    ny: usize,
    /// Pixel pitch, meters (dipole-map/esr-map)
    #[arg(long = "pitch-m", default_value_t = 0.2e-6)]
    pitch_m: f64,
    /// Scan height, meters (dipole-map/esr-map)
    #[arg(long = "height-m", default_value_t = 1e-6)]
    height_m: f64,
    /// Electron gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-e")]
    gamma_e: Option<f64>,
    /// Nuclear gyromagnetic ratio, Hz/T
    #[arg(long = "gamma-n")]
    gamma_n: Option<f64>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn parse_vec3(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected \"x,y,z\", got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("bad component {part:?} in {s:?}"))?;
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

/// C-style scientific notation with a signed two-digit exponent
/// (1.0435e-7 → "1.04e-07").
fn fmt_sci(x: f64, precision: usize) -> String {
    let s = format!("{x:.precision$e}");
    match s.find('e') {
        Some(pos) => {
            let (mantissa, exp) = s.split_at(pos);
            let exp: i32 = exp[1..].parse().unwrap_or(0);
            let sign = if exp < 0 { '-' } else { '+' };
            format!("{mantissa}e{sign}{:02}", exp.abs())
        }
        None => s,
    }
}

fn out_writer(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(std::io::stdout()))),
    }
}

fn open_input(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut w = out_writer(out)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Io(format!("cannot serialize: {e}")))?;
    writeln!(w)?;
    Ok(())
}

fn load_dipole(path: &Path) -> Result<Dipole, CliError> {
    Ok(smio::read_dipole_json(open_input(path)?)?)
}

fn load_profile(
    path: &Path,
    cfg: &RunConfig,
    gamma_e: Option<f64>,
    gamma_n: Option<f64>,
) -> Result<register::DetuningProfile, CliError> {
    let ratio = cfg.gamma_n(gamma_n) / cfg.gamma_e(gamma_e);
    Ok(smio::read_profile(open_input(path)?, ratio)?)
}

fn nv_axis(v: Vector3<f64>) -> Result<NvAxis, CliError> {
    NvAxis::new(v).map_err(|e| CliError::Usage(e.to_string()))
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            // One-line diagnostic, per the exit-code contract.
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn configure_threads(cfg: &RunConfig, flag: Option<usize>) {
    let from_env = std::env::var("SPINMECH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env).or(cfg.threads) {
        // Ignore failure: the pool can only be built once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    configure_threads(&cfg, cli.threads);
    match cli.command {
        Group::Esr(cmd) => run_esr(cmd, &cfg),
        Group::Map(cmd) => run_map(cmd, &cfg),
        Group::Mech(cmd) => run_mech(cmd, &cfg),
        Group::Echo(cmd) => run_echo(cmd, &cfg),
        Group::Transport(cmd) => run_transport(cmd, &cfg),
        Group::Register(cmd) => run_register(cmd, &cfg),
        Group::Coop(cmd) => run_coop(cmd, &cfg),
        Group::Synth(args) => run_synth(args, &cfg),
    }
}

fn run_esr(cmd: EsrCmd, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        EsrCmd::Forward(a) => {
            let params = cfg.spin_params(a.d_hz, a.gamma_e);
            let pair = spinmodel::esr_frequencies(
                &params,
                &FieldComponents { bz_t: a.bz_tesla, bx_t: a.bx_tesla },
            );
            println!(
                "f_minus_hz={},f_plus_hz={}",
                smio::fmt_num(pair.f_minus_hz),
                smio::fmt_num(pair.f_plus_hz)
            );
        }
        EsrCmd::Invert(a) => {
            let params = cfg.spin_params(a.d_hz, a.gamma_e);
            let field = spinmodel::invert_field(
                &params,
                &EsrPair { f_minus_hz: a.fminus, f_plus_hz: a.fplus },
            )?;
            println!(
                "bz_tesla={},bx_tesla={}",
                smio::fmt_num(field.bz_t),
                smio::fmt_num(field.bx_t)
            );
        }
    }
    Ok(())
}

fn run_map(cmd: MapCmd, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        MapCmd::Invert(a) => {
            let map = smio::read_esr_map(open_input(&a.input)?)?;
            let params = cfg.spin_params(a.d_hz, a.gamma_e);
            let (field, report) = spinmodel::map_to_axial_field(&params, &map);
            eprintln!(
                "inverted {} pixels, {} failed",
                report.attempted, report.failed
            );
            smio::write_field_map(out_writer(a.out.as_deref())?, &field)?;
        }
        MapCmd::Interp(a) => {
            let map = smio::read_field_map(open_input(&a.input)?)?;
            let filled = spinmodel::interpolate_missing(&map)?;
            smio::write_field_map(out_writer(a.out.as_deref())?, &filled)?;
        }
        MapCmd::FitDipole(a) => {
            let map = smio::read_field_map(open_input(&a.input)?)?;
            let nv = nv_axis(a.nv_axis)?;
            let init = a.init.as_deref().map(load_dipole).transpose()?;
            let (fitted, report) =
                dipole::fit_dipole(&map, &nv, init.as_ref(), a.height_m, a.max_iter)?;
            #[derive(Serialize)]
            struct FitOutput {
                dipole: Dipole,
                report: dipole::FitReport,
            }
            write_json(a.out.as_deref(), &FitOutput { dipole: fitted, report })?;
        }
        MapCmd::Gradient(a) => {
            let d = load_dipole(&a.dipole)?;
            let nv = nv_axis(a.nv_axis)?;
            let geometry = ScanGeometry {
                nx: a.nx,
                ny: a.ny,
                pitch_m: a.pitch_m,
                height_m: a.height_m,
            };
            let motion = a.motion_axis.normalize();
            let (map, max_abs) = dipole::gradient_map(&d, &geometry, &nv, &motion)?;
            let mut w = out_writer(a.out.as_deref())?;
            writeln!(w, "# max_abs_grad_t_per_m={}", smio::fmt_num(max_abs))?;
            smio::write_gradient_map(w, &map)?;
        }
    }
    Ok(())
}

fn run_mech(cmd: MechCmd, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        MechCmd::Zpm(a) => {
            let zp = mech::zero_point_motion(cfg.m_eff(a.meff_kg), a.fr_hz);
            println!("z_p_m={}", smio::fmt_num(zp));
        }
        MechCmd::FitPsd(a) => {
            let psd = smio::read_psd(open_input(&a.input)?)?;
            let fit = mech::fit_lorentzian(&psd)?;
            write_json(a.out.as_deref(), &fit)?;
        }
        MechCmd::FitRingdown(a) => {
            let series = smio::read_ringdown(open_input(&a.input)?)?;
            let fit = mech::fit_ringdown(&series, a.fr_hz)?;
            write_json(a.out.as_deref(), &fit)?;
        }
        MechCmd::Rms(a) => {
            let psd = smio::read_psd(open_input(&a.input)?)?;
            let dx = mech::rms_from_psd(&psd, a.flo_hz, a.fhi_hz)?;
            println!("delta_x_m={}", smio::fmt_num(dx));
        }
    }
    Ok(())
}

fn coupling_of(common: &EchoArgsCommon) -> Result<Coupling, CliError> {
    Coupling::new(
        std::f64::consts::TAU * common.lambda,
        common.zp_m,
        std::f64::consts::TAU * common.fr_hz,
    )
    .map_err(|e| CliError::Usage(e.to_string()))
}

fn run_echo(cmd: EchoCmd, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        EchoCmd::Analytic(a) => {
            let c = coupling_of(&a.common)?;
            let t_max = a
                .tau_max_s
                .unwrap_or(2.0 * std::f64::consts::TAU / c.omega_r_rad_s);
            let dec = a
                .t2_s
                .map(|t2| DecoherenceModel::new(t2, a.chi_exponent))
                .transpose()?;
            let taus: Vec<f64> = (1..=a.points)
                .map(|i| i as f64 * t_max / a.points as f64)
                .collect();
            let contrast: Vec<f64> = taus
                .iter()
                .map(|&tau| match &dec {
                    Some(dec) => {
                        echo::signal_with_decoherence(&c, a.common.deltax_m, tau, dec, a.alpha)
                    }
                    None => a.alpha * echo::thermal_contrast(&c, a.common.deltax_m, tau),
                })
                .collect();
            let curve = echo::EchoCurve::new(taus, contrast)
                .map_err(|e| CliError::Numerics(e.to_string()))?;
            smio::write_echo_curve(out_writer(a.out.as_deref())?, &curve)?;
        }
        EchoCmd::Mc(a) => {
            let c = coupling_of(&a.common)?;
            let seed = cfg.seed(a.seed);
            let (estimate, std_error) =
                echo::mc_contrast(&c, a.common.deltax_m, a.tau_s, a.samples, seed);
            println!(
                "estimate={},std_error={}",
                smio::fmt_num(estimate),
                smio::fmt_num(std_error)
            );
        }
        EchoCmd::Fit(a) => {
            let curve = smio::read_echo_curve(open_input(&a.input)?)?;
            let fit = echo::fit_coupling(
                &curve,
                a.deltax_m,
                std::f64::consts::TAU * a.fr_hz,
                a.zp_m,
                a.fit_alpha,
            )?;
            #[derive(Serialize)]
            struct EchoFitOutput {
                lambda_over_2pi_hz: f64,
                sigma_hz: f64,
                alpha: f64,
                rms_residual: f64,
            }
            write_json(
                a.out.as_deref(),
                &EchoFitOutput {
                    lambda_over_2pi_hz: fit.lambda_over_2pi_hz,
                    sigma_hz: fit.sigma_hz,
                    alpha: fit.alpha,
                    rms_residual: fit.rms_residual,
                },
            )?;
        }
    }
    Ok(())
}

fn run_transport(cmd: TransportCmd, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        TransportCmd::Profile(a) => {
            let d = load_dipole(&a.dipole)?;
            let nv = nv_axis(a.nv_axis)?;
            let profile = register::build_movement_profile(
                &d,
                &nv,
                &a.start_m,
                &a.displacement_m,
                a.tmove_s,
                a.points,
                cfg.gamma_e(a.gamma_e),
                cfg.gamma_n(a.gamma_n),
            )?;
            smio::write_profile(out_writer(a.out.as_deref())?, &profile)?;
        }
        TransportCmd::PiTime(a) => {
            let profile = load_profile(&a.input, cfg, a.gamma_e, a.gamma_n)?;
            let t_pi = register::solve_pi_time(&profile)?;
            let residual = register::nuclear_phase(&profile, t_pi);
            println!(
                "t_pi_s={},residual_phase_rad={}",
                smio::fmt_num(t_pi),
                smio::fmt_num(residual)
            );
        }
        TransportCmd::Fringes(a) => {
            let profile = load_profile(&a.input, cfg, a.gamma_e, a.gamma_n)?;
            let t_move = profile.t_move_s();
            let grid: Vec<f64> = (0..a.points)
                .map(|i| t_move * i as f64 / (a.points - 1).max(1) as f64)
                .collect();
            let contrast = register::fringe_scan(&profile, &grid);
            smio::write_scan(out_writer(a.out.as_deref())?, &grid, &contrast)?;
        }
    }
    Ok(())
}

fn load_register_job(path: &Path) -> Result<RegisterJob, CliError> {
    let file = open_input(path)?;
    serde_json::from_reader(file)
        .map_err(|e| CliError::Parse(format!("bad sequence config {}: {e}", path.display())))
}

fn run_register(cmd: RegisterCmd, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        RegisterCmd::Simulate(a) => {
            let job = load_register_job(&a.config_json)?;
            if let Some(w) = job.sequence.timing_budget_warning() {
                eprintln!("warning: {w}");
            }
            let profile = a
                .profile
                .as_deref()
                .map(|p| load_profile(p, cfg, a.gamma_e, a.gamma_n))
                .transpose()?;
            let branches = job
                .c13_branches
                .unwrap_or_else(|| job.sequence.default_branches());
            let contrast =
                register::simulate_memory_sequence(&job.sequence, profile.as_ref(), &branches)?;
            println!("contrast={}", smio::fmt_num(contrast));
        }
        RegisterCmd::Ramsey(a) => {
            let job = load_register_job(&a.config_json)?;
            let profile = a
                .profile
                .as_deref()
                .map(|p| load_profile(p, cfg, a.gamma_e, a.gamma_n))
                .transpose()?;
            let branches = job
                .c13_branches
                .unwrap_or_else(|| job.sequence.default_branches());
            let taus: Vec<f64> = (0..a.points)
                .map(|i| i as f64 * a.tau_max_s / (a.points - 1).max(1) as f64)
                .collect();
            let contrast =
                register::ramsey_vs_tau(&job.sequence, profile.as_ref(), &branches, &taus)?;
            smio::write_scan(out_writer(a.out.as_deref())?, &taus, &contrast)?;
        }
    }
    Ok(())
}

fn run_coop(cmd: CoopCmd, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        CoopCmd::Compute(a) => {
            let inputs = coop::CoopInputs::new("cli", a.lambda, a.t2, a.nkappa)?;
            println!("{}", fmt_sci(coop::cooperativity(&inputs), 2));
        }
        CoopCmd::Table(a) => {
            let rows = match (&a.input, a.builtin) {
                (Some(path), false) => smio::read_coop_rows(open_input(path)?)?,
                (None, true) => coop::builtin_rows(),
                (None, false) => {
                    return Err(CliError::Usage(
                        "coop table needs --in FILE or --builtin".into(),
                    ))
                }
                (Some(_), true) => unreachable!("clap conflicts_with"),
            };
            let table = coop::table(&rows);
            smio::write_coop_table(out_writer(a.out.as_deref())?, &table)?;
        }
        CoopCmd::Project(a) => {
            let z_p = match (a.zp_m, a.meff_kg) {
                (Some(z), None) => ZpSpec::ExplicitM(z),
                (None, Some(m)) => ZpSpec::FromMassKg(m),
                (None, None) => ZpSpec::FromMassKg(cfg.m_eff(None)),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let scenario = Scenario {
                gradient_t_per_m: a.gradient,
                z_p,
                q_factor: a.q,
                f_r_hz: a.fr_hz,
                temperature_k: a.temp_k,
                t2_s: a.t2,
            };
            let report = coop::project_scenario(&scenario, cfg.gamma_e(a.gamma_e))?;
            write_json(a.out.as_deref(), &report)?;
        }
    }
    Ok(())
}

fn default_planted_dipole() -> Dipole {
    // 20 G axial field at 1 µm standoff below the default grid center.
    Dipole {
        moment_am2: Vector3::new(0.0, 0.0, 1e-14),
        position_m: Vector3::new(1e-6, 1e-6, 0.0),
    }
}

fn run_synth(a: SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let seed = |rc: &RunConfig| {
        if a.noise > 0.0 {
            rc.seed(a.seed)
        } else {
            a.seed.unwrap_or(0)
        }
    };
    match a.kind {
        SynthKind::Echo => {
            let seed = seed(cfg);
            let c = Coupling::new(
                std::f64::consts::TAU * a.lambda,
                a.zp_m,
                std::f64::consts::TAU * a.fr_hz,
            )
            .map_err(|e| CliError::Usage(e.to_string()))?;
            let curve = synth::echo_curve(&c, a.deltax_m, a.points.unwrap_or(40), a.noise, seed);
            smio::write_echo_curve(out_writer(a.out.as_deref())?, &curve)?;
        }
        SynthKind::DipoleMap => {
            let seed = seed(cfg);
            let d = match &a.dipole {
                Some(p) => load_dipole(p)?,
                None => default_planted_dipole(),
            };
            let nv = nv_axis(a.nv_axis)?;
            let geometry = ScanGeometry {
                nx: a.nx,
                ny: a.ny,
                pitch_m: a.pitch_m,
                height_m: a.height_m,
            };
            let map = synth::dipole_map(&d, &nv, &geometry, a.noise, seed);
            smio::write_field_map(out_writer(a.out.as_deref())?, &map)?;
        }
        SynthKind::EsrMap => {
            let d = match &a.dipole {
                Some(p) => load_dipole(p)?,
                None => default_planted_dipole(),
            };
            let nv = nv_axis(a.nv_axis)?;
            let geometry = ScanGeometry {
                nx: a.nx,
                ny: a.ny,
                pitch_m: a.pitch_m,
                height_m: a.height_m,
            };
            let params = cfg.spin_params(None, a.gamma_e);
            let map = synth::esr_map_from_dipole(&d, &nv, &geometry, &params);
            smio::write_esr_map(out_writer(a.out.as_deref())?, &map)?;
        }
        SynthKind::Psd => {
            let seed = seed(cfg);
            let psd = synth::lorentzian_psd(
                a.fr_hz,
                a.kappa,
                a.area_m2,
                a.offset,
                a.half_span_hz,
                a.step_hz,
                a.noise,
                seed,
            );
            smio::write_psd(out_writer(a.out.as_deref())?, &psd)?;
        }
        SynthKind::Ringdown => {
            let seed = seed(cfg);
            let series = synth::ringdown(
                a.q,
                a.fr_hz,
                a.a0_m,
                a.points.unwrap_or(200),
                a.tmax_s,
                a.noise,
                seed,
            );
            smio::write_ringdown(out_writer(a.out.as_deref())?, &series)?;
        }
        SynthKind::Profile => {
            let ratio = cfg.gamma_n(a.gamma_n) / cfg.gamma_e(a.gamma_e);
            let profile =
                synth::movement_profile(a.peak_hz, a.tmove_s, a.points.unwrap_or(257), ratio);
            smio::write_profile(out_writer(a.out.as_deref())?, &profile)?;
        }
    }
    Ok(())
}
