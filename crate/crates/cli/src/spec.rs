//! Run specifications: flags, presets and validation.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::str::FromStr;

use bandgap_qed::effective::kappa;
use bandgap_qed::ensemble::{DipReference, Observable};
use bandgap_qed::weak_drive::WEAK_DRIVE_LIMIT;
use bandgap_qed::{AtomicConfiguration, ModelParams, Range};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    AvgSpectrum,
    PoissonSpectrum,
    G2,
    G2Hist,
    OmegaStats,
    Tdip,
    Rabi,
    Sweep,
    Effmodel,
    ErrorBudget,
    SearchConfig,
}

impl Command {
    pub fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_else(|| "run".into())
    }

    fn weak_drive(self) -> bool {
        matches!(
            self,
            Command::Spectrum
                | Command::AvgSpectrum
                | Command::PoissonSpectrum
                | Command::G2
                | Command::G2Hist
                | Command::Tdip
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum ObservableArg {
    OmegaMax,
    Overlap,
    Anharmonicity,
}

impl From<ObservableArg> for Observable {
    fn from(o: ObservableArg) -> Self {
        match o {
            ObservableArg::OmegaMax => Observable::OmegaMax,
            ObservableArg::Overlap => Observable::Overlap,
            ObservableArg::Anharmonicity => Observable::Anharmonicity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum ReferenceArg {
    PerConfiguration,
    EnsembleMean,
}

impl From<ReferenceArg> for DipReference {
    fn from(r: ReferenceArg) -> Self {
        match r {
            ReferenceArg::PerConfiguration => DipReference::PerConfiguration,
            ReferenceArg::EnsembleMean => DipReference::EnsembleMean,
        }
    }
}

/// Uniform grid `lo:hi:points`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        bandgap_qed::weak_drive::linear_grid(self.lo, self.hi, self.points)
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected lo:hi:points, got '{s}'"));
        }
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
        let (lo, hi) = (num(parts[0])?, num(parts[1])?);
        let points = parts[2].trim().parse::<usize>().map_err(|e| format!("'{}': {e}", parts[2]))?;
        if !lo.is_finite() || !hi.is_finite() || points == 0 || (points > 1 && hi < lo) {
            return Err(format!("invalid grid '{s}'"));
        }
        Ok(Grid { lo, hi, points })
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',').map(|x| x.trim().parse::<T>().map_err(|e| format!("'{x}': {e}"))).collect()
}

/// List of atom counts, also accepting ranges `a..b` and `a..b..step`.
fn parse_counts(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let parts: Vec<&str> = item.split("..").collect();
        let num = |x: &str| x.parse::<usize>().map_err(|e| format!("'{x}': {e}"));
        match parts.len() {
            1 => out.push(num(parts[0])?),
            2 | 3 => {
                let (a, b) = (num(parts[0])?, num(parts[1])?);
                let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
                if step == 0 {
                    return Err(format!("zero step in '{item}'"));
                }
                out.extend((a..=b).step_by(step));
            }
            _ => return Err(format!("cannot parse '{item}'")),
        }
    }
    Ok(out)
}

/// Flags of `run`; every value is optional so that presets can fill gaps.
#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// What to compute.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Number of atoms.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of lattice sites.
    #[arg(long = "N")]
    pub n_sites: Option<u32>,
    /// Bandgap interaction strength.
    #[arg(long = "V", allow_hyphen_values = true)]
    pub v: Option<f64>,
    /// Interaction range in sites, or "inf".
    #[arg(long = "L", allow_hyphen_values = true)]
    pub range: Option<Range>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_prime: Option<f64>,
    #[arg(long = "gamma-1d", allow_hyphen_values = true)]
    pub gamma_1d: Option<f64>,
    /// Probe-band phase per site.
    #[arg(long, allow_hyphen_values = true)]
    pub ka: Option<f64>,
    /// Drive phase per site.
    #[arg(long, allow_hyphen_values = true)]
    pub kl: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    /// Detuning from the bare atomic resonance.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Explicit occupied sites, comma separated (may be empty).
    #[arg(long)]
    pub sites: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Worker threads (default: BANDGAP_QED_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Detuning grid lo:hi:points.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<Grid>,
    /// Delay grid lo:hi:points for g2(tau).
    #[arg(long)]
    pub tau_grid: Option<Grid>,
    /// Atom counts, e.g. "1,2,5" or "2..40..4".
    #[arg(long)]
    pub n_list: Option<String>,
    /// Interaction ranges, comma separated ("inf" allowed).
    #[arg(long)]
    pub l_list: Option<String>,
    /// Interaction strengths, comma separated.
    #[arg(long)]
    pub v_list: Option<String>,
    /// Resonance indices counted from the top, e.g. "1" or "1..20".
    #[arg(long)]
    pub resonance: Option<String>,
    #[arg(long, value_enum)]
    pub observable: Option<ObservableArg>,
    #[arg(long, value_enum)]
    pub reference: Option<ReferenceArg>,
    /// Drive strengths lo:hi:points.
    #[arg(long)]
    pub omega_grid: Option<Grid>,
    /// Detunings from the top resonance lo:hi:points.
    #[arg(long, allow_hyphen_values = true)]
    pub dmax_grid: Option<Grid>,
    /// Detuning from the top resonance for single trajectories.
    #[arg(long, allow_hyphen_values = true)]
    pub delta_max: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub max_excitations: Option<usize>,
    /// Configurations tried by the overlap search.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Target overlap of the search (default sqrt(kappa_n)).
    #[arg(long)]
    pub target: Option<f64>,
    /// Mean atom number of Poisson-averaged spectra.
    #[arg(long)]
    pub mean_n: Option<f64>,
}

/// Fully resolved run description, serialized into the sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub command: Command,
    pub preset: Option<String>,
    pub params: ModelParams,
    pub n: usize,
    pub n_sites: u32,
    pub sites: Option<Vec<u32>>,
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub grid: Option<Grid>,
    pub tau_grid: Option<Grid>,
    pub n_list: Vec<usize>,
    pub l_list: Vec<Range>,
    pub v_list: Vec<f64>,
    pub resonances: Vec<usize>,
    pub observable: Observable,
    pub reference: DipReference,
    pub omega_grid: Grid,
    pub dmax_grid: Grid,
    pub delta_max: f64,
    pub t_end: f64,
    pub dt: f64,
    pub max_excitations: Option<usize>,
    pub trials: u64,
    pub target: Option<f64>,
    pub mean_n: f64,
}

impl RunSpec {
    pub fn target_overlap(&self) -> f64 {
        self.target.unwrap_or_else(|| kappa(self.n, self.n_sites).sqrt())
    }

    pub fn configuration(&self) -> Option<AtomicConfiguration> {
        self.sites.as_ref().map(|s| AtomicConfiguration::new(self.n_sites, s.clone()).expect("validated"))
    }
}

/// Parameter sets of the published figures.
pub fn preset(name: &str) -> Option<RunArgs> {
    let fig1 = RunArgs {
        n: Some(10),
        n_sites: Some(200),
        v: Some(4.0),
        range: Some(Range::Finite(100.0)),
        omega: Some(0.01),
        ..Default::default()
    };
    let rabi = RunArgs {
        n: Some(6),
        n_sites: Some(50),
        v: Some(10.0),
        range: Some(Range::Finite(1e6)),
        trials: Some(1_000_000),
        omega_grid: Some(Grid { lo: 5.0, hi: 8.5, points: 15 }),
        dmax_grid: Some(Grid { lo: -1.1, hi: 1.9, points: 13 }),
        ..Default::default()
    };
    let p = match name {
        "fig1d" => RunArgs { command: Some(Command::AvgSpectrum), samples: Some(1000), ..fig1 },
        "fig2a" => RunArgs {
            command: Some(Command::OmegaStats),
            observable: Some(ObservableArg::OmegaMax),
            n_list: Some("1..40".into()),
            samples: Some(1000),
            ..fig1
        },
        "fig2b" => RunArgs {
            command: Some(Command::OmegaStats),
            observable: Some(ObservableArg::OmegaMax),
            n_list: Some("1..40".into()),
            l_list: Some("10,20,50,100,200,500,1000,2000".into()),
            samples: Some(1000),
            ..fig1
        },
        "fig2c" => RunArgs {
            command: Some(Command::OmegaStats),
            observable: Some(ObservableArg::Overlap),
            n_list: Some("1..40".into()),
            range: Some(Range::Finite(1e6)),
            samples: Some(1000),
            ..fig1
        },
        "fig2d" => RunArgs {
            command: Some(Command::Tdip),
            n_list: Some("1..40".into()),
            range: Some(Range::Finite(1e6)),
            samples: Some(1000),
            ..fig1
        },
        "fig4" => RunArgs {
            command: Some(Command::G2Hist),
            n: Some(20),
            v_list: Some("1,2,3,4,5,6,7,8,9,10".into()),
            resonance: Some("1".into()),
            samples: Some(1000),
            ..fig1
        },
        "fig5b" => RunArgs { command: Some(Command::Sweep), ..rabi },
        "figA4" => RunArgs {
            command: Some(Command::PoissonSpectrum),
            mean_n: Some(4.0),
            range: Some(Range::Finite(200.0)),
            samples: Some(200),
            ..fig1
        },
        "figB1" => RunArgs {
            command: Some(Command::G2Hist),
            n: Some(20),
            resonance: Some("1..20".into()),
            samples: Some(1000),
            ..fig1
        },
        "figB2" => RunArgs {
            command: Some(Command::OmegaStats),
            observable: Some(ObservableArg::Anharmonicity),
            n: Some(20),
            l_list: Some("1,2,5,10,20,50,100,200,500,1000".into()),
            samples: Some(1000),
            ..fig1
        },
        _ => return None,
    };
    Some(p)
}

pub const PRESETS: [&str; 10] =
    ["fig1d", "fig2a", "fig2b", "fig2c", "fig2d", "fig4", "fig5b", "figA4", "figB1", "figB2"];

macro_rules! pick {
    ($args:expr, $preset:expr, $field:ident) => {
        $args.$field.clone().or_else(|| $preset.$field.clone())
    };
}

/// Merges explicit flags over the preset over defaults and validates.
pub fn resolve(args: RunArgs) -> Result<RunSpec, String> {
    let preset_args = match &args.preset {
        Some(name) => preset(name).ok_or_else(|| format!("--preset: unknown preset '{name}' (known: {})", PRESETS.join(", ")))?,
        None => RunArgs::default(),
    };
    let command = pick!(args, preset_args, command).ok_or("missing command")?;
    let d = ModelParams::default();
    let params = ModelParams {
        v: pick!(args, preset_args, v).unwrap_or(d.v),
        range: pick!(args, preset_args, range).unwrap_or(d.range),
        gamma_prime: pick!(args, preset_args, gamma_prime).unwrap_or(d.gamma_prime),
        gamma_1d: pick!(args, preset_args, gamma_1d).unwrap_or(d.gamma_1d),
        ka_d: pick!(args, preset_args, ka).unwrap_or(FRAC_PI_2),
        kl_d: pick!(args, preset_args, kl).unwrap_or(FRAC_PI_2),
        omega: pick!(args, preset_args, omega).unwrap_or(if command.weak_drive() { d.omega } else { 1.0 }),
        delta: pick!(args, preset_args, delta).unwrap_or(d.delta),
    };
    params.validate().map_err(|e| format!("model parameters: {e}"))?;

    let n_sites = pick!(args, preset_args, n_sites).unwrap_or(200);
    let sites = match pick!(args, preset_args, sites) {
        Some(s) => Some(parse_list::<u32>(&s).map_err(|e| format!("--sites: {e}"))?),
        None => None,
    };
    let n = match (&sites, pick!(args, preset_args, n)) {
        (Some(s), Some(n)) if n != s.len() => {
            return Err(format!("--n {n} disagrees with {} entries in --sites", s.len()));
        }
        (Some(s), _) => s.len(),
        (None, Some(n)) => n,
        (None, None) => 10,
    };
    if let Some(s) = &sites {
        AtomicConfiguration::new(n_sites, s.clone()).map_err(|e| format!("--sites: {e}"))?;
    }
    let needs_atoms = !(command == Command::Spectrum && sites.is_some())
        && !matches!(command, Command::PoissonSpectrum | Command::OmegaStats | Command::Tdip);
    if needs_atoms && n == 0 {
        return Err("--n: at least one atom is required (n >= 1)".into());
    }
    if n as u64 > n_sites as u64 {
        return Err(format!("--n {n} exceeds the number of sites --N {n_sites}"));
    }
    if command.weak_drive() && params.omega > WEAK_DRIVE_LIMIT {
        return Err(format!("--omega: weak-drive commands need omega <= {WEAK_DRIVE_LIMIT}"));
    }

    let n_list = match pick!(args, preset_args, n_list) {
        Some(s) => {
            let list = parse_counts(&s).map_err(|e| format!("--n-list: {e}"))?;
            if list.is_empty() || list.iter().any(|&k| k == 0 || k as u64 > n_sites as u64) {
                return Err(format!("--n-list: entries must lie in 1..={n_sites}"));
            }
            list
        }
        None => vec![n],
    };
    let l_list = match pick!(args, preset_args, l_list) {
        Some(s) => parse_list::<Range>(&s).map_err(|e| format!("--l-list: {e}"))?,
        None => vec![],
    };
    for l in &l_list {
        l.validate().map_err(|e| format!("--l-list: {e}"))?;
    }
    let v_list = match pick!(args, preset_args, v_list) {
        Some(s) => parse_list::<f64>(&s).map_err(|e| format!("--v-list: {e}"))?,
        None => vec![params.v],
    };
    if v_list.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err("--v-list: entries must be finite and non-negative".into());
    }
    let resonances = match pick!(args, preset_args, resonance) {
        Some(s) => parse_counts(&s).map_err(|e| format!("--resonance: {e}"))?,
        None => vec![1],
    };
    if resonances.iter().any(|&m| m == 0 || m > n.max(1)) {
        return Err(format!("--resonance: indices must lie in 1..={n}"));
    }
    let samples = pick!(args, preset_args, samples).unwrap_or(100);
    if samples == 0 {
        return Err("--samples: at least one sample is required".into());
    }
    let dt = pick!(args, preset_args, dt).unwrap_or(0.01);
    let t_end = pick!(args, preset_args, t_end).unwrap_or(5.0);
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err("--dt must be positive and --t-end non-negative".into());
    }
    let mean_n = pick!(args, preset_args, mean_n).unwrap_or(4.0);
    if !(mean_n > 0.0) {
        return Err("--mean-n must be positive".into());
    }
    let trials = pick!(args, preset_args, trials).unwrap_or(100_000);
    if trials == 0 {
        return Err("--trials must be at least 1".into());
    }
    let threads = pick!(args, preset_args, threads);
    if threads == Some(0) {
        return Err("--threads must be at least 1".into());
    }
    let max_excitations = pick!(args, preset_args, max_excitations);
    if let Some(m) = max_excitations {
        if m == 0 || m > n {
            return Err(format!("--max-excitations must lie in 1..={n}"));
        }
    }
    let out = pick!(args, preset_args, out).unwrap_or_else(|| PathBuf::from(format!("{}.csv", command.name())));

    Ok(RunSpec {
        command,
        preset: args.preset.clone(),
        params,
        n,
        n_sites,
        sites,
        samples,
        seed: pick!(args, preset_args, seed).unwrap_or(0),
        out,
        threads,
        grid: pick!(args, preset_args, grid),
        tau_grid: pick!(args, preset_args, tau_grid),
        n_list,
        l_list,
        v_list,
        resonances,
        observable: pick!(args, preset_args, observable).unwrap_or(ObservableArg::OmegaMax).into(),
        reference: pick!(args, preset_args, reference).unwrap_or(ReferenceArg::PerConfiguration).into(),
        omega_grid: pick!(args, preset_args, omega_grid).unwrap_or(Grid { lo: 5.0, hi: 8.5, points: 15 }),
        dmax_grid: pick!(args, preset_args, dmax_grid).unwrap_or(Grid { lo: -1.1, hi: 1.9, points: 13 }),
        delta_max: pick!(args, preset_args, delta_max).unwrap_or(0.0),
        t_end,
        dt,
        max_excitations,
        trials,
        target: pick!(args, preset_args, target),
        mean_n,
    })
}
