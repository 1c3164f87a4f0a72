//! Dispatch of a resolved run specification to the library.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bandgap_qed::effective::{effective_sweep, optimal_error_budget, v_eff, EffectiveNonlinearParams, VeffVariant};
use bandgap_qed::ensemble::{
    averaged_spectrum, g2_histogram, observable_stats, poisson_averaged_spectrum, tdip_curve, write_stats_csv,
    least_squares_slope, SampleStatistics,
};
use bandgap_qed::hamiltonian::max_resonance;
use bandgap_qed::io::{fmt_sig, write_table};
use bandgap_qed::lattice::sample_configuration;
use bandgap_qed::master::{default_truncation, evolve_master, search_configuration, sweep_p1};
use bandgap_qed::weak_drive::{default_grid, g2_tau, g2_zero, linear_grid, transmission_spectrum, DEFAULT_GRID_POINTS};
use bandgap_qed::{AtomicConfiguration, Direction, Error, Range};
use serde::Serialize;
use serde_json::{json, Value};

use crate::spec::{Command, RunSpec};

/// Failure of a run, mapped onto the process exit status.
#[derive(Debug)]
pub enum RunError {
    Module(Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Module(_) => 2,
            RunError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Module(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(io) => RunError::Io(io),
            other => RunError::Module(other),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Serialize)]
struct Sidecar<'a> {
    schema: &'static str,
    version: &'static str,
    spec: &'a RunSpec,
    wall_time_s: f64,
    outputs: Vec<PathBuf>,
    extra: Value,
}

struct Outputs {
    files: Vec<PathBuf>,
    extra: Value,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new(), extra: Value::Null }
    }

    fn create(&mut self, path: PathBuf) -> RunResult<BufWriter<File>> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }
}

/// Runs the command, writes its CSV files and the JSON sidecar.
pub fn execute(spec: &RunSpec) -> RunResult<Vec<PathBuf>> {
    let start = Instant::now();
    let mut out = Outputs::new();
    dispatch(spec, &mut out)?;
    let sidecar_path = spec.out.with_extension("json");
    let sidecar = Sidecar {
        schema: "1",
        version: env!("CARGO_PKG_VERSION"),
        spec,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
        extra: out.extra,
    };
    let mut w = BufWriter::new(File::create(&sidecar_path)?);
    serde_json::to_writer_pretty(&mut w, &sidecar).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    out.files.push(sidecar_path);
    Ok(out.files)
}

/// Reads the run specification back from a sidecar.
pub fn read_sidecar(path: &Path) -> std::result::Result<RunSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    serde_json::from_value(v["spec"].clone()).map_err(|e| e.to_string())
}

fn finish(w: BufWriter<File>) -> RunResult<()> {
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(())
}

fn single_configuration(spec: &RunSpec) -> RunResult<AtomicConfiguration> {
    match spec.configuration() {
        Some(c) => Ok(c),
        None => Ok(sample_configuration(spec.n_sites, spec.n, spec.seed)?),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

fn or_nan(r: bandgap_qed::Result<f64>) -> RunResult<f64> {
    match r {
        Ok(x) => Ok(x),
        Err(Error::UndefinedCorrelation { .. }) => Ok(f64::NAN),
        Err(e) => Err(e.into()),
    }
}

fn range_value(r: Range) -> f64 {
    match r {
        Range::Finite(l) => l,
        Range::Infinite => f64::INFINITY,
    }
}

fn effective_params(spec: &RunSpec, n: usize, v: f64) -> EffectiveNonlinearParams {
    EffectiveNonlinearParams {
        n,
        n_sites: spec.n_sites,
        v,
        range: spec.params.range,
        gamma_prime: spec.params.gamma_prime,
        gamma_1d: spec.params.gamma_1d,
        omega: spec.params.omega,
        delta_max: spec.delta_max,
        variant: VeffVariant::ExactSum,
    }
}

fn dispatch(spec: &RunSpec, out: &mut Outputs) -> RunResult<()> {
    let p = &spec.params;
    match spec.command {
        Command::Spectrum => {
            let c = single_configuration(spec)?;
            let grid = spec.grid.map(|g| g.values()).unwrap_or_else(|| default_grid(&c, p));
            let s = transmission_spectrum(&c, p, &grid)?;
            let mut w = out.create(spec.out.clone())?;
            s.write_csv(&mut w)?;
            finish(w)?;
            out.extra = json!({ "sites": c.sites(), "config_digest": c.digest() });
        }
        Command::G2 => {
            let c = single_configuration(spec)?;
            let mut w = out.create(spec.out.clone())?;
            if let Some(tau) = spec.tau_grid {
                let taus = tau.values();
                let gt = g2_tau(&c, p, Direction::Transmitted, &taus);
                let gr = g2_tau(&c, p, Direction::Reflected, &taus);
                let column = |g: bandgap_qed::Result<Vec<f64>>| -> RunResult<Vec<f64>> {
                    match g {
                        Ok(v) => Ok(v),
                        Err(Error::UndefinedCorrelation { .. }) => Ok(vec![f64::NAN; taus.len()]),
                        Err(e) => Err(e.into()),
                    }
                };
                let (gt, gr) = (column(gt)?, column(gr)?);
                let rows: Vec<Vec<f64>> = (0..taus.len()).map(|i| vec![taus[i], gt[i], gr[i]]).collect();
                write_table(&mut w, &["tau", "g2T", "g2R"], &rows)?;
            } else {
                let grid = spec.grid.map(|g| g.values()).unwrap_or_else(|| default_grid(&c, p));
                let mut s = transmission_spectrum(&c, p, &grid)?;
                let mut gt = Vec::with_capacity(grid.len());
                let mut gr = Vec::with_capacity(grid.len());
                for &d in &grid {
                    gt.push(or_nan(g2_zero(&c, &p.with_delta(d), Direction::Transmitted))?);
                    gr.push(or_nan(g2_zero(&c, &p.with_delta(d), Direction::Reflected))?);
                }
                s.g2_transmitted = Some(gt);
                s.g2_reflected = Some(gr);
                s.write_csv(&mut w)?;
            }
            finish(w)?;
            out.extra = json!({ "sites": c.sites(), "config_digest": c.digest() });
        }
        Command::AvgSpectrum | Command::PoissonSpectrum => {
            let top = if spec.command == Command::AvgSpectrum { spec.n as f64 } else { 3.0 * spec.mean_n };
            let grid = spec
                .grid
                .map(|g| g.values())
                .unwrap_or_else(|| linear_grid(-2.0, top * p.v + 6.0, DEFAULT_GRID_POINTS));
            let s = if spec.command == Command::AvgSpectrum {
                averaged_spectrum(p, spec.n, spec.n_sites, spec.samples, spec.seed, &grid)?
            } else {
                poisson_averaged_spectrum(p, spec.mean_n, spec.n_sites, spec.samples, spec.seed, &grid)?
            };
            let mut w = out.create(spec.out.clone())?;
            s.write_csv(&mut w)?;
            finish(w)?;
        }
        Command::G2Hist => {
            let several = spec.v_list.len() * spec.resonances.len() > 1;
            let mut summary = Vec::new();
            for &m in &spec.resonances {
                let stats = g2_histogram(p, spec.n, spec.n_sites, spec.samples, spec.seed, &spec.v_list, m)?;
                for (&v, s) in spec.v_list.iter().zip(&stats) {
                    let path = if several {
                        with_suffix(&spec.out, &format!("V{}_m{m}", fmt_sig(v)))
                    } else {
                        spec.out.clone()
                    };
                    let mut w = out.create(path)?;
                    s.histogram.as_ref().expect("histogram is always filled").write_csv(&mut w)?;
                    finish(w)?;
                    summary.push(json!({
                        "V": v,
                        "resonance": m,
                        "mean": s.mean,
                        "std": s.std,
                        "fraction_below_0.1": s.bin_fraction(0),
                    }));
                }
            }
            out.extra = json!({ "histograms": summary });
        }
        Command::OmegaStats => omega_stats(spec, out)?,
        Command::Tdip => {
            let stats = tdip_curve(p, &spec.n_list, spec.n_sites, spec.samples, spec.seed, spec.reference)?;
            let xs: Vec<f64> = spec.n_list.iter().map(|&n| n as f64).collect();
            let mut w = out.create(spec.out.clone())?;
            write_stats_csv(&mut w, &xs, &stats)?;
            finish(w)?;
        }
        Command::Rabi => {
            let c = single_configuration(spec)?;
            let top = max_resonance(&c, p.v, p.range)?.omega_max;
            let params = p.with_delta(top + spec.delta_max);
            let steps = (spec.t_end / spec.dt).round() as usize;
            let times: Vec<f64> = (0..=steps).map(|i| i as f64 * spec.dt).collect();
            let m = spec.max_excitations.unwrap_or_else(|| default_truncation(c.n_atoms()));
            let traj = evolve_master(&c, &params, &times, m)?;
            let mut w = out.create(spec.out.clone())?;
            traj.write_csv(&mut w)?;
            finish(w)?;
            out.extra = json!({ "sites": c.sites(), "omega_max": top, "delta": params.delta, "max_excitations": m });
        }
        Command::Sweep => {
            let (c, search) = match spec.configuration() {
                Some(c) => (c, Value::Null),
                None => {
                    let r = search_configuration(
                        spec.n,
                        spec.n_sites,
                        spec.target_overlap(),
                        spec.trials,
                        spec.seed,
                        p.kl_d,
                    )?;
                    let info = serde_json::to_value(&r).map_err(std::io::Error::from)?;
                    (r.config, info)
                }
            };
            let surface = sweep_p1(&c, p, &spec.omega_grid.values(), &spec.dmax_grid.values())?;
            let mut w = out.create(spec.out.clone())?;
            surface.write_csv(&mut w)?;
            finish(w)?;
            let (o, d) = surface.argmax_point();
            out.extra = json!({
                "sites": c.sites(),
                "search": search,
                "max_p1": surface.max(),
                "argmax": { "omega": o, "delta_max": d },
            });
        }
        Command::Effmodel => {
            let e = effective_params(spec, spec.n, p.v);
            let surface = effective_sweep(&e, &spec.omega_grid.values(), &spec.dmax_grid.values())?;
            let mut w = out.create(spec.out.clone())?;
            surface.write_csv(&mut w)?;
            finish(w)?;
            let (o, d) = surface.argmax_point();
            out.extra = json!({
                "v_eff": e.v_eff(),
                "kappa": e.kappa(),
                "max_p1": surface.max(),
                "argmax": { "omega": o, "delta_max": d },
            });
        }
        Command::ErrorBudget => {
            let mut rows = Vec::new();
            let mut warnings = Vec::new();
            for &v in &spec.v_list {
                let e = effective_params(spec, spec.n, v);
                let (o, d, b) = optimal_error_budget(&e, &spec.omega_grid.values(), &spec.dmax_grid.values())?;
                rows.push(vec![v, e.v_eff(), o, d, b.p2_estimate, b.ensemble_single, b.ensemble_double, b.two_level_error, b.total]);
                warnings.extend(b.warnings.iter().map(|s| format!("V = {v}: {s}")));
            }
            let mut w = out.create(spec.out.clone())?;
            write_table(
                &mut w,
                &["V", "v_eff", "omega", "delta_max", "p2_estimate", "ensemble_single", "ensemble_double", "two_level_error", "total"],
                &rows,
            )?;
            finish(w)?;
            for msg in &warnings {
                eprintln!("warning: {msg}");
            }
            out.extra = json!({ "warnings": warnings });
        }
        Command::SearchConfig => {
            let r = search_configuration(spec.n, spec.n_sites, spec.target_overlap(), spec.trials, spec.seed, p.kl_d)?;
            let mut w = out.create(spec.out.clone())?;
            writeln!(w, "n,N,target,overlap,distance,trial,sites")?;
            let sites: Vec<String> = r.config.sites().iter().map(|s| s.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                spec.n,
                spec.n_sites,
                fmt_sig(spec.target_overlap()),
                fmt_sig(r.overlap),
                fmt_sig(r.distance),
                r.trial,
                sites.join(" ")
            )?;
            finish(w)?;
            out.extra = serde_json::to_value(&r).map_err(std::io::Error::from)?;
        }
    }
    Ok(())
}

fn omega_stats(spec: &RunSpec, out: &mut Outputs) -> RunResult<()> {
    let p = &spec.params;
    if !spec.l_list.is_empty() && spec.n_list.len() > 1 {
        // Slope of the mean top resonance against n, one row per range.
        let mut rows = Vec::new();
        for &l in &spec.l_list {
            let points: Vec<_> = spec.n_list.iter().map(|&n| (n, l)).collect();
            let stats = observable_stats(p, &points, spec.n_sites, spec.samples, spec.seed, spec.observable)?;
            let xs: Vec<f64> = spec.n_list.iter().map(|&n| n as f64).collect();
            let ys: Vec<f64> = stats.iter().map(|s| s.mean).collect();
            let slope = least_squares_slope(&xs, &ys);
            let ve = v_eff(p.v, l, spec.n_sites, VeffVariant::ExactSum);
            rows.push(vec![range_value(l), slope, ve, (slope - ve) / ve]);
        }
        let mut w = out.create(spec.out.clone())?;
        write_table(&mut w, &["L", "slope", "v_eff", "epsilon"], &rows)?;
        finish(w)?;
        return Ok(());
    }
    let (xs, points): (Vec<f64>, Vec<(usize, Range)>) = if spec.l_list.is_empty() {
        spec.n_list.iter().map(|&n| (n as f64, (n, p.range))).unzip()
    } else {
        spec.l_list.iter().map(|&l| (range_value(l), (spec.n, l))).unzip()
    };
    let stats: Vec<SampleStatistics> = observable_stats(p, &points, spec.n_sites, spec.samples, spec.seed, spec.observable)?;
    let mut w = out.create(spec.out.clone())?;
    write_stats_csv(&mut w, &xs, &stats)?;
    finish(w)?;
    if spec.l_list.is_empty() && xs.len() > 1 {
        let ys: Vec<f64> = stats.iter().map(|s| s.mean).collect();
        out.extra = json!({
            "slope": least_squares_slope(&xs, &ys),
            "v_eff": v_eff(p.v, p.range, spec.n_sites, VeffVariant::ExactSum),
        });
    }
    Ok(())
}
