//! Disorder-averaged statistics over random atomic configurations.
//!
//! Sample `i` of a run with base seed `s` uses seed `s + i`. Samples are
//! evaluated in parallel and reduced in index order, so results do not
//! depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{overlap, overlap_with_vector};
use crate::error::{invalid, Result};
use crate::hamiltonian::{anharmonicity, bandgap_spectrum, max_resonance};
use crate::io::fmt_sig;
use crate::lattice::{sample_configuration, sample_poisson, AtomicConfiguration};
use crate::params::{ModelParams, Range};
use crate::weak_drive::{g2_zero, linear_response, transmission_spectrum, Direction, Spectrum};

/// Upper edges of the finite g2 histogram bins; the last bin is open.
pub const G2_BIN_WIDTH: f64 = 0.1;
pub const G2_FINITE_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges; the last edge may be infinite.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Edges `0, 0.1, ..., 2.0, inf`.
    pub fn g2_bins() -> Self {
        let mut edges: Vec<f64> = (0..=G2_FINITE_BINS).map(|k| k as f64 * G2_BIN_WIDTH).collect();
        edges.push(f64::INFINITY);
        let counts = vec![0; edges.len() - 1];
        Histogram { edges, counts }
    }

    pub fn add(&mut self, x: f64) {
        if let Some(k) = (0..self.counts.len()).find(|&k| x >= self.edges[k] && x < self.edges[k + 1]) {
            self.counts[k] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Writes `bin_lo,bin_hi,count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{c}", fmt_sig(self.edges[k]), fmt_sig(self.edges[k + 1]))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStatistics {
    pub mean: f64,
    /// Sample standard deviation (zero for a single sample).
    pub std: f64,
    pub count: usize,
    pub histogram: Option<Histogram>,
    pub values: Option<Vec<f64>>,
}

impl SampleStatistics {
    /// Welford accumulation in the given order.
    pub fn from_values(values: &[f64]) -> Self {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, &x) in values.iter().enumerate() {
            let d = x - mean;
            mean += d / (k + 1) as f64;
            m2 += d * (x - mean);
        }
        let count = values.len();
        let std = if count > 1 { (m2 / (count - 1) as f64).max(0.0).sqrt() } else { 0.0 };
        SampleStatistics { mean: if count == 0 { f64::NAN } else { mean }, std, count, histogram: None, values: None }
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Self {
        self.values = Some(values);
        self
    }

    /// Fraction of samples in histogram bin `k`.
    pub fn bin_fraction(&self, k: usize) -> Option<f64> {
        let h = self.histogram.as_ref()?;
        Some(h.counts[k] as f64 / self.count as f64)
    }
}

/// Writes `x,mean,std,count`.
pub fn write_stats_csv<W: Write>(mut w: W, xs: &[f64], stats: &[SampleStatistics]) -> std::io::Result<()> {
    writeln!(w, "x,mean,std,count")?;
    for (x, s) in xs.iter().zip(stats) {
        writeln!(w, "{},{},{},{}", fmt_sig(*x), fmt_sig(s.mean), fmt_sig(s.std), s.count)?;
    }
    Ok(())
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return invalid("at least one sample is required");
    }
    Ok(())
}

/// Runs `f` on samples `0..samples` in parallel, keeping index order.
fn per_sample<T, F>(samples: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..samples as u64).into_par_iter().map(|i| f(i)).collect()
}

fn sample(n_sites: u32, n: usize, seed: u64, index: u64) -> Result<AtomicConfiguration> {
    sample_configuration(n_sites, n, seed.wrapping_add(index))
}

fn reduce_spectra(params: &ModelParams, grid: &[f64], rows: Vec<Vec<f64>>) -> Spectrum {
    let mut mean = Vec::with_capacity(grid.len());
    let mut std = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(rows.len());
    for g in 0..grid.len() {
        column.clear();
        column.extend(rows.iter().map(|r| r[g]));
        let s = SampleStatistics::from_values(&column);
        mean.push(s.mean);
        std.push(s.std);
    }
    Spectrum {
        detunings: grid.to_vec(),
        transmittance: mean,
        reflectance: None,
        g2_transmitted: None,
        g2_reflected: None,
        transmittance_std: Some(std),
        config_digest: None,
        params: *params,
    }
}

/// Mean and standard deviation of the transmittance over configurations.
pub fn averaged_spectrum(
    params: &ModelParams,
    n: usize,
    n_sites: u32,
    samples: usize,
    seed: u64,
    delta_grid: &[f64],
) -> Result<Spectrum> {
    check_samples(samples)?;
    let rows = per_sample(samples, |i| {
        let c = sample(n_sites, n, seed, i)?;
        Ok(transmission_spectrum(&c, params, delta_grid)?.transmittance)
    })?;
    Ok(reduce_spectra(params, delta_grid, rows))
}

/// As [`averaged_spectrum`] with a Poisson-distributed atom number per sample.
pub fn poisson_averaged_spectrum(
    params: &ModelParams,
    mean_n: f64,
    n_sites: u32,
    samples: usize,
    seed: u64,
    delta_grid: &[f64],
) -> Result<Spectrum> {
    check_samples(samples)?;
    let rows = per_sample(samples, |i| {
        let s = seed.wrapping_add(i);
        let m = sample_poisson(mean_n, s)?.min(n_sites as u64) as usize;
        let c = if m == 0 { AtomicConfiguration::empty(n_sites) } else { sample_configuration(n_sites, m, s)? };
        Ok(transmission_spectrum(&c, params, delta_grid)?.transmittance)
    })?;
    Ok(reduce_spectra(params, delta_grid, rows))
}

/// Per-configuration quantity whose statistics are collected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    OmegaMax,
    /// Magnitude of the drive overlap with the top resonance.
    Overlap,
    Anharmonicity,
}

fn observe(c: &AtomicConfiguration, params: &ModelParams, range: Range, obs: Observable) -> Result<f64> {
    Ok(match obs {
        Observable::OmegaMax => max_resonance(c, params.v, range)?.omega_max,
        Observable::Overlap => {
            if range.is_infinite() {
                overlap(c, params.kl_d).norm()
            } else {
                let r = max_resonance(c, params.v, range)?;
                overlap_with_vector(c, params.kl_d, &r.vector).norm()
            }
        }
        Observable::Anharmonicity => anharmonicity(c, params.v, range)?,
    })
}

/// Statistics of `obs` at each `(n, range)` point, all from the same seeds.
pub fn observable_stats(
    params: &ModelParams,
    points: &[(usize, Range)],
    n_sites: u32,
    samples: usize,
    seed: u64,
    obs: Observable,
) -> Result<Vec<SampleStatistics>> {
    check_samples(samples)?;
    points
        .iter()
        .map(|&(n, range)| {
            let values = per_sample(samples, |i| observe(&sample(n_sites, n, seed, i)?, params, range, obs))?;
            Ok(SampleStatistics::from_values(&values))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaMaxStats {
    pub n_list: Vec<usize>,
    pub stats: Vec<SampleStatistics>,
    /// Least-squares slope of the mean against `n`.
    pub slope: f64,
}

pub fn omega_max_stats(
    params: &ModelParams,
    n_list: &[usize],
    n_sites: u32,
    samples: usize,
    seed: u64,
) -> Result<OmegaMaxStats> {
    let points: Vec<_> = n_list.iter().map(|&n| (n, params.range)).collect();
    let stats = observable_stats(params, &points, n_sites, samples, seed, Observable::OmegaMax)?;
    let xs: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    Ok(OmegaMaxStats { n_list: n_list.to_vec(), stats, slope: least_squares_slope(&xs, &ys) })
}

/// Slope of the least-squares line through `(x, y)`; NaN with fewer than two points.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Histograms of the reflected `g2(0)` when each configuration is driven at
/// its `m`-th highest single-excitation resonance, one per interaction strength.
pub fn g2_histogram(
    params: &ModelParams,
    n: usize,
    n_sites: u32,
    samples: usize,
    seed: u64,
    v_list: &[f64],
    m: usize,
) -> Result<Vec<SampleStatistics>> {
    check_samples(samples)?;
    if m == 0 || m > n {
        return invalid(format!("resonance index must be in 1..={n}, got {m}"));
    }
    v_list
        .iter()
        .map(|&v| {
            let p = ModelParams { v, ..*params };
            let values = per_sample(samples, |i| {
                let c = sample(n_sites, n, seed, i)?;
                let energy = bandgap_spectrum(&c, v, p.range).energies[m - 1];
                g2_zero(&c, &p.with_delta(energy), Direction::Reflected)
            })?;
            let mut hist = Histogram::g2_bins();
            values.iter().for_each(|&g| hist.add(g));
            let mut s = SampleStatistics::from_values(&values).with_values(values);
            s.histogram = Some(hist);
            Ok(s)
        })
        .collect()
}

/// Where the transmittance dip is read off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DipReference {
    /// Each configuration at its own `omega_max`.
    #[default]
    PerConfiguration,
    /// Every configuration at the sample mean of `omega_max`.
    EnsembleMean,
}

/// Transmittance at the top resonance, per atom number.
pub fn tdip_curve(
    params: &ModelParams,
    n_list: &[usize],
    n_sites: u32,
    samples: usize,
    seed: u64,
    reference: DipReference,
) -> Result<Vec<SampleStatistics>> {
    check_samples(samples)?;
    n_list
        .iter()
        .map(|&n| {
            let tops = per_sample(samples, |i| Ok(max_resonance(&sample(n_sites, n, seed, i)?, params.v, params.range)?.omega_max))?;
            let mean_top = SampleStatistics::from_values(&tops).mean;
            let values = per_sample(samples, |i| {
                let c = sample(n_sites, n, seed, i)?;
                let delta = match reference {
                    DipReference::PerConfiguration => tops[i as usize],
                    DipReference::EnsembleMean => mean_top,
                };
                Ok(linear_response(&c, &params.with_delta(delta))?.0)
            })?;
            Ok(SampleStatistics::from_values(&values))
        })
        .collect()
}
