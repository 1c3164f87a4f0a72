//! Lattice configurations of trapped atoms and their seeded sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Independent random streams drawn from one base seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Configuration = 0,
    AtomNumber = 1,
    Disorder = 2,
}

/// The generator behind every stochastic operation: ChaCha8, keyed by the
/// seed and split into non-overlapping streams by purpose.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Ordered integer positions `z_j / d` of the atoms on a lattice of `N` sites.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ConfigurationRepr", into = "ConfigurationRepr")]
pub struct AtomicConfiguration {
    n_sites: u32,
    sites: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct ConfigurationRepr {
    #[serde(rename = "N")]
    n_sites: u32,
    n: usize,
    sites: Vec<u32>,
}

impl TryFrom<ConfigurationRepr> for AtomicConfiguration {
    type Error = Error;

    fn try_from(r: ConfigurationRepr) -> Result<Self> {
        if r.n != r.sites.len() {
            return invalid(format!("n = {} but {} sites listed", r.n, r.sites.len()));
        }
        AtomicConfiguration::new(r.n_sites, r.sites)
    }
}

impl From<AtomicConfiguration> for ConfigurationRepr {
    fn from(c: AtomicConfiguration) -> Self {
        ConfigurationRepr { n_sites: c.n_sites, n: c.sites.len(), sites: c.sites }
    }
}

impl AtomicConfiguration {
    /// Builds a configuration from site indices, which must be distinct and
    /// lie in `[0, n_sites)`. The indices are sorted.
    pub fn new(n_sites: u32, mut sites: Vec<u32>) -> Result<Self> {
        if n_sites == 0 {
            return invalid("lattice must have at least one site");
        }
        sites.sort_unstable();
        if let Some(&last) = sites.last() {
            if last >= n_sites {
                return invalid(format!("site {last} outside lattice of {n_sites} sites"));
            }
        }
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return invalid("sites must be distinct");
        }
        Ok(AtomicConfiguration { n_sites, sites })
    }

    /// A lattice with no atoms (the empty waveguide).
    pub fn empty(n_sites: u32) -> Self {
        AtomicConfiguration { n_sites: n_sites.max(1), sites: Vec::new() }
    }

    pub fn n_atoms(&self) -> usize {
        self.sites.len()
    }

    pub fn n_sites(&self) -> u32 {
        self.n_sites
    }

    pub fn sites(&self) -> &[u32] {
        &self.sites
    }

    /// Parity of `theta_j`, i.e. the sign `(-1)^theta_j`.
    pub fn parity(&self, j: usize) -> f64 {
        if self.sites[j] % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn separation(&self, j: usize, k: usize) -> u32 {
        self.sites[j].abs_diff(self.sites[k])
    }

    /// Stable 64-bit FNV-1a digest of the configuration, used to tag outputs.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u32| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.n_sites);
        for &s in &self.sites {
            eat(s);
        }
        h
    }
}

/// Uniformly samples `n` distinct sites out of `n_sites` by a partial
/// Fisher-Yates shuffle.
pub fn sample_configuration(n_sites: u32, n: usize, seed: u64) -> Result<AtomicConfiguration> {
    if n_sites == 0 {
        return invalid("lattice must have at least one site");
    }
    if n > n_sites as usize {
        return invalid(format!("cannot place {n} atoms on {n_sites} sites"));
    }
    let mut rng = stream_rng(seed, Stream::Configuration);
    let mut pool: Vec<u32> = (0..n_sites).collect();
    for i in 0..n {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(n);
    AtomicConfiguration::new(n_sites, pool)
}

/// Draws a Poisson variate with the given mean by sequential CDF inversion.
pub fn sample_poisson(mean: f64, seed: u64) -> Result<u64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return invalid(format!("Poisson mean must be positive, got {mean}"));
    }
    let u: f64 = stream_rng(seed, Stream::AtomNumber).gen();
    Ok(poisson_inverse_cdf(mean, u))
}

pub(crate) fn poisson_inverse_cdf(mean: f64, u: f64) -> u64 {
    // pmf carried in log space so that large means do not underflow exp(-mean)
    let ln_mean = mean.ln();
    let mut log_pmf = -mean;
    let mut cdf = 0.0;
    let mut k: u64 = 0;
    let tail_guard = (mean + 40.0 * mean.sqrt() + 40.0) as u64;
    loop {
        cdf += log_pmf.exp();
        if u < cdf || k >= tail_guard {
            return k;
        }
        k += 1;
        log_pmf += ln_mean - (k as f64).ln();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_filling_is_forced() {
        for seed in [0, 1, 99] {
            let c = sample_configuration(5, 5, seed).unwrap();
            assert_eq!(c.sites(), &[0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_sorted() {
        let a = sample_configuration(200, 10, 42).unwrap();
        let b = sample_configuration(200, 10, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_atoms(), 10);
        assert!(a.sites().windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a, sample_configuration(200, 10, 43).unwrap());
    }

    #[test]
    fn too_many_atoms_is_rejected() {
        assert!(matches!(sample_configuration(4, 5, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn per_site_occupancy_is_uniform() {
        let mut counts = vec![0u32; 200];
        let draws = 10_000;
        for seed in 0..draws {
            for &s in sample_configuration(200, 10, seed).unwrap().sites() {
                counts[s as usize] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.05).abs() < 0.01, "occupancy {freq}");
        }
    }

    #[test]
    fn every_pair_subset_appears() {
        let mut counts = std::collections::HashMap::new();
        let draws = 100_000u64;
        for seed in 0..draws {
            let c = sample_configuration(6, 2, seed).unwrap();
            *counts.entry(c.sites().to_vec()).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 15);
        for (_, c) in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq * 15.0 - 1.0).abs() < 0.2, "subset frequency {freq}");
        }
    }

    #[test]
    fn poisson_moments() {
        for (mean, mean_tol, var_tol) in [(4.0, 0.05, 0.1), (15.0, 0.1, f64::INFINITY)] {
            let draws: Vec<f64> =
                (0..100_000).map(|s| sample_poisson(mean, s).unwrap() as f64).collect();
            let m = draws.iter().sum::<f64>() / draws.len() as f64;
            let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
            assert!((m - mean).abs() < mean_tol, "mean {m}");
            assert!((v - mean).abs() < var_tol, "variance {v}");
        }
    }

    #[test]
    fn poisson_chi_square_goodness_of_fit() {
        let mean: f64 = 4.0;
        let draws = 100_000;
        let mut counts = vec![0f64; 12];
        for s in 0..draws {
            let k = sample_poisson(mean, s).unwrap() as usize;
            counts[k.min(11)] += 1.0;
        }
        let mut pmf = vec![0f64; 12];
        let mut p = (-mean).exp();
        for (k, slot) in pmf.iter_mut().enumerate().take(11) {
            if k > 0 {
                p *= mean / k as f64;
            }
            *slot = p;
        }
        pmf[11] = 1.0 - pmf[..11].iter().sum::<f64>();
        let chi2: f64 = counts
            .iter()
            .zip(&pmf)
            .map(|(o, p)| {
                let e = p * draws as f64;
                (o - e).powi(2) / e
            })
            .sum();
        // 11 degrees of freedom, upper 1% point
        assert!(chi2 < 24.725, "chi2 = {chi2}");
    }

    #[test]
    fn poisson_vanishing_mean() {
        for s in 0..100 {
            assert_eq!(sample_poisson(1e-9, s).unwrap(), 0);
        }
        assert!(sample_poisson(0.0, 0).is_err());
        assert!(sample_poisson(-1.0, 0).is_err());
    }

    #[test]
    fn json_round_trip_and_schema() {
        let c = AtomicConfiguration::new(200, vec![17, 3, 0]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"N":200,"n":3,"sites":[0,3,17]}"#);
        let back: AtomicConfiguration = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<AtomicConfiguration>(r#"{"N":5,"n":2,"sites":[1,1]}"#).is_err());
        assert!(serde_json::from_str::<AtomicConfiguration>(r#"{"N":5,"n":3,"sites":[1,2]}"#).is_err());
    }
}
