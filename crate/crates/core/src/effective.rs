//! Closed-form estimates and reduced models of the collective resonance.

use num_complex::Complex64 as C64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{stream_rng, AtomicConfiguration, Stream};
use crate::master::{rabi_min_time, sweep_grid, P1Tracker, LindbladGenerator, Surface};
use crate::params::Range;
use crate::propagate::TaylorPropagator;
use crate::sparse::Csr;

const SERIES_TOL: f64 = 1e-13;
const TRACE_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VeffVariant {
    /// Lattice sum over the mean separation.
    #[default]
    ExactSum,
    /// Continuum approximation valid for `L >> d`.
    Asymptotic,
}

/// Effective interaction energy per atom of the collective resonance.
pub fn v_eff(v: f64, range: Range, n_sites: u32, variant: VeffVariant) -> f64 {
    let l = match range {
        Range::Infinite => return v,
        Range::Finite(l) => l,
    };
    let n = n_sites as f64;
    let tail = 1.0 - (-n / (2.0 * l)).exp();
    match variant {
        VeffVariant::ExactSum => 2.0 * v / n * tail / (1.0 / l).exp_m1(),
        VeffVariant::Asymptotic => 2.0 * l * v / n * tail,
    }
}

/// Estimated squared overlap of the drive with the collective resonance.
pub fn kappa(n: usize, n_sites: u32) -> f64 {
    let (n, big) = (n as f64, n_sites as f64);
    (big - n) / (std::f64::consts::SQRT_2 * n * big)
}

/// Overlap of the collective resonance of infinite range with the
/// normalized incident spin wave.
pub fn overlap(config: &AtomicConfiguration, kl_d: f64) -> C64 {
    let n = config.n_atoms();
    if n == 0 {
        return C64::new(0.0, 0.0);
    }
    let sum: C64 = (0..n)
        .map(|j| config.parity(j) * C64::from_polar(1.0, kl_d * config.sites()[j] as f64))
        .sum();
    sum / n as f64
}

/// Overlap of an explicit real eigenvector with the incident spin wave.
pub fn overlap_with_vector(config: &AtomicConfiguration, kl_d: f64, vector: &[f64]) -> C64 {
    let n = config.n_atoms();
    if n == 0 {
        return C64::new(0.0, 0.0);
    }
    let sum: C64 = vector
        .iter()
        .zip(config.sites())
        .map(|(phi, &s)| *phi * C64::from_polar(1.0, kl_d * s as f64))
        .sum();
    sum / (n as f64).sqrt()
}

/// Resonant transmittance through a single effective emitter with
/// waveguide coupling `n kappa Gamma_1D`.
pub fn t_dip_with_kappa(n: usize, kappa: f64, gamma_prime: f64, gamma_1d: f64) -> f64 {
    let total = gamma_prime + n as f64 * kappa * gamma_1d;
    if total == 0.0 {
        return 1.0;
    }
    (gamma_prime / total).powi(2)
}

pub fn t_dip_analytic(n: usize, n_sites: u32, gamma_prime: f64, gamma_1d: f64) -> f64 {
    t_dip_with_kappa(n, kappa(n, n_sites), gamma_prime, gamma_1d)
}

fn check_counts(n: usize, n_sites: u32) -> Result<()> {
    if n == 0 || n as u64 > n_sites as u64 || n_sites < 2 {
        return invalid(format!("need 1 <= n <= N and N >= 2, got n={n}, N={n_sites}"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveLinearParams {
    pub n: usize,
    pub n_sites: u32,
    pub v: f64,
    pub range: Range,
    pub gamma_prime: f64,
    pub gamma_1d: f64,
    pub omega: f64,
    pub delta_max: f64,
    /// Spread of the collective resonance across configurations.
    pub eta_sigma: f64,
    /// One draw of the resonance shift.
    pub eta: f64,
    pub variant: VeffVariant,
}

/// Weak-drive transmittance of the ensemble plus spin-wave model at the
/// shift `p.eta`.
pub fn linear_effective_transmittance(p: &EffectiveLinearParams) -> Result<f64> {
    check_counts(p.n, p.n_sites)?;
    let n = p.n as f64;
    let k = kappa(p.n, p.n_sites);
    let ve = v_eff(p.v, p.range, p.n_sites, p.variant);
    // level energy and width, drive coupling, and waveguide emission amplitude
    let levels = [
        (-(p.delta_max + n * ve), p.gamma_prime + n * p.gamma_1d, n.sqrt()),
        (-(p.delta_max - p.eta), p.gamma_prime + n * k * p.gamma_1d, (n * k).sqrt()),
    ];
    let mut t = C64::new(1.0, 0.0);
    for (energy, width, coupling) in levels {
        let c = coupling / C64::new(energy, -width / 2.0);
        if !c.re.is_finite() || !c.im.is_finite() {
            return Err(Error::SingularSystem { sector: 1 });
        }
        t += C64::new(0.0, p.gamma_1d / 2.0) * coupling * c;
    }
    Ok(t.norm_sqr())
}

/// Mean of [`linear_effective_transmittance`] over Gaussian resonance shifts.
pub fn linear_effective_average(p: &EffectiveLinearParams, draws: usize, seed: u64) -> Result<f64> {
    if p.eta_sigma < 0.0 || !p.eta_sigma.is_finite() {
        return invalid("eta_sigma must be finite and non-negative");
    }
    if p.eta_sigma == 0.0 || draws == 0 {
        return linear_effective_transmittance(&EffectiveLinearParams { eta: 0.0, ..*p });
    }
    let normal = Normal::new(0.0, p.eta_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Disorder);
    let mut acc = 0.0;
    for _ in 0..draws {
        let eta = normal.sample(&mut rng);
        acc += linear_effective_transmittance(&EffectiveLinearParams { eta, ..*p })?;
    }
    Ok(acc / draws as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveNonlinearParams {
    pub n: usize,
    pub n_sites: u32,
    pub v: f64,
    pub range: Range,
    pub gamma_prime: f64,
    pub gamma_1d: f64,
    pub omega: f64,
    pub delta_max: f64,
    pub variant: VeffVariant,
}

impl EffectiveNonlinearParams {
    pub fn kappa(&self) -> f64 {
        kappa(self.n, self.n_sites)
    }

    pub fn v_eff(&self) -> f64 {
        v_eff(self.v, self.range, self.n_sites, self.variant)
    }

    /// Drive of the spin wave, `sqrt(n kappa) Omega`.
    pub fn omega_n(&self) -> f64 {
        (self.n as f64 * self.kappa()).sqrt() * self.omega
    }

    /// Ensemble decay rate `Gamma' + n Gamma_1D`.
    pub fn ensemble_rate(&self) -> f64 {
        self.gamma_prime + self.n as f64 * self.gamma_1d
    }

    /// Spin-wave decay rate `Gamma' + n kappa Gamma_1D`.
    pub fn spin_wave_rate(&self) -> f64 {
        self.gamma_prime + self.n as f64 * self.kappa() * self.gamma_1d
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_delta_max(mut self, delta_max: f64) -> Self {
        self.delta_max = delta_max;
        self
    }

    fn validate(&self) -> Result<()> {
        check_counts(self.n, self.n_sites)?;
        for (name, x) in [("gamma_prime", self.gamma_prime), ("gamma_1d", self.gamma_1d), ("omega", self.omega)] {
            if !(x >= 0.0) || !x.is_finite() {
                return invalid(format!("{name} must be finite and non-negative"));
            }
        }
        if !self.v.is_finite() || !self.delta_max.is_finite() {
            return invalid("V and delta_max must be finite");
        }
        self.range.validate()
    }
}

/// Level indices of the nonlinear model: ground, ensemble ladder `E_1..E_n`,
/// then the spin wave `|1>` and `|2>`.
struct Levels {
    n: usize,
}

impl Levels {
    fn dim(&self) -> usize {
        self.n + 3
    }
    fn ladder(&self, m: usize) -> usize {
        m
    }
    fn one(&self) -> usize {
        self.n + 1
    }
    fn two(&self) -> usize {
        self.n + 2
    }
}

fn effective_generator(p: &EffectiveNonlinearParams) -> Result<(Levels, LindbladGenerator)> {
    p.validate()?;
    let lv = Levels { n: p.n };
    let n = p.n as f64;
    let ve = p.v_eff();
    let re = |x: f64| C64::new(x, 0.0);
    let mut h = Vec::new();
    for m in 1..=p.n {
        let mf = m as f64;
        h.push((lv.ladder(m), lv.ladder(m), re(-mf * (p.delta_max + n * ve))));
        let g = n.sqrt() * mf.sqrt() * p.omega;
        h.push((lv.ladder(m), lv.ladder(m - 1), re(g)));
        h.push((lv.ladder(m - 1), lv.ladder(m), re(g)));
    }
    h.push((lv.one(), lv.one(), re(p.delta_max)));
    h.push((lv.two(), lv.two(), re(2.0 * (p.delta_max + ve))));
    let on = p.omega_n();
    for (a, b, g) in [(lv.one(), 0, on), (lv.two(), lv.one(), std::f64::consts::SQRT_2 * on)] {
        h.push((a, b, re(g)));
        h.push((b, a, re(g)));
    }

    let mut jumps = Vec::new();
    let mut jump = |to: usize, from: usize, rate: f64| {
        if rate > 0.0 {
            jumps.push(Csr::from_triplets(lv.dim(), &[(to, from, re(rate.sqrt()))]));
            // -(i/2) L^dag L
            h.push((from, from, C64::new(0.0, -rate / 2.0)));
        }
    };
    for m in 1..=p.n {
        jump(lv.ladder(m - 1), lv.ladder(m), m as f64 * p.ensemble_rate());
    }
    jump(0, lv.one(), p.spin_wave_rate());
    jump(lv.one(), lv.two(), 2.0 * p.spin_wave_rate());
    let gen = LindbladGenerator::new(Csr::from_triplets(lv.dim(), &h), jumps)?;
    Ok((lv, gen))
}

/// Populations of the nonlinear effective model over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTrajectory {
    pub times: Vec<f64>,
    /// Single-excitation population: `E_1` plus the spin wave `|1>`.
    pub p1: Vec<f64>,
    /// Double-excitation population: `E_2` plus `|2>`.
    pub p2: Vec<f64>,
    pub spin_wave_1: Vec<f64>,
    pub spin_wave_2: Vec<f64>,
    /// `ensemble[i][m]` is the population of `E_m` at `times[i]`, `E_0 = g`.
    pub ensemble: Vec<Vec<f64>>,
}

struct EffectiveSolver {
    levels: Levels,
    generator: LindbladGenerator,
    rho: Vec<C64>,
    time: f64,
}

impl EffectiveSolver {
    fn new(p: &EffectiveNonlinearParams) -> Result<Self> {
        let (levels, generator) = effective_generator(p)?;
        let d = levels.dim();
        let mut rho = vec![C64::default(); d * d];
        rho[0] = C64::new(1.0, 0.0);
        Ok(EffectiveSolver { levels, generator, rho, time: 0.0 })
    }

    fn diag(&self, i: usize) -> f64 {
        self.rho[i * self.levels.dim() + i].re
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.time {
            return invalid("time grid must be nondecreasing");
        }
        TaylorPropagator::new(&self.generator, SERIES_TOL).advance(&mut self.rho, t - self.time)?;
        self.time = t;
        let trace: f64 = (0..self.levels.dim()).map(|i| self.diag(i)).sum();
        if (trace - 1.0).abs() > TRACE_DRIFT_LIMIT {
            return Err(Error::IntegrationFailure(format!("trace drifted to {trace}")));
        }
        Ok(())
    }

    fn p1(&self) -> f64 {
        let e1 = if self.levels.n >= 1 { self.diag(self.levels.ladder(1)) } else { 0.0 };
        e1 + self.diag(self.levels.one())
    }

    fn p2(&self) -> f64 {
        let e2 = if self.levels.n >= 2 { self.diag(self.levels.ladder(2)) } else { 0.0 };
        e2 + self.diag(self.levels.two())
    }
}

pub fn nonlinear_effective_evolve(p: &EffectiveNonlinearParams, t_grid: &[f64]) -> Result<EffectiveTrajectory> {
    let mut s = EffectiveSolver::new(p)?;
    let mut out = EffectiveTrajectory {
        times: t_grid.to_vec(),
        p1: vec![],
        p2: vec![],
        spin_wave_1: vec![],
        spin_wave_2: vec![],
        ensemble: vec![],
    };
    for &t in t_grid {
        s.advance_to(t)?;
        out.p1.push(s.p1());
        out.p2.push(s.p2());
        out.spin_wave_1.push(s.diag(s.levels.one()));
        out.spin_wave_2.push(s.diag(s.levels.two()));
        out.ensemble.push((0..=p.n).map(|m| s.diag(s.levels.ladder(m))).collect());
    }
    Ok(out)
}

/// Maximum over time of the effective single-excitation population, with
/// the same search rule as the full model.
pub fn effective_max_p1(p: &EffectiveNonlinearParams) -> Result<f64> {
    let (levels, generator) = effective_generator(p)?;
    let mut tracked = vec![levels.one()];
    if p.n >= 1 {
        tracked.push(levels.ladder(1));
    }
    P1Tracker::new(generator, tracked).maximum(rabi_min_time(p.omega_n(), p.delta_max))
}

pub fn effective_sweep(p: &EffectiveNonlinearParams, omega_grid: &[f64], delta_max_grid: &[f64]) -> Result<Surface> {
    sweep_grid(omega_grid, delta_max_grid, |o, d| effective_max_p1(&p.with_omega(o).with_delta_max(d)))
}

/// Maximum excited population of a driven, decaying two-level system
/// `H = Delta_max s_11 + Omega_n (s_g1 + s_1g)` starting in the ground state.
pub fn two_level_max_inversion(omega_n: f64, delta_max: f64, gamma_n: f64) -> Result<f64> {
    if !(omega_n >= 0.0 && gamma_n >= 0.0) || !delta_max.is_finite() {
        return invalid("two-level rates must be non-negative");
    }
    let re = |x: f64| C64::new(x, 0.0);
    let h = Csr::from_triplets(
        2,
        &[(1, 1, C64::new(delta_max, -gamma_n / 2.0)), (0, 1, re(omega_n)), (1, 0, re(omega_n))],
    );
    let jumps = if gamma_n > 0.0 { vec![Csr::from_triplets(2, &[(0, 1, re(gamma_n.sqrt()))])] } else { vec![] };
    let gen = LindbladGenerator::new(h, jumps)?;
    P1Tracker::new(gen, vec![1]).maximum(rabi_min_time(omega_n, delta_max))
}

/// Closed-form error estimates of single-excitation preparation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// Doubly excited spin-wave population relative to `p1`, `Omega_n^2 / 4 V^2`.
    pub p2_estimate: f64,
    /// Ensemble error at the single-photon level, `Omega^2 / n V^2`.
    pub ensemble_single: f64,
    /// Ensemble error at the two-photon level, `Omega^4 / 4 n^2 V^4`.
    pub ensemble_double: f64,
    /// `1 - max p1` of the lossy two-level system.
    pub two_level_error: f64,
    pub total: f64,
    pub warnings: Vec<String>,
}

pub fn error_budget(p: &EffectiveNonlinearParams) -> Result<ErrorBudget> {
    p.validate()?;
    let n = p.n as f64;
    let ve = p.v_eff();
    let mut warnings = Vec::new();
    if p.omega >= n.sqrt() * ve.abs() {
        warnings.push(format!(
            "Omega = {} is not small against sqrt(n) V_eff = {}",
            p.omega,
            n.sqrt() * ve.abs()
        ));
    }
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let on = p.omega_n();
    let p2_estimate = ratio(on * on, 4.0 * ve * ve);
    let ensemble_single = ratio(p.omega.powi(2), n * ve * ve);
    let ensemble_double = ratio(p.omega.powi(4), 4.0 * n * n * ve.powi(4));
    let two_level_error = 1.0 - two_level_max_inversion(on, p.delta_max, p.spin_wave_rate())?;
    Ok(ErrorBudget {
        p2_estimate,
        ensemble_single,
        ensemble_double,
        two_level_error,
        total: two_level_error + p2_estimate,
        warnings,
    })
}

/// Error budget at the drive and detuning minimizing the total error.
pub fn optimal_error_budget(
    p: &EffectiveNonlinearParams,
    omega_grid: &[f64],
    delta_max_grid: &[f64],
) -> Result<(f64, f64, ErrorBudget)> {
    let mut best: Option<(f64, f64, ErrorBudget)> = None;
    for &o in omega_grid {
        for &d in delta_max_grid {
            let b = error_budget(&p.with_omega(o).with_delta_max(d))?;
            if best.as_ref().map_or(true, |(_, _, x)| b.total < x.total) {
                best = Some((o, d, b));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty optimization grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::sample_configuration;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn base(n: usize, n_sites: u32, v: f64) -> EffectiveNonlinearParams {
        EffectiveNonlinearParams {
            n,
            n_sites,
            v,
            range: Range::Infinite,
            gamma_prime: 1.0,
            gamma_1d: 0.3,
            omega: 1.0,
            delta_max: 0.0,
            variant: VeffVariant::ExactSum,
        }
    }

    #[test]
    fn v_eff_limits() {
        assert_eq!(v_eff(3.0, Range::Infinite, 200, VeffVariant::ExactSum), 3.0);
        let a = v_eff(1.0, Range::Finite(50.0), 200, VeffVariant::Asymptotic);
        assert!((a - 0.5 * (1.0 - (-2.0f64).exp())).abs() < 1e-12);
        let e = v_eff(1.0, Range::Finite(5.0), 200, VeffVariant::ExactSum);
        let s = v_eff(1.0, Range::Finite(5.0), 200, VeffVariant::Asymptotic);
        assert!((e - s).abs() / e.max(s) < 0.1);
        for l in [2000.0, 5000.0, 1e5] {
            let e = v_eff(1.0, Range::Finite(l), 200, VeffVariant::ExactSum);
            let s = v_eff(1.0, Range::Finite(l), 200, VeffVariant::Asymptotic);
            assert!((e - s).abs() / e < 1e-3);
        }
        assert!((v_eff(1.0, Range::Finite(1e9), 200, VeffVariant::ExactSum) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn v_eff_matches_direct_lattice_sum() {
        // 2/N sum_{k=1}^{N/2} e^{-k/L}
        let (l, n_sites) = (7.0, 60u32);
        let direct: f64 = (1..=n_sites / 2).map(|k| (-(k as f64) / l).exp()).sum::<f64>() * 2.0 / n_sites as f64;
        let closed = v_eff(1.0, Range::Finite(l), n_sites, VeffVariant::ExactSum);
        assert!((direct - closed).abs() < 1e-12, "{direct} vs {closed}");
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(50, 50), 0.0);
        assert!((kappa(20, 200) - 180.0 / (2f64.sqrt() * 4000.0)).abs() < 1e-15);
        assert!((kappa(6, 50) - 0.103709).abs() < 1e-6);
    }

    #[test]
    fn overlap_examples() {
        let c = AtomicConfiguration::new(4, vec![0, 1]).unwrap();
        let o = overlap(&c, FRAC_PI_2);
        assert!((o - C64::new(0.5, -0.5)).norm() < 1e-15);
        for seed in 0..20 {
            let c = sample_configuration(100, 7, seed).unwrap();
            assert!((overlap(&c, PI).norm() - 1.0).abs() < 1e-12);
            assert!(overlap(&c, FRAC_PI_2).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn eigenvector_overlap_agrees_at_infinite_range() {
        let c = sample_configuration(80, 9, 4).unwrap();
        let res = crate::hamiltonian::max_resonance(&c, 2.0, Range::Infinite).unwrap();
        let a = overlap(&c, FRAC_PI_2).norm();
        let b = overlap_with_vector(&c, FRAC_PI_2, res.vector.as_slice()).norm();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn t_dip_values() {
        assert!((t_dip_with_kappa(1, 1.0, 1.0, 0.3) - 1.0 / 1.69).abs() < 1e-12);
        let expect = 1.0 / (1.0 + 0.3 * 20.0 * kappa(20, 200)).powi(2);
        assert!((t_dip_analytic(20, 200, 1.0, 0.3) - expect).abs() < 1e-12);
        assert!((expect - 0.7051).abs() < 5e-4);
        assert_eq!(t_dip_analytic(20, 200, 1.0, 0.0), 1.0);
    }

    fn linear(n: usize, v: f64) -> EffectiveLinearParams {
        EffectiveLinearParams {
            n,
            n_sites: 200,
            v,
            range: Range::Infinite,
            gamma_prime: 1.0,
            gamma_1d: 0.3,
            omega: 0.01,
            delta_max: 0.0,
            eta_sigma: 0.0,
            eta: 0.0,
            variant: VeffVariant::ExactSum,
        }
    }

    #[test]
    fn linear_model_reduces_to_spin_wave_dip() {
        let p = linear(20, 1e4);
        let t = linear_effective_transmittance(&p).unwrap();
        assert!((t - t_dip_analytic(20, 200, 1.0, 0.3)).abs() < 1e-4);
        let a = linear_effective_transmittance(&EffectiveLinearParams { omega: 1e-3, ..linear(8, 3.0) }).unwrap();
        let b = linear_effective_transmittance(&EffectiveLinearParams { omega: 1e-2, ..linear(8, 3.0) }).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn disorder_average_is_deterministic_and_shallower() {
        let p = EffectiveLinearParams { eta_sigma: 0.5, ..linear(10, 50.0) };
        let a = linear_effective_average(&p, 500, 3).unwrap();
        assert_eq!(a, linear_effective_average(&p, 500, 3).unwrap());
        assert!(a > linear_effective_transmittance(&linear(10, 50.0)).unwrap());
    }

    #[test]
    fn undriven_effective_model_stays_in_ground() {
        let p = base(6, 50, 10.0).with_omega(0.0);
        let tr = nonlinear_effective_evolve(&p, &[0.0, 1.0, 3.0]).unwrap();
        for (i, row) in tr.ensemble.iter().enumerate() {
            assert_eq!(row[0], 1.0);
            assert_eq!(tr.p1[i], 0.0);
        }
    }

    #[test]
    fn effective_trace_is_preserved() {
        let p = base(4, 50, 5.0).with_omega(3.0).with_delta_max(1.0);
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let tr = nonlinear_effective_evolve(&p, &grid).unwrap();
        for row in &tr.ensemble {
            assert!(row.iter().all(|x| *x > -1e-12));
        }
        for (i, _) in grid.iter().enumerate() {
            let total: f64 = tr.ensemble[i].iter().sum::<f64>() + tr.spin_wave_1[i] + tr.spin_wave_2[i];
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn double_excitation_is_suppressed() {
        for dmax in [0.0, 0.5, 1.5] {
            let p = EffectiveNonlinearParams { gamma_prime: 0.0, gamma_1d: 0.0, ..base(6, 50, 50.0) }
                .with_omega(5.0)
                .with_delta_max(dmax);
            let grid: Vec<f64> = (0..=200).map(|k| k as f64 * 0.005).collect();
            let tr = nonlinear_effective_evolve(&p, &grid).unwrap();
            let bound = (p.omega_n() / p.v).powi(2);
            for (a, b) in tr.p1.iter().zip(&tr.p2) {
                assert!(*b <= 4.0 * bound * a.max(bound), "p2 {b} p1 {a}");
            }
        }
    }

    /// Fixed-step fourth-order Runge-Kutta on the two-level Bloch equations.
    fn rk4_two_level(omega: f64, delta: f64, gamma: f64, t_end: f64, steps: usize) -> f64 {
        // state: (rho_gg, rho_11, Re rho_1g, Im rho_1g)
        let f = |y: [f64; 4]| -> [f64; 4] {
            let (gg, ee, x, yv) = (y[0], y[1], y[2], y[3]);
            let c = C64::new(x, yv);
            let d_ee = -gamma * ee - 2.0 * omega * yv;
            let d_c = C64::new(0.0, -delta) * c - C64::new(0.0, omega) * (gg - ee) - 0.5 * gamma * c;
            [-d_ee, d_ee, d_c.re, d_c.im]
        };
        let h = t_end / steps as f64;
        let mut y = [1.0, 0.0, 0.0, 0.0];
        let mut best: f64 = 0.0;
        for _ in 0..steps {
            let add = |a: [f64; 4], b: [f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
            let k1 = f(y);
            let k2 = f(add(y, k1, h / 2.0));
            let k3 = f(add(y, k2, h / 2.0));
            let k4 = f(add(y, k3, h));
            for i in 0..4 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            best = best.max(y[1]);
        }
        best
    }

    #[test]
    fn two_level_inversion_against_rk4() {
        let lossless = two_level_max_inversion(2.0, 0.0, 0.0).unwrap();
        assert!((lossless - 1.0).abs() < 1e-12, "{lossless}");
        let omega_n = (6.0 * kappa(6, 50)).sqrt() * 6.75;
        let gamma_n = 1.0 + 6.0 * kappa(6, 50) * 0.3;
        let ours = two_level_max_inversion(omega_n, 0.4, gamma_n).unwrap();
        let oracle = rk4_two_level(omega_n, 0.4, gamma_n, 3.0, 300_000);
        assert!((ours - oracle).abs() < 1e-6, "{ours} vs {oracle}");
        let weak = two_level_max_inversion(0.01, 0.0, 1.0).unwrap();
        let weaker = two_level_max_inversion(0.005, 0.0, 1.0).unwrap();
        assert!(weak < 1e-3 && weaker < weak);
    }

    #[test]
    fn error_budget_values() {
        let p = EffectiveNonlinearParams { gamma_prime: 0.0, gamma_1d: 0.0, ..base(6, 50, 50.0) }.with_omega(5.0);
        let b = error_budget(&p).unwrap();
        assert!((b.p2_estimate - 1.5556e-3).abs() < 1e-6);
        assert!(b.warnings.is_empty());
        let q = base(6, 50, 1e9).with_omega(1.0);
        let huge = error_budget(&q).unwrap();
        let two = 1.0 - two_level_max_inversion(q.omega_n(), 0.0, q.spin_wave_rate()).unwrap();
        assert!(huge.p2_estimate < 1e-15);
        assert!((huge.total - two).abs() < 1e-9);
    }
}
