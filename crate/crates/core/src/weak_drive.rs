//! Weak-drive steady states and output-field observables.
//!
//! Amplitudes are solved order by order in the drive with the ground-state
//! amplitude pinned to one, and every observable is reported at its leading
//! order: the flux `|<g|a|psi>|^2` and the two-photon amplitude
//! `<g|a a|psi>`. Both transmittance and g2 are then independent of the
//! drive strength.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_basis, ExcitationBasis, StateVector};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{build_nonhermitian, drive_amplitudes, max_resonance, sector_block};
use crate::io::fmt_sig;
use crate::lattice::AtomicConfiguration;
use crate::params::ModelParams;
use crate::propagate::{DenseGenerator, TaylorPropagator};

/// Largest drive accepted by the weak-drive solvers.
pub const WEAK_DRIVE_LIMIT: f64 = 0.05;
/// Flux guard for normalized correlations, relative to `Omega^2`.
pub const FLUX_GUARD: f64 = 1e-14;
/// Default number of points of a spectrum grid.
pub const DEFAULT_GRID_POINTS: usize = 801;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Transmitted,
    Reflected,
}

fn check_weak(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.omega > WEAK_DRIVE_LIMIT {
        return invalid(format!(
            "weak-drive solver needs Omega <= {WEAK_DRIVE_LIMIT}, got {}",
            params.omega
        ));
    }
    Ok(())
}

/// Source term `-W x_prev` feeding sector `m` from the amplitudes of sector `m - 1`.
fn drive_source(basis: &ExcitationBasis, raise: &[C64], prev: &[C64], m: usize) -> DVector<C64> {
    let sector = basis.sector(m);
    let prev_start = basis.sector(m - 1).start;
    let mut src = DVector::zeros(sector.len());
    for (offset, &amp) in prev.iter().enumerate() {
        for (j, &w) in raise.iter().enumerate() {
            if let Some(row) = basis.raise(prev_start + offset, j) {
                src[row - sector.start] -= w * amp;
            }
        }
    }
    src
}

fn solve_sector(block: DMatrix<C64>, rhs: DVector<C64>, sector: usize) -> Result<DVector<C64>> {
    let x = block.lu().solve(&rhs).ok_or(Error::SingularSystem { sector })?;
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::SingularSystem { sector });
    }
    Ok(x)
}

/// Order-by-order steady state truncated at `max_excitations` (1 or 2),
/// normalized so that the ground-state amplitude is exactly one.
pub fn steady_state(
    config: &AtomicConfiguration,
    params: &ModelParams,
    max_excitations: usize,
) -> Result<StateVector> {
    check_weak(params)?;
    if !(1..=2).contains(&max_excitations) {
        return invalid(format!("weak-drive truncation must be 1 or 2, got {max_excitations}"));
    }
    let m_max = max_excitations.min(config.n_atoms());
    let basis = Arc::new(enumerate_basis(config.n_atoms(), m_max)?);
    let raise = drive_amplitudes(config, params);
    let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
    amps[0] = C64::new(1.0, 0.0);
    for m in 1..=m_max {
        let prev = amps[basis.sector(m - 1)].to_vec();
        let rhs = drive_source(&basis, &raise, &prev, m);
        let x = solve_sector(sector_block(config, params, &basis, m), rhs, m)?;
        amps[basis.sector(m)].copy_from_slice(x.as_slice());
    }
    StateVector::new(basis, amps)
}

/// Cross-check of [`steady_state`] by time evolution from the ground state.
///
/// Integrates the same order-by-order equations,
/// `i d/dt c_m = H_m c_m + W_(m,m-1) c_(m-1)` with `c_0 = 1`, up to `t_end`.
pub fn steady_state_by_evolution(
    config: &AtomicConfiguration,
    params: &ModelParams,
    max_excitations: usize,
    t_end: f64,
) -> Result<StateVector> {
    check_weak(params)?;
    if !(1..=2).contains(&max_excitations) {
        return invalid(format!("weak-drive truncation must be 1 or 2, got {max_excitations}"));
    }
    let m_max = max_excitations.min(config.n_atoms());
    let h = build_nonhermitian(config, params, m_max)?;
    let basis = h.basis.clone();
    let dim = basis.dim();
    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    for r in 1..dim {
        for c in 0..dim {
            // keep the diagonal blocks and the drive into the next sector only
            if basis.excitations(r) >= basis.excitations(c) {
                entries[r * dim + c] = h.get(r, c) * C64::new(0.0, -1.0);
            }
        }
    }
    let generator = DenseGenerator { dim, entries };
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    amps[0] = C64::new(1.0, 0.0);
    TaylorPropagator::new(&generator, 1e-15).advance(&mut amps, t_end)?;
    StateVector::new(basis, amps)
}

/// Output-field operator `a = alpha + sum_j beta_j s_ge^j` with the
/// propagation phase of the incident field factored out.
#[derive(Clone, Debug)]
pub struct OutputOperator {
    pub alpha: C64,
    pub beta: Vec<C64>,
}

pub fn output_operator(config: &AtomicConfiguration, params: &ModelParams, direction: Direction) -> OutputOperator {
    let pref = C64::new(0.0, params.gamma_1d / 2.0);
    match direction {
        Direction::Transmitted => {
            // evaluated at z = N, beyond the last atom
            let z = config.n_sites() as f64;
            let common = (params.ka_d - params.kl_d) * z;
            OutputOperator {
                alpha: C64::new(params.omega, 0.0),
                beta: config
                    .sites()
                    .iter()
                    .map(|&s| pref * C64::from_polar(1.0, common - params.ka_d * s as f64))
                    .collect(),
            }
        }
        Direction::Reflected => OutputOperator {
            alpha: C64::new(0.0, 0.0),
            beta: config.sites().iter().map(|&s| pref * C64::from_polar(1.0, params.ka_d * s as f64)).collect(),
        },
    }
}

impl OutputOperator {
    /// Leading-order amplitude `<g|a|psi>`.
    pub fn amplitude(&self, state: &StateVector) -> C64 {
        let c1 = state.sector(1);
        self.alpha * state.amplitudes[0] + self.beta.iter().zip(c1).map(|(b, c)| b * c).sum::<C64>()
    }

    /// `a |psi>` restricted to the ground and single-excitation sectors.
    fn apply_low(&self, state: &StateVector) -> (C64, Vec<C64>) {
        let basis = &state.basis;
        let n = basis.n_atoms();
        let c1 = state.sector(1);
        let mut phi1: Vec<C64> = c1.iter().map(|c| self.alpha * c).collect();
        if basis.max_excitations() >= 2 {
            let s1 = basis.sector(1).start;
            for idx in basis.sector(2) {
                let atoms = basis.excited_atoms(idx);
                let (a, b) = (atoms[0], atoms[1]);
                let c = state.amplitudes[idx];
                // lowering atom b leaves atom a excited and vice versa
                phi1[basis.index_of(1 << a).unwrap() - s1] += self.beta[b] * c;
                phi1[basis.index_of(1 << b).unwrap() - s1] += self.beta[a] * c;
            }
        }
        debug_assert_eq!(phi1.len(), n);
        (self.amplitude(state), phi1)
    }

    fn amplitude_of_low(&self, phi0: C64, phi1: &[C64]) -> C64 {
        self.alpha * phi0 + self.beta.iter().zip(phi1).map(|(b, c)| b * c).sum::<C64>()
    }

    /// Leading-order two-photon amplitude `<g|a a|psi>`.
    pub fn two_photon_amplitude(&self, state: &StateVector) -> C64 {
        let (phi0, phi1) = self.apply_low(state);
        self.amplitude_of_low(phi0, &phi1)
    }
}

/// Leading-order output amplitude and photon flux.
pub fn output_field_flux(
    state: &StateVector,
    config: &AtomicConfiguration,
    params: &ModelParams,
    direction: Direction,
) -> (C64, f64) {
    let amp = output_operator(config, params, direction).amplitude(state);
    (amp, amp.norm_sqr())
}

/// Linear transmittance and reflectance at the detuning in `params`.
pub fn linear_response(config: &AtomicConfiguration, params: &ModelParams) -> Result<(f64, f64)> {
    if config.n_atoms() == 0 {
        return Ok((1.0, 0.0));
    }
    let state = steady_state(config, params, 1)?;
    let norm = params.omega * params.omega;
    let (_, t) = output_field_flux(&state, config, params, Direction::Transmitted);
    let (_, r) = output_field_flux(&state, config, params, Direction::Reflected);
    Ok((t / norm, r / norm))
}

/// Detuning grid of `points` samples spanning `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Default grid `[-2, omega_max + 6]` with 801 points.
pub fn default_grid(config: &AtomicConfiguration, params: &ModelParams) -> Vec<f64> {
    let top = max_resonance(config, params.v, params.range).map(|r| r.omega_max).unwrap_or(0.0);
    linear_grid(-2.0, top.max(0.0) + 6.0, DEFAULT_GRID_POINTS)
}

/// Observable values on a detuning grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub detunings: Vec<f64>,
    pub transmittance: Vec<f64>,
    pub reflectance: Option<Vec<f64>>,
    pub g2_transmitted: Option<Vec<f64>>,
    pub g2_reflected: Option<Vec<f64>>,
    /// Standard deviation of the transmittance for sample-averaged spectra.
    pub transmittance_std: Option<Vec<f64>>,
    pub config_digest: Option<u64>,
    pub params: ModelParams,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    /// Writes `delta,T[,R,g2T,g2R]` with twelve significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["delta", "T"];
        let mut columns: Vec<&Vec<f64>> = vec![&self.transmittance];
        for (name, col) in [
            ("R", &self.reflectance),
            ("g2T", &self.g2_transmitted),
            ("g2R", &self.g2_reflected),
            ("T_std", &self.transmittance_std),
        ] {
            if let Some(c) = col {
                header.push(name);
                columns.push(c);
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, d) in self.detunings.iter().enumerate() {
            let mut row = fmt_sig(*d);
            for c in &columns {
                row.push(',');
                row.push_str(&fmt_sig(c[i]));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Linear transmission (and reflection) spectrum of one configuration.
pub fn transmission_spectrum(
    config: &AtomicConfiguration,
    params: &ModelParams,
    delta_grid: &[f64],
) -> Result<Spectrum> {
    check_weak(params)?;
    let mut t = Vec::with_capacity(delta_grid.len());
    let mut r = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let (tv, rv) = linear_response(config, &params.with_delta(delta))?;
        t.push(tv);
        r.push(rv);
    }
    Ok(Spectrum {
        detunings: delta_grid.to_vec(),
        transmittance: t,
        reflectance: Some(r),
        g2_transmitted: None,
        g2_reflected: None,
        transmittance_std: None,
        config_digest: Some(config.digest()),
        params: *params,
    })
}

fn guarded_flux(amp: C64, params: &ModelParams) -> Result<f64> {
    let flux = amp.norm_sqr();
    if !(flux >= FLUX_GUARD * params.omega * params.omega) || flux == 0.0 {
        return Err(Error::UndefinedCorrelation { flux });
    }
    Ok(flux)
}

/// Equal-time second-order correlation of the chosen output field.
pub fn g2_zero(config: &AtomicConfiguration, params: &ModelParams, direction: Direction) -> Result<f64> {
    let state = steady_state(config, params, 2)?;
    g2_zero_of_state(&state, config, params, direction)
}

pub fn g2_zero_of_state(
    state: &StateVector,
    config: &AtomicConfiguration,
    params: &ModelParams,
    direction: Direction,
) -> Result<f64> {
    let op = output_operator(config, params, direction);
    let flux = guarded_flux(op.amplitude(state), params)?;
    Ok(op.two_photon_amplitude(state).norm_sqr() / (flux * flux))
}

/// Delayed second-order correlation `g2(tau)` on a grid of delays.
///
/// After a detection the conditional state `a|psi>` relaxes under the
/// driven Hamiltonian; at leading order its ground amplitude stays fixed
/// and the single-excitation amplitudes obey
/// `i d/dt phi_1 = H_1 phi_1 + W_10 phi_0`, solved with a matrix exponential.
pub fn g2_tau(
    config: &AtomicConfiguration,
    params: &ModelParams,
    direction: Direction,
    tau_grid: &[f64],
) -> Result<Vec<f64>> {
    let state = steady_state(config, params, 2)?;
    let op = output_operator(config, params, direction);
    let amp = op.amplitude(&state);
    let flux = guarded_flux(amp, params)?;
    if config.n_atoms() == 0 {
        return Ok(vec![1.0; tau_grid.len()]);
    }
    let (phi0, phi1) = op.apply_low(&state);
    let c1 = DVector::from_column_slice(state.sector(1));
    let h1 = sector_block(config, params, &state.basis, 1);
    let deviation = DVector::from_vec(phi1) - &c1 * phi0;
    tau_grid
        .iter()
        .map(|&tau| {
            if tau < 0.0 {
                return invalid(format!("delay must be non-negative, got {tau}"));
            }
            let prop = (&h1 * C64::new(0.0, -tau)).exp();
            let phi = &c1 * phi0 + prop * &deviation;
            Ok(op.amplitude_of_low(phi0, phi.as_slice()).norm_sqr() / (flux * flux))
        })
        .collect()
}
