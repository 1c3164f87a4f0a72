//! Lindblad evolution of the atomic density matrix under strong driving.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::ExcitationBasis;
use crate::effective::{overlap, overlap_with_vector};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{build_nonhermitian, lindblad_decomposition, max_resonance};
use crate::io::fmt_sig;
use crate::lattice::{sample_configuration, AtomicConfiguration};
use crate::params::ModelParams;
use crate::propagate::{LinearGenerator, TaylorPropagator};
use crate::sparse::Csr;

/// Largest basis dimension accepted for density-matrix evolution.
pub const MAX_DENSITY_DIM: usize = 300;
/// Largest basis dimension for the direct steady-state solve.
pub const MAX_STEADY_DIM: usize = 32;
/// Output spacing of trajectories used to locate the p1 maximum.
pub const P1_GRID_SPACING: f64 = 0.01;
/// Evolution horizon of the p1 maximum search.
pub const P1_HORIZON: f64 = 20.0;
/// Relative drop below the running maximum that ends the p1 search.
pub const P1_DROP: f64 = 0.02;

const TRACE_DRIFT_LIMIT: f64 = 1e-6;
const HERMITICITY_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-10;
const SERIES_TOL: f64 = 1e-13;

/// Full Hilbert space up to eight atoms, two excitations beyond.
pub fn default_truncation(n_atoms: usize) -> usize {
    if n_atoms <= 8 {
        n_atoms
    } else {
        2
    }
}

fn spectral_bound(a: &Csr) -> f64 {
    (a.norm1() * a.norm_inf()).sqrt()
}

/// `d rho/dt = -i (H rho - rho H^dag) + sum_k L_k rho L_k^dag` acting on
/// row-major density matrices, with `H` non-Hermitian.
pub struct LindbladGenerator {
    dim: usize,
    h: Csr,
    jumps: Vec<Csr>,
    scratch: std::cell::RefCell<(Vec<C64>, Vec<C64>)>,
}

impl LindbladGenerator {
    pub fn new(h: Csr, jumps: Vec<Csr>) -> Result<Self> {
        let dim = h.dim();
        if jumps.iter().any(|l| l.dim() != dim) {
            return invalid("jump operator dimension differs from the Hamiltonian");
        }
        let buf = vec![C64::default(); dim * dim];
        Ok(LindbladGenerator { dim, h, jumps, scratch: std::cell::RefCell::new((buf.clone(), buf)) })
    }

    /// Generator of the full model on a truncated basis.
    pub fn for_model(config: &AtomicConfiguration, params: &ModelParams, max_excitations: usize) -> Result<Self> {
        let h = build_nonhermitian(config, params, max_excitations)?;
        if h.dim() > MAX_DENSITY_DIM {
            return Err(Error::Capacity(format!(
                "density matrix of dimension {} exceeds {MAX_DENSITY_DIM}",
                h.dim()
            )));
        }
        let set = lindblad_decomposition(config, params, max_excitations)?;
        LindbladGenerator::new(h.to_csr(), set.jumps.into_iter().map(|j| j.matrix).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense Liouvillian on row-major vectorized matrices.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim * self.dim;
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![C64::default(); n];
        let mut col = vec![C64::default(); n];
        for k in 0..n {
            e[k] = C64::new(1.0, 0.0);
            self.apply_general(&e, &mut col);
            out.set_column(k, &DVector::from_column_slice(&col));
            e[k] = C64::default();
        }
        out
    }

    /// Action valid for any (not necessarily Hermitian) matrix.
    fn apply_general(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let mut s = self.scratch.borrow_mut();
        let (a, b) = &mut *s;
        // -i H x
        self.h.mul_square(x, out);
        for v in out.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
        // + i x H^dag = i (H x^dag)^dag
        transpose_conj(x, a, d);
        self.h.mul_square(a, b);
        for r in 0..d {
            for c in 0..d {
                let v = b[c * d + r].conj();
                out[r * d + c] += C64::new(-v.im, v.re);
            }
        }
        for l in &self.jumps {
            // L x L^dag = L (L x^dag)^dag
            transpose_conj(x, a, d);
            l.mul_square(a, b);
            transpose_conj(b, a, d);
            l.mul_square(a, b);
            for (o, v) in out.iter_mut().zip(b.iter()) {
                *o += v;
            }
        }
    }
}

fn transpose_conj(x: &[C64], out: &mut [C64], d: usize) {
    for r in 0..d {
        for c in 0..d {
            out[c * d + r] = x[r * d + c].conj();
        }
    }
}

impl LinearGenerator for LindbladGenerator {
    fn len(&self) -> usize {
        self.dim * self.dim
    }

    /// Assumes a Hermitian argument, which the Liouvillian preserves.
    fn apply(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let mut s = self.scratch.borrow_mut();
        let (a, b) = &mut *s;
        self.h.mul_square(x, a);
        // -i (H x - (H x)^dag)
        for r in 0..d {
            for c in 0..d {
                let v = a[r * d + c] - a[c * d + r].conj();
                out[r * d + c] = C64::new(v.im, -v.re);
            }
        }
        for l in &self.jumps {
            // L x L^dag = L (L x)^dag for Hermitian x
            l.mul_square(x, a);
            transpose_conj(a, b, d);
            l.mul_square(b, a);
            for (o, v) in out.iter_mut().zip(a.iter()) {
                *o += v;
            }
        }
    }

    fn norm_bound(&self) -> f64 {
        2.0 * spectral_bound(&self.h) + self.jumps.iter().map(|l| spectral_bound(l).powi(2)).sum::<f64>()
    }
}

/// Density matrix over a truncated excitation basis, stored row-major.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub basis: Arc<ExcitationBasis>,
    pub entries: Vec<C64>,
}

impl DensityMatrix {
    pub fn ground(basis: Arc<ExcitationBasis>) -> Self {
        let d = basis.dim();
        let mut entries = vec![C64::default(); d * d];
        entries[0] = C64::new(1.0, 0.0);
        DensityMatrix { basis, entries }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.entries[r * self.dim() + c]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// Population of each excitation manifold.
    pub fn populations(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.basis.max_excitations() + 1];
        for i in 0..self.dim() {
            p[self.basis.excitations(i)] += self.get(i, i).re;
        }
        p
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).re).fold(f64::INFINITY, f64::min)
    }

    /// `Tr(A rho)` for an operator on the same basis.
    pub fn expectation(&self, a: &Csr) -> C64 {
        let mut acc = C64::default();
        for r in 0..self.dim() {
            for (c, v) in a.row(r) {
                acc += v * self.get(c, r);
            }
        }
        acc
    }

    /// Checks trace, Hermiticity and diagonal positivity.
    pub fn check(&self) -> Result<()> {
        let drift = (self.trace() - 1.0).norm();
        if drift > TRACE_DRIFT_LIMIT {
            return Err(Error::IntegrationFailure(format!("trace drifted by {drift:e}")));
        }
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::IntegrationFailure(format!("density matrix lost Hermiticity ({herm:e})")));
        }
        let low = self.min_diagonal();
        if low < -POSITIVITY_TOL {
            return Err(Error::IntegrationFailure(format!("negative population {low:e}")));
        }
        Ok(())
    }
}

/// Manifold populations `p_m(t)` on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrajectory {
    pub times: Vec<f64>,
    /// `populations[i][m]` is `p_m` at `times[i]`.
    pub populations: Vec<Vec<f64>>,
}

impl PopulationTrajectory {
    pub fn manifold(&self, m: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p.get(m).copied().unwrap_or(0.0)).collect()
    }

    /// Writes `t,p0,p1,...,pm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let width = self.populations.first().map_or(1, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..width).map(|m| format!("p{m}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, p) in self.times.iter().zip(&self.populations) {
            let mut row = fmt_sig(*t);
            for v in p {
                row.push(',');
                row.push_str(&fmt_sig(*v));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Stateful integrator starting from the ground state at `t = 0`.
pub struct MasterSolver {
    generator: LindbladGenerator,
    rho: DensityMatrix,
    time: f64,
}

impl MasterSolver {
    pub fn new(config: &AtomicConfiguration, params: &ModelParams, max_excitations: usize) -> Result<Self> {
        let generator = LindbladGenerator::for_model(config, params, max_excitations)?;
        let basis = Arc::new(crate::basis::enumerate_basis(config.n_atoms(), max_excitations)?);
        Ok(MasterSolver { generator, rho: DensityMatrix::ground(basis), time: 0.0 })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.time {
            return invalid(format!("time grid must be nondecreasing ({t} < {})", self.time));
        }
        let mut prop = TaylorPropagator::new(&self.generator, SERIES_TOL);
        prop.advance(&mut self.rho.entries, t - self.time)?;
        self.time = t;
        self.rho.check()
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return invalid("time grid must be finite and non-negative");
    }
    Ok(())
}

/// Populations `p_m(t)` starting from the ground state.
pub fn evolve_master(
    config: &AtomicConfiguration,
    params: &ModelParams,
    t_grid: &[f64],
    max_excitations: usize,
) -> Result<PopulationTrajectory> {
    check_grid(t_grid)?;
    let mut solver = MasterSolver::new(config, params, max_excitations)?;
    let mut populations = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        solver.advance_to(t)?;
        populations.push(solver.density().populations());
    }
    Ok(PopulationTrajectory { times: t_grid.to_vec(), populations })
}

/// Density-matrix evolution that reports the summed population of a set
/// of basis levels, with checkpoints for refining a maximum.
pub(crate) struct P1Tracker {
    generator: LindbladGenerator,
    rho: Vec<C64>,
    time: f64,
    levels: Vec<usize>,
}

impl P1Tracker {
    /// Starts in basis state 0.
    pub(crate) fn new(generator: LindbladGenerator, levels: Vec<usize>) -> Self {
        let d = generator.dim();
        let mut rho = vec![C64::default(); d * d];
        rho[0] = C64::new(1.0, 0.0);
        P1Tracker { generator, rho, time: 0.0, levels }
    }

    fn advance_to(&mut self, t: f64) -> Result<f64> {
        TaylorPropagator::new(&self.generator, SERIES_TOL).advance(&mut self.rho, t - self.time)?;
        self.time = t;
        let d = self.generator.dim();
        let trace: f64 = (0..d).map(|i| self.rho[i * d + i].re).sum();
        if (trace - 1.0).abs() > TRACE_DRIFT_LIMIT {
            return Err(Error::IntegrationFailure(format!("trace drifted to {trace}")));
        }
        Ok(self.levels.iter().map(|&i| self.rho[i * d + i].re).sum())
    }

    /// Running maximum of the tracked population.
    ///
    /// The trajectory is sampled every `P1_GRID_SPACING` for at least one
    /// and a half collective Rabi half-periods (`min_time`) and then until
    /// the population has fallen `P1_DROP` below its running maximum, or
    /// the horizon is reached. Fast small wiggles on top of the Rabi
    /// envelope are thereby not mistaken for the first maximum. The best
    /// sample is refined by a golden-section search between its neighbours.
    pub(crate) fn maximum(mut self, min_time: f64) -> Result<f64> {
        let mut best = (self.advance_to(0.0)?, 0usize);
        let mut bracket = (0.0, self.rho.clone());
        let mut last = 0usize;
        let mut k = 0usize;
        loop {
            k += 1;
            let t = k as f64 * P1_GRID_SPACING;
            if t > P1_HORIZON + 1e-12 {
                break;
            }
            let here = (self.time, self.rho.clone());
            let p = self.advance_to(t)?;
            last = k;
            if p > best.0 {
                best = (p, k);
                bracket = here;
            }
            if t >= min_time && p < best.0 * (1.0 - P1_DROP) {
                break;
            }
        }
        let (peak, i) = best;
        if i == 0 || i >= last {
            return Ok(peak);
        }
        let (t0, state) = bracket;
        let mut eval = |t: f64| -> Result<f64> {
            self.rho.copy_from_slice(&state);
            self.time = t0;
            self.advance_to(t)
        };
        let (mut a, mut b) = (t0, t0 + 2.0 * P1_GRID_SPACING);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (eval(c)?, eval(d)?);
        while b - a > 1e-9 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = eval(d)?;
            }
        }
        Ok(peak.max(fc).max(fd))
    }
}

/// Minimum evolution time before the p1 search may stop.
pub(crate) fn rabi_min_time(omega_eff: f64, delta_max: f64) -> f64 {
    let rate = (4.0 * omega_eff * omega_eff + delta_max * delta_max).sqrt();
    if rate > 0.0 {
        (1.5 * std::f64::consts::PI / rate).min(P1_HORIZON)
    } else {
        P1_HORIZON
    }
}

/// Maximum over time of the single-excitation population.
pub fn max_p1(config: &AtomicConfiguration, params: &ModelParams) -> Result<f64> {
    max_p1_truncated(config, params, default_truncation(config.n_atoms()))
}

pub fn max_p1_truncated(config: &AtomicConfiguration, params: &ModelParams, max_excitations: usize) -> Result<f64> {
    if config.n_atoms() == 0 || max_excitations == 0 {
        return Ok(0.0);
    }
    let res = max_resonance(config, params.v, params.range)?;
    let n = config.n_atoms() as f64;
    let omega_eff = n.sqrt() * overlap_with_vector(config, params.kl_d, res.vector.as_slice()).norm() * params.omega;
    let min_time = rabi_min_time(omega_eff, params.delta - res.omega_max);
    let generator = LindbladGenerator::for_model(config, params, max_excitations)?;
    let basis = crate::basis::enumerate_basis(config.n_atoms(), max_excitations)?;
    P1Tracker::new(generator, basis.sector(1).collect()).maximum(min_time)
}

/// `max_p1` over a grid of drive strengths and detunings from `omega_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub omegas: Vec<f64>,
    pub delta_maxes: Vec<f64>,
    /// Row-major by drive strength: `values[i * delta_maxes.len() + j]`.
    pub values: Vec<f64>,
    /// Grid indices `(i, j)` of the largest value.
    pub argmax: (usize, usize),
}

impl Surface {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.delta_maxes.len() + j]
    }

    pub fn max(&self) -> f64 {
        self.get(self.argmax.0, self.argmax.1)
    }

    pub fn argmax_point(&self) -> (f64, f64) {
        (self.omegas[self.argmax.0], self.delta_maxes[self.argmax.1])
    }

    pub fn from_values(omegas: Vec<f64>, delta_maxes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != omegas.len() * delta_maxes.len() || values.is_empty() {
            return invalid("surface values do not match the grid");
        }
        let mut best = 0;
        for (k, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = k;
            }
        }
        let cols = delta_maxes.len();
        Ok(Surface { omegas, delta_maxes, values, argmax: (best / cols, best % cols) })
    }

    /// Writes `omega,delta_max,max_p1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "omega,delta_max,max_p1")?;
        for (i, o) in self.omegas.iter().enumerate() {
            for (j, d) in self.delta_maxes.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt_sig(*o), fmt_sig(*d), fmt_sig(self.get(i, j)))?;
            }
        }
        Ok(())
    }
}

/// Evaluates `cell(omega, delta_max)` over a grid, in parallel, in grid order.
pub(crate) fn sweep_grid<F>(omega_grid: &[f64], delta_max_grid: &[f64], cell: F) -> Result<Surface>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let cells: Vec<(f64, f64)> =
        omega_grid.iter().flat_map(|&o| delta_max_grid.iter().map(move |&d| (o, d))).collect();
    let values = cells.par_iter().map(|&(o, d)| cell(o, d)).collect::<Result<Vec<f64>>>()?;
    Surface::from_values(omega_grid.to_vec(), delta_max_grid.to_vec(), values)
}

/// `max_p1` per cell with `Delta = omega_max + Delta_max`.
pub fn sweep_p1(
    config: &AtomicConfiguration,
    params: &ModelParams,
    omega_grid: &[f64],
    delta_max_grid: &[f64],
) -> Result<Surface> {
    let omega_max = max_resonance(config, params.v, params.range)?.omega_max;
    sweep_grid(omega_grid, delta_max_grid, |o, d| {
        max_p1(config, &params.with_omega(o).with_delta(omega_max + d))
    })
}

/// Stationary state from a direct solve of the Liouvillian with the trace
/// constraint replacing one equation.
pub fn steady_density(config: &AtomicConfiguration, params: &ModelParams, max_excitations: usize) -> Result<DensityMatrix> {
    let generator = LindbladGenerator::for_model(config, params, max_excitations)?;
    let d = generator.dim();
    if d > MAX_STEADY_DIM {
        return Err(Error::Capacity(format!("steady-state solve limited to dimension {MAX_STEADY_DIM}, got {d}")));
    }
    let mut a = generator.to_dense();
    let mut b = DVector::zeros(d * d);
    for c in 0..d * d {
        a[(0, c)] = C64::default();
    }
    for i in 0..d {
        a[(0, i * d + i)] = C64::new(1.0, 0.0);
    }
    b[0] = C64::new(1.0, 0.0);
    let x = a.lu().solve(&b).ok_or(Error::SingularSystem { sector: 0 })?;
    let basis = Arc::new(crate::basis::enumerate_basis(config.n_atoms(), max_excitations)?);
    let mut rho = DensityMatrix { basis, entries: x.as_slice().to_vec() };
    // symmetrize away rounding
    for r in 0..d {
        for c in r + 1..d {
            let v = 0.5 * (rho.entries[r * d + c] + rho.entries[c * d + r].conj());
            rho.entries[r * d + c] = v;
            rho.entries[c * d + r] = v.conj();
        }
        rho.entries[r * d + r].im = 0.0;
    }
    Ok(rho)
}

/// Result of a configuration search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: AtomicConfiguration,
    pub overlap: f64,
    pub distance: f64,
    pub trial: u64,
}

/// Among `trials` sampled configurations (seeds `seed + i`), the one whose
/// drive overlap with the collective resonance is closest to `target`.
pub fn search_configuration(
    n: usize,
    n_sites: u32,
    target_overlap: f64,
    trials: u64,
    seed: u64,
    kl_d: f64,
) -> Result<SearchResult> {
    if trials == 0 {
        return invalid("search needs at least one trial");
    }
    let best = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<(f64, u64)> {
            let c = sample_configuration(n_sites, n, seed.wrapping_add(i))?;
            Ok(((target_overlap - overlap(&c, kl_d).norm()).abs(), i))
        })
        .try_reduce(|| (f64::INFINITY, u64::MAX), |a, b| Ok(if (b.0, b.1) < (a.0, a.1) { b } else { a }))?;
    let (distance, trial) = best;
    let config = sample_configuration(n_sites, n, seed.wrapping_add(trial))?;
    let ov = overlap(&config, kl_d).norm();
    Ok(SearchResult { config, overlap: ov, distance, trial })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Range;
    use crate::weak_drive::{linear_response, output_operator, Direction};
    use crate::hamiltonian::lindblad_decomposition;
    use crate::hamiltonian::lowering_operator;

    fn cfg(n_sites: u32, sites: &[u32]) -> AtomicConfiguration {
        AtomicConfiguration::new(n_sites, sites.to_vec()).unwrap()
    }

    #[test]
    fn undriven_stays_in_ground_state() {
        let p = ModelParams { v: 3.0, omega: 0.0, ..Default::default() };
        let tr = evolve_master(&cfg(20, &[1, 5, 6]), &p, &[0.0, 1.0, 5.0], 3).unwrap();
        for row in &tr.populations {
            assert_eq!(row[0], 1.0);
        }
    }

    #[test]
    fn liouvillian_fast_path_matches_general_form() {
        let p = ModelParams { v: 2.0, range: Range::Finite(3.0), omega: 0.7, delta: 0.3, ..Default::default() };
        let g = LindbladGenerator::for_model(&cfg(10, &[0, 2, 7]), &p, 2).unwrap();
        let d = g.dim();
        // a Hermitian test matrix
        let mut x = vec![C64::default(); d * d];
        for r in 0..d {
            for c in r..d {
                let v = C64::new((r * 7 + c) as f64 * 0.1, if r == c { 0.0 } else { (c as f64 - r as f64) * 0.3 });
                x[r * d + c] = v;
                x[c * d + r] = v.conj();
            }
        }
        let mut fast = vec![C64::default(); d * d];
        let mut general = vec![C64::default(); d * d];
        g.apply(&x, &mut fast);
        g.apply_general(&x, &mut general);
        for (a, b) in fast.iter().zip(&general) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn liouvillian_preserves_trace() {
        let p = ModelParams { v: 2.0, omega: 1.0, ..Default::default() };
        let g = LindbladGenerator::for_model(&cfg(10, &[0, 3]), &p, 2).unwrap();
        let l = g.to_dense();
        let d = g.dim();
        for col in 0..d * d {
            let tr: C64 = (0..d).map(|i| l[(i * d + i, col)]).sum();
            assert!(tr.norm() < 1e-12);
        }
    }

    #[test]
    fn lossless_single_atom_inverts() {
        let p = ModelParams { v: 3.0, delta: 3.0, gamma_prime: 0.0, gamma_1d: 0.0, omega: 1.3, ..Default::default() };
        let c = cfg(5, &[2]);
        let tr = evolve_master(&c, &p, &[std::f64::consts::PI / (2.0 * 1.3)], 1).unwrap();
        assert!((tr.populations[0][1] - 1.0).abs() < 1e-10);
        assert!((max_p1(&c, &p).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn weak_drive_gives_vanishing_p1() {
        let p = ModelParams { v: 10.0, omega: 1e-4, ..Default::default() };
        let c = cfg(50, &[3, 10, 11]);
        assert!(max_p1(&c, &p).unwrap() < 1e-6);
    }

    #[test]
    fn lossless_energy_is_conserved() {
        let p = ModelParams {
            v: 4.0,
            range: Range::Finite(5.0),
            gamma_prime: 0.0,
            gamma_1d: 0.0,
            omega: 2.0,
            delta: 1.0,
            ..Default::default()
        };
        let c = cfg(20, &[0, 4, 5, 11]);
        let h = build_nonhermitian(&c, &p, 4).unwrap().to_csr();
        let mut solver = MasterSolver::new(&c, &p, 4).unwrap();
        let e0 = solver.density().expectation(&h);
        for k in 1..=10 {
            solver.advance_to(k as f64 * 0.5).unwrap();
            let e = solver.density().expectation(&h);
            assert!((e - e0).norm() < 1e-8, "energy drift {}", (e - e0).norm());
        }
    }

    #[test]
    fn two_excitation_truncation_is_accurate() {
        let c = sample_configuration(50, 6, 3).unwrap();
        let p = ModelParams { v: 10.0, range: Range::Finite(1e6), omega: 1.0, ..Default::default() };
        let top = max_resonance(&c, p.v, p.range).unwrap().omega_max;
        let p = p.with_delta(top);
        let grid: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let a = evolve_master(&c, &p, &grid, 2).unwrap();
        let b = evolve_master(&c, &p, &grid, 3).unwrap();
        for (x, y) in a.populations.iter().zip(&b.populations) {
            for m in 0..3 {
                assert!((x[m] - y[m]).abs() < 1e-3, "m={m}: {} vs {}", x[m], y[m]);
            }
        }
    }

    #[test]
    fn steady_transmission_matches_weak_drive() {
        let c = cfg(20, &[3, 8]);
        for delta in [-0.5, 0.0, 1.0, 2.4] {
            let p = ModelParams { v: 1.5, range: Range::Finite(4.0), omega: 0.01, delta, ..Default::default() };
            let rho = steady_density(&c, &p, 2).unwrap();
            let op = output_operator(&c, &p, Direction::Transmitted);
            let basis = rho.basis.clone();
            let a = lowering_operator(&basis, &op.beta);
            // <a^dag a> = |alpha|^2 + 2 Re(alpha* <A>) + <A^dag A>
            let ada = Csr::from_dense(&(a.adjoint().to_dense() * a.to_dense()));
            let flux = op.alpha.norm_sqr()
                + 2.0 * (op.alpha.conj() * rho.expectation(&a)).re
                + rho.expectation(&ada).re;
            let t_rho = flux / (p.omega * p.omega);
            let (t_wf, _) = linear_response(&c, &p).unwrap();
            assert!((t_rho - t_wf).abs() <= 1e-3 * t_wf, "delta {delta}: {t_rho} vs {t_wf}");
        }
    }

    #[test]
    fn capacity_guard() {
        let c = sample_configuration(50, 13, 0).unwrap();
        let p = ModelParams { v: 1.0, omega: 1.0, ..Default::default() };
        assert!(matches!(MasterSolver::new(&c, &p, 3), Err(Error::Capacity(_))));
        assert!(MasterSolver::new(&c, &p, 2).is_ok());
    }

    #[test]
    fn rejects_decreasing_grid() {
        let p = ModelParams { omega: 1.0, ..Default::default() };
        assert!(evolve_master(&cfg(5, &[1]), &p, &[1.0, 0.5], 1).is_err());
    }

    #[test]
    fn single_cell_sweep_equals_max_p1() {
        let c = cfg(30, &[2, 9]);
        let p = ModelParams { v: 5.0, omega: 2.0, ..Default::default() };
        let top = max_resonance(&c, p.v, p.range).unwrap().omega_max;
        let s = sweep_p1(&c, &p, &[2.0], &[0.3]).unwrap();
        assert_eq!(s.values[0], max_p1(&c, &p.with_delta(top + 0.3)).unwrap());
        assert_eq!(s.argmax, (0, 0));
    }

    #[test]
    fn search_is_deterministic_and_trial_one_is_first_sample() {
        let one = search_configuration(6, 50, 0.3, 1, 9, std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(one.config, sample_configuration(50, 6, 9).unwrap());
        let a = search_configuration(6, 50, 0.3, 500, 9, std::f64::consts::FRAC_PI_2).unwrap();
        let b = search_configuration(6, 50, 0.3, 500, 9, std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(a, b);
        assert!(a.distance <= one.distance);
    }

    #[test]
    fn search_at_kl_pi_is_exact() {
        let r = search_configuration(5, 40, 1.0, 3, 1, std::f64::consts::PI).unwrap();
        assert!(r.distance < 1e-12);
    }

    #[test]
    fn jump_set_matches_for_model() {
        let c = cfg(10, &[1, 2]);
        let p = ModelParams { omega: 0.5, ..Default::default() };
        let set = lindblad_decomposition(&c, &p, 2).unwrap();
        assert_eq!(set.jumps.len(), 4);
    }
}
