//! The non-Hermitian atom-only Hamiltonian and its spectral analysis.
//!
//! In the frame rotating at the probe frequency the Hamiltonian reads
//!
//! ```text
//! H = -sum_j [(Delta + i G'/2) s_ee^j + Omega (s_eg^j e^{i kL z_j} + h.c.)]
//!     + sum_{j,k} [V (-1)^(theta_j + theta_k) e^{-|z_j - z_k|/L}
//!                  - i (G1D/2) e^{i ka |z_j - z_k|}] s_eg^j s_ge^k
//! ```
//!
//! where the pair sum runs over all `j, k` including `j = k`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::basis::{enumerate_basis, ExcitationBasis, StateVector};
use crate::error::{invalid, Result};
use crate::lattice::AtomicConfiguration;
use crate::params::{ModelParams, Range};
use crate::sparse::Csr;

/// Dimension from which operators are stored sparsely.
pub const DENSE_LIMIT: usize = 500;

/// Relative gap below which the top single-excitation eigenvalue is flagged
/// as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Real symmetric bandgap interaction in the single-excitation manifold,
/// `M_jk = V (-1)^(theta_j + theta_k) exp(-|theta_j - theta_k| / L)`.
pub fn bandgap_matrix(config: &AtomicConfiguration, v: f64, range: Range) -> DMatrix<f64> {
    let n = config.n_atoms();
    DMatrix::from_fn(n, n, |j, k| {
        v * config.parity(j) * config.parity(k) * range.attenuation(config.separation(j, k))
    })
}

/// Full pair kernel of the Hamiltonian: bandgap exchange plus the
/// waveguide-mediated term `-i (G1D/2) exp(i ka |z_j - z_k|)`.
pub fn pair_kernel(config: &AtomicConfiguration, params: &ModelParams) -> DMatrix<C64> {
    let bg = bandgap_matrix(config, params.v, params.range);
    let n = config.n_atoms();
    DMatrix::from_fn(n, n, |j, k| {
        let phase = params.ka_d * config.separation(j, k) as f64;
        C64::new(bg[(j, k)], 0.0) - C64::i() * (params.gamma_1d / 2.0) * C64::from_polar(1.0, phase)
    })
}

/// Per-atom amplitude of the raising part of the drive, `-Omega e^{i kL z_j}`.
pub fn drive_amplitudes(config: &AtomicConfiguration, params: &ModelParams) -> Vec<C64> {
    config
        .sites()
        .iter()
        .map(|&s| -params.omega * C64::from_polar(1.0, params.kl_d * s as f64))
        .collect()
}

/// Eigen-decomposition of the bandgap matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct BandgapSpectrum {
    pub energies: Vec<f64>,
    /// Column `m` is the unit eigenvector of `energies[m]`, with its first
    /// non-negligible component made positive.
    pub vectors: DMatrix<f64>,
}

pub fn bandgap_spectrum(config: &AtomicConfiguration, v: f64, range: Range) -> BandgapSpectrum {
    let m = bandgap_matrix(config, v, range);
    let n = m.nrows();
    if n == 0 {
        return BandgapSpectrum { energies: vec![], vectors: DMatrix::zeros(0, 0) };
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    BandgapSpectrum { energies, vectors }
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// The highest single-excitation resonance of the bandgap interaction.
#[derive(Clone, Debug)]
pub struct MaxResonance {
    pub omega_max: f64,
    /// Unit eigenvector over atoms, first non-negligible component positive.
    pub vector: Vec<f64>,
    /// Set when the two largest eigenvalues are closer than `DEGENERACY_TOL * V`.
    pub degenerate: bool,
}

impl MaxResonance {
    /// The eigenvector embedded in a single-excitation basis.
    pub fn state(&self) -> StateVector {
        let basis = Arc::new(enumerate_basis(self.vector.len(), 1.min(self.vector.len())).unwrap());
        let mut amps = vec![ZERO; basis.dim()];
        for (slot, x) in amps[1..].iter_mut().zip(&self.vector) {
            *slot = C64::new(*x, 0.0);
        }
        StateVector { basis, amplitudes: amps }
    }
}

pub fn max_resonance(config: &AtomicConfiguration, v: f64, range: Range) -> Result<MaxResonance> {
    if config.n_atoms() == 0 {
        return invalid("maximum resonance needs at least one atom");
    }
    let n = config.n_atoms();
    if range.is_infinite() && v > 0.0 {
        // rank one: V p p^T with p the parity vector
        let sign = config.parity(0);
        let norm = (n as f64).sqrt();
        return Ok(MaxResonance {
            omega_max: n as f64 * v,
            vector: (0..n).map(|j| sign * config.parity(j) / norm).collect(),
            degenerate: false,
        });
    }
    let spec = bandgap_spectrum(config, v, range);
    let degenerate = spec.energies.len() > 1
        && (spec.energies[0] - spec.energies[1]).abs() < DEGENERACY_TOL * v.abs().max(f64::MIN_POSITIVE);
    Ok(MaxResonance {
        omega_max: spec.energies[0],
        vector: spec.vectors.column(0).iter().copied().collect(),
        degenerate,
    })
}

/// Bandgap interaction restricted to the two-excitation manifold, in the
/// canonical order of the pair states.
pub fn two_excitation_block(config: &AtomicConfiguration, v: f64, range: Range) -> DMatrix<f64> {
    let n = config.n_atoms();
    let basis = enumerate_basis(n, 2.min(n)).unwrap();
    let bg = bandgap_matrix(config, v, range);
    let sector = basis.sector(2);
    let offset = sector.start;
    let dim = sector.len();
    let mut block = DMatrix::zeros(dim, dim);
    for col in sector.clone() {
        let atoms = basis.excited_atoms(col);
        for &k in &atoms {
            block[(col - offset, col - offset)] += bg[(k, k)];
            let without = basis.mask(col) & !(1 << k);
            for j in (0..n).filter(|&j| without >> j & 1 == 0 && j != k) {
                let row = basis.index_of(without | 1 << j).unwrap();
                block[(row - offset, col - offset)] += bg[(j, k)];
            }
        }
    }
    block
}

/// Largest eigenvalue of the bandgap interaction in the two-excitation manifold.
pub fn two_excitation_max(config: &AtomicConfiguration, v: f64, range: Range) -> Result<f64> {
    if config.n_atoms() < 2 {
        return invalid("two-excitation manifold needs at least two atoms");
    }
    let block = two_excitation_block(config, v, range);
    Ok(block.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Anharmonicity `omega_max^(2) - 2 omega_max^(1)` of the top resonance.
pub fn anharmonicity(config: &AtomicConfiguration, v: f64, range: Range) -> Result<f64> {
    let two = two_excitation_max(config, v, range)?;
    Ok(two - 2.0 * max_resonance(config, v, range)?.omega_max)
}

/// Collects the matrix elements of
/// `onsite * N_exc + sum_jk kernel_jk s_eg^j s_ge^k + drive`
/// on `basis`. Drive terms leaving the truncated basis are dropped.
pub(crate) fn assemble(
    basis: &ExcitationBasis,
    onsite: C64,
    kernel: &DMatrix<C64>,
    raise: &[C64],
) -> Vec<(usize, usize, C64)> {
    let n = basis.n_atoms();
    let mut out = Vec::new();
    for col in 0..basis.dim() {
        let mask = basis.mask(col);
        let mut diag = onsite * basis.excitations(col) as f64;
        for k in (0..n).filter(|&k| mask >> k & 1 == 1) {
            diag += kernel[(k, k)];
            let without = mask & !(1 << k);
            for j in (0..n).filter(|&j| j != k && without >> j & 1 == 0) {
                let row = basis.index_of(without | 1 << j).expect("hop preserves excitation number");
                out.push((row, col, kernel[(j, k)]));
            }
        }
        if diag != ZERO {
            out.push((col, col, diag));
        }
        for (j, &amp) in raise.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            if let Some(row) = basis.raise(col, j) {
                out.push((row, col, amp));
                out.push((col, row, amp.conj()));
            }
        }
    }
    out
}

/// Complex square operator over an excitation basis.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub basis: Arc<ExcitationBasis>,
    pub entries: Storage,
}

#[derive(Clone, Debug)]
pub enum Storage {
    Dense(DMatrix<C64>),
    Sparse(Csr),
}

impl OperatorMatrix {
    pub fn from_triplets(basis: Arc<ExcitationBasis>, triplets: &[(usize, usize, C64)]) -> Self {
        let csr = Csr::from_triplets(basis.dim(), triplets);
        let entries =
            if basis.dim() < DENSE_LIMIT { Storage::Dense(csr.to_dense()) } else { Storage::Sparse(csr) };
        OperatorMatrix { basis, entries }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.entries {
            Storage::Dense(a) => a.clone(),
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn to_csr(&self) -> Csr {
        match &self.entries {
            Storage::Dense(a) => Csr::from_dense(a),
            Storage::Sparse(s) => s.clone(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        match &self.entries {
            Storage::Dense(a) => a[(row, col)],
            Storage::Sparse(s) => s.row(row).find(|&(c, _)| c == col).map_or(ZERO, |(_, v)| v),
        }
    }

    /// Writes `<prefix>.bin` (column-major little-endian complex doubles,
    /// real part first) and `<prefix>.json` describing the basis.
    pub fn write_dump(&self, prefix: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header {
            dim: usize,
            n_atoms: usize,
            max_excitations: usize,
            layout: &'static str,
            states: Vec<Vec<usize>>,
        }
        let dense = self.to_dense();
        let mut bin = std::io::BufWriter::new(std::fs::File::create(prefix.with_extension("bin"))?);
        for v in dense.iter() {
            bin.write_all(&v.re.to_le_bytes())?;
            bin.write_all(&v.im.to_le_bytes())?;
        }
        bin.flush()?;
        let header = Header {
            dim: self.dim(),
            n_atoms: self.basis.n_atoms(),
            max_excitations: self.basis.max_excitations(),
            layout: "column-major complex128 little-endian",
            states: (0..self.dim()).map(|i| self.basis.excited_atoms(i)).collect(),
        };
        std::fs::write(prefix.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }
}

fn checked_basis(config: &AtomicConfiguration, max_excitations: usize) -> Result<Arc<ExcitationBasis>> {
    if max_excitations > config.n_atoms() {
        return invalid(format!(
            "max_excitations = {max_excitations} exceeds the atom count {}",
            config.n_atoms()
        ));
    }
    Ok(Arc::new(enumerate_basis(config.n_atoms(), max_excitations)?))
}

/// The full non-Hermitian Hamiltonian on the basis truncated at
/// `max_excitations`.
pub fn build_nonhermitian(
    config: &AtomicConfiguration,
    params: &ModelParams,
    max_excitations: usize,
) -> Result<OperatorMatrix> {
    params.validate()?;
    let basis = checked_basis(config, max_excitations)?;
    let onsite = -C64::new(params.delta, params.gamma_prime / 2.0);
    let t = assemble(&basis, onsite, &pair_kernel(config, params), &drive_amplitudes(config, params));
    Ok(OperatorMatrix::from_triplets(basis, &t))
}

/// Drive-free block of the Hamiltonian within the `m`-excitation sector.
pub fn sector_block(
    config: &AtomicConfiguration,
    params: &ModelParams,
    basis: &ExcitationBasis,
    m: usize,
) -> DMatrix<C64> {
    let sector = basis.sector(m);
    let sub = enumerate_basis(basis.n_atoms(), m).unwrap();
    let onsite = -C64::new(params.delta, params.gamma_prime / 2.0);
    let kernel = pair_kernel(config, params);
    let dim = sector.len();
    let mut block = DMatrix::zeros(dim, dim);
    // States of the sector share their canonical order with the sub-basis.
    let offset = sub.sector(m).start;
    for (r, c, v) in assemble(&sub, onsite, &kernel, &[]) {
        if r >= offset && c >= offset {
            block[(r - offset, c - offset)] += v;
        }
    }
    block
}

/// One jump operator of the dissipative part.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub label: String,
    pub matrix: Csr,
}

/// Hermitian part and jump operators whose effective Hamiltonian
/// `coherent - (i/2) sum L^dag L` equals [`build_nonhermitian`].
#[derive(Clone, Debug)]
pub struct LindbladSet {
    pub coherent: OperatorMatrix,
    pub jumps: Vec<JumpOperator>,
}

impl LindbladSet {
    pub fn reconstruct_nonhermitian(&self) -> DMatrix<C64> {
        let mut h = self.coherent.to_dense();
        for jump in &self.jumps {
            let l = jump.matrix.to_dense();
            h -= (l.adjoint() * &l) * C64::new(0.0, 0.5);
        }
        h
    }
}

/// Lowering operator `sum_j c_j s_ge^j` on `basis`.
pub(crate) fn lowering_operator(basis: &ExcitationBasis, coeffs: &[C64]) -> Csr {
    let mut t = Vec::new();
    for col in 0..basis.dim() {
        for (j, &c) in coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            if let Some(row) = basis.lower(col, j) {
                t.push((row, col, c));
            }
        }
    }
    Csr::from_triplets(basis.dim(), &t)
}

pub fn lindblad_decomposition(
    config: &AtomicConfiguration,
    params: &ModelParams,
    max_excitations: usize,
) -> Result<LindbladSet> {
    params.validate()?;
    let basis = checked_basis(config, max_excitations)?;
    let n = config.n_atoms();
    let bg = bandgap_matrix(config, params.v, params.range);
    let exchange = DMatrix::from_fn(n, n, |j, k| {
        let phase = params.ka_d * config.separation(j, k) as f64;
        C64::new(bg[(j, k)] + params.gamma_1d / 2.0 * phase.sin(), 0.0)
    });
    let t = assemble(
        &basis,
        C64::new(-params.delta, 0.0),
        &exchange,
        &drive_amplitudes(config, params),
    );
    let coherent = OperatorMatrix::from_triplets(basis.clone(), &t);

    let mut jumps = Vec::new();
    if params.gamma_prime > 0.0 {
        let amp = C64::new(params.gamma_prime.sqrt(), 0.0);
        for j in 0..n {
            let mut coeffs = vec![ZERO; n];
            coeffs[j] = amp;
            jumps.push(JumpOperator { label: format!("free-space {j}"), matrix: lowering_operator(&basis, &coeffs) });
        }
    }
    if params.gamma_1d > 0.0 {
        let amp = (params.gamma_1d / 2.0).sqrt();
        for (label, sign) in [("waveguide +", -1.0), ("waveguide -", 1.0)] {
            let coeffs: Vec<C64> = config
                .sites()
                .iter()
                .map(|&s| C64::from_polar(amp, sign * params.ka_d * s as f64))
                .collect();
            jumps.push(JumpOperator { label: label.into(), matrix: lowering_operator(&basis, &coeffs) });
        }
    }
    Ok(LindbladSet { coherent, jumps })
}
