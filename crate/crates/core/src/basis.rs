//! Truncated excitation bases for `n` two-level atoms.
//!
//! A basis state is the set of excited atoms, stored as a bit mask. States
//! are ordered by excitation number and then lexicographically on the sorted
//! atom indices.

use std::collections::HashMap;
use std::ops::Range as IndexRange;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};

/// Largest atom count representable by the bit-mask encoding.
pub const MAX_BASIS_ATOMS: usize = 64;

#[derive(Clone, Debug)]
pub struct ExcitationBasis {
    n_atoms: usize,
    max_excitations: usize,
    states: Vec<u64>,
    sector_offsets: Vec<usize>,
    lookup: HashMap<u64, usize>,
}

impl PartialEq for ExcitationBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n_atoms == other.n_atoms && self.max_excitations == other.max_excitations
    }
}

/// Enumerates all states with at most `max_excitations` excited atoms.
pub fn enumerate_basis(n_atoms: usize, max_excitations: usize) -> Result<ExcitationBasis> {
    if max_excitations > n_atoms {
        return invalid(format!(
            "max_excitations = {max_excitations} exceeds the atom count {n_atoms}"
        ));
    }
    if n_atoms > MAX_BASIS_ATOMS {
        return Err(Error::Capacity(format!(
            "excitation basis supports at most {MAX_BASIS_ATOMS} atoms, got {n_atoms}"
        )));
    }
    let mut states = Vec::new();
    let mut sector_offsets = vec![0];
    for m in 0..=max_excitations {
        push_combinations(n_atoms, m, &mut states);
        sector_offsets.push(states.len());
    }
    let lookup = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    Ok(ExcitationBasis { n_atoms, max_excitations, states, sector_offsets, lookup })
}

// Lexicographic k-subsets of 0..n.
fn push_combinations(n: usize, k: usize, out: &mut Vec<u64>) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().fold(0u64, |m, &i| m | (1u64 << i)));
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

impl ExcitationBasis {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn max_excitations(&self) -> usize {
        self.max_excitations
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn mask(&self, index: usize) -> u64 {
        self.states[index]
    }

    /// Sorted indices of the excited atoms in basis state `index`.
    pub fn excited_atoms(&self, index: usize) -> Vec<usize> {
        let mask = self.states[index];
        (0..self.n_atoms).filter(|&j| mask >> j & 1 == 1).collect()
    }

    pub fn excitations(&self, index: usize) -> usize {
        self.states[index].count_ones() as usize
    }

    pub fn index_of(&self, mask: u64) -> Option<usize> {
        self.lookup.get(&mask).copied()
    }

    pub fn index_of_atoms(&self, atoms: &[usize]) -> Option<usize> {
        let mut mask = 0u64;
        for &a in atoms {
            if a >= self.n_atoms || mask >> a & 1 == 1 {
                return None;
            }
            mask |= 1 << a;
        }
        self.index_of(mask)
    }

    /// Index range of the states with exactly `m` excitations.
    pub fn sector(&self, m: usize) -> IndexRange<usize> {
        if m > self.max_excitations {
            return self.dim()..self.dim();
        }
        self.sector_offsets[m]..self.sector_offsets[m + 1]
    }

    /// Index of the state reached by exciting atom `j` in state `index`, if
    /// that atom is in the ground state and the result is inside the basis.
    pub fn raise(&self, index: usize, j: usize) -> Option<usize> {
        let mask = self.states[index];
        if mask >> j & 1 == 1 {
            return None;
        }
        self.index_of(mask | 1 << j)
    }

    /// Index of the state reached by de-exciting atom `j`, if it is excited.
    pub fn lower(&self, index: usize, j: usize) -> Option<usize> {
        let mask = self.states[index];
        if mask >> j & 1 == 0 {
            return None;
        }
        self.index_of(mask & !(1 << j))
    }
}

/// Complex amplitudes over an excitation basis.
#[derive(Clone, Debug)]
pub struct StateVector {
    pub basis: Arc<ExcitationBasis>,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(basis: Arc<ExcitationBasis>, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return invalid(format!(
                "{} amplitudes for a basis of dimension {}",
                amplitudes.len(),
                basis.dim()
            ));
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return invalid("state amplitudes must be finite");
        }
        Ok(StateVector { basis, amplitudes })
    }

    /// The all-ground state.
    pub fn ground(basis: Arc<ExcitationBasis>) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
        amplitudes[0] = C64::new(1.0, 0.0);
        StateVector { basis, amplitudes }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn sector(&self, m: usize) -> &[C64] {
        &self.amplitudes[self.basis.sector(m)]
    }

    /// Total weight in each excitation manifold.
    pub fn sector_weights(&self) -> Vec<f64> {
        (0..=self.basis.max_excitations())
            .map(|m| self.sector(m).iter().map(|a| a.norm_sqr()).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dimensions() {
        assert_eq!(enumerate_basis(3, 2).unwrap().dim(), 7);
        assert_eq!(enumerate_basis(6, 2).unwrap().dim(), 22);
        assert_eq!(enumerate_basis(20, 2).unwrap().dim(), 211);
        assert_eq!(enumerate_basis(6, 6).unwrap().dim(), 64);
        assert_eq!(enumerate_basis(0, 0).unwrap().dim(), 1);
        assert!(enumerate_basis(2, 3).is_err());
    }

    #[test]
    fn canonical_order() {
        let b = enumerate_basis(3, 3).unwrap();
        let listed: Vec<Vec<usize>> = (0..b.dim()).map(|i| b.excited_atoms(i)).collect();
        let expected: Vec<Vec<usize>> = vec![
            vec![],
            vec![0],
            vec![1],
            vec![2],
            vec![0, 1],
            vec![0, 2],
            vec![1, 2],
            vec![0, 1, 2],
        ];
        assert_eq!(listed, expected);
        assert_eq!(b.sector(2), 4..7);
    }

    #[test]
    fn raise_and_lower_respect_truncation() {
        let b = enumerate_basis(4, 1).unwrap();
        let e0 = b.index_of_atoms(&[0]).unwrap();
        assert_eq!(b.raise(e0, 1), None);
        assert_eq!(b.lower(e0, 0), Some(0));
        assert_eq!(b.lower(e0, 1), None);
        assert_eq!(b.raise(0, 3), b.index_of_atoms(&[3]));
    }

    proptest! {
        #[test]
        fn index_state_round_trip(n in 0usize..12, m_frac in 0.0f64..=1.0) {
            let m = ((n as f64) * m_frac).round() as usize;
            let b = enumerate_basis(n, m).unwrap();
            let expected: usize = (0..=m).map(|k| binomial(n, k)).sum();
            prop_assert_eq!(b.dim(), expected);
            for i in 0..b.dim() {
                let atoms = b.excited_atoms(i);
                prop_assert_eq!(b.index_of_atoms(&atoms), Some(i));
                prop_assert_eq!(b.excitations(i), atoms.len());
            }
        }
    }

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }
}
