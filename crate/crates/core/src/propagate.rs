//! Exponential propagation of constant linear generators.
//!
//! `exp(h A) y` is evaluated by a truncated Taylor series, splitting `h`
//! into substeps with `|A| h_sub <= TAYLOR_RADIUS` and summing terms until
//! they fall below the requested tolerance relative to `|y|`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest `|A| h` handled by one series.
pub const TAYLOR_RADIUS: f64 = 4.0;
const MAX_TERMS: usize = 80;

/// A linear map `y -> A y` on complex vectors of fixed length.
pub trait LinearGenerator {
    fn len(&self) -> usize;
    /// Writes `A x` into `out`.
    fn apply(&self, x: &[C64], out: &mut [C64]);
    /// Upper bound on an induced norm of `A`.
    fn norm_bound(&self) -> f64;
}

fn max_abs(v: &[C64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.re.abs()).max(x.im.abs()))
}

/// Reusable Taylor propagator for one generator.
pub struct TaylorPropagator<'a, G: LinearGenerator> {
    generator: &'a G,
    tol: f64,
    term: Vec<C64>,
    next: Vec<C64>,
}

impl<'a, G: LinearGenerator> TaylorPropagator<'a, G> {
    pub fn new(generator: &'a G, tol: f64) -> Self {
        let n = generator.len();
        TaylorPropagator { generator, tol, term: vec![C64::default(); n], next: vec![C64::default(); n] }
    }

    /// Replaces `y` by `exp(h A) y`.
    pub fn advance(&mut self, y: &mut [C64], h: f64) -> Result<()> {
        if h == 0.0 {
            return Ok(());
        }
        let norm = self.generator.norm_bound();
        let substeps = ((norm * h.abs()) / TAYLOR_RADIUS).ceil().max(1.0) as usize;
        let dt = h / substeps as f64;
        for _ in 0..substeps {
            self.substep(y, dt)?;
        }
        Ok(())
    }

    fn substep(&mut self, y: &mut [C64], dt: f64) -> Result<()> {
        self.term.copy_from_slice(y);
        let scale = max_abs(y).max(f64::MIN_POSITIVE);
        let mut small_in_a_row = 0;
        for k in 1..=MAX_TERMS {
            self.generator.apply(&self.term, &mut self.next);
            let factor = dt / k as f64;
            for (t, n) in self.term.iter_mut().zip(&self.next) {
                *t = n * factor;
            }
            for (yv, t) in y.iter_mut().zip(&self.term) {
                *yv += t;
            }
            // two consecutive negligible terms guard against an accidental dip
            if max_abs(&self.term) <= self.tol * scale {
                small_in_a_row += 1;
                if small_in_a_row == 2 {
                    return Ok(());
                }
            } else {
                small_in_a_row = 0;
            }
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::IntegrationFailure("non-finite state during propagation".into()));
        }
        Err(Error::IntegrationFailure(format!(
            "Taylor series did not converge in {MAX_TERMS} terms"
        )))
    }
}

/// Dense complex matrix acting on vectors, for small generators.
pub struct DenseGenerator {
    pub dim: usize,
    /// Row-major entries.
    pub entries: Vec<C64>,
}

impl LinearGenerator for DenseGenerator {
    fn len(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.entries[r * self.dim..(r + 1) * self.dim].iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.entries[r * self.dim..(r + 1) * self.dim].iter().map(|a| a.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}
