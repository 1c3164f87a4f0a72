//! Normalized model parameters.
//!
//! All rates are measured in units of the free-space decay rate, which is
//! therefore fixed to one. Lengths are measured in lattice periods.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

/// Range of the bandgap interaction in lattice periods.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Range {
    Finite(f64),
    Infinite,
}

impl Range {
    /// Decay factor `exp(-sites / range)` for a separation of `sites` lattice periods.
    pub fn attenuation(self, sites: u32) -> f64 {
        match self {
            Range::Infinite => 1.0,
            Range::Finite(l) => (-(sites as f64) / l).exp(),
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Range::Infinite)
    }

    /// `1/L` in inverse lattice periods (zero for an infinite range).
    pub fn inverse(self) -> f64 {
        match self {
            Range::Infinite => 0.0,
            Range::Finite(l) => 1.0 / l,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Range::Finite(l) if !(l > 0.0) || !l.is_finite() => {
                invalid(format!("interaction range must be positive, got {l}"))
            }
            _ => Ok(()),
        }
    }
}

impl From<f64> for Range {
    fn from(l: f64) -> Self {
        if l.is_infinite() {
            Range::Infinite
        } else {
            Range::Finite(l)
        }
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Range::Finite(l) => write!(f, "{l}"),
            Range::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "INF" => Ok(Range::Infinite),
            other => other
                .parse::<f64>()
                .map(Range::from)
                .map_err(|e| format!("bad range {other:?}: {e}")),
        }
    }
}

// JSON has no infinity, so the infinite range travels as the string "inf".
impl Serialize for Range {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Range::Finite(l) => s.serialize_f64(*l),
            Range::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Range {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(l) => Ok(Range::from(l)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Physical parameters of the driven atom-waveguide system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Bandgap interaction strength.
    pub v: f64,
    /// Bandgap interaction range in lattice periods.
    pub range: Range,
    /// Free-space decay rate (the rate unit).
    pub gamma_prime: f64,
    /// Decay rate into the guided probe band.
    pub gamma_1d: f64,
    /// Probe-band phase per lattice site.
    pub ka_d: f64,
    /// Drive phase per lattice site.
    pub kl_d: f64,
    /// Rabi frequency of the probe.
    pub omega: f64,
    /// Probe detuning from the bare atomic resonance.
    pub delta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let quarter = std::f64::consts::FRAC_PI_2;
        ModelParams {
            v: 0.0,
            range: Range::Infinite,
            gamma_prime: 1.0,
            gamma_1d: 0.3,
            ka_d: quarter,
            kl_d: quarter,
            omega: 0.01,
            delta: 0.0,
        }
    }
}

impl ModelParams {
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    /// Checks the sign constraints on every rate.
    ///
    /// `gamma_prime` is allowed to be zero so that lossless limits can be
    /// studied; any other value than one simply rescales the rate unit.
    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        let checks = [
            ("V", self.v),
            ("gamma_prime", self.gamma_prime),
            ("gamma_1d", self.gamma_1d),
            ("omega", self.omega),
        ];
        for (name, value) in checks {
            if !(value >= 0.0) || !value.is_finite() {
                return invalid(format!("{name} must be finite and non-negative, got {value}"));
            }
        }
        for (name, value) in [("ka_d", self.ka_d), ("kl_d", self.kl_d), ("delta", self.delta)] {
            if !value.is_finite() {
                return invalid(format!("{name} must be finite, got {value}"));
            }
        }
        Ok(())
    }
}
