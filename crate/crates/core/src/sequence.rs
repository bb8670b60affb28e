//! Decoration sequences `(y₀; y₁ ≥ y₂ ≥ …)`.

use crate::error::{Error, Result};

/// Default maximum number of stored offspring entries.
pub const MAX_LEN: usize = 64;

/// A followed coordinate together with a non-increasing list of offspring.
///
/// Entries below the fragment cutoff used at construction are dropped, never
/// stored as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorationSequence {
    followed: f64,
    offspring: Vec<f64>,
}

impl DecorationSequence {
    /// Builds a sequence, sorting the offspring, dropping entries `< cutoff`
    /// (or `≤ 0`) and truncating to `max_len` entries.
    pub fn new(followed: f64, mut offspring: Vec<f64>, cutoff: f64, max_len: usize) -> Result<Self> {
        if !(followed > 0.0) || !followed.is_finite() {
            return Err(Error::Domain(format!("followed coordinate must be positive, got {followed}")));
        }
        if let Some(bad) = offspring.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("offspring entries must be finite and non-negative, got {bad}")));
        }
        offspring.retain(|&v| v > 0.0 && v >= cutoff);
        offspring.sort_by(|a, b| b.total_cmp(a));
        offspring.truncate(max_len);
        Ok(DecorationSequence { followed, offspring })
    }

    /// Sequence with no cutoff beyond dropping zeros and the default length cap.
    pub fn exact(followed: f64, offspring: Vec<f64>) -> Result<Self> {
        Self::new(followed, offspring, 0.0, MAX_LEN)
    }

    /// Binary sequence `(s; [u])` with `u` stored as given (no recomputation
    /// of `1 - s`).
    pub fn binary(s: f64, u: f64) -> Result<Self> {
        Self::exact(s, vec![u])
    }

    pub fn followed(&self) -> f64 {
        self.followed
    }

    pub fn offspring(&self) -> &[f64] {
        &self.offspring
    }

    /// Largest offspring entry, or `0` when there is none.
    pub fn first_offspring(&self) -> f64 {
        self.offspring.first().copied().unwrap_or(0.0)
    }

    /// `y₀ + Σ yᵢ`.
    pub fn total(&self) -> f64 {
        self.followed + self.offspring.iter().sum::<f64>()
    }

    /// All coordinates `[y₀, y₁, …]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.offspring.len() + 1);
        v.push(self.followed);
        v.extend_from_slice(&self.offspring);
        v
    }

    /// Sequence multiplied by a positive constant.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::exact(self.followed * c, self.offspring.iter().map(|v| v * c).collect())
    }

    /// Coordinate-wise comparison `self ≤ other + slack`, padding the shorter
    /// offspring list with zeros.
    pub fn dominated_by(&self, other: &Self, slack: f64) -> bool {
        if self.followed > other.followed + slack {
            return false;
        }
        self.offspring
            .iter()
            .enumerate()
            .all(|(i, v)| *v <= other.offspring.get(i).copied().unwrap_or(0.0) + slack)
    }
}
