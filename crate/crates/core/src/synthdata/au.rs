//! The toy action-unit vocabularies and their joint sampling law.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A named set of binary facial attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuSet {
    names: &'static [&'static str],
    probabilities: &'static [f64],
    bilateral: &'static [(usize, usize)],
    /// `(dependent, anchor, rho)`: with probability `rho` the dependent AU
    /// reuses the anchor's uniform draw, otherwise it draws its own.
    couplings: &'static [(usize, usize, f64)],
}

const NAMES_12: [&str; 12] = [
    "brow_raise_left",
    "brow_raise_right",
    "eye_closed_left",
    "eye_closed_right",
    "mouth_open",
    "smile",
    "frown",
    "nose_wrinkle",
    "lip_corner_depressor",
    "chin_raiser",
    "dimple_left",
    "dimple_right",
];
const PROBS_12: [f64; 12] = [0.30, 0.30, 0.20, 0.20, 0.40, 0.50, 0.25, 0.25, 0.20, 0.35, 0.30, 0.30];
const BILATERAL_8: [(usize, usize); 2] = [(0, 1), (2, 3)];
const BILATERAL_12: [(usize, usize); 3] = [(0, 1), (2, 3), (10, 11)];
const COUPLINGS_8: [(usize, usize, f64); 4] = [(1, 0, 0.85), (3, 2, 0.85), (4, 0, 0.6), (7, 6, 0.8)];
const COUPLINGS_12: [(usize, usize, f64); 6] =
    [(1, 0, 0.85), (3, 2, 0.85), (4, 0, 0.6), (7, 6, 0.8), (9, 8, 0.5), (11, 10, 0.85)];

pub const AU_SET_8: AuSet =
    AuSet { names: NAMES_12.split_at(8).0, probabilities: PROBS_12.split_at(8).0, bilateral: &BILATERAL_8, couplings: &COUPLINGS_8 };
pub const AU_SET_12: AuSet =
    AuSet { names: &NAMES_12, probabilities: &PROBS_12, bilateral: &BILATERAL_12, couplings: &COUPLINGS_12 };

impl AuSet {
    /// The vocabulary with `n_au` attributes (8 or 12).
    pub fn for_count(n_au: usize) -> Result<Self> {
        match n_au {
            8 => Ok(AU_SET_8),
            12 => Ok(AU_SET_12),
            n => Err(Error::InvalidArgument(format!("attribute vectors must have 8 or 12 entries, got {n}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.names
    }

    pub fn default_probabilities(&self) -> &'static [f64] {
        self.probabilities
    }

    pub fn bilateral_pairs(&self) -> &'static [(usize, usize)] {
        self.bilateral
    }

    pub fn couplings(&self) -> &'static [(usize, usize, f64)] {
        self.couplings
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|&n| n == name)
    }

    pub fn sided_index(&self, base: &str, side: Side) -> Option<usize> {
        let suffix = match side {
            Side::Left => "left",
            Side::Right => "right",
        };
        self.index(&format!("{base}_{suffix}"))
    }

    /// Draws one attribute vector. Each marginal equals its probability
    /// exactly; coupled attributes are positively correlated.
    pub fn sample<R: Rng + ?Sized>(&self, probabilities: &[f64], rng: &mut R) -> Result<Vec<bool>> {
        if probabilities.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} occurrence probabilities, got {}",
                self.len(),
                probabilities.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("occurrence probability {p} outside [0, 1]")));
        }
        let mut draws: Vec<f64> = (0..self.len()).map(|_| rng.gen::<f64>()).collect();
        let shares: Vec<f64> = (0..self.couplings.len()).map(|_| rng.gen::<f64>()).collect();
        for (&(dependent, anchor, rho), share) in self.couplings.iter().zip(shares) {
            if share < rho {
                draws[dependent] = draws[anchor];
            }
        }
        Ok(draws.iter().zip(probabilities).map(|(u, p)| u < p).collect())
    }
}
