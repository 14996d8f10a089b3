//! Coupling-strength ranking, per-window coherent-set detection and the
//! stock × window coherence indicator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::CouplingMatrix;
use crate::oscillator_sim::SimulationSummary;

/// Default coherence threshold on the velocity fluctuation, radians/time.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct StrengthRanking {
    /// `S_i`, the row sums of the coupling matrix.
    pub strengths: Vec<f64>,
    /// Indices by descending strength, ties by ascending index.
    pub order: Vec<usize>,
}

/// Row sums of `coupling` and their descending order.
pub fn coupling_strengths(coupling: &CouplingMatrix) -> StrengthRanking {
    let strengths = coupling.row_sums();
    let mut order: Vec<usize> = (0..strengths.len()).collect();
    order.sort_by(|&a, &b| strengths[b].total_cmp(&strengths[a]).then(a.cmp(&b)));
    StrengthRanking { strengths, order }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherencePartition {
    pub window_index: usize,
    /// Original indices, in descending-strength order.
    pub coherent: Vec<usize>,
    /// Remaining indices, in descending-strength order.
    pub incoherent: Vec<usize>,
    pub epsilon: f64,
}

impl CoherencePartition {
    pub fn size(&self) -> usize {
        self.coherent.len()
    }

    pub fn n(&self) -> usize {
        self.coherent.len() + self.incoherent.len()
    }
}

/// Walks the descending-strength order and collects indices while `σ < ε`.
///
/// The scan stops at the first index with `σ ≥ ε`; every later index is incoherent even
/// if its own fluctuation is below the threshold.
pub fn detect_coherent_set(
    summary: &SimulationSummary,
    ranking: &StrengthRanking,
    epsilon: f64,
) -> Result<CoherencePartition> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if summary.len() != ranking.order.len() {
        return Err(Error::Dimension(format!(
            "summary has {} oscillators, ranking has {}",
            summary.len(),
            ranking.order.len()
        )));
    }
    let prefix = ranking
        .order
        .iter()
        .take_while(|&&i| summary.velocity_std[i] < epsilon)
        .count();
    Ok(CoherencePartition {
        window_index: summary.window_index,
        coherent: ranking.order[..prefix].to_vec(),
        incoherent: ranking.order[prefix..].to_vec(),
        epsilon,
    })
}

/// `|Co(t)|` for every window, in the given order.
pub fn coherent_size_series(partitions: &[CoherencePartition]) -> Vec<usize> {
    partitions.iter().map(CoherencePartition::size).collect()
}

/// Window × stock coherence indicator with per-stock involvement counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMatrix {
    /// Row `t` holds `χ(·, t)`.
    chi: Vec<Vec<bool>>,
    counts: Vec<usize>,
}

impl CoherenceMatrix {
    pub fn from_rows(chi: Vec<Vec<bool>>) -> Result<Self> {
        let n = chi.first().map_or(0, Vec::len);
        if chi.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension("ragged coherence matrix".into()));
        }
        let counts = (0..n)
            .map(|i| chi.iter().filter(|row| row[i]).count())
            .collect();
        Ok(Self { chi, counts })
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.chi
    }

    /// `N_T(i)`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_windows(&self) -> usize {
        self.chi.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.counts.len()
    }

    /// The coherence history of stock `i` as a 0/1 vector over windows.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.chi.iter().map(|row| if row[i] { 1.0 } else { 0.0 }).collect()
    }

    /// Keeps only the windows in `range` (positions, not window indices).
    pub fn select_rows(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.chi.len() || range.start >= range.end {
            return Err(Error::InvalidArgument(format!(
                "window range {range:?} outside 0..{}",
                self.chi.len()
            )));
        }
        Self::from_rows(self.chi[range].to_vec())
    }
}

/// Builds `χ` from the partitions of consecutive windows.
pub fn characteristic_matrix(partitions: &[CoherencePartition], n: usize) -> Result<CoherenceMatrix> {
    let mut chi = Vec::with_capacity(partitions.len());
    for p in partitions {
        if p.n() != n {
            return Err(Error::Dimension(format!(
                "window {} covers {} stocks, expected {n}",
                p.window_index,
                p.n()
            )));
        }
        let mut row = vec![false; n];
        for &i in &p.coherent {
            if i >= n {
                return Err(Error::Dimension(format!("index {i} out of range in window {}", p.window_index)));
            }
            row[i] = true;
        }
        chi.push(row);
    }
    CoherenceMatrix::from_rows(chi)
}
