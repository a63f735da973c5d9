//! External clustering indices and keyframe-versus-event scoring.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScore {
    pub ari: f64,
    pub nmi: f64,
}

/// Label-sorted counts, so floating-point sums do not depend on hash order.
struct Contingency {
    n: usize,
    left: Vec<(usize, usize)>,
    right: Vec<(usize, usize)>,
    cells: Vec<((usize, usize), usize)>,
}

fn sorted_counts<K: Ord + Copy>(m: HashMap<K, usize>) -> Vec<(K, usize)> {
    let mut v: Vec<_> = m.into_iter().collect();
    v.sort_unstable();
    v
}

fn contingency(left: &[usize], right: &[usize]) -> Contingency {
    let mut left_counts: HashMap<usize, usize> = HashMap::new();
    let mut right_counts: HashMap<usize, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in left.iter().zip(right) {
        *left_counts.entry(a).or_default() += 1;
        *right_counts.entry(b).or_default() += 1;
        *cells.entry((a, b)).or_default() += 1;
    }
    Contingency {
        n: left.len(),
        left: sorted_counts(left_counts),
        right: sorted_counts(right_counts),
        cells: sorted_counts(cells),
    }
}

fn count_of(counts: &[(usize, usize)], label: usize) -> f64 {
    let i = counts
        .binary_search_by_key(&label, |&(l, _)| l)
        .expect("cell labels appear in the marginals");
    counts[i].1 as f64
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

fn entropy(counts: &[(usize, usize)], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .map(|&(_, c)| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn check_lengths(predicted: &[usize], truth: &[usize]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predicted labels vs {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Adjusted Rand Index. Two trivial partitions that agree score 1.
pub fn adjusted_rand_index(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let t = contingency(predicted, truth);
    if t.n < 2 {
        return Ok(1.0);
    }
    let index: f64 = t.cells.iter().map(|&(_, c)| pairs(c)).sum();
    let sum_left: f64 = t.left.iter().map(|&(_, c)| pairs(c)).sum();
    let sum_right: f64 = t.right.iter().map(|&(_, c)| pairs(c)).sum();
    let expected = sum_left * sum_right / pairs(t.n);
    let max_index = 0.5 * (sum_left + sum_right);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Normalized mutual information with arithmetic-mean normalization,
/// `2 I(U;V) / (H(U) + H(V))`.
pub fn normalized_mutual_info(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let t = contingency(predicted, truth);
    if t.n == 0 {
        return Ok(1.0);
    }
    let h_left = entropy(&t.left, t.n);
    let h_right = entropy(&t.right, t.n);
    if h_left == 0.0 && h_right == 0.0 {
        return Ok(1.0);
    }
    if h_left == 0.0 || h_right == 0.0 {
        return Ok(0.0);
    }

    let n = t.n as f64;
    let mi: f64 = t
        .cells
        .iter()
        .map(|&((a, b), c)| {
            let c = c as f64;
            let (na, nb) = (count_of(&t.left, a), count_of(&t.right, b));
            (c / n) * (c * n / (na * nb)).ln()
        })
        .sum();
    Ok((2.0 * mi / (h_left + h_right)).clamp(0.0, 1.0))
}

pub fn clustering_score(predicted: &[usize], truth: &[usize]) -> Result<ClusteringScore> {
    Ok(ClusteringScore {
        ari: adjusted_rand_index(predicted, truth)?,
        nmi: normalized_mutual_info(predicted, truth)?,
    })
}

/// An inclusive frame interval `[start, end]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Event {
    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub precision: f64,
    pub recall: f64,
}

/// Precision: share of summary frames inside at least one event.
/// Recall: share of events containing at least one summary frame.
pub fn event_precision_recall(frames: &[usize], events: &[Event]) -> Result<EventScore> {
    if frames.is_empty() {
        return Err(Error::Undefined("precision of an empty summary"));
    }
    if events.is_empty() {
        return Err(Error::Undefined("recall against an empty event list"));
    }
    let hits = frames
        .iter()
        .filter(|&&f| events.iter().any(|e| e.contains(f)))
        .count();
    let covered = events
        .iter()
        .filter(|e| frames.iter().any(|&f| e.contains(f)))
        .count();
    Ok(EventScore {
        precision: hits as f64 / frames.len() as f64,
        recall: covered as f64 / events.len() as f64,
    })
}
