//! Training-score summaries and paired run comparison.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty score sequence")]
    EmptyScores,
    #[error("seed count mismatch: baseline {0}, treatment {1}")]
    SeedMismatch(usize, usize),
}

/// Per-run score summary.
///
/// `step_of_average` is the 1-based index of the first episode whose score
/// reaches the run's own average; since some element of any sequence is at
/// least the mean, it always exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub average_score: f64,
    pub best_score: f64,
    pub step_of_average: usize,
    pub average_cumulative_score: f64,
}

/// Computes AS, BS, SAS, and ACS of one score sequence.
pub fn compute_metrics(scores: &[f64]) -> Result<Metrics, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let n = scores.len() as f64;
    let average_score = scores.iter().sum::<f64>() / n;
    let best_score = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let step_of_average = scores
        .iter()
        .position(|&s| s >= average_score)
        .map(|i| i + 1)
        .expect("some score is >= the mean");
    let mut cum = 0.0;
    let mut acc = 0.0;
    for &s in scores {
        cum += s;
        acc += cum;
    }
    Ok(Metrics {
        average_score,
        best_score,
        step_of_average,
        average_cumulative_score: acc / n,
    })
}

/// Result of a one-sided Wilcoxon signed-rank test on paired differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n_effective: usize,
    /// One-sided p-value for H1: differences are shifted positive.
    pub p_value: f64,
}

/// One-sided Wilcoxon signed-rank test (normal approximation with tie
/// correction and continuity correction). Zero differences are dropped; an
/// empty effective sample yields p = 1.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> WilcoxonResult {
    let mut nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return WilcoxonResult {
            w_plus: 0.0,
            n_effective: 0,
            p_value: 1.0,
        };
    }
    nonzero.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    // Average ranks over ties on |d|.
    let mut ranks = vec![0.0; n];
    let mut tie_correction = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[j + 1].abs() == nonzero[i].abs() {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = avg;
        }
        let t = (j - i + 1) as f64;
        tie_correction += t * t * t - t;
        i = j + 1;
    }
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction / 48.0;
    if var <= 0.0 {
        return WilcoxonResult {
            w_plus,
            n_effective: n,
            p_value: if w_plus > mean { 0.0 } else { 1.0 },
        };
    }
    let z = (w_plus - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    WilcoxonResult {
        w_plus,
        n_effective: n,
        p_value: 1.0 - normal.cdf(z),
    }
}

/// Medians of each metric over a set of seeded runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianMetrics {
    pub average_score: f64,
    pub best_score: f64,
    pub step_of_average: f64,
    pub average_cumulative_score: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn median_metrics(runs: &[Metrics]) -> MedianMetrics {
    let mut a: Vec<f64> = runs.iter().map(|m| m.average_score).collect();
    let mut b: Vec<f64> = runs.iter().map(|m| m.best_score).collect();
    let mut s: Vec<f64> = runs.iter().map(|m| m.step_of_average as f64).collect();
    let mut c: Vec<f64> = runs.iter().map(|m| m.average_cumulative_score).collect();
    MedianMetrics {
        average_score: median(&mut a),
        best_score: median(&mut b),
        step_of_average: median(&mut s),
        average_cumulative_score: median(&mut c),
    }
}

/// Paired comparison of two groups of seeded runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: MedianMetrics,
    pub treatment: MedianMetrics,
    /// Per seed: first 1-based episode where the baseline run reaches its own
    /// average score.
    pub baseline_episodes_to_threshold: Vec<usize>,
    /// Per seed: first 1-based episode where the treatment run reaches the
    /// paired baseline's average score; `len + 1` when never reached.
    pub treatment_episodes_to_threshold: Vec<usize>,
    /// H1: treatment average score exceeds baseline.
    pub p_average_score: f64,
    /// H1: treatment reaches the baseline's average score in fewer episodes.
    pub p_episodes_to_threshold: f64,
}

/// First 1-based index reaching `threshold`, or `len + 1` if never reached.
pub fn episodes_to_threshold(scores: &[f64], threshold: f64) -> usize {
    scores
        .iter()
        .position(|&s| s >= threshold)
        .map(|i| i + 1)
        .unwrap_or(scores.len() + 1)
}

/// Compares paired seeded runs: per-metric medians, episodes to the
/// baseline-average threshold, and one-sided Wilcoxon p-values on the pairs.
pub fn compare_runs(
    baseline: &[Vec<f64>],
    treatment: &[Vec<f64>],
) -> Result<ComparisonReport, MetricsError> {
    if baseline.len() != treatment.len() {
        return Err(MetricsError::SeedMismatch(baseline.len(), treatment.len()));
    }
    if baseline.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let base_metrics: Vec<Metrics> = baseline
        .iter()
        .map(|s| compute_metrics(s))
        .collect::<Result<_, _>>()?;
    let treat_metrics: Vec<Metrics> = treatment
        .iter()
        .map(|s| compute_metrics(s))
        .collect::<Result<_, _>>()?;
    let mut base_eps = Vec::with_capacity(baseline.len());
    let mut treat_eps = Vec::with_capacity(baseline.len());
    for (b, (t, bm)) in baseline.iter().zip(treatment.iter().zip(&base_metrics)) {
        base_eps.push(episodes_to_threshold(b, bm.average_score));
        treat_eps.push(episodes_to_threshold(t, bm.average_score));
    }
    let as_diffs: Vec<f64> = treat_metrics
        .iter()
        .zip(&base_metrics)
        .map(|(t, b)| t.average_score - b.average_score)
        .collect();
    let ep_diffs: Vec<f64> = base_eps
        .iter()
        .zip(&treat_eps)
        .map(|(b, t)| *b as f64 - *t as f64)
        .collect();
    Ok(ComparisonReport {
        baseline: median_metrics(&base_metrics),
        treatment: median_metrics(&treat_metrics),
        baseline_episodes_to_threshold: base_eps,
        treatment_episodes_to_threshold: treat_eps,
        p_average_score: wilcoxon_signed_rank(&as_diffs).p_value,
        p_episodes_to_threshold: wilcoxon_signed_rank(&ep_diffs).p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn metrics_hand_computed() {
        let m = compute_metrics(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.average_score, 2.0);
        assert_eq!(m.best_score, 3.0);
        assert_eq!(m.step_of_average, 2);
        assert_relative_eq!(m.average_cumulative_score, 10.0 / 3.0);

        let m = compute_metrics(&[5.0, 5.0]).unwrap();
        assert_eq!(m.average_score, 5.0);
        assert_eq!(m.best_score, 5.0);
        assert_eq!(m.step_of_average, 1);
        assert_eq!(m.average_cumulative_score, 7.5);

        let m = compute_metrics(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.average_score, 2.0);
        assert_eq!(m.best_score, 3.0);
        assert_eq!(m.step_of_average, 1);
        assert_relative_eq!(m.average_cumulative_score, 13.0 / 3.0);
    }

    #[test]
    fn metrics_empty_errors() {
        assert!(matches!(compute_metrics(&[]), Err(MetricsError::EmptyScores)));
    }

    #[test]
    fn identical_runs_not_significant() {
        let runs: Vec<Vec<f64>> = (0..10).map(|s| vec![s as f64, 1.0, 2.0]).collect();
        let rep = compare_runs(&runs, &runs).unwrap();
        assert_eq!(rep.p_average_score, 1.0);
        assert_eq!(rep.baseline.average_score, rep.treatment.average_score);
    }

    #[test]
    fn dominated_pairs_significant() {
        let baseline: Vec<Vec<f64>> = (0..20)
            .map(|s| (0..30).map(|i| ((s * 7 + i * 13) % 11) as f64).collect())
            .collect();
        let treatment: Vec<Vec<f64>> = baseline
            .iter()
            .map(|run| run.iter().map(|v| v + 1.0).collect())
            .collect();
        let rep = compare_runs(&baseline, &treatment).unwrap();
        assert!(rep.treatment.average_score > rep.baseline.average_score);
        assert!(rep.p_average_score < 0.05, "p = {}", rep.p_average_score);
    }

    #[test]
    fn wilcoxon_matches_hand_computed_ranks() {
        // Differences: 3, -1, 2, 4, -2. |d| sorted: 1, 2, 2, 3, 4 with
        // average rank 2.5 for the tied pair. Positive ranks: 2 -> 2.5,
        // 3 -> 4, 4 -> 5, so W+ = 11.5.
        let r = wilcoxon_signed_rank(&[3.0, -1.0, 2.0, 4.0, -2.0]);
        assert_eq!(r.w_plus, 11.5);
        assert_eq!(r.n_effective, 5);
        assert!(r.p_value > 0.05 && r.p_value < 0.5);
    }

    #[test]
    fn wilcoxon_twenty_dominated_pairs() {
        // All differences +1: W+ = 210, tie-corrected variance
        // 717.5 - (8000 - 20)/48 = 551.25.
        let r = wilcoxon_signed_rank(&[1.0; 20]);
        assert_eq!(r.w_plus, 210.0);
        let expected_z = (210.0 - 105.0 - 0.5) / 551.25_f64.sqrt();
        assert!(expected_z > 4.0);
        assert!(r.p_value < 1e-4);
    }

    #[test]
    fn seed_mismatch_rejected() {
        let a = vec![vec![1.0]; 3];
        let b = vec![vec![1.0]; 2];
        assert!(matches!(compare_runs(&a, &b), Err(MetricsError::SeedMismatch(3, 2))));
    }
}
