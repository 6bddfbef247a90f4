//! Exact E-step: Viterbi-style dynamic program over label sequences.

/// Minimizes `sum_t cost[t][k_t] + beta * #{t : k_t != k_{t+1}}` over all
/// label sequences. `cost` is indexed `[window][cluster]`. Ties break toward
/// the lower cluster id, so the result is deterministic.
pub(crate) fn min_cost_labels(cost: &[Vec<f64>], beta: f64) -> Vec<usize> {
    let m = cost.len();
    let k = cost[0].len();
    if k == 1 {
        return vec![0; m];
    }
    let mut dp = cost[0].clone();
    let mut parent = vec![vec![0usize; k]; m];
    for t in 1..m {
        // argmin over previous labels, shared across k.
        let mut best_j = 0;
        for j in 1..k {
            if dp[j] < dp[best_j] {
                best_j = j;
            }
        }
        let mut next = vec![0.0; k];
        for kk in 0..k {
            let stay = dp[kk];
            let switch = dp[best_j] + beta;
            if stay <= switch {
                next[kk] = cost[t][kk] + stay;
                parent[t][kk] = kk;
            } else {
                next[kk] = cost[t][kk] + switch;
                parent[t][kk] = best_j;
            }
        }
        dp = next;
    }
    let mut last = 0;
    for kk in 1..k {
        if dp[kk] < dp[last] {
            last = kk;
        }
    }
    let mut labels = vec![0usize; m];
    labels[m - 1] = last;
    for t in (1..m).rev() {
        labels[t - 1] = parent[t][labels[t]];
    }
    labels
}

/// Objective value of a specific label sequence (test oracle helper).
pub fn sequence_cost(cost: &[Vec<f64>], beta: f64, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (t, &l) in labels.iter().enumerate() {
        total += cost[t][l];
        if t + 1 < labels.len() && labels[t + 1] != l {
            total += beta;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enumerate_best(cost: &[Vec<f64>], beta: f64) -> f64 {
        let m = cost.len();
        let k = cost[0].len();
        let mut best = f64::INFINITY;
        let total = k.pow(m as u32);
        for code in 0..total {
            let mut c = code;
            let labels: Vec<usize> = (0..m)
                .map(|_| {
                    let l = c % k;
                    c /= k;
                    l
                })
                .collect();
            best = best.min(sequence_cost(cost, beta, &labels));
        }
        best
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        // Deterministic pseudo-random costs over a grid of sizes.
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64 * 10.0
        };
        for &(m, k) in &[(5usize, 2usize), (8, 3), (12, 3), (12, 2)] {
            for &beta in &[0.0, 0.7, 3.0, 100.0] {
                let cost: Vec<Vec<f64>> =
                    (0..m).map(|_| (0..k).map(|_| next()).collect()).collect();
                let labels = min_cost_labels(&cost, beta);
                let dp_cost = sequence_cost(&cost, beta, &labels);
                let brute = enumerate_best(&cost, beta);
                assert!(
                    (dp_cost - brute).abs() < 1e-9,
                    "m={m} k={k} beta={beta}: dp {dp_cost} vs brute {brute}"
                );
            }
        }
    }

    #[test]
    fn huge_beta_forbids_switching() {
        let cost = vec![
            vec![0.0, 10.0],
            vec![10.0, 0.0],
            vec![10.0, 0.0],
            vec![0.0, 10.0],
        ];
        let labels = min_cost_labels(&cost, 1e9);
        assert!(labels.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_beta_picks_pointwise_minimum() {
        let cost = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(min_cost_labels(&cost, 0.0), vec![1, 0, 1]);
    }
}
