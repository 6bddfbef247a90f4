//! Seeded synthetic fixtures with planted ground truth: regime-switching
//! series for segmentation, motif families for factor clustering, structural
//! causal models for discovery, and randomized PAG/occurrence pairs for the
//! time-correction invariants. Each generator returns the ground truth it
//! planted so tests can score against it.

use crate::causal::{CausalDataset, EndpointMark, Pag};
use crate::series::{ActionTimeSeries, Subsequence};
use crate::tscf::OccurrenceMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two-regime 2-d series: independent unit Gaussians for frames
/// `0..split`, then strongly cross-correlated (rho = 0.9) Gaussians.
/// Returns the series and the per-frame regime label.
pub fn two_regime_series(n: usize, split: usize, seed: u64) -> (ActionTimeSeries, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for t in 0..n {
        let z1 = normal(&mut rng);
        let z2 = normal(&mut rng);
        if t < split {
            frames.push(vec![z1, z2]);
            truth.push(0);
        } else {
            frames.push(vec![z1, 0.9 * z1 + (1.0 - 0.81f64).sqrt() * z2]);
            truth.push(1);
        }
    }
    (
        ActionTimeSeries::new(0, frames, 0.0).unwrap(),
        truth,
    )
}

/// Three equal blocks: independent, correlated (rho = 0.9), and
/// anti-correlated (rho = -0.9) 2-d Gaussians.
pub fn three_regime_series(n: usize, seed: u64) -> (ActionTimeSeries, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = n / 3;
    let mut frames = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for t in 0..n {
        let regime = (t / block).min(2);
        let z1 = normal(&mut rng);
        let z2 = normal(&mut rng);
        let rho: f64 = match regime {
            0 => 0.0,
            1 => 0.9,
            _ => -0.9,
        };
        frames.push(vec![z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2]);
        truth.push(regime);
    }
    (ActionTimeSeries::new(0, frames, 0.0).unwrap(), truth)
}

/// Macro-F1 between predicted and true labelings under the best label
/// permutation (k <= 8). Classes are those present in the truth.
pub fn macro_f1(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    assert!(k <= 8 && pred.len() == truth.len());
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let mut best = 0.0f64;
    for perm in permutations(k) {
        let mut score = 0.0;
        let mut classes = 0;
        for c in 0..k {
            if !truth.contains(&c) {
                continue;
            }
            classes += 1;
            let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
            for (&p, &t) in pred.iter().zip(truth) {
                let p = perm[p];
                match (p == c, t == c) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fnn += 1.0,
                    _ => {}
                }
            }
            if 2.0 * tp + fp + fnn > 0.0 {
                score += 2.0 * tp / (2.0 * tp + fp + fnn);
            }
        }
        best = best.max(score / classes as f64);
    }
    best
}

/// Two well-separated motif families: flat segments around zero and rising
/// ramps, `per_family` of each with additive noise. Returns segments and
/// their family label.
pub fn motif_families(per_family: usize, noise: f64, seed: u64) -> (Vec<Subsequence>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * per_family {
        let family = i % 2;
        let len = 8 + (i % 4);
        let values: Vec<Vec<f64>> = (0..len)
            .map(|t| {
                let base = if family == 0 {
                    0.0
                } else {
                    t as f64 / (len - 1) as f64
                };
                vec![base + noise * normal(&mut rng)]
            })
            .collect();
        segments.push(Subsequence::new(i as u64, 0, len - 1, values).unwrap());
        labels.push(family);
    }
    (segments, labels)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn flip(rng: &mut ChaCha8Rng, value: bool, p: f64) -> bool {
    if bernoulli(rng, p) {
        !value
    } else {
        value
    }
}

/// Fork `U -> A`, `U -> B` over binary columns `[U, A, B]` with an
/// independent-noise outcome. Returns the dataset and the true skeleton over
/// node indices (outcome node = 3).
pub fn fork_scm(n: usize, seed: u64) -> (CausalDataset, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let uv = bernoulli(&mut rng, 0.5);
        u.push(uv);
        a.push(flip(&mut rng, uv, 0.1));
        b.push(flip(&mut rng, uv, 0.1));
        y.push(normal(&mut rng));
    }
    (
        CausalDataset::new(vec![u, a, b], y).unwrap(),
        vec![(0, 1), (0, 2)],
    )
}

/// Chain `A -> B -> Y` over binary columns `[A, B]` and the continuous
/// outcome (node 2).
pub fn chain_scm(n: usize, seed: u64) -> (CausalDataset, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let av = bernoulli(&mut rng, 0.5);
        let bv = flip(&mut rng, av, 0.1);
        a.push(av);
        b.push(bv);
        y.push(2.0 * bv as u8 as f64 + 0.5 * normal(&mut rng));
    }
    (
        CausalDataset::new(vec![a, b], y).unwrap(),
        vec![(0, 1), (1, 2)],
    )
}

/// Diamond `A -> B -> Y`, `A -> C -> Y` over binary columns `[A, B, C]`
/// (outcome node 3). Direct effects: `y = 1.0*B + 0.5*C + noise`.
pub fn diamond_scm(n: usize, seed: u64) -> (CausalDataset, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let av = bernoulli(&mut rng, 0.5);
        let bv = flip(&mut rng, av, 0.15);
        let cv = flip(&mut rng, av, 0.15);
        a.push(av);
        b.push(bv);
        c.push(cv);
        y.push(1.0 * bv as u8 as f64 + 0.5 * cv as u8 as f64 + 0.3 * normal(&mut rng));
    }
    (
        CausalDataset::new(vec![a, b, c], y).unwrap(),
        vec![(0, 1), (0, 2), (1, 3), (2, 3)],
    )
}

/// Confounded pair: confounder `C` (column 0) drives treatment `U`
/// (column 1, flip prob `flip_p`) and adds `gamma` to the outcome, while the
/// planted direct effect of `U` is `tau`.
///
/// The closed-form confounding bias of the unadjusted difference of means is
/// `gamma * (1 - 2 * flip_p)`.
pub fn confounded_scm(
    n: usize,
    tau: f64,
    gamma: f64,
    flip_p: f64,
    seed: u64,
) -> CausalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let cv = bernoulli(&mut rng, 0.5);
        let uv = flip(&mut rng, cv, flip_p);
        c.push(cv);
        u.push(uv);
        y.push(tau * uv as u8 as f64 + gamma * cv as u8 as f64 + 0.1 * normal(&mut rng));
    }
    CausalDataset::new(vec![c, u], y).unwrap()
}

/// Single treatment with linear effect: `y = tau * U + sigma * noise`.
pub fn linear_effect_scm(n: usize, tau: f64, sigma: f64, seed: u64) -> CausalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let uv = bernoulli(&mut rng, 0.5);
        u.push(uv);
        y.push(tau * uv as u8 as f64 + sigma * normal(&mut rng));
    }
    CausalDataset::new(vec![u], y).unwrap()
}

/// `k` independent fair-coin columns and an independent Gaussian outcome.
pub fn independent_scm(n: usize, k: usize, seed: u64) -> CausalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (0..k)
        .map(|_| (0..n).map(|_| bernoulli(&mut rng, 0.5)).collect())
        .collect();
    let y = (0..n).map(|_| normal(&mut rng)).collect();
    CausalDataset::new(cols, y).unwrap()
}

/// Random PAG over 3-8 factors plus the outcome, with marks drawn from the
/// four edge types, paired with a random occurrence map over 40 episodes.
/// Exercises every branch of time correction, including never-co-occurring
/// pairs.
pub fn random_pag_with_occurrences(seed: u64) -> (Pag, OccurrenceMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(3..=8);
    let outcome = k;
    let mut pag = Pag::new(k + 1, outcome);
    for a in 0..k + 1 {
        for b in a + 1..k + 1 {
            if !bernoulli(&mut rng, 0.4) {
                continue;
            }
            use EndpointMark::*;
            let marks = match rng.random_range(0..4) {
                0 => (Circle, Circle),
                1 => (Circle, Arrow),
                2 => (Arrow, Arrow),
                _ => (Tail, Arrow),
            };
            if bernoulli(&mut rng, 0.5) {
                pag.set_edge(a, b, marks.0, marks.1);
            } else {
                pag.set_edge(a, b, marks.1, marks.0);
            }
        }
    }
    let mut occ = OccurrenceMap::new(3);
    for factor in 0..k {
        // A few factors are rare so some pairs never co-occur.
        let presence = if factor % 3 == 2 { 0.15 } else { 0.7 };
        for episode in 0..40u64 {
            if bernoulli(&mut rng, presence) {
                let start = rng.random_range(0..50);
                let len = rng.random_range(1..6);
                occ.add(episode, factor, (start, start + len));
            }
        }
    }
    (pag, occ)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macro_f1_perfect_and_permuted() {
        let truth = [0, 0, 1, 1, 1];
        assert_eq!(macro_f1(&[0, 0, 1, 1, 1], &truth, 2), 1.0);
        assert_eq!(macro_f1(&[1, 1, 0, 0, 0], &truth, 2), 1.0);
        assert!(macro_f1(&[0, 1, 0, 1, 0], &truth, 2) < 0.6);
    }

    #[test]
    fn confounded_bias_matches_closed_form() {
        let ds = confounded_scm(200_000, 2.0, 1.5, 0.2, 1);
        // Empirical unadjusted effect = tau + gamma * (1 - 2 * flip_p).
        let u = ds.treatment(1);
        let y = ds.outcome();
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for (uv, yv) in u.iter().zip(y) {
            if *uv {
                s1 += yv;
                n1 += 1.0;
            } else {
                s0 += yv;
                n0 += 1.0;
            }
        }
        let unadjusted = s1 / n1 - s0 / n0;
        let expected = 2.0 + 1.5 * (1.0 - 0.4);
        assert!((unadjusted - expected).abs() < 0.05, "{unadjusted} vs {expected}");
    }

    #[test]
    fn generators_are_deterministic() {
        let (a, _) = two_regime_series(50, 25, 4);
        let (b, _) = two_regime_series(50, 25, 4);
        assert_eq!(a.frames(), b.frames());
        let (p1, o1) = random_pag_with_occurrences(9);
        let (p2, o2) = random_pag_with_occurrences(9);
        assert_eq!(p1, p2);
        assert_eq!(o1, o2);
    }
}
