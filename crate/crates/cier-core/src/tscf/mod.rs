//! Time-series causal factors: DTW medoid clustering of per-episode segments
//! into a shared factor dictionary, plus binary presence encodings.

mod dtw;

pub use dtw::dtw;

use crate::parallel;
use crate::series::Subsequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TscfError {
    #[error("segment dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("{available} segments cannot fill {requested} factors; lower k_prime")]
    ReduceKPrime { requested: usize, available: usize },
    #[error("no segments to cluster")]
    NoSegments,
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
}

/// One time-series causal factor: a cluster of similar subsequences
/// represented by its medoid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tscf {
    pub id: usize,
    pub medoid: Subsequence,
    pub members: Vec<Subsequence>,
    pub mean_length: f64,
}

/// The factor dictionary produced by one analysis round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TscfDictionary {
    pub factors: Vec<Tscf>,
}

impl TscfDictionary {
    pub fn k_prime(&self) -> usize {
        self.factors.len()
    }
}

/// Binary factor-presence encoding of one episode, with its return as the
/// outcome variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEncoding {
    pub episode_id: u64,
    pub presence: Vec<bool>,
    pub outcome: f64,
}

/// Where each factor occurs in each episode, as inclusive window-index
/// intervals. `window` is the segmentation window length, so the transitions
/// covered by interval `[s, e]` are frames `s ..= e + window - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceMap {
    window: usize,
    map: BTreeMap<(u64, usize), Vec<(usize, usize)>>,
}

impl OccurrenceMap {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1);
        Self {
            window,
            map: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn add(&mut self, episode: u64, factor: usize, interval: (usize, usize)) {
        assert!(interval.0 <= interval.1);
        self.map.entry((episode, factor)).or_default().push(interval);
    }

    pub fn intervals(&self, episode: u64, factor: usize) -> &[(usize, usize)] {
        self.map.get(&(episode, factor)).map_or(&[], Vec::as_slice)
    }

    /// Inclusive frame/transition ranges covered by this factor's windows.
    pub fn frame_cover(&self, episode: u64, factor: usize) -> Vec<(usize, usize)> {
        self.intervals(episode, factor)
            .iter()
            .map(|&(s, e)| (s, e + self.window - 1))
            .collect()
    }

    /// First window index at which `factor` occurs in `episode`, if ever.
    pub fn first_occurrence(&self, episode: u64, factor: usize) -> Option<usize> {
        self.intervals(episode, factor).iter().map(|&(s, _)| s).min()
    }

    pub fn episode_ids(&self) -> BTreeSet<u64> {
        self.map.keys().map(|(e, _)| *e).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u64, usize), &Vec<(usize, usize)>)> {
        self.map.iter()
    }
}

/// `K' = round(mean(per-episode K))`, rounding half up, at least 1.
pub fn choose_k_prime(per_episode_k: &[usize]) -> usize {
    assert!(!per_episode_k.is_empty(), "need at least one episode");
    let mean = per_episode_k.iter().sum::<usize>() as f64 / per_episode_k.len() as f64;
    ((mean + 0.5).floor() as usize).max(1)
}

/// Merges segments spanning fewer than `min_windows` windows into their
/// temporal successor within the same episode (the last segment merges into
/// its predecessor). One-window stragglers otherwise destabilize DTW.
pub fn merge_short_segments(segments: &[Subsequence], min_windows: usize) -> Vec<Subsequence> {
    let mut out: Vec<Subsequence> = Vec::with_capacity(segments.len());
    let mut pending: Option<Subsequence> = None;
    let flush_into = |acc: &mut Vec<Subsequence>, short: Subsequence| {
        // No successor in this episode: fold into the predecessor if any.
        if let Some(prev) = acc.last_mut() {
            if prev.episode_id == short.episode_id && prev.end + 1 == short.start {
                prev.end = short.end;
                prev.values.extend(short.values);
                return;
            }
        }
        acc.push(short);
    };
    for seg in segments {
        if let Some(p) = pending.take() {
            if p.episode_id == seg.episode_id && p.end + 1 == seg.start {
                let mut merged = seg.clone();
                merged.start = p.start;
                let mut values = p.values;
                values.extend(merged.values);
                merged.values = values;
                if merged.len() < min_windows {
                    pending = Some(merged);
                } else {
                    out.push(merged);
                }
                continue;
            }
            flush_into(&mut out, p);
        }
        if seg.len() < min_windows {
            pending = Some(seg.clone());
        } else {
            out.push(seg.clone());
        }
    }
    if let Some(p) = pending {
        flush_into(&mut out, p);
    }
    out
}

/// K-medoids under DTW.
///
/// Medoids are seeded by greedy max-min (farthest-point) selection from a
/// seeded random start, then assignment and medoid-update steps alternate to
/// a fixed point (at most 50 iterations). The total within-cluster DTW cost
/// is non-increasing per iteration. All ties break toward the lower index,
/// so the result is deterministic given the seed.
pub fn cluster_factors(
    segments: &[Subsequence],
    k_prime: usize,
    seed: u64,
) -> Result<TscfDictionary, TscfError> {
    if segments.is_empty() {
        return Err(TscfError::NoSegments);
    }
    if k_prime == 0 || k_prime > segments.len() {
        return Err(TscfError::ReduceKPrime {
            requested: k_prime,
            available: segments.len(),
        });
    }
    let d = segments[0].dim();
    for s in segments {
        if s.dim() != d {
            return Err(TscfError::DimensionMismatch(d, s.dim()));
        }
    }
    let n = segments.len();
    let dist = pairwise_dtw(segments);
    let at = |i: usize, j: usize| dist[i * n + j];

    // Farthest-point seeding.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = vec![rng.random_range(0..n)];
    while medoids.len() < k_prime {
        let (next, _) = (0..n)
            .map(|i| {
                let dmin = medoids
                    .iter()
                    .map(|&m| at(i, m))
                    .fold(f64::INFINITY, f64::min);
                (i, dmin)
            })
            .fold((0, f64::NEG_INFINITY), |best, cand| {
                if cand.1 > best.1 {
                    cand
                } else {
                    best
                }
            });
        medoids.push(next);
    }
    medoids.sort_unstable();

    let assign = |medoids: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (k, &m) in medoids.iter().enumerate() {
                    let dd = at(i, m);
                    if dd < best_d {
                        best_d = dd;
                        best = k;
                    }
                }
                best
            })
            .collect()
    };

    let mut labels = assign(&medoids);
    for _ in 0..50 {
        // Medoid update: member minimizing summed DTW to co-members.
        let members: Vec<Vec<usize>> = (0..k_prime)
            .map(|k| (0..n).filter(|&i| labels[i] == k).collect())
            .collect();
        let new_medoids: Vec<usize> = parallel::map_range(k_prime, |k| {
            let ms = &members[k];
            if ms.is_empty() {
                return medoids[k];
            }
            let mut best = ms[0];
            let mut best_cost = f64::INFINITY;
            for &cand in ms {
                let cost: f64 = ms.iter().map(|&j| at(cand, j)).sum();
                if cost < best_cost {
                    best_cost = cost;
                    best = cand;
                }
            }
            best
        });
        let new_labels = assign(&new_medoids);
        let converged = new_medoids == medoids && new_labels == labels;
        medoids = new_medoids;
        labels = new_labels;
        if converged {
            break;
        }
    }

    let factors = (0..k_prime)
        .map(|k| {
            let members: Vec<Subsequence> = (0..n)
                .filter(|&i| labels[i] == k)
                .map(|i| segments[i].clone())
                .collect();
            let mean_length =
                members.iter().map(|s| s.len() as f64).sum::<f64>() / members.len().max(1) as f64;
            Tscf {
                id: k,
                medoid: segments[medoids[k]].clone(),
                members,
                mean_length,
            }
        })
        .collect();
    Ok(TscfDictionary { factors })
}

/// Full pairwise DTW matrix, row-major. Pairs are evaluated in parallel when
/// the `parallel` feature is on; the output is identical either way.
pub fn pairwise_dtw(segments: &[Subsequence]) -> Vec<f64> {
    let n = segments.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let vals = parallel::map_slice(&pairs, |&(i, j)| {
        dtw::dtw_frames(&segments[i].values, &segments[j].values, None)
    });
    let mut dist = vec![0.0; n * n];
    for (&(i, j), &v) in pairs.iter().zip(&vals) {
        dist[i * n + j] = v;
        dist[j * n + i] = v;
    }
    dist
}

/// Builds per-episode binary encodings and the occurrence map from a factor
/// dictionary. `episode_outcomes` lists every episode of the corpus with its
/// return; a dictionary member referencing an unknown episode is an
/// inconsistency.
pub fn encode_episodes(
    dictionary: &TscfDictionary,
    episode_outcomes: &[(u64, f64)],
    window: usize,
) -> Result<(Vec<EpisodeEncoding>, OccurrenceMap), TscfError> {
    let k_prime = dictionary.k_prime();
    let index: BTreeMap<u64, usize> = episode_outcomes
        .iter()
        .enumerate()
        .map(|(i, (e, _))| (*e, i))
        .collect();
    let mut presence = vec![vec![false; k_prime]; episode_outcomes.len()];
    let mut occ = OccurrenceMap::new(window);
    for (k, factor) in dictionary.factors.iter().enumerate() {
        if factor.id != k {
            return Err(TscfError::InternalInconsistency(format!(
                "factor ids not dense: expected {k}, got {}",
                factor.id
            )));
        }
        if factor.members.is_empty() {
            continue;
        }
        for m in &factor.members {
            let row = *index.get(&m.episode_id).ok_or_else(|| {
                TscfError::InternalInconsistency(format!(
                    "segment references unknown episode {}",
                    m.episode_id
                ))
            })?;
            presence[row][k] = true;
            occ.add(m.episode_id, k, (m.start, m.end));
        }
    }
    let encodings = episode_outcomes
        .iter()
        .zip(presence)
        .map(|(&(episode_id, outcome), presence)| EpisodeEncoding {
            episode_id,
            presence,
            outcome,
        })
        .collect();
    Ok((encodings, occ))
}

/// Writes the dictionary as JSON: per-factor medoid frames, member counts,
/// and mean lengths.
pub fn write_dictionary_json<W: Write>(
    out: W,
    dictionary: &TscfDictionary,
) -> serde_json::Result<()> {
    let doc: Vec<_> = dictionary
        .factors
        .iter()
        .map(|f| {
            serde_json::json!({
                "factor": f.id,
                "medoid_episode": f.medoid.episode_id,
                "medoid_frames": f.medoid.values,
                "member_count": f.members.len(),
                "mean_length": f.mean_length,
            })
        })
        .collect();
    serde_json::to_writer_pretty(out, &doc)
}

/// Writes the encoding matrix CSV: `episode,U0..U{K'-1},outcome`.
pub fn write_encodings_csv<W: Write>(
    mut out: W,
    encodings: &[EpisodeEncoding],
) -> std::io::Result<()> {
    let k_prime = encodings.first().map_or(0, |e| e.presence.len());
    let header: Vec<String> = std::iter::once("episode".to_string())
        .chain((0..k_prime).map(|k| format!("U{k}")))
        .chain(std::iter::once("outcome".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for e in encodings {
        let row: Vec<String> = std::iter::once(e.episode_id.to_string())
            .chain(e.presence.iter().map(|p| if *p { "1".into() } else { "0".into() }))
            .chain(std::iter::once(format!("{:?}", e.outcome)))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn seg(episode: u64, start: usize, vals: &[f64]) -> Subsequence {
        Subsequence::new(
            episode,
            start,
            start + vals.len() - 1,
            vals.iter().map(|v| vec![*v]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn k_prime_rounds_half_up() {
        assert_eq!(choose_k_prime(&[4, 4, 4]), 4);
        assert_eq!(choose_k_prime(&[2, 3]), 3);
        assert_eq!(choose_k_prime(&[10, 2, 3]), 5);
    }

    #[test]
    fn two_motif_families_perfect_purity() {
        let (segments, truth) = synthetic::motif_families(20, 0.01, 99);
        let dict = cluster_factors(&segments, 2, 7).unwrap();
        // Independent oracle: generator family labels.
        let mut purity_num = 0usize;
        for f in &dict.factors {
            let mut counts = [0usize; 2];
            for m in &f.members {
                let idx = segments.iter().position(|s| s == m).unwrap();
                counts[truth[idx]] += 1;
            }
            purity_num += counts[0].max(counts[1]);
        }
        assert_eq!(purity_num, segments.len(), "purity must be 1.0");
    }

    #[test]
    fn singleton_factors_have_zero_cost() {
        let segments: Vec<_> = (0..4).map(|i| seg(i, 0, &[i as f64, i as f64 + 1.0])).collect();
        let dict = cluster_factors(&segments, 4, 0).unwrap();
        assert_eq!(dict.k_prime(), 4);
        for f in &dict.factors {
            assert_eq!(f.members.len(), 1);
            assert_eq!(f.medoid, f.members[0]);
        }
    }

    #[test]
    fn identical_segments_single_factor() {
        let segments: Vec<_> = (0..5).map(|i| seg(i, 0, &[1.0, 2.0, 3.0])).collect();
        let dict = cluster_factors(&segments, 1, 3).unwrap();
        assert_eq!(dict.factors[0].members.len(), 5);
        let m = &dict.factors[0].medoid;
        assert_eq!(m.values, segments[0].values);
    }

    #[test]
    fn too_few_segments_reduces_k_prime() {
        let segments = vec![seg(0, 0, &[1.0])];
        assert!(matches!(
            cluster_factors(&segments, 2, 0),
            Err(TscfError::ReduceKPrime { requested: 2, available: 1 })
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let (segments, _) = synthetic::motif_families(10, 0.05, 5);
        let a = cluster_factors(&segments, 2, 11).unwrap();
        let b = cluster_factors(&segments, 2, 11).unwrap();
        for (fa, fb) in a.factors.iter().zip(&b.factors) {
            assert_eq!(fa.medoid, fb.medoid);
            assert_eq!(fa.members.len(), fb.members.len());
        }
    }

    #[test]
    fn encoding_matches_membership() {
        let dict = TscfDictionary {
            factors: vec![
                Tscf {
                    id: 0,
                    medoid: seg(1, 0, &[0.0, 0.0]),
                    members: vec![seg(1, 0, &[0.0, 0.0]), seg(2, 3, &[0.1, 0.1])],
                    mean_length: 2.0,
                },
                Tscf {
                    id: 1,
                    medoid: seg(1, 2, &[5.0, 5.0]),
                    members: vec![seg(1, 2, &[5.0, 5.0]), seg(1, 6, &[5.1, 5.2])],
                    mean_length: 2.0,
                },
                Tscf {
                    id: 2,
                    medoid: seg(2, 0, &[9.0]),
                    members: vec![seg(2, 0, &[9.0, 9.0])],
                    mean_length: 2.0,
                },
            ],
        };
        let (enc, occ) = encode_episodes(&dict, &[(1, 10.0), (2, -1.0)], 3).unwrap();
        assert_eq!(enc[0].presence, vec![true, true, false]);
        assert_eq!(enc[1].presence, vec![true, false, true]);
        assert_eq!(enc[0].outcome, 10.0);
        // Episode 1 hosts two separate occurrences of factor 1.
        assert_eq!(occ.intervals(1, 1).len(), 2);
        assert_eq!(occ.first_occurrence(1, 1), Some(2));
        assert_eq!(occ.frame_cover(2, 0), vec![(3, 6)]);
        // Presence and occurrences must agree everywhere.
        for (row, e) in enc.iter().enumerate() {
            for k in 0..3 {
                assert_eq!(
                    e.presence[k],
                    !occ.intervals(enc[row].episode_id, k).is_empty()
                );
            }
        }
    }

    #[test]
    fn encoding_rejects_unknown_episode() {
        let dict = TscfDictionary {
            factors: vec![Tscf {
                id: 0,
                medoid: seg(9, 0, &[0.0]),
                members: vec![seg(9, 0, &[0.0])],
                mean_length: 1.0,
            }],
        };
        assert!(matches!(
            encode_episodes(&dict, &[(1, 0.0)], 3),
            Err(TscfError::InternalInconsistency(_))
        ));
    }

    #[test]
    fn merge_short_segments_folds_forward() {
        let segs = vec![
            seg(0, 0, &[1.0]),
            seg(0, 1, &[2.0, 3.0, 4.0]),
            seg(0, 4, &[5.0, 6.0]),
            seg(0, 6, &[7.0]),
        ];
        let merged = merge_short_segments(&segs, 3);
        assert_eq!(merged.len(), 2);
        assert_eq!((merged[0].start, merged[0].end), (0, 3));
        assert_eq!((merged[1].start, merged[1].end), (4, 6));
        assert_eq!(merged[1].values, vec![vec![5.0], vec![6.0], vec![7.0]]);
    }

    #[test]
    fn medoid_iteration_cost_non_increasing() {
        let (segments, _) = synthetic::motif_families(15, 0.2, 21);
        let dist = pairwise_dtw(&segments);
        let n = segments.len();
        let dict = cluster_factors(&segments, 3, 1).unwrap();
        // Final configuration is a fixed point: reassigning to final medoids
        // does not lower the cost.
        let medoid_idx: Vec<usize> = dict
            .factors
            .iter()
            .map(|f| segments.iter().position(|s| *s == f.medoid).unwrap())
            .collect();
        let cost: f64 = dict
            .factors
            .iter()
            .enumerate()
            .map(|(k, f)| {
                f.members
                    .iter()
                    .map(|m| {
                        let i = segments.iter().position(|s| s == m).unwrap();
                        dist[i * n + medoid_idx[k]]
                    })
                    .sum::<f64>()
            })
            .sum();
        let best_cost: f64 = (0..n)
            .map(|i| {
                medoid_idx
                    .iter()
                    .map(|&m| dist[i * n + m])
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        assert!(cost <= best_cost + 1e-9);
    }
}
