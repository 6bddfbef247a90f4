//! The causal replay weight tree: a ring buffer of transitions sampled
//! through a priority sum tree whose weights blend causal strengths, TD error
//! magnitudes, and a uniform floor under a curriculum schedule.

mod sum_tree;

pub use sum_tree::SumTree;

use crate::causal::CausalEffectTable;
use crate::series::Transition;
use crate::tscf::OccurrenceMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("not enough experience: stored {stored}, batch {batch}")]
    NotEnoughExperience { stored: usize, batch: usize },
    #[error("invalid replay config: {0}")]
    ConfigError(String),
}

/// Quarter-ellipse curriculum schedule: full causal influence at epoch 0,
/// none at `epsilon_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub epsilon_max: usize,
    pub eta: f64,
}

impl CurriculumSchedule {
    pub fn new(epsilon_max: usize, eta: f64) -> Self {
        assert!(epsilon_max > 0 && eta > 0.0);
        Self { epsilon_max, eta }
    }

    /// `mu = eta / eps_max * sqrt(eps_max^2 - eps_c^2)`, with `eps_c` clamped
    /// into `[0, eps_max]`. Returns the value and whether clamping fired.
    pub fn mu_clamped(&self, epsilon_c: usize) -> (f64, bool) {
        let clamped = epsilon_c > self.epsilon_max;
        let ec = epsilon_c.min(self.epsilon_max) as f64;
        let em = self.epsilon_max as f64;
        (self.eta / em * (em * em - ec * ec).sqrt(), clamped)
    }

    pub fn mu(&self, epsilon_c: usize) -> f64 {
        self.mu_clamped(epsilon_c).0
    }
}

/// How final sampling priorities are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Every stored transition equally likely.
    Uniform,
    /// Proportional to `(|td| + eps)^alpha`.
    Per,
    /// Curriculum-scaled causal weights blended with a uniform floor.
    Cier,
    /// Linear combination of normalized TD and causal terms, plus the floor.
    Ciper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub temp_capacity: usize,
    pub batch: usize,
    pub mode: SampleMode,
    /// Uniform blend weight; must be positive in cier/ciper modes so every
    /// stored transition keeps sampling support.
    pub lambda_u: f64,
    pub per_alpha: f64,
    /// Initial importance-sampling exponent, annealed linearly to 1 at
    /// `epsilon_max`.
    pub per_beta0: f64,
    pub per_epsilon: f64,
    pub td_coeff: f64,
    pub causal_coeff: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 1_000_000,
            temp_capacity: 100_000,
            batch: 256,
            mode: SampleMode::Cier,
            lambda_u: 0.3,
            per_alpha: 0.6,
            per_beta0: 0.4,
            per_epsilon: 1e-3,
            td_coeff: 0.5,
            causal_coeff: 0.5,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        let err = |m: &str| Err(ReplayError::ConfigError(m.to_string()));
        if self.capacity == 0 || self.batch == 0 {
            return err("capacity and batch must be positive");
        }
        if self.temp_capacity == 0 || self.temp_capacity > self.capacity {
            return err("temp_capacity must be in 1..=capacity");
        }
        if !(0.0..=1.0).contains(&self.lambda_u) {
            return err("lambda_u must be in [0, 1]");
        }
        if matches!(self.mode, SampleMode::Cier | SampleMode::Ciper) && self.lambda_u == 0.0 {
            return err("lambda_u must be > 0 in cier/ciper to keep full exploration support");
        }
        if self.per_alpha < 0.0 || self.per_epsilon <= 0.0 {
            return err("per_alpha must be >= 0 and per_epsilon > 0");
        }
        if !(0.0..=1.0).contains(&self.per_beta0) {
            return err("per_beta0 must be in [0, 1]");
        }
        if self.td_coeff < 0.0 || self.causal_coeff < 0.0 {
            return err("td_coeff and causal_coeff must be >= 0");
        }
        Ok(())
    }
}

/// Episodes to re-analyze, emitted when the temporary buffer pool fills.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisRequest {
    pub episodes: Vec<u64>,
}

/// A sampled minibatch: buffer slots plus importance-sampling weights
/// (all ones outside per/ciper modes).
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Ring buffer of transitions with causal and TD priorities.
#[derive(Debug)]
pub struct ReplayBuffer {
    config: ReplayConfig,
    schedule: CurriculumSchedule,
    transitions: Vec<Transition>,
    causal_weight: Vec<f64>,
    td_abs: Vec<f64>,
    write_pos: usize,
    tree: SumTree,
    dirty: bool,
    epsilon_c: usize,
    max_td_seen: f64,
    temp_fill: usize,
    episodes_pending: Vec<u64>,
    warnings: Vec<String>,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig, schedule: CurriculumSchedule) -> Result<Self, ReplayError> {
        config.validate()?;
        Ok(Self {
            tree: SumTree::new(config.capacity),
            config,
            schedule,
            transitions: Vec::new(),
            causal_weight: Vec::new(),
            td_abs: Vec::new(),
            write_pos: 0,
            dirty: true,
            epsilon_c: 0,
            max_td_seen: 0.0,
            temp_fill: 0,
            episodes_pending: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn transition(&self, index: usize) -> &Transition {
        &self.transitions[index]
    }

    pub fn causal_weight(&self, index: usize) -> f64 {
        self.causal_weight[index]
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    /// Stores a transition (FIFO eviction once at capacity). New transitions
    /// carry no causal weight and the largest TD magnitude seen so far, so
    /// they stay sample-worthy until first replayed.
    pub fn push(&mut self, transition: Transition) {
        let done = transition.done;
        let episode = transition.episode_id;
        let td0 = if self.max_td_seen > 0.0 { self.max_td_seen } else { 1.0 };
        if self.transitions.len() < self.config.capacity {
            self.transitions.push(transition);
            self.causal_weight.push(0.0);
            self.td_abs.push(td0);
        } else {
            self.transitions[self.write_pos] = transition;
            self.causal_weight[self.write_pos] = 0.0;
            self.td_abs[self.write_pos] = td0;
        }
        self.write_pos = (self.write_pos + 1) % self.config.capacity;
        self.temp_fill += 1;
        if done {
            self.episodes_pending.push(episode);
        }
        self.dirty = true;
    }

    /// Emits the episodes accumulated since the last analysis once the
    /// temporary pool has filled, resetting the fill counter.
    pub fn on_temp_full(&mut self) -> Option<AnalysisRequest> {
        if self.temp_fill >= self.config.temp_capacity && !self.episodes_pending.is_empty() {
            self.temp_fill = 0;
            Some(AnalysisRequest {
                episodes: std::mem::take(&mut self.episodes_pending),
            })
        } else {
            None
        }
    }

    /// Advances the curriculum epoch (one epoch per episode).
    pub fn set_epoch(&mut self, epsilon_c: usize) {
        if epsilon_c != self.epsilon_c {
            self.epsilon_c = epsilon_c;
            self.dirty = true;
        }
    }

    /// Records TD magnitudes for previously sampled slots.
    pub fn update_td(&mut self, indices: &[usize], td_abs: &[f64]) {
        for (&i, &td) in indices.iter().zip(td_abs) {
            let td = td.abs();
            self.td_abs[i] = td;
            if td > self.max_td_seen {
                self.max_td_seen = td;
            }
        }
        self.dirty = true;
    }

    /// Installs causal weights from an analysis: every transition covered by
    /// an occurrence of a relevant factor receives that factor's
    /// max-normalized strength (max rule on overlaps); other transitions of
    /// the analyzed episodes are reset to zero. Episodes outside the map keep
    /// their previous weights.
    pub fn assign_causal_weights(
        &mut self,
        effects: &CausalEffectTable,
        occurrences: &OccurrenceMap,
    ) {
        let analyzed = occurrences.episode_ids();
        if analyzed.is_empty() {
            return;
        }
        let mut slots: HashMap<(u64, usize), usize> = HashMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            if analyzed.contains(&t.episode_id) {
                slots.insert((t.episode_id, t.step_index), i);
                self.causal_weight[i] = 0.0;
            }
        }
        let max_strength = effects
            .entries
            .iter()
            .filter(|e| e.relevant)
            .map(|e| e.strength)
            .fold(0.0_f64, f64::max);
        if max_strength > 0.0 {
            for entry in effects.entries.iter().filter(|e| e.relevant && e.strength > 0.0) {
                let c = entry.strength / max_strength;
                for &episode in &analyzed {
                    for (lo, hi) in occurrences.frame_cover(episode, entry.factor) {
                        for step in lo..=hi {
                            if let Some(&slot) = slots.get(&(episode, step)) {
                                if c > self.causal_weight[slot] {
                                    self.causal_weight[slot] = c;
                                }
                            }
                        }
                    }
                }
            }
        }
        self.dirty = true;
    }

    /// Current priority of every stored transition under the configured mode.
    ///
    /// cier: `(1 - lambda_u) * mu(eps_c) * c_i / sum(c) + lambda_u / n`;
    /// ciper adds the normalized PER term under `td_coeff`/`causal_coeff`.
    pub fn priorities(&self) -> Vec<f64> {
        let n = self.transitions.len();
        if n == 0 {
            return Vec::new();
        }
        let nf = n as f64;
        match self.config.mode {
            SampleMode::Uniform => vec![1.0; n],
            SampleMode::Per => self
                .td_abs
                .iter()
                .map(|d| (d + self.config.per_epsilon).powf(self.config.per_alpha))
                .collect(),
            SampleMode::Cier => {
                let mu = self.schedule.mu(self.epsilon_c);
                let c_sum: f64 = self.causal_weight.iter().sum();
                let lam = self.config.lambda_u;
                self.causal_weight
                    .iter()
                    .map(|&c| {
                        let causal = if c_sum > 0.0 { mu * c / c_sum } else { 0.0 };
                        (1.0 - lam) * causal + lam / nf
                    })
                    .collect()
            }
            SampleMode::Ciper => {
                let mu = self.schedule.mu(self.epsilon_c);
                let c_sum: f64 = self.causal_weight.iter().sum();
                let d_raw: Vec<f64> = self
                    .td_abs
                    .iter()
                    .map(|d| (d + self.config.per_epsilon).powf(self.config.per_alpha))
                    .collect();
                let d_sum: f64 = d_raw.iter().sum();
                let lam = self.config.lambda_u;
                self.causal_weight
                    .iter()
                    .zip(&d_raw)
                    .map(|(&c, &d)| {
                        let causal = if c_sum > 0.0 { mu * c / c_sum } else { 0.0 };
                        let td = if d_sum > 0.0 { d / d_sum } else { 0.0 };
                        (1.0 - lam) * (self.config.td_coeff * td + self.config.causal_coeff * causal)
                            + lam / nf
                    })
                    .collect()
            }
        }
    }

    /// Priority of a single slot (recomputed; mainly for tests and dumps).
    pub fn priority_of(&self, index: usize) -> f64 {
        self.priorities()[index]
    }

    fn per_beta(&self) -> f64 {
        let frac = self.epsilon_c as f64 / self.schedule.epsilon_max as f64;
        (self.config.per_beta0 + (1.0 - self.config.per_beta0) * frac).min(1.0)
    }

    fn rebuild_if_dirty(&mut self) {
        if self.dirty {
            let ps = self.priorities();
            self.tree.rebuild(&ps);
            self.dirty = false;
        }
    }

    /// Samples a stratified batch. Importance-sampling weights follow the PER
    /// convention `(n * P(i))^-beta`, batch-max normalized, in per/ciper
    /// modes; all ones otherwise.
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> Result<SampleBatch, ReplayError> {
        let batch = self.config.batch;
        if self.transitions.len() < batch {
            return Err(ReplayError::NotEnoughExperience {
                stored: self.transitions.len(),
                batch,
            });
        }
        self.rebuild_if_dirty();
        let indices = self.tree.sample_stratified(batch, rng);
        let weights = match self.config.mode {
            SampleMode::Per | SampleMode::Ciper => {
                let n = self.transitions.len() as f64;
                let total = self.tree.total();
                let beta = self.per_beta();
                let raw: Vec<f64> = indices
                    .iter()
                    .map(|&i| (n * self.tree.priority(i) / total).powf(-beta))
                    .collect();
                let max = raw.iter().cloned().fold(f64::MIN, f64::max);
                raw.iter().map(|w| w / max).collect()
            }
            _ => vec![1.0; batch],
        };
        Ok(SampleBatch { indices, weights })
    }

    /// Direct access to the priority tree (rebuilt first if stale).
    pub fn tree(&mut self) -> &SumTree {
        self.rebuild_if_dirty();
        &self.tree
    }

    /// Debug snapshot: one JSON object per stored transition.
    pub fn write_snapshot<W: Write>(&mut self, mut out: W) -> std::io::Result<()> {
        self.rebuild_if_dirty();
        for (i, t) in self.transitions.iter().enumerate() {
            let line = serde_json::json!({
                "episode": t.episode_id,
                "step": t.step_index,
                "causal_weight": self.causal_weight[i],
                "td_abs": self.td_abs[i],
                "priority": self.tree.priority(i),
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}
