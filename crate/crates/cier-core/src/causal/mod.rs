//! Causal discovery over factor encodings: PAG construction (score-guided
//! skeleton plus FCI-style orientation), temporal edge disambiguation, and
//! treatment-effect accumulation toward the reward node.

mod ci;
mod correction;
mod effects;
mod score;
mod search;

pub use ci::{ci_test, CiOutcome};
pub use correction::time_correction;
pub use effects::{ate, path_strengths, PathAggregation};
pub use score::bic_score;
pub use search::gfci_lite;

use crate::tscf::EpisodeEncoding;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("dataset invalid: {0}")]
    InvalidData(String),
    #[error("graph contains a cycle")]
    GraphCycle,
    #[error("graph must be a DAG for scoring")]
    NotADag,
    #[error("edge {0} - {1} is not directed")]
    UndirectedEdge(usize, usize),
    #[error("treatment {0} has an empty arm; no overlap for effect estimation")]
    NoOverlap(usize),
    #[error("conditioning variable {0} out of range or overlapping X/Y")]
    BadConditioningSet(usize),
}

/// Episode rows: `k_prime` binary treatment columns plus one continuous
/// outcome. Column index `k_prime` is the outcome node everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalDataset {
    treatments: Vec<Vec<bool>>,
    outcome: Vec<f64>,
}

impl CausalDataset {
    pub fn new(treatments: Vec<Vec<bool>>, outcome: Vec<f64>) -> Result<Self, CausalError> {
        if outcome.is_empty() {
            return Err(CausalError::InvalidData("need at least one row".into()));
        }
        for (k, col) in treatments.iter().enumerate() {
            if col.len() != outcome.len() {
                return Err(CausalError::InvalidData(format!(
                    "treatment {k} has {} rows, outcome has {}",
                    col.len(),
                    outcome.len()
                )));
            }
        }
        Ok(Self { treatments, outcome })
    }

    pub fn from_encodings(encodings: &[EpisodeEncoding]) -> Result<Self, CausalError> {
        let k_prime = encodings.first().map_or(0, |e| e.presence.len());
        let mut treatments = vec![vec![false; encodings.len()]; k_prime];
        let mut outcome = Vec::with_capacity(encodings.len());
        for (row, e) in encodings.iter().enumerate() {
            if e.presence.len() != k_prime {
                return Err(CausalError::InvalidData("ragged encodings".into()));
            }
            for (k, &p) in e.presence.iter().enumerate() {
                treatments[k][row] = p;
            }
            outcome.push(e.outcome);
        }
        Self::new(treatments, outcome)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn k_prime(&self) -> usize {
        self.treatments.len()
    }

    /// Total node count: treatments plus the outcome.
    pub fn n_columns(&self) -> usize {
        self.k_prime() + 1
    }

    pub fn outcome_index(&self) -> usize {
        self.k_prime()
    }

    pub fn is_outcome(&self, col: usize) -> bool {
        col == self.outcome_index()
    }

    pub fn treatment(&self, k: usize) -> &[bool] {
        &self.treatments[k]
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Column as reals (treatments 0/1-coded).
    pub fn column_f64(&self, col: usize) -> Vec<f64> {
        if self.is_outcome(col) {
            self.outcome.clone()
        } else {
            self.treatments[col]
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect()
        }
    }

    /// Stratum id of a row over a set of binary columns (little-endian bits).
    pub(crate) fn stratum(&self, row: usize, z: &[usize]) -> usize {
        z.iter()
            .enumerate()
            .map(|(bit, &col)| (self.treatments[col][row] as usize) << bit)
            .sum()
    }

    pub fn is_constant(&self, col: usize) -> bool {
        if self.is_outcome(col) {
            self.outcome.iter().all(|&v| v == self.outcome[0])
        } else {
            let c = &self.treatments[col];
            c.iter().all(|&v| v == c[0])
        }
    }
}

/// Endpoint mark of a PAG edge at one of its two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointMark {
    Arrow,
    Tail,
    Circle,
}

/// Mixed graph over treatment nodes plus the outcome, with one endpoint mark
/// per edge side. At most one edge per unordered pair, no self edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pag {
    n_nodes: usize,
    outcome: usize,
    edges: BTreeMap<(usize, usize), (EndpointMark, EndpointMark)>,
}

impl Pag {
    pub fn new(n_nodes: usize, outcome: usize) -> Self {
        assert!(outcome < n_nodes);
        Self {
            n_nodes,
            outcome,
            edges: BTreeMap::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn key(a: usize, b: usize) -> (usize, usize) {
        (a.min(b), a.max(b))
    }

    /// Inserts or replaces the edge between `a` and `b` with the given marks
    /// (`mark_a` sits at `a`).
    pub fn set_edge(&mut self, a: usize, b: usize, mark_a: EndpointMark, mark_b: EndpointMark) {
        assert!(a != b && a < self.n_nodes && b < self.n_nodes);
        let marks = if a < b { (mark_a, mark_b) } else { (mark_b, mark_a) };
        self.edges.insert(Self::key(a, b), marks);
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.edges.remove(&Self::key(a, b));
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains_key(&Self::key(a, b))
    }

    /// Mark sitting at `node`'s end of the edge `{a, b}`.
    pub fn mark_at(&self, a: usize, b: usize, node: usize) -> Option<EndpointMark> {
        let (lo, hi) = Self::key(a, b);
        self.edges.get(&(lo, hi)).map(|&(ml, mh)| {
            if node == lo {
                ml
            } else {
                debug_assert_eq!(node, hi);
                mh
            }
        })
    }

    pub fn set_mark(&mut self, a: usize, b: usize, node: usize, mark: EndpointMark) {
        let (lo, hi) = Self::key(a, b);
        let entry = self.edges.get_mut(&(lo, hi)).expect("edge exists");
        if node == lo {
            entry.0 = mark;
        } else {
            debug_assert_eq!(node, hi);
            entry.1 = mark;
        }
    }

    pub fn adjacent(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes)
            .filter(|&other| other != node && self.has_edge(node, other))
            .collect()
    }

    /// Iterates `(a, b, mark_a, mark_b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EndpointMark, EndpointMark)> + '_ {
        self.edges.iter().map(|(&(a, b), &(ma, mb))| (a, b, ma, mb))
    }

    /// For a tail-arrow edge, returns `(from, to)`.
    pub fn directed(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        let (lo, hi) = Self::key(a, b);
        match self.edges.get(&(lo, hi)) {
            Some((EndpointMark::Tail, EndpointMark::Arrow)) => Some((lo, hi)),
            Some((EndpointMark::Arrow, EndpointMark::Tail)) => Some((hi, lo)),
            _ => None,
        }
    }

    /// Parents of `node` through fully directed edges.
    pub fn parents(&self, node: usize) -> Vec<usize> {
        self.adjacent(node)
            .into_iter()
            .filter(|&other| self.directed(other, node) == Some((other, node)))
            .collect()
    }

    /// Children of `node` through fully directed edges.
    pub fn children(&self, node: usize) -> Vec<usize> {
        self.adjacent(node)
            .into_iter()
            .filter(|&other| self.directed(node, other) == Some((node, other)))
            .collect()
    }

    pub fn all_edges_directed(&self) -> bool {
        self.edges().all(|(a, b, _, _)| self.directed(a, b).is_some())
    }

    /// True when every edge is directed and the directed graph is acyclic.
    pub fn is_dag(&self) -> bool {
        if !self.all_edges_directed() {
            return false;
        }
        // Kahn's algorithm.
        let mut indeg = vec![0usize; self.n_nodes];
        for (a, b, _, _) in self.edges() {
            let (_, to) = self.directed(a, b).unwrap();
            indeg[to] += 1;
        }
        let mut queue: Vec<usize> = (0..self.n_nodes).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        seen == self.n_nodes
    }

    /// Graphviz export. Edge attribute `mark` encodes the endpoint pair:
    /// `"oo"` circle-circle, `"o>"` circle-arrow, `">>"` arrow-arrow
    /// (bidirected), `"--"` tail-arrow (directed). Node names default to
    /// `U<k>` and `Y` for the outcome.
    pub fn to_dot(&self, names: Option<&[String]>) -> String {
        let name = |i: usize| -> String {
            match names {
                Some(ns) => ns[i].clone(),
                None if i == self.outcome => "Y".to_string(),
                None => format!("U{i}"),
            }
        };
        let mut out = String::from("digraph pag {\n");
        for i in 0..self.n_nodes {
            out.push_str(&format!("  {};\n", name(i)));
        }
        for (a, b, ma, mb) in self.edges() {
            use EndpointMark::*;
            let (src, dst, mark) = match (ma, mb) {
                (Tail, Arrow) => (a, b, "--"),
                (Arrow, Tail) => (b, a, "--"),
                (Circle, Arrow) => (a, b, "o>"),
                (Arrow, Circle) => (b, a, "o>"),
                (Circle, Circle) => (a, b, "oo"),
                (Arrow, Arrow) => (a, b, ">>"),
                (Tail, Circle) => (a, b, "oo"),
                (Circle, Tail) => (b, a, "oo"),
                (Tail, Tail) => (a, b, "oo"),
            };
            out.push_str(&format!(
                "  {} -> {} [mark=\"{}\"];\n",
                name(src),
                name(dst),
                mark
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// Strength of one directed edge: the absolute adjusted treatment effect,
/// with the signed estimate kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeStrength {
    pub from: usize,
    pub to: usize,
    pub strength: f64,
    pub signed: f64,
}

/// One directed path from a factor to the outcome and its aggregated
/// strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEffect {
    pub nodes: Vec<usize>,
    pub strength: f64,
}

/// Per-factor causal strength toward the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEffect {
    pub factor: usize,
    pub strength: f64,
    pub relevant: bool,
    pub paths: Vec<PathEffect>,
}

/// The effect table feeding replay weights: one entry per factor, plus the
/// per-edge strengths the paths were built from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CausalEffectTable {
    pub entries: Vec<FactorEffect>,
    pub edges: Vec<EdgeStrength>,
}

impl CausalEffectTable {
    pub fn strength(&self, factor: usize) -> f64 {
        self.entries
            .iter()
            .find(|e| e.factor == factor)
            .map_or(0.0, |e| e.strength)
    }

    pub fn is_relevant(&self, factor: usize) -> bool {
        self.entries
            .iter()
            .find(|e| e.factor == factor)
            .is_some_and(|e| e.relevant)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "factors": self.entries.iter().map(|e| serde_json::json!({
                "factor": e.factor,
                "strength": e.strength,
                "relevant": e.relevant,
                "paths": e.paths.iter().map(|p| serde_json::json!({
                    "nodes": p.nodes,
                    "strength": p.strength,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| serde_json::json!({
                "from": e.from,
                "to": e.to,
                "strength": e.strength,
                "signed": e.signed,
            })).collect::<Vec<_>>(),
        })
    }
}
