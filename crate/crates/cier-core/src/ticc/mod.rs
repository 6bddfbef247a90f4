//! Toeplitz inverse-covariance clustering: EM segmentation of one action
//! series into temporally coherent regimes, each a sparse block-Toeplitz
//! Gaussian Markov random field.

mod dp;
mod solver;

pub use dp::sequence_cost;
pub use solver::toeplitz_deviation;

use crate::parallel;
use crate::series::{window_stack, ActionTimeSeries, SeriesError, Subsequence};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TiccError {
    #[error("not enough windows: {windows} for K={k} (need >= 2K)")]
    NotEnoughData { windows: usize, k: usize },
    #[error("precision matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("window dimension {got} does not match model dimension {expected}")]
    BadWindowDim { expected: usize, got: usize },
    #[error("invalid TICC parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TiccParams {
    pub k: usize,
    pub w: usize,
    /// Temporal switching penalty in the E-step.
    pub beta: f64,
    /// Sparsity weight; the per-cluster penalty is scaled by the average
    /// cluster population so behavior is stable across series lengths.
    pub lambda: f64,
    pub max_em_iters: usize,
    pub admm_iters: usize,
    pub tol: f64,
    /// Reserved for stochastic variants; the current fit is fully
    /// deterministic.
    pub seed: u64,
}

impl Default for TiccParams {
    fn default() -> Self {
        Self {
            k: 2,
            w: 3,
            beta: 50.0,
            lambda: 0.11,
            max_em_iters: 20,
            admm_iters: 50,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl TiccParams {
    pub fn validate(&self) -> Result<(), TiccError> {
        if self.k < 1 || self.w < 1 {
            return Err(TiccError::InvalidParams("k and w must be >= 1".into()));
        }
        if self.beta < 0.0 || self.lambda < 0.0 {
            return Err(TiccError::InvalidParams("beta and lambda must be >= 0".into()));
        }
        if self.tol <= 0.0 {
            return Err(TiccError::InvalidParams("tol must be > 0".into()));
        }
        if self.max_em_iters == 0 || self.admm_iters == 0 {
            return Err(TiccError::InvalidParams("iteration budgets must be >= 1".into()));
        }
        Ok(())
    }
}

/// Parameters for the length-adaptive cluster count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveK {
    pub l_target: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub w: usize,
}

impl Default for AdaptiveK {
    fn default() -> Self {
        Self {
            l_target: 25,
            k_min: 2,
            k_max: 10,
            w: 3,
        }
    }
}

/// `K = clamp(round(n / l_target), k_min, k_max)`, further capped at
/// `max(1, n - w)` so short series never demand more clusters than windows.
pub fn adaptive_k(n: usize, cfg: &AdaptiveK) -> usize {
    let raw = (n as f64 / cfg.l_target as f64).round() as usize;
    raw.clamp(cfg.k_min, cfg.k_max).min((n.saturating_sub(cfg.w)).max(1))
}

/// One cluster: a positive-definite block-Toeplitz precision matrix with the
/// empirical window mean.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub precision: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub member_count: usize,
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    fn log_det(&self) -> Result<f64, TiccError> {
        let chol = self
            .precision
            .clone()
            .cholesky()
            .ok_or(TiccError::NotPositiveDefinite)?;
        Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
    }
}

/// Gaussian log-density of a stacked window under a cluster model:
/// `0.5 logdet(T) - 0.5 (x - m)' T (x - m) - (dw/2) log(2 pi)`.
pub fn log_likelihood(window: &[f64], model: &ClusterModel) -> Result<f64, TiccError> {
    let n = model.dim();
    if window.len() != n {
        return Err(TiccError::BadWindowDim {
            expected: n,
            got: window.len(),
        });
    }
    let logdet = model.log_det()?;
    let x = DVector::from_column_slice(window) - &model.mean;
    let quad = (&model.precision * &x).dot(&x);
    Ok(0.5 * logdet - 0.5 * quad - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Label sequence over windows plus the maximal constant-label runs.
///
/// `labels[t]` is the cluster of the window starting at frame `t`; a segment
/// `[start, end]` covers window indices (its `values` are the frames at those
/// window starts), so the frames it spans end at `end + window - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub labels: Vec<usize>,
    pub segments: Vec<Subsequence>,
    pub window: usize,
}

impl Segmentation {
    pub fn switch_count(&self) -> usize {
        self.labels.windows(2).filter(|p| p[0] != p[1]).count()
    }
}

/// Everything produced by one TICC fit.
#[derive(Debug, Clone)]
pub struct TiccFit {
    pub models: Vec<ClusterModel>,
    pub segmentation: Segmentation,
    /// Combined objective (NLL + beta * switches + sparsity penalty) after
    /// each EM iteration.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Prepared {
    precision: DMatrix<f64>,
    mean: DVector<f64>,
    logdet: f64,
}

impl Prepared {
    fn from_model(m: &ClusterModel) -> Result<Self, TiccError> {
        Ok(Self {
            logdet: m.log_det()?,
            precision: m.precision.clone(),
            mean: m.mean.clone(),
        })
    }

    fn nll(&self, window: &DVector<f64>) -> f64 {
        let x = window - &self.mean;
        let quad = (&self.precision * &x).dot(&x);
        -0.5 * self.logdet
            + 0.5 * quad
            + 0.5 * self.precision.nrows() as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

fn l1_offdiag(m: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                total += m[(i, j)].abs();
            }
        }
    }
    total
}

/// Per-cluster penalized objective used by the M-step acceptance guard:
/// `m_k/2 (tr(S T) - logdet T) + kappa ||T||_1,offdiag` (constants dropped).
fn cluster_objective(theta: &DMatrix<f64>, s: &DMatrix<f64>, members: f64, kappa: f64) -> f64 {
    let chol = theta.clone().cholesky();
    let logdet = match chol {
        Some(c) => 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => return f64::INFINITY,
    };
    let trace = (s * theta).trace();
    members / 2.0 * (trace - logdet) + kappa * l1_offdiag(theta)
}

fn covariance(windows: &[DVector<f64>], members: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let n = windows[0].len();
    let mf = members.len() as f64;
    let mut mean = DVector::zeros(n);
    for &i in members {
        mean += &windows[i];
    }
    mean /= mf;
    let mut s = DMatrix::zeros(n, n);
    for &i in members {
        let c = &windows[i] - &mean;
        s += &c * c.transpose();
    }
    s /= mf;
    (mean, s)
}

/// Segments one series into `params.k` clusters by EM: a Viterbi E-step over
/// labels with switching penalty `beta`, and a Toeplitz graphical-lasso
/// M-step per cluster. Deterministic: labels are seeded by contiguous
/// equal-length chunks and every later step breaks ties by index.
pub fn fit_ticc(series: &ActionTimeSeries, params: &TiccParams) -> Result<TiccFit, TiccError> {
    params.validate()?;
    let k = params.k;
    let d = series.dim();
    let w = params.w;
    let windows_raw = window_stack(series, w)?;
    let m = windows_raw.len();
    if m < 2 * k {
        return Err(TiccError::NotEnoughData { windows: m, k });
    }
    let windows: Vec<DVector<f64>> = windows_raw
        .into_iter()
        .map(DVector::from_vec)
        .collect();
    let mut warnings = Vec::new();
    // Fixed total sparsity weight per cluster, scaled by the average cluster
    // population; keeps the EM objective comparable across iterations.
    let kappa = params.lambda * (m as f64 / k as f64) / 2.0;

    let mut labels: Vec<usize> = (0..m).map(|t| t * k / m).collect();
    let mut models: Vec<Option<ClusterModel>> = vec![None; k];
    let mut objective_trace = Vec::new();

    for _iter in 0..params.max_em_iters {
        // M-step: refit each cluster, keep the previous model when the new
        // one does not improve the penalized objective.
        let member_sets: Vec<Vec<usize>> = (0..k)
            .map(|c| (0..m).filter(|&t| labels[t] == c).collect())
            .collect();
        let fits: Vec<Option<(ClusterModel, Option<String>)>> =
            parallel::map_range(k, |c| {
                let members = &member_sets[c];
                if members.is_empty() {
                    return None;
                }
                let (mean, s) = covariance(&windows, members);
                let lambda_eff = 2.0 * kappa / members.len() as f64;
                let out = solver::toeplitz_glasso(
                    &s,
                    d,
                    w,
                    lambda_eff,
                    params.admm_iters,
                    params.tol,
                );
                let warn = if !out.converged {
                    Some(format!(
                        "cluster {c}: ADMM stopped after {} iterations without meeting tol",
                        out.iterations
                    ))
                } else {
                    None
                };
                let mut theta = out.precision;
                if let Some(prev) = &models[c] {
                    let new_obj = cluster_objective(&theta, &s, members.len() as f64, kappa);
                    let old_obj =
                        cluster_objective(&prev.precision, &s, members.len() as f64, kappa);
                    if old_obj < new_obj {
                        theta = prev.precision.clone();
                    }
                }
                Some((
                    ClusterModel {
                        precision: theta,
                        mean,
                        member_count: members.len(),
                    },
                    warn,
                ))
            });
        for (c, fit) in fits.into_iter().enumerate() {
            if let Some((model, warn)) = fit {
                if let Some(wmsg) = warn {
                    warnings.push(wmsg);
                }
                models[c] = Some(model);
            }
        }

        // E-step: exact DP over label sequences.
        let prepared: Vec<Prepared> = models
            .iter()
            .map(|mo| Prepared::from_model(mo.as_ref().expect("all clusters seeded")))
            .collect::<Result<_, _>>()?;
        let cost: Vec<Vec<f64>> = parallel::map_slice(&windows, |x| {
            prepared.iter().map(|p| p.nll(x)).collect()
        });
        let mut new_labels = dp::min_cost_labels(&cost, params.beta);

        // Empty-cluster repair: hand the worst-fit windows to each empty
        // cluster; their models refit on the next M-step.
        let mut counts = vec![0usize; k];
        for &l in &new_labels {
            counts[l] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            warnings.push(format!("cluster {empty} emptied; reseeding from worst-fit windows"));
            let quota = m.div_ceil(k);
            let mut scored: Vec<(f64, usize)> = (0..m)
                .filter(|&t| counts[new_labels[t]] > 1)
                .map(|t| (cost[t][new_labels[t]], t))
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, t) in scored.iter().take(quota) {
                counts[new_labels[t]] -= 1;
                new_labels[t] = empty;
                counts[empty] += 1;
            }
        }

        let objective = dp::sequence_cost(&cost, params.beta, &new_labels)
            + kappa
                * models
                    .iter()
                    .map(|mo| l1_offdiag(&mo.as_ref().unwrap().precision))
                    .sum::<f64>();
        objective_trace.push(objective);

        let converged = new_labels == labels;
        labels = new_labels;
        if converged {
            break;
        }
    }

    let models: Vec<ClusterModel> = models.into_iter().map(|m| m.unwrap()).collect();
    let segmentation = segmentation_from_labels(series, &labels, w);
    Ok(TiccFit {
        models,
        segmentation,
        objective_trace,
        warnings,
    })
}

fn segmentation_from_labels(
    series: &ActionTimeSeries,
    labels: &[usize],
    window: usize,
) -> Segmentation {
    let mut segments = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            let values: Vec<Vec<f64>> = series.frames()[start..t].to_vec();
            segments.push(
                Subsequence::new(series.episode_id(), start, t - 1, values)
                    .expect("run bounds are valid"),
            );
            start = t;
        }
    }
    Segmentation {
        labels: labels.to_vec(),
        segments,
        window,
    }
}

/// Debug dump: labels, per-cluster precision (row-major), objective trace.
pub fn fit_debug_json(episode_id: u64, fit: &TiccFit) -> serde_json::Value {
    let thetas: Vec<serde_json::Value> = fit
        .models
        .iter()
        .map(|m| {
            serde_json::json!({
                "dim": m.dim(),
                "member_count": m.member_count,
                "mean": m.mean.iter().copied().collect::<Vec<f64>>(),
                "precision_row_major": m.precision.row_iter()
                    .flat_map(|r| r.iter().copied().collect::<Vec<f64>>())
                    .collect::<Vec<f64>>(),
            })
        })
        .collect();
    serde_json::json!({
        "episode": episode_id,
        "labels": fit.segmentation.labels,
        "window": fit.segmentation.window,
        "clusters": thetas,
        "objective_trace": fit.objective_trace,
        "warnings": fit.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::znormalize;
    use crate::synthetic;
    use approx::assert_relative_eq;

    #[test]
    fn adaptive_k_examples() {
        let cfg = AdaptiveK::default();
        assert_eq!(adaptive_k(100, &cfg), 4);
        assert_eq!(adaptive_k(10, &cfg), 2);
        assert_eq!(adaptive_k(1000, &cfg), 10);
        // Capped by available windows on very short series.
        assert_eq!(adaptive_k(4, &cfg), 1);
    }

    #[test]
    fn log_likelihood_standard_normal() {
        let model = ClusterModel {
            precision: DMatrix::identity(1, 1),
            mean: DVector::zeros(1),
            member_count: 1,
        };
        let at_mode = log_likelihood(&[0.0], &model).unwrap();
        assert_relative_eq!(at_mode, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
        let at_one = log_likelihood(&[1.0], &model).unwrap();
        assert_relative_eq!(at_one, at_mode - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_matches_dense_oracle() {
        // Independent oracle: density through the explicit inverse
        // covariance.
        let theta = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.1],
        );
        let mean = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let model = ClusterModel {
            precision: theta.clone(),
            mean: mean.clone(),
            member_count: 1,
        };
        let x = DVector::from_vec(vec![1.0, 0.0, 1.5]);
        let got = log_likelihood(x.as_slice(), &model).unwrap();

        let cov = theta.try_inverse().unwrap();
        let det_cov = cov.determinant();
        let diff = &x - &mean;
        let quad = (cov.try_inverse().unwrap() * &diff).dot(&diff);
        let expect = -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + det_cov.ln() + quad);
        assert_relative_eq!(got, expect, epsilon = 1e-8);
    }

    #[test]
    fn log_likelihood_rejects_non_pd() {
        let model = ClusterModel {
            precision: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            mean: DVector::zeros(2),
            member_count: 1,
        };
        assert!(matches!(
            log_likelihood(&[0.0, 0.0], &model),
            Err(TiccError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn single_cluster_is_one_segment() {
        let (series, _) = synthetic::two_regime_series(60, 30, 0);
        let params = TiccParams {
            k: 1,
            ..TiccParams::default()
        };
        let fit = fit_ticc(&series, &params).unwrap();
        assert!(fit.segmentation.labels.iter().all(|&l| l == 0));
        assert_eq!(fit.segmentation.segments.len(), 1);
        let seg = &fit.segmentation.segments[0];
        assert_eq!((seg.start, seg.end), (0, fit.segmentation.labels.len() - 1));
    }

    #[test]
    fn recovers_two_regimes() {
        let (series, truth) = synthetic::two_regime_series(300, 150, 42);
        let series = znormalize(&series).unwrap();
        let fit = fit_ticc(&series, &TiccParams::default()).unwrap();
        let f1 = synthetic::macro_f1(&fit.segmentation.labels, &truth[..fit.segmentation.labels.len()], 2);
        assert!(f1 >= 0.9, "macro-F1 = {f1}");
    }

    #[test]
    fn objective_non_increasing() {
        let (series, _) = synthetic::two_regime_series(240, 120, 7);
        let series = znormalize(&series).unwrap();
        let fit = fit_ticc(&series, &TiccParams::default()).unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-6,
                "objective rose: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn models_satisfy_structure_invariants() {
        let (series, _) = synthetic::two_regime_series(200, 100, 3);
        let series = znormalize(&series).unwrap();
        let fit = fit_ticc(&series, &TiccParams::default()).unwrap();
        for m in &fit.models {
            assert!((m.precision.clone() - m.precision.transpose()).amax() < 1e-8);
            assert!(toeplitz_deviation(&m.precision, series.dim(), 3) < 1e-8);
            assert!(m.precision.clone().cholesky().is_some());
        }
    }

    #[test]
    fn beta_extremes_control_switching() {
        let (series, _) = synthetic::three_regime_series(270, 11);
        let series = znormalize(&series).unwrap();
        let free = fit_ticc(
            &series,
            &TiccParams {
                k: 3,
                beta: 0.0,
                ..TiccParams::default()
            },
        )
        .unwrap();
        let stiff = fit_ticc(
            &series,
            &TiccParams {
                k: 3,
                beta: 1e6,
                ..TiccParams::default()
            },
        )
        .unwrap();
        let s_free = free.segmentation.switch_count();
        let s_stiff = stiff.segmentation.switch_count();
        assert!(s_stiff <= s_free, "{s_stiff} > {s_free}");
        assert!(s_stiff <= 2, "beta=1e6 allows at most K-1 switches, got {s_stiff}");
    }

    #[test]
    fn determinism() {
        let (series, _) = synthetic::two_regime_series(150, 75, 9);
        let series = znormalize(&series).unwrap();
        let a = fit_ticc(&series, &TiccParams::default()).unwrap();
        let b = fit_ticc(&series, &TiccParams::default()).unwrap();
        assert_eq!(a.segmentation.labels, b.segmentation.labels);
    }

    #[test]
    fn not_enough_windows_rejected() {
        let (series, _) = synthetic::two_regime_series(6, 3, 0);
        let params = TiccParams {
            k: 3,
            ..TiccParams::default()
        };
        assert!(matches!(
            fit_ticc(&series, &params),
            Err(TiccError::NotEnoughData { .. })
        ));
    }

    #[test]
    fn segments_partition_label_range() {
        let (series, _) = synthetic::three_regime_series(180, 5);
        let series = znormalize(&series).unwrap();
        let fit = fit_ticc(
            &series,
            &TiccParams {
                k: 3,
                beta: 10.0,
                ..TiccParams::default()
            },
        )
        .unwrap();
        let seg = &fit.segmentation;
        let mut cursor = 0;
        for s in &seg.segments {
            assert_eq!(s.start, cursor);
            cursor = s.end + 1;
        }
        assert_eq!(cursor, seg.labels.len());
        for pair in seg.segments.windows(2) {
            assert_ne!(
                seg.labels[pair[0].start], seg.labels[pair[1].start],
                "consecutive segments must differ in label"
            );
        }
    }
}
