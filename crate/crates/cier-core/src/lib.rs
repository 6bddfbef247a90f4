//! Causal inference experience replay for off-policy reinforcement learning.
//!
//! The pipeline turns raw agent interaction histories into replay priorities:
//!
//! 1. [`series`] arranges each episode's actions into a multivariate time
//!    series.
//! 2. [`ticc`] segments every series into temporally coherent regimes, each
//!    modeled by a sparse block-Toeplitz Gaussian precision matrix.
//! 3. [`tscf`] merges segments across episodes into time-series causal
//!    factors via DTW medoid clustering and encodes each episode as a binary
//!    factor-presence vector.
//! 4. [`causal`] discovers a partial ancestral graph over the factors and the
//!    episode reward, resolves ambiguous edges with temporal precedence, and
//!    scores each factor by accumulated treatment effects toward the reward.
//! 5. [`replay`] stores transitions in a priority sum tree whose weights blend
//!    causal strengths, TD errors, and a uniform floor under a curriculum
//!    schedule.
//! 6. [`rl`] provides desk-scale environments and DDPG/TD3 agents that train
//!    against the buffer end to end.
//!
//! [`metrics`] summarizes training scores, and [`synthetic`] generates the
//! planted-ground-truth fixtures used by the test and bench suites.

pub mod causal;
pub mod metrics;
mod parallel;
pub mod replay;
pub mod rl;
pub mod series;
pub mod synthetic;
pub mod ticc;
pub mod tscf;

pub use causal::{CausalDataset, CausalEffectTable, EndpointMark, Pag};
pub use replay::{CurriculumSchedule, ReplayBuffer, ReplayConfig, SampleMode, SumTree};
pub use series::{ActionTimeSeries, Subsequence, Transition};
pub use ticc::{ClusterModel, Segmentation, TiccParams};
pub use tscf::{EpisodeEncoding, OccurrenceMap, Tscf, TscfDictionary};
