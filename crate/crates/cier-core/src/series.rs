//! Episode histories as multivariate action time series.
//!
//! Everything downstream (segmentation, factor discovery, causal analysis)
//! consumes the per-episode series built here. All transforms are pure value
//! functions and safe to run concurrently on disjoint episodes.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("empty episode")]
    EmptyEpisode,
    #[error("transitions mix episodes {0} and {1}")]
    MixedEpisodes(u64, u64),
    #[error("action dimension mismatch: expected {expected}, got {got} at step {step}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        step: usize,
    },
    #[error("step indices must be contiguous from 0: expected {expected}, got {got}")]
    NonContiguousSteps { expected: usize, got: usize },
    #[error("series of length {0} is too short, need at least 2 frames")]
    TooShort(usize),
    #[error("window {w} invalid for series of length {n}")]
    WindowTooLarge { w: usize, n: usize },
    #[error("subsequence bounds [{start}, {end}] invalid for length {len}")]
    BadBounds { start: usize, end: usize, len: usize },
    #[error("csv parse error on line {line}: {msg}")]
    BadRecord { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One environment interaction: `(s_t, a_t, r_t, s_{t+1})` plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub episode_id: u64,
    pub step_index: usize,
}

/// One episode's ordered action vectors, with the episode return attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTimeSeries {
    episode_id: u64,
    frames: Vec<Vec<f64>>,
    episode_return: f64,
}

impl ActionTimeSeries {
    /// Builds a series from raw frames. Frames must be nonempty and share one
    /// dimension.
    pub fn new(
        episode_id: u64,
        frames: Vec<Vec<f64>>,
        episode_return: f64,
    ) -> Result<Self, SeriesError> {
        if frames.is_empty() {
            return Err(SeriesError::EmptyEpisode);
        }
        let d = frames[0].len();
        if d == 0 {
            return Err(SeriesError::DimensionMismatch {
                expected: 1,
                got: 0,
                step: 0,
            });
        }
        for (step, f) in frames.iter().enumerate() {
            if f.len() != d {
                return Err(SeriesError::DimensionMismatch {
                    expected: d,
                    got: f.len(),
                    step,
                });
            }
        }
        Ok(Self {
            episode_id,
            frames,
            episode_return,
        })
    }

    pub fn episode_id(&self) -> u64 {
        self.episode_id
    }

    /// Number of frames `n`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Action dimension `d`.
    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    /// Sum of the source episode's rewards.
    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }
}

/// A contiguous run of frames `a_start..=a_end` from one episode.
///
/// `start`/`end` are indices into whatever range the producer used (frame
/// indices for raw slices, window indices for segmentations); `values` always
/// carries the frames themselves so distance computations need no backing
/// series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsequence {
    pub episode_id: u64,
    pub start: usize,
    pub end: usize,
    pub values: Vec<Vec<f64>>,
}

impl Subsequence {
    /// `end` is inclusive; `values.len()` must equal `end - start + 1`.
    pub fn new(
        episode_id: u64,
        start: usize,
        end: usize,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, SeriesError> {
        if end < start || values.len() != end - start + 1 || values.is_empty() {
            return Err(SeriesError::BadBounds {
                start,
                end,
                len: values.len(),
            });
        }
        Ok(Self {
            episode_id,
            start,
            end,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Arranges one episode's transitions chronologically into its action series.
///
/// Transitions must be nonempty, share one episode id, and carry step indices
/// contiguous from 0. The series return is the exact sum of rewards.
pub fn build_series(transitions: &[Transition]) -> Result<ActionTimeSeries, SeriesError> {
    let first = transitions.first().ok_or(SeriesError::EmptyEpisode)?;
    let episode_id = first.episode_id;
    let d = first.action.len();
    let mut frames = Vec::with_capacity(transitions.len());
    let mut episode_return = 0.0;
    for (k, t) in transitions.iter().enumerate() {
        if t.episode_id != episode_id {
            return Err(SeriesError::MixedEpisodes(episode_id, t.episode_id));
        }
        if t.step_index != k {
            return Err(SeriesError::NonContiguousSteps {
                expected: k,
                got: t.step_index,
            });
        }
        if t.action.len() != d {
            return Err(SeriesError::DimensionMismatch {
                expected: d,
                got: t.action.len(),
                step: k,
            });
        }
        frames.push(t.action.clone());
        episode_return += t.reward;
    }
    ActionTimeSeries::new(episode_id, frames, episode_return)
}

/// Per-dimension z-normalization: mean 0, unit standard deviation.
///
/// Dimensions with (numerically) zero variance map to all-zeros so that
/// saturated action channels do not abort the pipeline.
pub fn znormalize(series: &ActionTimeSeries) -> Result<ActionTimeSeries, SeriesError> {
    let n = series.len();
    if n < 2 {
        return Err(SeriesError::TooShort(n));
    }
    let d = series.dim();
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for f in series.frames() {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= nf;
    }
    let mut var = vec![0.0; d];
    for f in series.frames() {
        for j in 0..d {
            let c = f[j] - mean[j];
            var[j] += c * c;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / nf).sqrt()).collect();
    let frames = series
        .frames()
        .iter()
        .map(|f| {
            (0..d)
                .map(|j| {
                    if std[j] < 1e-12 {
                        0.0
                    } else {
                        (f[j] - mean[j]) / std[j]
                    }
                })
                .collect()
        })
        .collect();
    ActionTimeSeries::new(series.episode_id(), frames, series.episode_return())
}

/// Sliding-window embedding: element `t` is the concatenation of frames
/// `t..t+w-1`, giving `n - w + 1` vectors of length `d * w`.
pub fn window_stack(series: &ActionTimeSeries, w: usize) -> Result<Vec<Vec<f64>>, SeriesError> {
    let n = series.len();
    if w == 0 || w > n {
        return Err(SeriesError::WindowTooLarge { w, n });
    }
    let d = series.dim();
    let frames = series.frames();
    Ok((0..=n - w)
        .map(|t| {
            let mut v = Vec::with_capacity(d * w);
            for f in &frames[t..t + w] {
                v.extend_from_slice(f);
            }
            v
        })
        .collect())
}

/// Splits a flat transition log into per-episode runs, preserving order.
pub fn group_episodes(transitions: &[Transition]) -> Vec<Vec<Transition>> {
    let mut episodes: Vec<Vec<Transition>> = Vec::new();
    for t in transitions {
        match episodes.last_mut() {
            Some(ep) if ep[0].episode_id == t.episode_id => ep.push(t.clone()),
            _ => episodes.push(vec![t.clone()]),
        }
    }
    episodes
}

/// Writes an episode log: header `episode,step,reward,done,a0..,s0..` and one
/// row per transition.
pub fn write_episode_log<W: Write>(
    out: W,
    transitions: &[Transition],
) -> Result<(), SeriesError> {
    let mut w = csv::Writer::from_writer(out);
    let (d, m) = transitions
        .first()
        .map(|t| (t.action.len(), t.state.len()))
        .unwrap_or((0, 0));
    let mut header = vec!["episode".to_string(), "step".into(), "reward".into(), "done".into()];
    header.extend((0..d).map(|j| format!("a{j}")));
    header.extend((0..m).map(|j| format!("s{j}")));
    w.write_record(&header)?;
    for t in transitions {
        let mut rec = vec![
            t.episode_id.to_string(),
            t.step_index.to_string(),
            format!("{:?}", t.reward),
            if t.done { "1".into() } else { "0".into() },
        ];
        rec.extend(t.action.iter().map(|v| format!("{v:?}")));
        rec.extend(t.state.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads an episode log written by [`write_episode_log`].
///
/// `next_state` is reconstructed from the following row of the same episode;
/// the final row of an episode reuses its own state.
pub fn read_episode_log<R: Read>(input: R) -> Result<Vec<Transition>, SeriesError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let d = header.iter().filter(|h| h.starts_with('a')).count();
    let m = header.iter().filter(|h| h.starts_with('s')).count();
    let parse = |s: &str, line: usize, field: &str| -> Result<f64, SeriesError> {
        s.trim().parse::<f64>().map_err(|e| SeriesError::BadRecord {
            line,
            msg: format!("{field}: {e}"),
        })
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 4 + d + m {
            return Err(SeriesError::BadRecord {
                line,
                msg: format!("expected {} fields, got {}", 4 + d + m, rec.len()),
            });
        }
        let episode_id = rec[0].trim().parse::<u64>().map_err(|e| SeriesError::BadRecord {
            line,
            msg: format!("episode: {e}"),
        })?;
        let step_index = rec[1].trim().parse::<usize>().map_err(|e| SeriesError::BadRecord {
            line,
            msg: format!("step: {e}"),
        })?;
        let reward = parse(&rec[2], line, "reward")?;
        let done = match rec[3].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(SeriesError::BadRecord {
                    line,
                    msg: format!("done must be 0 or 1, got {other}"),
                })
            }
        };
        let mut action = Vec::with_capacity(d);
        for j in 0..d {
            action.push(parse(&rec[4 + j], line, &format!("a{j}"))?);
        }
        let mut state = Vec::with_capacity(m);
        for j in 0..m {
            state.push(parse(&rec[4 + d + j], line, &format!("s{j}"))?);
        }
        out.push(Transition {
            state,
            action,
            reward,
            next_state: Vec::new(),
            done,
            episode_id,
            step_index,
        });
    }
    for i in 0..out.len() {
        out[i].next_state = if i + 1 < out.len() && out[i + 1].episode_id == out[i].episode_id {
            out[i + 1].state.clone()
        } else {
            out[i].state.clone()
        };
    }
    Ok(out)
}
