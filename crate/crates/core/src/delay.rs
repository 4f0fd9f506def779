//! Delay schedules and the feedback queue that routes each round's bandit
//! feedback to the round where it becomes visible.
//!
//! Rounds are 1-based: round `t` runs from `1` to the horizon `T`. The
//! feedback of round `s` with delay `d_s` is delivered at round `s + d_s`, or
//! never if that falls past the horizon (a missing sample).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BanditOutcome, Example, PredictionDistribution};

/// How a schedule was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMode {
    Constant,
    Uniform,
    File,
    Explicit,
}

/// Recipe for a schedule, resolved against a horizon by [`make_schedule`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleSource {
    /// Every delay equals the maximum delay.
    Constant { max_delay: usize },
    /// Each delay drawn independently and uniformly from `1..=max_delay`.
    Uniform { max_delay: usize },
    /// One non-negative integer per line; values below 1 are raised to 1.
    File(PathBuf),
}

/// Per-round feedback delays `d_1..d_T`, each at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySchedule {
    delays: Vec<usize>,
    mode: DelayMode,
}

impl DelaySchedule {
    pub fn from_delays(delays: Vec<usize>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::Input("schedule horizon must be at least 1".into()));
        }
        if let Some(t) = delays.iter().position(|&d| d == 0) {
            return Err(Error::Input(format!("delay of round {} is 0", t + 1)));
        }
        Ok(Self {
            delays,
            mode: DelayMode::Explicit,
        })
    }

    pub fn constant(horizon: usize, delay: usize) -> Result<Self> {
        check_sizes(horizon, delay)?;
        Ok(Self {
            delays: vec![delay; horizon],
            mode: DelayMode::Constant,
        })
    }

    pub fn uniform<R: Rng + ?Sized>(horizon: usize, max_delay: usize, rng: &mut R) -> Result<Self> {
        check_sizes(horizon, max_delay)?;
        let delays = (0..horizon).map(|_| rng.random_range(1..=max_delay)).collect();
        Ok(Self {
            delays,
            mode: DelayMode::Uniform,
        })
    }

    /// Reads the first `horizon` lines of a delay file.
    pub fn from_file(path: &Path, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Input("schedule horizon must be at least 1".into()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut delays = Vec::with_capacity(horizon);
        for (i, line) in text.lines().enumerate().take(horizon) {
            let raw: i64 = line.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected an integer delay, found {:?}", line.trim()),
            })?;
            delays.push(raw.max(1) as usize);
        }
        if delays.len() < horizon {
            return Err(Error::Input(format!(
                "{} holds {} delays, horizon is {horizon}",
                path.display(),
                delays.len()
            )));
        }
        Ok(Self {
            delays,
            mode: DelayMode::File,
        })
    }

    pub fn horizon(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    /// Delay of the 1-based round `t`.
    pub fn delay(&self, t: usize) -> usize {
        self.delays[t - 1]
    }

    pub fn mode(&self) -> DelayMode {
        self.mode
    }

    pub fn is_missing(&self, t: usize) -> bool {
        t + self.delay(t) > self.horizon()
    }

    /// `{t : t + d_t > T}`.
    pub fn missing_set(&self) -> BTreeSet<usize> {
        (1..=self.horizon()).filter(|&t| self.is_missing(t)).collect()
    }

    pub fn total_delay(&self) -> u64 {
        self.delays.iter().map(|&d| d as u64).sum()
    }

    /// Sum of delays over rounds whose feedback is delivered.
    pub fn delivered_delay(&self) -> u64 {
        (1..=self.horizon())
            .filter(|&t| !self.is_missing(t))
            .map(|t| self.delay(t) as u64)
            .sum()
    }

    /// Left-hand side of the delay-count inequality
    /// `sum_t sum_{s in S_t} [ |S_{t,s}| + sum_{r=s}^{t-1} |S_r| ] <= 2 sum_{t not in M} d_t`,
    /// where `S_{t,s} = {q in S_t : q < s}`, computed by replaying a queue.
    pub fn lemma1_lhs(&self) -> u64 {
        let horizon = self.horizon();
        let mut queue: FeedbackQueue<usize> = FeedbackQueue::new(horizon);
        // arrivals_before[r] = |S_1| + ... + |S_{r-1}|
        let mut arrivals_before = vec![0u64; horizon + 2];
        let mut lhs = 0u64;
        for t in 1..=horizon {
            queue
                .enqueue(t, self.delay(t))
                .expect("origin round within horizon");
            let due = queue.drain(t).expect("rounds drained in order");
            for (rank, &s) in due.iter().enumerate() {
                // `due` is sorted by origin, so `rank` counts the earlier origins.
                let between = arrivals_before[t] - arrivals_before[s];
                lhs += rank as u64 + between;
            }
            arrivals_before[t + 1] = arrivals_before[t] + due.len() as u64;
        }
        lhs
    }
}

fn check_sizes(horizon: usize, max_delay: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Input("schedule horizon must be at least 1".into()));
    }
    if max_delay == 0 {
        return Err(Error::Input("maximum delay must be at least 1".into()));
    }
    Ok(())
}

/// Builds the schedule described by `source` for `horizon` rounds.
pub fn make_schedule<R: Rng + ?Sized>(
    source: &ScheduleSource,
    horizon: usize,
    rng: &mut R,
) -> Result<DelaySchedule> {
    match source {
        ScheduleSource::Constant { max_delay } => DelaySchedule::constant(horizon, *max_delay),
        ScheduleSource::Uniform { max_delay } => DelaySchedule::uniform(horizon, *max_delay, rng),
        ScheduleSource::File(path) => DelaySchedule::from_file(path, horizon),
    }
}

/// Anything that can sit in a [`FeedbackQueue`].
pub trait Origin {
    /// 1-based round the feedback was generated in.
    fn origin(&self) -> usize;
}

impl Origin for usize {
    fn origin(&self) -> usize {
        *self
    }
}

/// A pending bandit feedback together with everything needed to build its
/// update once delivered.
#[derive(Debug, Clone)]
pub struct FeedbackEvent {
    pub origin: usize,
    pub outcome: BanditOutcome,
    /// Distribution the label was sampled from at the origin round.
    pub snapshot: PredictionDistribution,
    pub example: Example,
}

impl Origin for FeedbackEvent {
    fn origin(&self) -> usize {
        self.origin
    }
}

/// Pending feedbacks keyed by delivery round, plus the missing set.
#[derive(Debug, Clone)]
pub struct FeedbackQueue<E = FeedbackEvent> {
    horizon: usize,
    pending: BTreeMap<usize, Vec<E>>,
    missing: BTreeSet<usize>,
    delivered: Vec<usize>,
    delivered_counts: Vec<usize>,
    last_drained: usize,
}

impl<E: Origin> FeedbackQueue<E> {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            pending: BTreeMap::new(),
            missing: BTreeSet::new(),
            delivered: Vec::new(),
            delivered_counts: Vec::with_capacity(horizon),
            last_drained: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Schedules `event` for round `origin + delay`, or records it as
    /// missing when that is past the horizon.
    pub fn enqueue(&mut self, event: E, delay: usize) -> Result<()> {
        let s = event.origin();
        if s == 0 || s > self.horizon {
            return Err(Error::Usage(format!(
                "origin round {s} outside 1..={}",
                self.horizon
            )));
        }
        if delay == 0 {
            return Err(Error::Usage(format!("round {s} enqueued with delay 0")));
        }
        let due = s + delay;
        if due > self.horizon {
            self.missing.insert(s);
        } else {
            self.pending.entry(due).or_default().push(event);
        }
        Ok(())
    }

    /// Removes and returns the feedbacks due at round `t`, ordered by origin.
    ///
    /// Rounds must be drained exactly once each, in order.
    pub fn drain(&mut self, t: usize) -> Result<Vec<E>> {
        if t != self.last_drained + 1 {
            return Err(Error::Usage(format!(
                "drain({t}) after drain({}); rounds must be drained once each, in order",
                self.last_drained
            )));
        }
        if t > self.horizon {
            return Err(Error::Usage(format!("round {t} is past the horizon {}", self.horizon)));
        }
        self.last_drained = t;
        let mut due = self.pending.remove(&t).unwrap_or_default();
        due.sort_by_key(Origin::origin);
        self.delivered.extend(due.iter().map(Origin::origin));
        self.delivered_counts.push(due.len());
        Ok(due)
    }

    pub fn missing(&self) -> &BTreeSet<usize> {
        &self.missing
    }

    /// Origins of every feedback delivered so far, in delivery order.
    pub fn delivered(&self) -> &[usize] {
        &self.delivered
    }

    /// `|S_t|` for each drained round.
    pub fn delivered_counts(&self) -> &[usize] {
        &self.delivered_counts
    }

    pub fn pending_len(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }
}
