//! Per-round instrumentation and the hindsight comparator used for empirical
//! regret.

use rand::seq::SliceRandom;

use crate::datasets::Dataset;
use crate::delay::DelaySchedule;
use crate::error::{Error, Result};
use crate::learner::RoundRecord;
use crate::model::{hinge_from_scores, ModelShape, WeightMatrix};
use crate::rng::{self, Stream};

/// Per-round traces of one run plus schedule-level totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    mistakes: Vec<u64>,
    error_rate: Vec<f64>,
    feedbacks: Vec<usize>,
    missing_so_far: Vec<u64>,
    epoch: Vec<u32>,
    eta: Vec<f64>,
    cum_hinge_loss: Vec<f64>,
    delivered_total: u64,
    summary: Option<ScheduleTotals>,
}

/// Totals that depend on the whole delay schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleTotals {
    /// `|M|`
    pub missing: usize,
    /// `sum_t d_t`
    pub total_delay: u64,
    /// `sum_{t not in M} d_t`
    pub delivered_delay: u64,
}

impl RunMetrics {
    pub fn with_capacity(rounds: usize) -> Self {
        Self {
            mistakes: Vec::with_capacity(rounds),
            error_rate: Vec::with_capacity(rounds),
            feedbacks: Vec::with_capacity(rounds),
            missing_so_far: Vec::with_capacity(rounds),
            epoch: Vec::with_capacity(rounds),
            eta: Vec::with_capacity(rounds),
            cum_hinge_loss: Vec::with_capacity(rounds),
            delivered_total: 0,
            summary: None,
        }
    }

    /// Appends one round. `model_loss` is the hinge loss of the weights used
    /// for the round's prediction on that round's example.
    pub fn track(&mut self, record: &RoundRecord, true_label: usize, model_loss: f64) -> Result<()> {
        let expected = self.len() + 1;
        if record.round != expected {
            return Err(Error::Usage(format!(
                "round {} tracked, expected round {expected}",
                record.round
            )));
        }
        if record.mistake != (record.sampled_label != true_label) {
            return Err(Error::Invariant(format!(
                "round {}: mistake flag disagrees with the true label",
                record.round
            )));
        }
        if model_loss.is_nan() || model_loss < 0.0 {
            return Err(Error::Input(format!(
                "round {}: loss must be non-negative, got {model_loss}",
                record.round
            )));
        }
        let t = record.round as u64;
        let mistakes = self.mistakes.last().copied().unwrap_or(0) + u64::from(record.mistake);
        let cum_loss = self.cum_hinge_loss.last().copied().unwrap_or(0.0) + model_loss;
        self.delivered_total += record.feedback_origins.len() as u64;
        let missing = t.checked_sub(self.delivered_total).ok_or_else(|| {
            Error::Invariant(format!("round {t}: more feedbacks delivered than rounds played"))
        })?;

        self.mistakes.push(mistakes);
        self.error_rate.push(mistakes as f64 / t as f64);
        self.feedbacks.push(record.feedback_origins.len());
        self.missing_so_far.push(missing);
        self.epoch.push(record.epoch);
        self.eta.push(record.eta);
        self.cum_hinge_loss.push(cum_loss);
        Ok(())
    }

    /// Records the schedule totals once every round has been tracked and
    /// checks that the undelivered count matches the schedule's missing set.
    pub fn finish(&mut self, schedule: &DelaySchedule) -> Result<()> {
        if self.len() != schedule.horizon() {
            return Err(Error::Usage(format!(
                "{} rounds tracked for a horizon of {}",
                self.len(),
                schedule.horizon()
            )));
        }
        let missing = schedule.missing_set().len();
        if self.missing_so_far.last().copied() != Some(missing as u64) {
            return Err(Error::Invariant(format!(
                "{:?} feedbacks undelivered at the horizon, schedule says {missing}",
                self.missing_so_far.last()
            )));
        }
        self.summary = Some(ScheduleTotals {
            missing,
            total_delay: schedule.total_delay(),
            delivered_delay: schedule.delivered_delay(),
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mistakes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mistakes.is_empty()
    }

    /// Cumulative mistakes `sum_{s<=t} I[y_tilde_s != y_s]`.
    pub fn mistakes(&self) -> &[u64] {
        &self.mistakes
    }

    pub fn error_rate(&self) -> &[f64] {
        &self.error_rate
    }

    /// `|S_t|`, the feedbacks delivered in each round.
    pub fn feedbacks(&self) -> &[usize] {
        &self.feedbacks
    }

    /// `m_t = t - sum_{s<=t} |S_s|`.
    pub fn missing_so_far(&self) -> &[u64] {
        &self.missing_so_far
    }

    pub fn epoch(&self) -> &[u32] {
        &self.epoch
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn cum_hinge_loss(&self) -> &[f64] {
        &self.cum_hinge_loss
    }

    pub fn final_error_rate(&self) -> Option<f64> {
        self.error_rate.last().copied()
    }

    /// Error rate after round `t` (1-based).
    pub fn error_rate_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.error_rate.get(i).copied())
    }

    pub fn totals(&self) -> Option<ScheduleTotals> {
        self.summary
    }
}

/// Hindsight comparator `W* ~ argmin_W sum_t l_H(W, (x_t, y_t))`.
#[derive(Debug, Clone)]
pub struct ComparatorResult {
    pub weights: WeightMatrix,
    pub total_loss: f64,
    /// `l_H(W*, (x_t, y_t))` in dataset order.
    pub per_example_loss: Vec<f64>,
    pub passes: usize,
    /// Step-size constant `c` of the winning run; `None` when the zero
    /// matrix was best.
    pub step_scale: Option<f64>,
    /// Objective of the averaged iterate after each pass, for the winning `c`.
    pub objective_trace: Vec<f64>,
}

/// Step-size constants tried by [`fit_comparator`].
pub const COMPARATOR_STEP_GRID: [f64; 3] = [0.1, 1.0, 10.0];

/// Fits the comparator by multi-pass stochastic subgradient descent on the
/// total hinge loss with full labels.
///
/// Each pass visits the examples in a fresh seeded shuffle; the `k`-th visit
/// overall steps with `c / sqrt(k)`. For every `c` in
/// [`COMPARATOR_STEP_GRID`] both the running average of the iterates and the
/// last iterate are scored on the full dataset, and the best of those (or the
/// zero matrix, if nothing beats it) is returned.
pub fn fit_comparator(dataset: &Dataset, passes: usize, seed: u64) -> Result<ComparatorResult> {
    if passes == 0 {
        return Err(Error::Config("comparator needs at least one pass".into()));
    }
    let stats = dataset.stats();
    let shape = ModelShape::new(stats.num_classes, stats.num_features)?;
    let zero = WeightMatrix::zeros(shape);
    let (zero_loss, zero_losses) = objective(&zero, dataset);
    let mut best = ComparatorResult {
        weights: zero,
        total_loss: zero_loss,
        per_example_loss: zero_losses,
        passes,
        step_scale: None,
        objective_trace: Vec::new(),
    };

    for &c in &COMPARATOR_STEP_GRID {
        let (averaged, last, trace) = subgradient_descent(dataset, shape, passes, seed, c);
        for w in [averaged, last] {
            let (total, losses) = objective(&w, dataset);
            if total < best.total_loss {
                best = ComparatorResult {
                    weights: w,
                    total_loss: total,
                    per_example_loss: losses,
                    passes,
                    step_scale: Some(c),
                    objective_trace: trace.clone(),
                };
            }
        }
    }
    Ok(best)
}

type Sparse = Vec<(usize, f64)>;

fn sparse_rows(dataset: &Dataset) -> Vec<(Sparse, usize)> {
    dataset
        .examples()
        .iter()
        .map(|e| {
            let nz = e
                .features()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect();
            (nz, e.label().expect("dataset examples are labelled"))
        })
        .collect()
}

fn sparse_scores(w: &[f64], d: usize, x: &Sparse, scores: &mut [f64]) {
    for (r, s) in scores.iter_mut().enumerate() {
        let row = &w[r * d..(r + 1) * d];
        *s = x.iter().map(|&(j, v)| row[j] * v).sum();
    }
}

fn objective(w: &WeightMatrix, dataset: &Dataset) -> (f64, Vec<f64>) {
    let mut scores = vec![0.0; w.shape().num_classes()];
    let losses: Vec<f64> = dataset
        .examples()
        .iter()
        .map(|e| {
            w.scores_into(e.features(), &mut scores);
            hinge_from_scores(&scores, e.label().expect("dataset examples are labelled"))
        })
        .collect();
    (losses.iter().sum(), losses)
}

fn sparse_objective(w: &[f64], shape: ModelShape, rows: &[(Sparse, usize)]) -> f64 {
    let mut scores = vec![0.0; shape.num_classes()];
    rows.iter()
        .map(|(x, y)| {
            sparse_scores(w, shape.num_features(), x, &mut scores);
            hinge_from_scores(&scores, *y)
        })
        .sum()
}

fn to_matrix(shape: ModelShape, entries: &[f64]) -> WeightMatrix {
    let mut m = WeightMatrix::zeros(shape);
    let d = shape.num_features();
    for (i, &v) in entries.iter().enumerate() {
        m.set(i / d, i % d, v);
    }
    m
}

// Returns (averaged iterate, last iterate, per-pass objective of the average).
//
// The average of iterates W_1..W_N is kept implicitly: with W_k = sum_{i<=k} D_i
// and A = sum_i i * D_i, the mean is ((N + 1) W_N - A) / N.
fn subgradient_descent(
    dataset: &Dataset,
    shape: ModelShape,
    passes: usize,
    seed: u64,
    c: f64,
) -> (WeightMatrix, WeightMatrix, Vec<f64>) {
    let k = shape.num_classes();
    let d = shape.num_features();
    let rows = sparse_rows(dataset);
    let mut w = vec![0.0; k * d];
    let mut weighted = vec![0.0; k * d];
    let mut mean = vec![0.0; k * d];
    let mut scores = vec![0.0; k];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut shuffle = rng::stream(seed, Stream::ComparatorShuffle);
    let mut step = 0u64;
    let mut trace = Vec::with_capacity(passes);

    for _ in 0..passes {
        order.shuffle(&mut shuffle);
        for &i in &order {
            step += 1;
            let (x, y) = (&rows[i].0, rows[i].1);
            sparse_scores(&w, d, x, &mut scores);
            let runner_up = (0..k)
                .filter(|&j| j != y)
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if scores[b] >= scores[j] => Some(b),
                    _ => Some(j),
                })
                .expect("at least two classes");
            if 1.0 - scores[y] + scores[runner_up] <= 0.0 {
                continue;
            }
            let eta = c / (step as f64).sqrt();
            let kf = step as f64;
            for &(j, v) in x {
                w[y * d + j] += eta * v;
                w[runner_up * d + j] -= eta * v;
                weighted[y * d + j] += kf * eta * v;
                weighted[runner_up * d + j] -= kf * eta * v;
            }
        }
        let n = step as f64;
        for ((m, &wi), &ai) in mean.iter_mut().zip(&w).zip(&weighted) {
            *m = ((n + 1.0) * wi - ai) / n;
        }
        trace.push(sparse_objective(&mean, shape, &rows));
    }

    (to_matrix(shape, &mean), to_matrix(shape, &w), trace)
}

/// `R(t) = sum_{s<=t} l_H(W_s, z_s) - sum_{s<=t} l_H(W*, z_s)` for every round.
pub fn empirical_regret(metrics: &RunMetrics, comparator: &ComparatorResult) -> Result<Vec<f64>> {
    if metrics.len() != comparator.per_example_loss.len() {
        return Err(Error::Usage(format!(
            "run has {} rounds, comparator was fit on {} examples",
            metrics.len(),
            comparator.per_example_loss.len()
        )));
    }
    let mut comparator_cum = 0.0;
    Ok(metrics
        .cum_hinge_loss()
        .iter()
        .zip(&comparator.per_example_loss)
        .map(|(&learner, &loss)| {
            comparator_cum += loss;
            learner - comparator_cum
        })
        .collect())
}
