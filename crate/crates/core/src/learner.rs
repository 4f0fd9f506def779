//! The run loop: Delaytron with a constant step size, Adaptive Delaytron with
//! epoch-doubling step sizes, and Banditron as the one-round-delay special
//! case.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use crate::datasets::Dataset;
use crate::delay::{DelaySchedule, FeedbackEvent, FeedbackQueue};
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::model::{
    check_gamma, greedy_label, hinge_from_scores, BanditOutcome, ModelShape,
    PredictionDistribution, UpdateMatrix, WeightMatrix,
};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Delaytron,
    AdaptiveDelaytron,
    Banditron,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Delaytron => "delaytron",
            Algorithm::AdaptiveDelaytron => "adaptive_delaytron",
            Algorithm::Banditron => "banditron",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delaytron" => Ok(Algorithm::Delaytron),
            "adaptive_delaytron" | "adaptive" => Ok(Algorithm::AdaptiveDelaytron),
            "banditron" => Ok(Algorithm::Banditron),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Learner hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Exploration rate in (0, 0.5).
    pub gamma: f64,
    /// Constant step size for Delaytron and Banditron; unused by the adaptive
    /// variant.
    pub eta: f64,
    /// Multiplier on the adaptive step size `2^{-e/2}`.
    pub eta_scale: f64,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, eta: f64, seed: u64) -> Self {
        Self {
            algorithm,
            gamma,
            eta,
            eta_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        match self.algorithm {
            Algorithm::AdaptiveDelaytron if !(self.eta_scale > 0.0 && self.eta_scale.is_finite()) => {
                Err(Error::Config(format!(
                    "step-size multiplier must be positive, got {}",
                    self.eta_scale
                )))
            }
            Algorithm::Delaytron | Algorithm::Banditron if !(self.eta > 0.0 && self.eta.is_finite()) => {
                Err(Error::Config(format!("step size must be positive, got {}", self.eta)))
            }
            _ => Ok(()),
        }
    }
}

/// Doubling-trick state of Adaptive Delaytron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochState {
    pub epoch: u32,
    /// `sum_{s<=t} m_s`
    pub cumulative_missing: u64,
    /// `m_t` of the latest round.
    pub missing_now: u64,
    /// `2^{-e/2}`
    pub eta: f64,
}

impl Default for EpochState {
    fn default() -> Self {
        Self {
            epoch: 0,
            cumulative_missing: 0,
            missing_now: 0,
            eta: 1.0,
        }
    }
}

impl EpochState {
    /// Adds round `t`'s missing count and advances the epoch.
    pub fn observe(self, missing_now: u64) -> Self {
        epoch_advance(Self {
            missing_now,
            cumulative_missing: self.cumulative_missing + missing_now,
            ..self
        })
    }
}

/// `2^{-e/2}`
pub fn epoch_step_size(epoch: u32) -> f64 {
    2f64.powf(-f64::from(epoch) / 2.0)
}

/// `m_t = t - sum_{s<=t} |S_s|`: feedbacks still outstanding after round `t`.
pub fn missing_count_update(t: usize, delivered_so_far: usize) -> Result<u64> {
    t.checked_sub(delivered_so_far)
        .map(|m| m as u64)
        .ok_or_else(|| {
            Error::Invariant(format!(
                "{delivered_so_far} feedbacks delivered by round {t}"
            ))
        })
}

/// Moves to the next epoch while `sum m_s >= 2^e`, then resets the step size.
///
/// One round can push the running sum past several powers of two, so this
/// loops rather than incrementing once.
pub fn epoch_advance(state: EpochState) -> EpochState {
    let mut epoch = state.epoch;
    while epoch < 63 && state.cumulative_missing >= 1u64 << epoch {
        epoch += 1;
    }
    EpochState {
        epoch,
        eta: epoch_step_size(epoch),
        ..state
    }
}

/// Audit record of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round.
    pub round: usize,
    pub example_index: usize,
    pub greedy_label: usize,
    pub sampled_label: usize,
    /// `I[y_tilde != y]`
    pub mistake: bool,
    /// Origins of the feedbacks applied this round, ascending.
    pub feedback_origins: Vec<usize>,
    pub epoch: u32,
    /// Step size used for this round's update.
    pub eta: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub weights: WeightMatrix,
    pub metrics: RunMetrics,
    pub records: Vec<RoundRecord>,
    /// The schedule actually used (all ones for Banditron).
    pub schedule: DelaySchedule,
}

/// Plays `schedule.horizon()` rounds over the first examples of `dataset`.
///
/// Each round predicts from the current weights, samples a label from the
/// exploration distribution, queues its own feedback, then applies every
/// feedback due this round as one batch. Banditron ignores `schedule` and
/// uses a delay of 1 everywhere.
pub fn run(config: &LearnerConfig, dataset: &Dataset, schedule: &DelaySchedule) -> Result<RunOutput> {
    config.validate()?;
    let horizon = schedule.horizon();
    if dataset.len() < horizon {
        return Err(Error::Input(format!(
            "dataset holds {} examples, horizon is {horizon}",
            dataset.len()
        )));
    }
    let schedule = match config.algorithm {
        Algorithm::Banditron => Cow::Owned(DelaySchedule::constant(horizon, 1)?),
        _ => Cow::Borrowed(schedule),
    };

    let stats = dataset.stats();
    let shape = ModelShape::new(stats.num_classes, stats.num_features)?;
    let mut weights = WeightMatrix::zeros(shape);
    let mut queue: FeedbackQueue<FeedbackEvent> = FeedbackQueue::new(horizon);
    let mut rng = rng::stream(config.seed, Stream::LabelSampling);
    let mut epoch = EpochState::default();
    let mut delivered = 0usize;
    let mut metrics = RunMetrics::with_capacity(horizon);
    let mut records = Vec::with_capacity(horizon);
    let mut scores = vec![0.0; shape.num_classes()];

    for t in 1..=horizon {
        let example = &dataset.examples()[t - 1];
        let y = example
            .label()
            .ok_or_else(|| Error::Input(format!("example {} has no label", t - 1)))?;

        weights.example_scores_into(example, &mut scores);
        let y_hat = greedy_label(&scores);
        let loss = hinge_from_scores(&scores, y);
        let p = PredictionDistribution::new(y_hat, shape.num_classes(), config.gamma)?;
        let outcome = BanditOutcome::observe(p.sample(&mut rng), y);

        queue.enqueue(
            FeedbackEvent {
                origin: t,
                outcome,
                snapshot: p,
                example: example.clone(),
            },
            schedule.delay(t),
        )?;
        let due = queue.drain(t)?;
        delivered += due.len();

        let eta = match config.algorithm {
            Algorithm::AdaptiveDelaytron => {
                epoch = epoch.observe(missing_count_update(t, delivered)?);
                config.eta_scale * epoch.eta
            }
            Algorithm::Delaytron | Algorithm::Banditron => config.eta,
        };
        let updates = due
            .iter()
            .map(|ev| UpdateMatrix::from_feedback(&ev.example, ev.outcome, &ev.snapshot))
            .collect::<Result<Vec<_>>>()?;
        weights.apply_updates(&updates, eta)?;

        let record = RoundRecord {
            round: t,
            example_index: t - 1,
            greedy_label: y_hat,
            sampled_label: outcome.sampled_label,
            mistake: !outcome.correct,
            feedback_origins: due.iter().map(|ev| ev.origin).collect(),
            epoch: epoch.epoch,
            eta,
        };
        metrics.track(&record, y, loss)?;
        records.push(record);
    }
    metrics.finish(&schedule)?;

    Ok(RunOutput {
        weights,
        metrics,
        records,
        schedule: schedule.into_owned(),
    })
}

/// Which constant step-size prescription to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSizeRule {
    /// No delay: `||W|| / sqrt(K T R^2 / gamma)`.
    NoDelay,
    /// Bounded loss on missing samples:
    /// `||W|| / sqrt((2 K R^2 / gamma) (T/2 + 2 sum_{t not in M} d_t))`.
    BoundedLoss,
    /// Unbounded loss on missing samples; adds `|M| T` inside the bracket.
    UnboundedLoss,
    /// Bounded loss folded into the total delay:
    /// `||W|| / sqrt((2 K R^2 / gamma) (T/2 + (2 + L^2 / (R^2 ||W||^2)) sum_t d_t))`.
    BoundedLossTotalDelay,
}

impl FromStr for StepSizeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case1" | "no_delay" => Ok(Self::NoDelay),
            "bounded_loss" => Ok(Self::BoundedLoss),
            "unbounded_loss" => Ok(Self::UnboundedLoss),
            "bounded_loss_total" => Ok(Self::BoundedLossTotalDelay),
            other => Err(Error::Config(format!("unknown step-size rule {other:?}"))),
        }
    }
}

/// Inputs to [`theoretical_step_size`]. Only the fields a rule reads need to
/// be meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepSizeInputs {
    /// Estimate of `||W||_F` for the comparator.
    pub weight_norm: f64,
    pub num_classes: usize,
    /// `R >= ||x_t||`
    pub max_norm: f64,
    pub gamma: f64,
    pub horizon: usize,
    /// `sum_{t not in M} d_t`
    pub delivered_delay: f64,
    /// `sum_t d_t`
    pub total_delay: f64,
    /// `|M|`
    pub missing: usize,
    /// Bound `L` on the loss of missing samples.
    pub loss_bound: f64,
}

/// Constant step size that balances the two terms of the regret bound.
pub fn theoretical_step_size(rule: StepSizeRule, inputs: &StepSizeInputs) -> Result<f64> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Config(format!("{name} must be positive, got {v}")))
        }
    };
    let non_negative = |name: &str, v: f64| {
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Config(format!("{name} must be non-negative, got {v}")))
        }
    };
    let w = positive("weight norm", inputs.weight_norm)?;
    let k = positive("number of classes", inputs.num_classes as f64)?;
    let r = positive("max norm", inputs.max_norm)?;
    let gamma = positive("gamma", inputs.gamma)?;
    let t = positive("horizon", inputs.horizon as f64)?;
    let scale = 2.0 * k * r * r / gamma;

    let denominator = match rule {
        StepSizeRule::NoDelay => k * t * r * r / gamma,
        StepSizeRule::BoundedLoss => {
            let delivered = non_negative("delivered delay", inputs.delivered_delay)?;
            scale * (t / 2.0 + 2.0 * delivered)
        }
        StepSizeRule::UnboundedLoss => {
            let delivered = non_negative("delivered delay", inputs.delivered_delay)?;
            scale * (t / 2.0 + 2.0 * delivered + inputs.missing as f64 * t)
        }
        StepSizeRule::BoundedLossTotalDelay => {
            let total = non_negative("total delay", inputs.total_delay)?;
            let l = non_negative("loss bound", inputs.loss_bound)?;
            scale * (t / 2.0 + (2.0 + l * l / (r * r * w * w)) * total)
        }
    };
    Ok(w / denominator.sqrt())
}
