//! Linear multiclass model: scoring, the exploration distribution, label
//! sampling, the multiclass hinge loss and the importance-weighted bandit
//! update.
//!
//! Class indices are 0-based throughout the API (`0..K`).

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// Number of classes `K` and features `d` of a linear model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    num_classes: usize,
    num_features: usize,
}

impl ModelShape {
    pub fn new(num_classes: usize, num_features: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if num_features == 0 {
            return Err(Error::Shape("need at least 1 feature".into()));
        }
        Ok(Self {
            num_classes,
            num_features,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_features {
            return Err(Error::Shape(format!(
                "example has {} features, model expects {}",
                x.len(),
                self.num_features
            )));
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes {
            return Err(Error::Shape(format!(
                "label {y} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// One labelled (or unlabelled) feature vector.
///
/// Features are reference counted so that pending feedbacks and update
/// matrices can hold on to them without copying. The indices of nonzero
/// features are kept alongside for sparse products.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    features: Arc<[f64]>,
    support: Arc<[u32]>,
    label: Option<usize>,
}

impl Example {
    pub fn new(features: Vec<f64>, label: Option<usize>) -> Self {
        let support = features
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, _)| j as u32)
            .collect();
        Self {
            features: features.into(),
            support,
            label,
        }
    }

    pub fn labeled(features: Vec<f64>, label: usize) -> Self {
        Self::new(features, Some(label))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Ascending indices of the nonzero features.
    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn norm(&self) -> f64 {
        self.features.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Dense `K x d` weight matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    shape: ModelShape,
    entries: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(shape: ModelShape) -> Self {
        Self {
            shape,
            entries: vec![0.0; shape.num_classes * shape.num_features],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let shape = ModelShape::new(k, d)?;
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("weight entries must be finite".into()));
        }
        Ok(Self { shape, entries })
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.shape.num_features + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.entries[row * self.shape.num_features + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let d = self.shape.num_features;
        &self.entries[row * d..(row + 1) * d]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.entries {
            *v *= factor;
        }
    }

    /// `W x`, accumulated over features in ascending order.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.shape.check_features(x)?;
        let mut out = vec![0.0; self.shape.num_classes];
        self.scores_into(x, &mut out);
        Ok(out)
    }

    // Zero features contribute nothing, so skipping them keeps the result
    // identical to the dense product while making sparse inputs cheap.
    pub(crate) fn example_scores_into(&self, x: &Example, out: &mut [f64]) {
        let d = self.shape.num_features;
        out.iter_mut().for_each(|s| *s = 0.0);
        for &j in x.support() {
            let j = j as usize;
            let xj = x.features[j];
            for (r, s) in out.iter_mut().enumerate() {
                *s += self.entries[r * d + j] * xj;
            }
        }
    }

    pub(crate) fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.shape.num_features;
        out.iter_mut().for_each(|s| *s = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (r, s) in out.iter_mut().enumerate() {
                *s += self.entries[r * d + j] * xj;
            }
        }
    }

    /// Multiclass hinge loss `max(0, 1 - (Wx)_y + max_{j != y} (Wx)_j)`.
    pub fn hinge_loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.shape.check_label(y)?;
        let s = self.scores(x)?;
        Ok(hinge_from_scores(&s, y))
    }

    /// `W <- W + eta * sum(updates)`.
    ///
    /// The updates are summed before being scaled and added, so the result
    /// does not depend on the order of a two-element batch.
    pub fn apply_updates(&mut self, updates: &[UpdateMatrix], eta: f64) -> Result<()> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {eta}")));
        }
        if let Some(u) = updates.iter().find(|u| u.shape != self.shape) {
            return Err(Error::Shape(format!(
                "update is {}x{}, weights are {}x{}",
                u.shape.num_classes,
                u.shape.num_features,
                self.shape.num_classes,
                self.shape.num_features
            )));
        }
        let d = self.shape.num_features;
        match updates {
            [] => {}
            [single] => {
                let x = &single.example;
                for &(r, coef) in single.rows() {
                    for &j in x.support() {
                        let j = j as usize;
                        self.entries[r * d + j] += eta * (x.features[j] * coef);
                    }
                }
            }
            many => {
                let mut sum = vec![0.0; self.entries.len()];
                let mut pending = vec![false; self.entries.len()];
                for u in many {
                    let x = &u.example;
                    for &(r, coef) in u.rows() {
                        for &j in x.support() {
                            let j = j as usize;
                            sum[r * d + j] += x.features[j] * coef;
                        }
                    }
                }
                for u in many {
                    for &(r, _) in u.rows() {
                        for &j in u.example.support() {
                            let i = r * d + j as usize;
                            if !pending[i] {
                                pending[i] = true;
                                self.entries[i] += eta * sum[i];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn greedy_label(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Hinge loss evaluated from a precomputed score vector.
pub fn hinge_from_scores(scores: &[f64], y: usize) -> f64 {
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    (1.0 - scores[y] + runner_up).max(0.0)
}

/// Validates the exploration rate; it must lie in the open interval (0, 0.5).
pub fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 0.5 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "exploration rate must lie in (0, 0.5), got {gamma}"
        )))
    }
}

/// Exploration distribution `P(r) = (1 - gamma) I[r = y_hat] + gamma / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    greedy: usize,
    probs: Vec<f64>,
    gamma: f64,
}

impl PredictionDistribution {
    pub fn new(greedy: usize, num_classes: usize, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if greedy >= num_classes {
            return Err(Error::Shape(format!(
                "greedy label {greedy} out of range for {num_classes} classes"
            )));
        }
        Ok(Self::build(greedy, num_classes, gamma))
    }

    /// Builds the distribution without range-checking `gamma`.
    ///
    /// Only for probing degenerate limits (for instance `gamma -> 0`).
    #[doc(hidden)]
    pub fn new_unchecked(greedy: usize, num_classes: usize, gamma: f64) -> Self {
        Self::build(greedy, num_classes, gamma)
    }

    fn build(greedy: usize, num_classes: usize, gamma: f64) -> Self {
        let floor = gamma / num_classes as f64;
        let mut probs = vec![floor; num_classes];
        probs[greedy] = (1.0 - gamma) + floor;
        Self {
            greedy,
            probs,
            gamma,
        }
    }

    pub fn greedy_label(&self) -> usize {
        self.greedy
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Draws a label by inverting the cumulative distribution with one
    /// uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (r, &p) in self.probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return r;
            }
        }
        self.probs.len() - 1
    }
}

/// Scores `x` under `w` and builds the exploration distribution around the
/// greedy label.
pub fn predict_distribution(
    w: &WeightMatrix,
    x: &Example,
    gamma: f64,
) -> Result<PredictionDistribution> {
    check_gamma(gamma)?;
    let scores = w.scores(x.features())?;
    Ok(PredictionDistribution::build(
        greedy_label(&scores),
        w.shape().num_classes(),
        gamma,
    ))
}

/// The sampled prediction and the bandit indicator `I[y_tilde = y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BanditOutcome {
    pub sampled_label: usize,
    pub correct: bool,
}

impl BanditOutcome {
    pub fn observe(sampled_label: usize, true_label: usize) -> Self {
        Self {
            sampled_label,
            correct: sampled_label == true_label,
        }
    }
}

/// Sparse `K x d` update: at most two nonzero rows, each a scalar multiple of
/// one feature vector.
#[derive(Debug, Clone)]
pub struct UpdateMatrix {
    shape: ModelShape,
    example: Example,
    rows: Vec<(usize, f64)>,
}

impl UpdateMatrix {
    /// Importance-weighted bandit update built from one feedback.
    ///
    /// Row `r` is `x * (I[correct] I[y_tilde = r] / P(r) - I[y_hat = r])`.
    /// `p` must be the distribution `y_tilde` was drawn from.
    pub fn from_feedback(
        x: &Example,
        outcome: BanditOutcome,
        p: &PredictionDistribution,
    ) -> Result<Self> {
        let k = p.num_classes();
        let shape = ModelShape::new(k, x.features().len())?;
        shape.check_label(outcome.sampled_label)?;
        let y_hat = p.greedy_label();
        let y_tilde = outcome.sampled_label;
        let mut rows = Vec::with_capacity(2);
        if outcome.correct {
            let reward = 1.0 / p.probs()[y_tilde];
            if y_tilde == y_hat {
                rows.push((y_hat, reward - 1.0));
            } else {
                rows.push((y_hat, -1.0));
                rows.push((y_tilde, reward));
            }
        } else {
            rows.push((y_hat, -1.0));
        }
        rows.sort_by_key(|&(r, _)| r);
        Ok(Self {
            shape,
            example: x.clone(),
            rows,
        })
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    /// `(row, coefficient)` pairs; every other row is zero.
    pub fn rows(&self) -> &[(usize, f64)] {
        &self.rows
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows
            .iter()
            .find(|&&(r, _)| r == row)
            .map_or(0.0, |&(_, c)| self.example.features[col] * c)
    }

    pub fn nonzero_rows(&self) -> usize {
        if self.example.support.is_empty() {
            return 0;
        }
        self.rows.iter().filter(|&&(_, c)| c != 0.0).count()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let x_sq: f64 = self.example.features.iter().map(|v| v * v).sum();
        self.rows.iter().map(|&(_, c)| c * c * x_sq).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> WeightMatrix {
        let mut w = WeightMatrix::zeros(self.shape);
        for &(r, c) in &self.rows {
            for (j, &xj) in self.example.features.iter().enumerate() {
                w.set(r, j, xj * c);
            }
        }
        w
    }
}

/// Expectation of the bandit update over `y_tilde ~ p` when the true label is
/// `y`, computed by enumerating all `K` possible draws.
pub fn expected_update(x: &Example, y: usize, p: &PredictionDistribution) -> Result<WeightMatrix> {
    let k = p.num_classes();
    let shape = ModelShape::new(k, x.features().len())?;
    shape.check_label(y)?;
    let mut acc = WeightMatrix::zeros(shape);
    for y_tilde in 0..k {
        let u = UpdateMatrix::from_feedback(x, BanditOutcome::observe(y_tilde, y), p)?;
        let weight = p.probs()[y_tilde];
        for &(r, c) in u.rows() {
            for (j, &xj) in x.features().iter().enumerate() {
                let i = r * shape.num_features + j;
                acc.entries[i] += weight * (xj * c);
            }
        }
    }
    Ok(acc)
}
