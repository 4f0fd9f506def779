use delaytron_core::delay::{DelaySchedule, FeedbackQueue};
use delaytron_core::learner::{run, Algorithm, LearnerConfig};
use delaytron_core::model::{
    expected_update, predict_distribution, BanditOutcome, Example, PredictionDistribution,
    UpdateMatrix, WeightMatrix,
};
use delaytron_core::datasets::{gen_synsep, Dataset, SyntheticSpec};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (usize, Vec<f64>, usize, usize, f64)> {
    (2usize..8, 1usize..6).prop_flat_map(|(k, d)| {
        (
            Just(k),
            prop::collection::vec(-3.0f64..3.0, d),
            0..k,
            0..k,
            0.001f64..0.499,
        )
    })
}

fn weights(k: usize, d: usize) -> impl Strategy<Value = WeightMatrix> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), k)
        .prop_map(|rows| WeightMatrix::from_rows(&rows).unwrap())
}

fn schedule(max_t: usize) -> impl Strategy<Value = Vec<usize>> {
    (1usize..max_t).prop_flat_map(|t| (1usize..=t).prop_flat_map(move |d| prop::collection::vec(1..=d, t)))
}

fn stream(n: usize) -> Dataset {
    gen_synsep(&SyntheticSpec::synsep(n, 5)).unwrap()
}

proptest! {
    #[test]
    fn expected_update_matches_closed_form((k, x, y, y_hat, gamma) in instance()) {
        let ex = Example::labeled(x.clone(), y);
        let p = PredictionDistribution::new(y_hat, k, gamma).unwrap();
        let u = expected_update(&ex, y, &p).unwrap();
        for r in 0..k {
            let coef = f64::from(u8::from(r == y)) - f64::from(u8::from(r == y_hat));
            for (j, &xj) in x.iter().enumerate() {
                prop_assert!((u.get(r, j) - xj * coef).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn distribution_is_valid(k in 2usize..20, gamma in 0.0001f64..0.4999, g in 0usize..20) {
        let g = g % k;
        let p = PredictionDistribution::new(g, k, gamma).unwrap();
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.probs().iter().all(|&q| q >= gamma / k as f64));
        prop_assert_eq!(p.probs()[g], 1.0 - gamma + gamma / k as f64);
    }

    #[test]
    fn update_has_at_most_two_rows_and_bounded_norm(
        (k, x, y, y_hat, gamma) in instance(),
        y_tilde in 0usize..8,
    ) {
        let y_tilde = y_tilde % k;
        let ex = Example::labeled(x, y);
        let p = PredictionDistribution::new(y_hat, k, gamma).unwrap();
        let u = UpdateMatrix::from_feedback(&ex, BanditOutcome::observe(y_tilde, y), &p).unwrap();
        prop_assert!(u.nonzero_rows() <= 2);
        let bound = ex.norm() * (k as f64 / gamma + 1.0);
        prop_assert!(u.frobenius_norm() <= bound * (1.0 + 1e-12));
        for &(r, _) in u.rows() {
            prop_assert!(r == y_hat || r == y_tilde);
        }
    }

    #[test]
    fn second_moment_is_bounded((k, x, y, y_hat, gamma) in instance()) {
        let ex = Example::labeled(x, y);
        let p = PredictionDistribution::new(y_hat, k, gamma).unwrap();
        let moment: f64 = (0..k)
            .map(|y_tilde| {
                let u = UpdateMatrix::from_feedback(&ex, BanditOutcome::observe(y_tilde, y), &p).unwrap();
                p.probs()[y_tilde] * u.frobenius_norm().powi(2)
            })
            .sum();
        let x_sq = ex.norm().powi(2);
        prop_assert!(moment <= x_sq * (k as f64 / gamma + 1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn hinge_is_nonnegative_and_one_at_zero(
        w in (2usize..6, 1usize..5).prop_flat_map(|(k, d)| (weights(k, d), prop::collection::vec(-2.0f64..2.0, d), 0..k))
    ) {
        let (w, x, y) = w;
        prop_assert!(w.hinge_loss(&x, y).unwrap() >= 0.0);
        let zero = WeightMatrix::zeros(w.shape());
        prop_assert_eq!(zero.hinge_loss(&x, y).unwrap(), 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences(
        case in (2usize..6, 1usize..5).prop_flat_map(|(k, d)| (weights(k, d), prop::collection::vec(-2.0f64..2.0, d), 0..k)),
        gamma in 0.01f64..0.49,
    ) {
        let (w, x, y) = case;
        let ex = Example::labeled(x.clone(), y);
        let scores = w.scores(&x).unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let p = predict_distribution(&w, &ex, gamma).unwrap();
        let y_hat = p.greedy_label();
        let margin = scores[y] - scores.iter().enumerate().filter(|&(j, _)| j != y).map(|(_, &s)| s).fold(f64::MIN, f64::max);
        // Away from kinks: unique top two scores and margin clear of 1 and 0.
        prop_assume!(sorted[0] - sorted[1] > 1e-3);
        prop_assume!((margin - 1.0).abs() > 1e-3);
        // Where the greedy label is right but the margin is below 1 the
        // expected update vanishes while the hinge gradient does not.
        prop_assume!(y_hat != y || margin > 1.0);
        let u = expected_update(&ex, y, &p).unwrap();
        let h = 1e-6;
        let (k, d) = (w.shape().num_classes(), w.shape().num_features());
        for r in 0..k {
            for j in 0..d {
                let mut plus = w.clone();
                plus.set(r, j, w.get(r, j) + h);
                let mut minus = w.clone();
                minus.set(r, j, w.get(r, j) - h);
                let fd = (plus.hinge_loss(&x, y).unwrap() - minus.hinge_loss(&x, y).unwrap()) / (2.0 * h);
                prop_assert!((fd + u.get(r, j)).abs() <= 1e-5, "r={} j={} fd={} u={}", r, j, fd, u.get(r, j));
            }
        }
    }

    #[test]
    fn queue_conserves_and_satisfies_lemma1(delays in schedule(400)) {
        let t_max = delays.len();
        let s = DelaySchedule::from_delays(delays.clone()).unwrap();
        let mut q: FeedbackQueue<usize> = FeedbackQueue::new(t_max);
        let mut delivered = Vec::new();
        for t in 1..=t_max {
            q.enqueue(t, delays[t - 1]).unwrap();
            delivered.extend(q.drain(t).unwrap());
        }
        let missing = q.missing();
        prop_assert_eq!(delivered.len() + missing.len(), t_max);
        prop_assert!(delivered.iter().all(|o| !missing.contains(o)));
        let expected: std::collections::BTreeSet<usize> = (1..=t_max).filter(|&t| t + delays[t - 1] > t_max).collect();
        prop_assert_eq!(missing, &expected);
        prop_assert_eq!(s.missing_set(), expected);
        prop_assert!(s.lemma1_lhs() <= 2 * s.delivered_delay());
    }

    #[test]
    fn drain_order_is_ascending_origin(delays in schedule(200)) {
        let t_max = delays.len();
        let mut q: FeedbackQueue<usize> = FeedbackQueue::new(t_max);
        for t in 1..=t_max {
            q.enqueue(t, delays[t - 1]).unwrap();
            let due = q.drain(t).unwrap();
            prop_assert!(due.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(due.iter().all(|&o| o + delays[o - 1] == t));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), delays in schedule(120), gamma in 0.01f64..0.49) {
        let data = stream(delays.len());
        let s = DelaySchedule::from_delays(delays).unwrap();
        for algorithm in [Algorithm::Delaytron, Algorithm::AdaptiveDelaytron] {
            let cfg = LearnerConfig::new(algorithm, gamma, 0.5, seed);
            let a = run(&cfg, &data, &s).unwrap();
            let b = run(&cfg, &data, &s).unwrap();
            prop_assert_eq!(&a.records, &b.records);
            prop_assert_eq!(a.weights.entries(), b.weights.entries());
        }
    }

    #[test]
    fn adaptive_epochs_bracket_missing_sum(delays in schedule(300), seed in any::<u64>()) {
        let data = stream(delays.len());
        let s = DelaySchedule::from_delays(delays).unwrap();
        let out = run(&LearnerConfig::new(Algorithm::AdaptiveDelaytron, 0.1, 1.0, seed), &data, &s).unwrap();
        let mut cum = 0u64;
        let mut prev_eta = f64::INFINITY;
        for (rec, &m) in out.records.iter().zip(out.metrics.missing_so_far()) {
            cum += m;
            let e = rec.epoch;
            if e >= 1 {
                prop_assert!(1u64 << (e - 1) <= cum && cum < 1u64 << e);
            } else {
                prop_assert_eq!(cum, 0);
            }
            prop_assert_eq!(rec.eta, 2f64.powf(-(e as f64) / 2.0));
            prop_assert!(rec.eta <= prev_eta);
            prev_eta = rec.eta;
        }
    }

    #[test]
    fn mistakes_and_feedback_counts_agree(delays in schedule(200), seed in any::<u64>()) {
        let data = stream(delays.len());
        let s = DelaySchedule::from_delays(delays).unwrap();
        let out = run(&LearnerConfig::new(Algorithm::Delaytron, 0.2, 1.0, seed), &data, &s).unwrap();
        let mistakes = out.records.iter().filter(|r| r.mistake).count() as u64;
        prop_assert_eq!(*out.metrics.mistakes().last().unwrap(), mistakes);
        for (rec, ex) in out.records.iter().zip(data.examples()) {
            prop_assert_eq!(rec.mistake, Some(rec.sampled_label) != ex.label());
        }
        let applied: usize = out.records.iter().map(|r| r.feedback_origins.len()).sum();
        prop_assert_eq!(applied + s.missing_set().len(), s.horizon());
        let totals = out.metrics.totals().unwrap();
        prop_assert_eq!(totals.missing, s.missing_set().len());
        prop_assert!(out.metrics.error_rate().iter().all(|&e| (0.0..=1.0).contains(&e)));
        prop_assert!(out.metrics.cum_hinge_loss().windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn weights_change_only_on_feedback_rounds() {
    let delays: Vec<usize> = (0..60).map(|i| [1, 3, 7, 2, 12][i % 5]).collect();
    let data = stream(delays.len());
    let cfg = LearnerConfig::new(Algorithm::Delaytron, 0.3, 1.0, 17);
    let full = run(&cfg, &data, &DelaySchedule::from_delays(delays.clone()).unwrap()).unwrap();
    // Shorter horizons replay the same prefix, so their final weights are the
    // weights after each round of the full run.
    let mut prev = WeightMatrix::zeros(full.weights.shape());
    let mut changed_any = false;
    for t in 1..=delays.len() {
        let prefix = DelaySchedule::from_delays(delays[..t].to_vec()).unwrap();
        let out = run(&cfg, &data, &prefix).unwrap();
        assert_eq!(out.records[..], full.records[..t]);
        let changed = out.weights != prev;
        changed_any |= changed;
        if changed {
            assert!(!full.records[t - 1].feedback_origins.is_empty(), "round {t}");
        }
        prev = out.weights;
    }
    assert!(changed_any);
    assert_eq!(prev, full.weights);
}

#[test]
fn zero_delay_matches_banditron() {
    let data = stream(500);
    let ones = DelaySchedule::constant(500, 1).unwrap();
    let other = DelaySchedule::constant(500, 9).unwrap();
    for seed in 0..20 {
        let d = run(&LearnerConfig::new(Algorithm::Delaytron, 0.05, 1.0, seed), &data, &ones).unwrap();
        let b = run(&LearnerConfig::new(Algorithm::Banditron, 0.05, 1.0, seed), &data, &other).unwrap();
        assert_eq!(d.records, b.records);
        assert_eq!(d.weights, b.weights);
    }
}
