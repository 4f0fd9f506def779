use delaytron_core::datasets::{gen_synnonsep, gen_synsep, normalize, Dataset, Normalization, SyntheticSpec};
use delaytron_core::delay::DelaySchedule;
use delaytron_core::metrics::fit_comparator;
use delaytron_core::model::{greedy_label, Example, WeightMatrix};
use delaytron_core::rng::{self, Stream};
use proptest::prelude::*;

#[test]
fn synsep_labels_are_uniform() {
    let data = gen_synsep(&SyntheticSpec::synsep(100_000, 1)).unwrap();
    let mut counts = [0usize; 9];
    for e in data.examples() {
        counts[e.label().unwrap()] += 1;
    }
    for c in counts {
        let share = c as f64 / 100_000.0;
        assert!((share - 1.0 / 9.0).abs() <= 0.01, "{counts:?}");
    }
}

#[test]
fn synsep_examples_have_twenty_unit_weight_words() {
    let data = gen_synsep(&SyntheticSpec::synsep(2_000, 2)).unwrap();
    assert_eq!(data.stats().max_norm, 1.0);
    for e in data.examples() {
        assert_eq!(e.support().len(), 20);
        assert!((e.norm() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn perceptron_separates_synsep_within_three_passes() {
    let data = gen_synsep(&SyntheticSpec::synsep(10_000, 3)).unwrap();
    let stats = data.stats();
    let k = stats.num_classes;
    let d = stats.num_features;
    let mut w = vec![vec![0.0; d]; k];
    let mut last_pass = 0;
    for _ in 0..3 {
        last_pass = 0;
        for e in data.examples() {
            let x = e.features();
            let y = e.label().unwrap();
            let scores: Vec<f64> = w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
            let pred = greedy_label(&scores);
            if pred != y {
                last_pass += 1;
                for j in 0..d {
                    w[y][j] += x[j];
                    w[pred][j] -= x[j];
                }
            }
        }
    }
    assert_eq!(last_pass, 0);
}

#[test]
fn block_indicator_separates_with_small_scale() {
    let spec = SyntheticSpec::synsep(10_000, 4);
    let data = gen_synsep(&spec).unwrap();
    let block = spec.block_size();
    let rows: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|c| (0..spec.vocab_size).map(|j| f64::from(u8::from(j / block == c))).collect())
        .collect();
    let indicator = WeightMatrix::from_rows(&rows).unwrap();
    let mut min_margin = f64::INFINITY;
    for e in data.examples() {
        let s = indicator.scores(e.features()).unwrap();
        let y = e.label().unwrap();
        let other = (0..s.len()).filter(|&j| j != y).map(|j| s[j]).fold(f64::MIN, f64::max);
        min_margin = min_margin.min(s[y] - other);
    }
    assert!(min_margin > 0.0);
    let c0 = 1.0 / min_margin;
    assert!(c0 <= 40.0);
    let mut scaled = indicator;
    scaled.scale(c0 * (1.0 + 1e-9));
    for e in data.examples() {
        assert_eq!(scaled.hinge_loss(e.features(), e.label().unwrap()).unwrap(), 0.0);
    }
}

#[test]
fn synnonsep_flips_five_percent_to_other_labels() {
    let clean = gen_synsep(&SyntheticSpec::synsep(100_000, 6)).unwrap();
    let noisy = gen_synnonsep(&SyntheticSpec::synnonsep(100_000, 6)).unwrap();
    let mut flipped = 0usize;
    for (a, b) in clean.examples().iter().zip(noisy.examples()) {
        assert_eq!(a.features(), b.features());
        if a.label() != b.label() {
            flipped += 1;
        }
    }
    let rate = flipped as f64 / 100_000.0;
    assert!((rate - 0.05).abs() <= 0.005, "{rate}");
}

#[test]
fn synnonsep_without_noise_is_synsep() {
    let spec = SyntheticSpec {
        noise_rate: 0.0,
        ..SyntheticSpec::synnonsep(3_000, 8)
    };
    assert_eq!(gen_synnonsep(&spec).unwrap(), gen_synsep(&SyntheticSpec::synsep(3_000, 8)).unwrap());
}

#[test]
fn uniform_delays_average_half_range() {
    let mut r = rng::stream(11, Stream::DelaySampling);
    let s = DelaySchedule::uniform(10_000, 100, &mut r).unwrap();
    let mean = s.total_delay() as f64 / 10_000.0;
    assert!((mean - 50.5).abs() <= 1.0, "{mean}");
    assert!(s.delays().iter().all(|&d| (1..=100).contains(&d)));
}

#[test]
fn comparator_nearly_separates_synsep() {
    let data = gen_synsep(&SyntheticSpec::synsep(10_000, 9)).unwrap();
    let fit = fit_comparator(&data, 20, 0).unwrap();
    assert!(fit.total_loss / data.len() as f64 <= 0.01, "{}", fit.total_loss);
    assert!(fit.total_loss <= data.len() as f64);
}

#[test]
fn comparator_is_order_insensitive() {
    let data = gen_synnonsep(&SyntheticSpec::synnonsep(4_000, 10)).unwrap();
    let mut reversed: Vec<Example> = data.examples().to_vec();
    reversed.reverse();
    let reversed = Dataset::new(reversed, data.stats().num_classes).unwrap();
    let a = fit_comparator(&data, 20, 1).unwrap();
    let b = fit_comparator(&reversed, 20, 2).unwrap();
    let n = data.len() as f64;
    assert!((a.total_loss / n - b.total_loss / n).abs() <= 1e-3, "{} {}", a.total_loss, b.total_loss);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_norms_stay_under_reported_bound(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..20),
        mode in prop::sample::select(vec![Normalization::UnitNorm, Normalization::MaxNormScale, Normalization::None]),
    ) {
        let examples = rows.iter().enumerate().map(|(i, r)| Example::labeled(r.clone(), i % 2)).collect();
        let data = Dataset::new(examples, 2).unwrap();
        let out = normalize(&data, mode).unwrap();
        let r = out.stats().max_norm;
        prop_assert!(out.examples().iter().all(|e| e.norm() <= r + 1e-12));
    }

    #[test]
    fn generators_are_seed_deterministic(seed in any::<u64>()) {
        let spec = SyntheticSpec::synnonsep(200, seed);
        prop_assert_eq!(gen_synnonsep(&spec).unwrap(), gen_synnonsep(&spec).unwrap());
    }
}
