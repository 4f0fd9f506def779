//! Seeded gamma sweeps and their on-disk artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use delaytron_core::datasets::{gen_synnonsep, gen_synsep, load_csv, normalize, CsvOptions, Dataset, SyntheticSpec};
use delaytron_core::delay::{make_schedule, DelaySchedule};
use delaytron_core::learner::{run, theoretical_step_size, Algorithm, LearnerConfig, RunOutput, StepSizeInputs};
use delaytron_core::metrics::RunMetrics;
use delaytron_core::rng::{self, Stream};
use rayon::prelude::*;

use crate::config::{DatasetSource, EtaSpec, RunConfig, DEFAULT_SYNTHETIC_SIZE};
use crate::error::{CliError, Result};
use crate::plot::emit_plot;

pub const ROUND_CSV_HEADER: &str =
    "round,mistakes,error_rate,feedbacks_received,missing_so_far,epoch,eta,cum_hinge_loss";
pub const SUMMARY_CSV_HEADER: &str = "gamma,mean_final_error,std_final_error,n,best";

/// Generates or loads the dataset a config describes, normalized.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let size = config.dataset_size.or(config.rounds).unwrap_or(DEFAULT_SYNTHETIC_SIZE);
    let raw = match &config.dataset {
        DatasetSource::SynSep => gen_synsep(&SyntheticSpec::synsep(size, config.dataset_seed))?,
        DatasetSource::SynNonSep => gen_synnonsep(&SyntheticSpec::synnonsep(size, config.dataset_seed))?,
        DatasetSource::Csv(path) => load_csv(
            path,
            &CsvOptions {
                has_header: config.csv_header,
                label_column: config.label_column,
            },
        )?,
    };
    Ok(normalize(&raw, config.normalization())?)
}

/// Horizon of a run on `dataset`.
pub fn horizon(config: &RunConfig, dataset: &Dataset) -> Result<usize> {
    let rounds = config.rounds.unwrap_or(dataset.len());
    if rounds > dataset.len() {
        return Err(CliError::Config(format!(
            "rounds = {rounds} exceeds the {} available examples",
            dataset.len()
        )));
    }
    Ok(rounds)
}

/// Seeds `base_seed, base_seed + 1, ...`.
pub fn seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.seeds as u64).map(|i| config.base_seed.wrapping_add(i)).collect()
}

/// The delay schedule seen by `seed`; drawn from its own stream so the label
/// sampling draws do not depend on the delay setting.
pub fn schedule_for(config: &RunConfig, rounds: usize, seed: u64) -> Result<DelaySchedule> {
    let mut delay_rng = rng::stream(seed, Stream::DelaySampling);
    Ok(make_schedule(&config.schedule_source()?, rounds, &mut delay_rng)?)
}

/// One learner run for a `(gamma, seed)` pair.
pub fn run_single(config: &RunConfig, dataset: &Dataset, gamma: f64, seed: u64) -> Result<RunOutput> {
    let rounds = horizon(config, dataset)?;
    let schedule = schedule_for(config, rounds, seed)?;
    let eta = match config.eta {
        EtaSpec::Constant(eta) => eta,
        EtaSpec::Theoretical(rule) => {
            let stats = dataset.stats();
            let effective = match config.algorithm {
                Algorithm::Banditron => DelaySchedule::constant(rounds, 1)?,
                _ => schedule.clone(),
            };
            theoretical_step_size(
                rule,
                &StepSizeInputs {
                    weight_norm: config.w_norm,
                    num_classes: stats.num_classes,
                    max_norm: stats.max_norm,
                    gamma,
                    horizon: rounds,
                    delivered_delay: effective.delivered_delay() as f64,
                    total_delay: effective.total_delay() as f64,
                    missing: effective.missing_set().len(),
                    loss_bound: config.loss_bound,
                },
            )?
        }
    };
    let learner = LearnerConfig {
        algorithm: config.algorithm,
        gamma,
        eta,
        eta_scale: config.eta_scale,
        seed,
    };
    Ok(run(&learner, dataset, &schedule)?)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs every `(gamma, seed)` pair in parallel and maps each output through
/// `probe`. Results come back grouped by gamma, in config order.
pub fn sweep<T, F>(config: &RunConfig, dataset: &Dataset, probe: F) -> Result<Vec<(f64, Vec<T>)>>
where
    T: Send,
    F: Fn(f64, u64, &RunOutput) -> Result<T> + Sync,
{
    config.validate()?;
    horizon(config, dataset)?;
    let seeds = seeds(config);
    let jobs: Vec<(f64, u64)> = config
        .gammas
        .iter()
        .flat_map(|&g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    let results: Vec<T> = pool(config.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(g, s)| {
                let out = run_single(config, dataset, g, s)?;
                probe(g, s, &out)
            })
            .collect::<Result<_>>()
    })?;
    let mut results = results.into_iter();
    Ok(config
        .gammas
        .iter()
        .map(|&g| (g, results.by_ref().take(seeds.len()).collect()))
        .collect())
}

/// Mean and population standard deviation, summed in slice order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSummary {
    pub gamma: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub best: bool,
}

/// Per-gamma statistics of final error rates. The smallest mean is flagged;
/// ties go to the smaller gamma.
pub fn summarize(finals: &[(f64, Vec<f64>)]) -> Vec<GammaSummary> {
    let mut rows: Vec<GammaSummary> = finals
        .iter()
        .map(|(g, v)| {
            let (mean, std) = mean_std(v);
            GammaSummary {
                gamma: *g,
                mean,
                std,
                n: v.len(),
                best: false,
            }
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.mean.total_cmp(&b.mean).then(a.gamma.total_cmp(&b.gamma)))
        .map(|(i, _)| i);
    if let Some(i) = best {
        rows[i].best = true;
    }
    rows
}

pub fn round_csv_name(gamma: f64, seed: u64) -> String {
    format!("gamma_{gamma}_seed_{seed}.csv")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_round_csv(path: &Path, metrics: &RunMetrics) -> Result<()> {
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{ROUND_CSV_HEADER}")?;
        for i in 0..metrics.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                i + 1,
                metrics.mistakes()[i],
                metrics.error_rate()[i],
                metrics.feedbacks()[i],
                metrics.missing_so_far()[i],
                metrics.epoch()[i],
                metrics.eta()[i],
                metrics.cum_hinge_loss()[i]
            )?;
        }
        out.flush()
    };
    write().map_err(|e| CliError::io(path, e))
}

pub fn write_summary_csv(path: &Path, rows: &[GammaSummary]) -> Result<()> {
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{SUMMARY_CSV_HEADER}")?;
        for r in rows {
            writeln!(out, "{},{},{},{},{}", r.gamma, r.mean, r.std, r.n, u8::from(r.best))?;
        }
        out.flush()
    };
    write().map_err(|e| CliError::io(path, e))
}

fn write_metadata(path: &Path, config: &RunConfig, dataset: &Dataset, rounds: usize) -> Result<()> {
    let stats = dataset.stats();
    let dataset_name = match &config.dataset {
        DatasetSource::SynSep => "synsep".to_string(),
        DatasetSource::SynNonSep => "synnonsep".to_string(),
        DatasetSource::Csv(p) => p.display().to_string(),
    };
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "algorithm = {}", config.algorithm)?;
        writeln!(out, "dataset = {dataset_name}")?;
        writeln!(out, "rounds = {rounds}")?;
        writeln!(out, "num_classes = {}", stats.num_classes)?;
        writeln!(out, "num_features = {}", stats.num_features)?;
        writeln!(out, "max_norm = {}", stats.max_norm)?;
        writeln!(out, "seeds = {}", config.seeds)?;
        writeln!(out, "base_seed = {}", config.base_seed)?;
        out.flush()
    };
    write().map_err(|e| CliError::io(path, e))
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub round_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub metadata_file: PathBuf,
    pub plot_file: Option<PathBuf>,
    pub summary: Vec<GammaSummary>,
}

/// Runs the full sweep and writes one CSV per `(gamma, seed)`, `summary.csv`,
/// `metadata.txt` and, when enabled, `error_rate.svg` for the best gamma.
/// Anything written is removed again if a later step fails.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let rounds = horizon(config, &dataset)?;
    let out_dir = &config.out;
    let existed = out_dir.exists();
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;

    let round_files: Vec<PathBuf> = config
        .gammas
        .iter()
        .flat_map(|&g| seeds(config).into_iter().map(move |s| out_dir.join(round_csv_name(g, s))))
        .collect();
    let mut planned = round_files.clone();
    let summary_file = out_dir.join("summary.csv");
    let metadata_file = out_dir.join("metadata.txt");
    let plot_file = config.plot.then(|| out_dir.join("error_rate.svg"));
    planned.extend([summary_file.clone(), metadata_file.clone()]);
    planned.extend(plot_file.clone());

    let result = (|| {
        let finals = sweep(config, &dataset, |g, s, out| {
            write_round_csv(&out_dir.join(round_csv_name(g, s)), &out.metrics)?;
            out.metrics
                .final_error_rate()
                .ok_or_else(|| CliError::Config("empty run".into()))
        })?;
        let summary = summarize(&finals);
        write_summary_csv(&summary_file, &summary)?;
        write_metadata(&metadata_file, config, &dataset, rounds)?;
        if let Some(svg) = &plot_file {
            let best = summary.iter().find(|r| r.best).map(|r| r.gamma).unwrap_or(config.gammas[0]);
            let inputs: Vec<PathBuf> = seeds(config)
                .into_iter()
                .map(|s| out_dir.join(round_csv_name(best, s)))
                .collect();
            emit_plot(&inputs, svg)?;
        }
        Ok(summary)
    })();

    match result {
        Ok(summary) => Ok(ExperimentReport {
            round_files,
            summary_file,
            metadata_file,
            plot_file,
            summary,
        }),
        Err(e) => {
            for path in &planned {
                let _ = fs::remove_file(path);
            }
            if !existed {
                let _ = fs::remove_dir(out_dir);
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_flags_smallest_mean_and_breaks_ties_low() {
        let rows = summarize(&[(0.2, vec![0.3, 0.1]), (0.1, vec![0.2, 0.2]), (0.4, vec![0.5])]);
        assert_eq!(rows.iter().filter(|r| r.best).count(), 1);
        assert!(rows[1].best);
        assert_eq!(rows[0].n, 2);
        assert!((rows[0].std - 0.1).abs() < 1e-15);

        let tie = summarize(&[(0.3, vec![0.1]), (0.05, vec![0.1])]);
        assert!(tie[1].best && !tie[0].best);
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), (5.0, 2.0));
        assert_eq!(mean_std(&[1.5]), (1.5, 0.0));
    }

    #[test]
    fn file_names_use_plain_decimals() {
        assert_eq!(round_csv_name(0.005, 3), "gamma_0.005_seed_3.csv");
    }
}
