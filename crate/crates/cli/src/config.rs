//! Flat `key = value` run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use delaytron_core::datasets::Normalization;
use delaytron_core::delay::ScheduleSource;
use delaytron_core::learner::{Algorithm, StepSizeRule};
use delaytron_core::model::check_gamma;

use crate::error::{CliError, Result};

pub const DEFAULT_GAMMAS: [f64; 9] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.45];
pub const DEFAULT_SYNTHETIC_SIZE: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    SynSep,
    SynNonSep,
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSpec {
    Constant(f64),
    /// Computed per run from the realized schedule.
    Theoretical(StepSizeRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayKind {
    Constant,
    Uniform,
    File,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub dataset: DatasetSource,
    /// Number of synthetic examples; defaults to `rounds`, then 10^5.
    pub dataset_size: Option<usize>,
    pub dataset_seed: u64,
    pub csv_header: bool,
    pub label_column: usize,
    /// Defaults to `max_norm_scale` for CSV input and `none` otherwise.
    pub normalization: Option<Normalization>,
    /// Horizon `T`; defaults to the dataset size.
    pub rounds: Option<usize>,
    pub gammas: Vec<f64>,
    pub eta: EtaSpec,
    /// Comparator norm estimate for theoretical step sizes.
    pub w_norm: f64,
    /// Loss bound on missing samples for theoretical step sizes.
    pub loss_bound: f64,
    pub eta_scale: f64,
    pub delay_mode: DelayKind,
    pub max_delay: usize,
    pub delay_file: Option<PathBuf>,
    pub seeds: usize,
    pub base_seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Delaytron,
            dataset: DatasetSource::SynSep,
            dataset_size: None,
            dataset_seed: 0,
            csv_header: false,
            label_column: 0,
            normalization: None,
            rounds: None,
            gammas: DEFAULT_GAMMAS.to_vec(),
            eta: EtaSpec::Constant(1.0),
            w_norm: 1.0,
            loss_bound: 1.0,
            eta_scale: 1.0,
            delay_mode: DelayKind::Uniform,
            max_delay: 1,
            delay_file: None,
            seeds: 20,
            base_seed: 0,
            out: PathBuf::from("results"),
            workers: 0,
            plot: false,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::default();
        config.apply_text(&text, path)?;
        Ok(config)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected key = value", origin.display(), i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", origin.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algorithm" | "algo" => {
                self.algorithm = value.parse().map_err(|e| CliError::Config(format!("{e}")))?
            }
            "dataset" => {
                self.dataset = match value {
                    "synsep" => DatasetSource::SynSep,
                    "synnonsep" => DatasetSource::SynNonSep,
                    path => DatasetSource::Csv(PathBuf::from(path)),
                }
            }
            "dataset_size" => self.dataset_size = Some(number(key, value)?),
            "dataset_seed" => self.dataset_seed = number(key, value)?,
            "csv_header" => self.csv_header = boolean(key, value)?,
            "label_column" => self.label_column = number(key, value)?,
            "normalization" => {
                self.normalization = Some(value.parse().map_err(|e| CliError::Config(format!("{e}")))?)
            }
            "rounds" => self.rounds = Some(number(key, value)?),
            "gamma" => {
                self.gammas = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| number(key, s))
                    .collect::<Result<_>>()?
            }
            "eta" => {
                self.eta = match value.strip_prefix("theoretical:") {
                    Some(rule) => EtaSpec::Theoretical(rule.parse().map_err(|e| CliError::Config(format!("{e}")))?),
                    None => EtaSpec::Constant(number(key, value)?),
                }
            }
            "w_norm" => self.w_norm = number(key, value)?,
            "loss_bound" => self.loss_bound = number(key, value)?,
            "eta_scale" => self.eta_scale = number(key, value)?,
            "delay_mode" => {
                self.delay_mode = match value {
                    "constant" => DelayKind::Constant,
                    "uniform" => DelayKind::Uniform,
                    "file" => DelayKind::File,
                    _ => return Err(CliError::Config(format!("unknown delay mode {value:?}"))),
                }
            }
            "max_delay" => self.max_delay = number(key, value)?,
            "delay_file" => self.delay_file = Some(PathBuf::from(value)),
            "seeds" => self.seeds = number(key, value)?,
            "base_seed" => self.base_seed = number(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = number(key, value)?,
            "plot" => self.plot = boolean(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn schedule_source(&self) -> Result<ScheduleSource> {
        Ok(match self.delay_mode {
            DelayKind::Constant => ScheduleSource::Constant {
                max_delay: self.max_delay,
            },
            DelayKind::Uniform => ScheduleSource::Uniform {
                max_delay: self.max_delay,
            },
            DelayKind::File => ScheduleSource::File(
                self.delay_file
                    .clone()
                    .ok_or_else(|| CliError::Config("delay_mode = file needs delay_file".into()))?,
            ),
        })
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization.unwrap_or(match self.dataset {
            DatasetSource::Csv(_) => Normalization::MaxNormScale,
            _ => Normalization::None,
        })
    }

    /// Checks everything that can be checked before data is loaded.
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(CliError::Config("gamma list is empty".into()));
        }
        for &g in &self.gammas {
            check_gamma(g).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.seeds == 0 {
            return Err(CliError::Config("seeds must be at least 1".into()));
        }
        if self.rounds == Some(0) {
            return Err(CliError::Config("rounds must be at least 1".into()));
        }
        if self.dataset_size == Some(0) {
            return Err(CliError::Config("dataset_size must be at least 1".into()));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if let EtaSpec::Constant(eta) = self.eta {
            positive("eta", eta)?;
        }
        positive("eta_scale", self.eta_scale)?;
        positive("w_norm", self.w_norm)?;
        if !(self.loss_bound >= 0.0 && self.loss_bound.is_finite()) {
            return Err(CliError::Config(format!("loss_bound must be non-negative, got {}", self.loss_bound)));
        }
        match self.schedule_source()? {
            ScheduleSource::File(path) if !path.is_file() => {
                return Err(CliError::Config(format!("delay file {} does not exist", path.display())))
            }
            ScheduleSource::Constant { max_delay } | ScheduleSource::Uniform { max_delay } if max_delay == 0 => {
                return Err(CliError::Config("max_delay must be at least 1".into()))
            }
            _ => {}
        }
        if let DatasetSource::Csv(path) = &self.dataset {
            if !path.is_file() {
                return Err(CliError::Config(format!("dataset {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}
