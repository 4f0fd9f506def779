//! Synthetic text-like streams and CSV feature files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Example;
use crate::rng::{self, Stream};

/// Summary of a dataset: `R = max ||x||`, `K`, `d` and the example count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub max_norm: f64,
    pub num_classes: usize,
    pub num_features: usize,
    pub num_examples: usize,
}

/// An ordered, labelled example stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    stats: DatasetStats,
    /// Raw label codes, indexed by class; present for loaded files.
    original_labels: Option<Vec<i64>>,
}

impl Dataset {
    /// Wraps labelled examples with `num_classes` classes.
    pub fn new(examples: Vec<Example>, num_classes: usize) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::Input("dataset is empty".into()))?;
        let num_features = first.features().len();
        for (i, e) in examples.iter().enumerate() {
            if e.features().len() != num_features {
                return Err(Error::Shape(format!(
                    "example {i} has {} features, expected {num_features}",
                    e.features().len()
                )));
            }
            if e.features().iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("example {i} has a non-finite feature")));
            }
            match e.label() {
                Some(y) if y < num_classes => {}
                other => {
                    return Err(Error::Input(format!(
                        "example {i} has label {other:?}, expected one of 0..{num_classes}"
                    )))
                }
            }
        }
        let stats = DatasetStats {
            max_norm: max_norm(&examples),
            num_classes,
            num_features,
            num_examples: examples.len(),
        };
        Ok(Self {
            examples,
            stats,
            original_labels: None,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn stats(&self) -> DatasetStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn original_labels(&self) -> Option<&[i64]> {
        self.original_labels.as_deref()
    }

    /// First `n` examples, with statistics recomputed.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let mut out = Self::new(self.examples[..n.min(self.len())].to_vec(), self.stats.num_classes)?;
        out.original_labels = self.original_labels.clone();
        Ok(out)
    }

    /// Writes the dataset as CSV with the 1-based class in the first column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            for e in &self.examples {
                write!(out, "{}", e.label().unwrap_or(0) + 1)?;
                for v in e.features() {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

fn max_norm(examples: &[Example]) -> f64 {
    examples.iter().map(Example::norm).fold(0.0, f64::max)
}

/// Parameters of the synthetic bag-of-words generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub vocab_size: usize,
    pub num_samples: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

/// Words activated per example from the class block and from the shared block.
pub const ACTIVE_WORDS_PER_BLOCK: usize = 10;

impl SyntheticSpec {
    pub fn synsep(num_samples: usize, seed: u64) -> Self {
        Self {
            num_classes: 9,
            vocab_size: 400,
            num_samples,
            noise_rate: 0.0,
            seed,
        }
    }

    pub fn synnonsep(num_samples: usize, seed: u64) -> Self {
        Self {
            noise_rate: 0.05,
            ..Self::synsep(num_samples, seed)
        }
    }

    /// Words per block: the vocabulary is split into one block per class plus
    /// one shared block, all of equal size.
    pub fn block_size(&self) -> usize {
        self.vocab_size / (self.num_classes + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.num_samples == 0 {
            return Err(Error::Config("need at least one sample".into()));
        }
        if self.block_size() < ACTIVE_WORDS_PER_BLOCK {
            return Err(Error::Config(format!(
                "vocabulary of {} is too small for {} classes",
                self.vocab_size, self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise rate must lie in [0, 1), got {}",
                self.noise_rate
            )));
        }
        Ok(())
    }
}

/// Linearly separable stream of unit-norm bag-of-words vectors.
///
/// Class `c` owns words `[c*B, (c+1)*B)` and the last block of `B` words is
/// shared. Each example picks its class uniformly, switches on 10 distinct
/// words from its class block and 10 from the shared block, and is scaled to
/// unit norm. The matrix whose row `c` indicates block `c` scores the true
/// class at `10/sqrt(20)` and every other class at 0.
pub fn gen_synsep(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.noise_rate != 0.0 {
        return Err(Error::Config("the separable generator takes no label noise".into()));
    }
    generate(spec)
}

/// [`gen_synsep`] followed by independent label noise: with probability
/// `noise_rate` a label is replaced by one of the other classes, uniformly.
pub fn gen_synnonsep(spec: &SyntheticSpec) -> Result<Dataset> {
    generate(spec)
}

fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let k = spec.num_classes;
    let block = spec.block_size();
    let shared_start = k * block;
    let value = 1.0 / ((2 * ACTIVE_WORDS_PER_BLOCK) as f64).sqrt();

    let mut data_rng = rng::stream(spec.seed, Stream::DatasetGeneration);
    let mut noise_rng = rng::stream(spec.seed, Stream::LabelNoise);
    let mut examples = Vec::with_capacity(spec.num_samples);
    for _ in 0..spec.num_samples {
        let class = data_rng.random_range(0..k);
        let mut x = vec![0.0; spec.vocab_size];
        for w in index::sample(&mut data_rng, block, ACTIVE_WORDS_PER_BLOCK) {
            x[class * block + w] = value;
        }
        for w in index::sample(&mut data_rng, block, ACTIVE_WORDS_PER_BLOCK) {
            x[shared_start + w] = value;
        }
        let mut label = class;
        if spec.noise_rate > 0.0 && noise_rng.random::<f64>() < spec.noise_rate {
            let other = noise_rng.random_range(0..k - 1);
            label = if other >= class { other + 1 } else { other };
        }
        examples.push(Example::labeled(x, label));
    }
    Dataset::new(examples, k)
}

/// CSV reading options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    /// 0-based column holding the label.
    pub label_column: usize,
}

/// Loads a numeric CSV. Labels are remapped to `0..K` in order of first
/// appearance; the raw codes are kept in [`Dataset::original_labels`].
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut codes: Vec<i64> = Vec::new();
    let mut examples = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if (i == 0 && options.has_header) || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => {
                if options.label_column >= cells.len() {
                    return Err(parse_err(
                        lineno,
                        format!(
                            "label column {} does not exist in a row of {} cells",
                            options.label_column,
                            cells.len()
                        ),
                    ));
                }
                if cells.len() < 2 {
                    return Err(parse_err(lineno, "row has no feature columns".into()));
                }
                width = Some(cells.len());
            }
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    lineno,
                    format!("expected {w} cells, found {}", cells.len()),
                ));
            }
            Some(_) => {}
        }

        let mut features = Vec::with_capacity(cells.len() - 1);
        let mut code = None;
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(lineno, format!("column {c}: {cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("column {c}: {cell:?} is not finite")));
            }
            if c == options.label_column {
                if v.fract() != 0.0 {
                    return Err(parse_err(lineno, format!("label {cell:?} is not an integer")));
                }
                code = Some(v as i64);
            } else {
                features.push(v);
            }
        }
        let code = code.expect("label column checked above");
        let class = match codes.iter().position(|&c| c == code) {
            Some(k) => k,
            None => {
                codes.push(code);
                codes.len() - 1
            }
        };
        examples.push(Example::labeled(features, class));
    }

    if examples.is_empty() {
        return Err(Error::Input(format!("{} holds no examples", path.display())));
    }
    let mut dataset = Dataset::new(examples, codes.len())?;
    dataset.original_labels = Some(codes);
    Ok(dataset)
}

/// Feature scaling applied before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Scale every example to unit norm; zero vectors stay zero.
    UnitNorm,
    /// Divide every example by the largest norm in the dataset.
    MaxNormScale,
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_norm" => Ok(Self::UnitNorm),
            "max_norm_scale" => Ok(Self::MaxNormScale),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

pub fn normalize(dataset: &Dataset, mode: Normalization) -> Result<Dataset> {
    if dataset.is_empty() {
        return Err(Error::Input("cannot normalize an empty dataset".into()));
    }
    let scaled = |e: &Example, factor: f64| {
        let features = e.features().iter().map(|v| v / factor).collect();
        Example::new(features, e.label())
    };
    let examples: Vec<Example> = match mode {
        Normalization::None => return Ok(dataset.clone()),
        Normalization::UnitNorm => dataset
            .examples
            .iter()
            .map(|e| match e.norm() {
                n if n > 0.0 => scaled(e, n),
                _ => e.clone(),
            })
            .collect(),
        Normalization::MaxNormScale => {
            let r = dataset.stats.max_norm;
            if r == 0.0 {
                return Ok(dataset.clone());
            }
            dataset.examples.iter().map(|e| scaled(e, r)).collect()
        }
    };
    let mut out = Dataset::new(examples, dataset.stats.num_classes)?;
    out.original_labels = dataset.original_labels.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "{contents}").unwrap();
        f
    }

    #[test]
    fn synsep_examples_have_twenty_words_and_unit_norm() {
        let d = gen_synsep(&SyntheticSpec::synsep(2_000, 1)).unwrap();
        let s = d.stats();
        assert_eq!((s.num_classes, s.num_features, s.num_examples), (9, 400, 2_000));
        for e in d.examples() {
            assert_eq!(e.features().iter().filter(|&&v| v != 0.0).count(), 20);
            assert!((e.norm() - 1.0).abs() < 1e-12);
            let y = e.label().unwrap();
            let in_block = e.features()[y * 40..(y + 1) * 40].iter().filter(|&&v| v != 0.0).count();
            let shared = e.features()[360..].iter().filter(|&&v| v != 0.0).count();
            assert_eq!((in_block, shared), (10, 10));
        }
        assert!(s.max_norm <= 1.0 + 1e-12);
    }

    #[test]
    fn synsep_rejects_noise() {
        assert!(gen_synsep(&SyntheticSpec::synnonsep(10, 1)).is_err());
    }

    #[test]
    fn noise_free_nonsep_matches_sep() {
        let spec = SyntheticSpec::synsep(500, 17);
        assert_eq!(gen_synnonsep(&spec).unwrap(), gen_synsep(&spec).unwrap());
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let a = gen_synnonsep(&SyntheticSpec::synnonsep(300, 4)).unwrap();
        let b = gen_synnonsep(&SyntheticSpec::synnonsep(300, 4)).unwrap();
        let c = gen_synnonsep(&SyntheticSpec::synnonsep(300, 5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_labels_remap_by_first_appearance() {
        let f = csv("7,1.0,2.0\n2,0.5,0.5\n7,0.0,1.0\n");
        let d = load_csv(f.path(), &CsvOptions::default()).unwrap();
        let labels: Vec<usize> = d.examples().iter().map(|e| e.label().unwrap()).collect();
        assert_eq!(labels, vec![0, 1, 0]);
        assert_eq!(d.stats().num_classes, 2);
        assert_eq!(d.original_labels(), Some(&[7, 2][..]));
        assert_eq!(d.examples()[0].features(), &[1.0, 2.0]);
    }

    #[test]
    fn csv_header_and_label_column() {
        let f = csv("a,b,label\n3,4,1\n5,12,2\n");
        let opts = CsvOptions {
            has_header: true,
            label_column: 2,
        };
        let d = load_csv(f.path(), &opts).unwrap();
        assert_eq!(d.stats().max_norm, 13.0);
        assert_eq!(d.stats().num_features, 2);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let f = csv("");
        assert!(matches!(load_csv(f.path(), &CsvOptions::default()), Err(Error::Input(_))));

        let f = csv("1,2,3\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));

        let f = csv("1,2\n2,abc\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));

        let f = csv("1,2\n");
        let opts = CsvOptions {
            has_header: false,
            label_column: 5,
        };
        assert!(matches!(load_csv(f.path(), &opts), Err(Error::Parse { line: 1, .. })));

        let f = csv("1.5,2\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    fn two_rows() -> Dataset {
        Dataset::new(
            vec![
                Example::labeled(vec![3.0, 4.0], 0),
                Example::labeled(vec![5.0, 12.0], 1),
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn unit_norm_scales_each_row() {
        let d = normalize(&two_rows(), Normalization::UnitNorm).unwrap();
        let f = d.examples()[0].features();
        assert!((f[0] - 0.6).abs() < 1e-15 && (f[1] - 0.8).abs() < 1e-15);
        assert!(d.stats().max_norm <= 1.0 + 1e-12);
    }

    #[test]
    fn max_norm_scale_divides_by_largest_norm() {
        let d = normalize(&two_rows(), Normalization::MaxNormScale).unwrap();
        let norms: Vec<f64> = d.examples().iter().map(Example::norm).collect();
        assert!((norms[0] - 5.0 / 13.0).abs() < 1e-12);
        assert!((norms[1] - 1.0).abs() < 1e-12);
        assert!(norms.iter().all(|&n| n <= d.stats().max_norm + 1e-12));
    }

    #[test]
    fn unit_norm_leaves_zero_vectors() {
        let d = Dataset::new(
            vec![Example::labeled(vec![0.0, 0.0], 0), Example::labeled(vec![1.0, 1.0], 1)],
            2,
        )
        .unwrap();
        let n = normalize(&d, Normalization::UnitNorm).unwrap();
        assert_eq!(n.examples()[0].features(), &[0.0, 0.0]);
        assert_eq!(normalize(&d, Normalization::None).unwrap(), d);
    }
}
