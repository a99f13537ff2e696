//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toll::data::{DelimitedOptions, Protocol, SplitSize, SplitSpec, StandardizeMode};
use toll::lindyn::ContourBounds;
use toll::nn::dense_stack;
use toll::trainer::{Metric, TrainConfig};
use toll::{Error, NormKind, Result, TollConfig, Weighting};

/// Every accepted key with its default (`None` = no default).
const KEYS: &[(&str, Option<&str>)] = &[
    // dataset
    ("dataset", None),
    ("data_path", None),
    ("label_column", Some("0")),
    ("delimiter", Some(",")),
    ("has_header", Some("false")),
    ("drop_columns", Some("")),
    ("mnist_limit", None),
    ("toy_normals", Some("2000")),
    ("toy_anomalies", Some("400")),
    ("toy_radius", Some("3")),
    // split
    ("protocol", Some("one_vs_rest")),
    ("normal_class", None),
    ("anomalous_classes", None),
    ("validation", Some("0.3")),
    ("test", Some("0.2")),
    ("max_train", None),
    // model
    ("encoder", None),
    ("decoder", None),
    ("batch_norm", Some("false")),
    ("slope", Some("0")),
    ("beta", Some("1")),
    ("norm", Some("l2")),
    ("weighting", Some("additive")),
    ("target", None),
    // training
    ("lr", Some("1e-3")),
    ("batch_size", Some("100")),
    ("batch_count", Some("2000")),
    ("checkpoint_interval", Some("20")),
    ("validation_metric", Some("auc")),
    ("test_metric", Some("auc")),
    ("standardize", Some("none")),
    ("seed", Some("1")),
    ("seeds", Some("1")),
    ("beta_grid", None),
    // linear laboratory
    ("stds", Some("2,1")),
    ("samples", Some("2000")),
    ("bottleneck", Some("1")),
    ("lin_lr", Some("1e-2")),
    ("lin_steps", Some("50000")),
    ("t_end", Some("20")),
    ("dt", Some("1e-3")),
    ("sample_every", Some("10")),
    ("resolution", Some("101")),
    ("bounds", Some("-8,8,-4,4")),
    ("gradcheck_cases", Some("50")),
    ("gradcheck_h", Some("1e-5")),
];

/// Raw key-value pairs after overrides, resolved lazily by typed getters.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

fn config_error(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("key \"{key}\": {msg}"))
}

fn split_pair(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim().to_string(), v.trim().to_string()))
}

impl Settings {
    /// Parses `path` (if given) and applies `overrides` of the form `key=value`.
    /// Relative `data_path` values resolve against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut base_dir = PathBuf::from(".");
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = split_pair(line)
                    .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
                values.insert(k, v);
            }
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                base_dir = dir.to_path_buf();
            }
        }
        for o in overrides {
            let (k, v) = split_pair(o).ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            values.insert(k, v);
        }
        if let Some(bad) = values.keys().find(|k| !KEYS.iter().any(|(known, _)| known == k)) {
            return Err(config_error(bad, "unknown key"));
        }
        Ok(Self { values, base_dir })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let default = KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d);
        self.values.get(key).map(String::as_str).or(default)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| config_error(key, "missing required key"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, text: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        text.parse().map_err(|e| config_error(key, format!("cannot parse {text:?}: {e}")))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key, self.required(key)?)
    }

    pub fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).map(|t| self.parse(key, t)).transpose()
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(text) => text
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|t| self.parse(key, t))
                .collect(),
        }
    }

    fn choice(&self, key: &str, options: &[&str]) -> Result<String> {
        let v = self.required(key)?.to_ascii_lowercase();
        if options.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(config_error(key, format!("{v:?} is not one of {}", options.join(", "))))
        }
    }

    fn metric(&self, key: &str) -> Result<Option<Metric>> {
        let v = self.required(key)?.to_ascii_lowercase();
        match v.as_str() {
            "none" => Ok(None),
            "auc" => Ok(Some(Metric::Auc)),
            _ => match v.strip_prefix("f1@") {
                Some(rate) => Ok(Some(Metric::F1AtRate(self.parse(key, rate)?))),
                None => Err(config_error(key, format!("{v:?} is not auc, f1@<rate> or none"))),
            },
        }
    }

    fn split_size(&self, key: &str) -> Result<SplitSize> {
        let v = self.required(key)?;
        if v.contains('.') || v.contains('e') {
            Ok(SplitSize::Fraction(self.parse(key, v)?))
        } else {
            Ok(SplitSize::Count(self.parse(key, v)?))
        }
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn seed_count(&self) -> Result<usize> {
        let n: usize = self.get("seeds")?;
        if n == 0 {
            return Err(config_error("seeds", "must be at least 1"));
        }
        Ok(n)
    }

    pub fn stds(&self) -> Result<Vec<f64>> {
        let stds: Vec<f64> = self.list("stds")?;
        if stds.is_empty() || stds.iter().any(|s| !(*s > 0.0)) {
            return Err(config_error("stds", "needs positive standard deviations"));
        }
        Ok(stds)
    }

    pub fn contour_bounds(&self) -> Result<ContourBounds> {
        match self.list::<f64>("bounds")?[..] {
            [x1_min, x1_max, x2_min, x2_max] if x1_min < x1_max && x2_min < x2_max => Ok(ContourBounds {
                x1_min,
                x1_max,
                x2_min,
                x2_max,
            }),
            _ => Err(config_error("bounds", "expected x1_min,x1_max,x2_min,x2_max with min < max")),
        }
    }
}

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetLocator {
    Delimited { path: PathBuf, options: DelimitedOptions },
    Mnist { dir: PathBuf, limit: Option<usize> },
    GaussianToy { normals: usize, anomalies: usize, radius: f64, stds: [f64; 2] },
}

/// Everything `train` and `benchmark` need.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub dataset: DatasetLocator,
    pub beta_grid: Vec<f64>,
}

fn widths(s: &Settings, key: &str) -> Result<Vec<usize>> {
    let w: Vec<usize> = s.list(key)?;
    if w.len() < 2 || w.contains(&0) {
        return Err(config_error(key, "needs at least two positive widths"));
    }
    Ok(w)
}

/// Resolves a training experiment from settings.
pub fn parse_experiment(s: &Settings) -> Result<Experiment> {
    let dataset = match s.choice("dataset", &["delimited", "mnist", "gaussian_toy"])?.as_str() {
        "delimited" => {
            let delimiter = s.required("delimiter")?;
            let delimiter = match delimiter {
                "tab" | "\\t" => b'\t',
                d if d.len() == 1 => d.as_bytes()[0],
                d => return Err(config_error("delimiter", format!("{d:?} is not a single byte"))),
            };
            DatasetLocator::Delimited {
                path: s.resolve(s.required("data_path")?),
                options: DelimitedOptions {
                    label_column: s.get("label_column")?,
                    delimiter,
                    has_header: s.get("has_header")?,
                    drop_columns: s.list("drop_columns")?,
                },
            }
        }
        "mnist" => DatasetLocator::Mnist {
            dir: s.resolve(s.required("data_path")?),
            limit: s.optional("mnist_limit")?,
        },
        _ => {
            let stds = s.stds()?;
            let stds: [f64; 2] = stds
                .try_into()
                .map_err(|_| config_error("stds", "the toy dataset is two-dimensional"))?;
            DatasetLocator::GaussianToy {
                normals: s.get("toy_normals")?,
                anomalies: s.get("toy_anomalies")?,
                radius: s.get("toy_radius")?,
                stds,
            }
        }
    };

    let protocol = match s.choice("protocol", &["one_vs_rest", "designated"])?.as_str() {
        "one_vs_rest" => Protocol::OneVsRest {
            normal: s.get("normal_class")?,
        },
        _ => {
            let anomalous: Vec<i64> = s.list("anomalous_classes")?;
            if anomalous.is_empty() {
                return Err(config_error("anomalous_classes", "missing required key"));
            }
            Protocol::Designated { anomalous }
        }
    };
    let split = SplitSpec {
        protocol,
        validation: s.split_size("validation")?,
        test: s.split_size("test")?,
        max_train: s.optional("max_train")?,
        seed: 0,
    };

    let enc = widths(s, "encoder")?;
    let dec = widths(s, "decoder")?;
    let batch_norm: bool = s.get("batch_norm")?;
    let slope: f64 = s.get("slope")?;
    let target: Vec<f64> = s.list("target")?;
    let toll = TollConfig {
        beta: s.get("beta")?,
        norm: match s.choice("norm", &["l1", "l2", "linf"])?.as_str() {
            "l1" => NormKind::L1,
            "l2" => NormKind::L2,
            _ => NormKind::LInf,
        },
        weighting: match s.choice("weighting", &["additive", "convex"])?.as_str() {
            "additive" => Weighting::Additive,
            _ => Weighting::Convex,
        },
        target: (!target.is_empty()).then_some(target),
        ..TollConfig::default()
    };
    let mut train = TrainConfig::new(dense_stack(&enc, batch_norm, slope), dense_stack(&dec, batch_norm, slope), toll);
    train.learning_rate = s.get("lr")?;
    train.batch_size = s.get("batch_size")?;
    train.batch_count = s.get("batch_count")?;
    train.checkpoint_interval = s.get("checkpoint_interval")?;
    train.validation_metric = s.metric("validation_metric")?;
    train.test_metric = s
        .metric("test_metric")?
        .ok_or_else(|| config_error("test_metric", "a test metric is required"))?;
    train.standardize = match s.choice("standardize", &["none", "global", "per_feature"])?.as_str() {
        "global" => Some(StandardizeMode::Global),
        "per_feature" => Some(StandardizeMode::PerFeature),
        _ => None,
    };
    train.seed = s.get("seed")?;
    train.validate()?;

    Ok(Experiment {
        train,
        split,
        dataset,
        beta_grid: s.list("beta_grid")?,
    })
}
