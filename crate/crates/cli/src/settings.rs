//! Run settings: defaults, then a `key = value` file, then command-line flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cntm::model::{ModelConfig, Variant};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Linqs,
    Generic,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linqs" => Ok(Format::Linqs),
            "generic" | "jsonl" => Ok(Format::Generic),
            other => Err(format!("unknown format {other:?} (expected linqs or generic)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub format: Option<Format>,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub chains: usize,
    pub eta: usize,
    pub use_labels: bool,
    pub resume: bool,
    pub checkpoint_every: usize,
    pub test_fraction: f64,
    pub stopwords: Option<PathBuf>,
    pub phrases: Option<PathBuf>,
    pub exclusion_words: Option<PathBuf>,
    pub common_threshold: f64,
    pub rare_count: usize,
    pub fold_in_sweeps: usize,
    pub fold_in_burn_in: usize,
    pub top_words: usize,
    pub threshold: f64,
    pub chain: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            data: None,
            format: None,
            out: PathBuf::from("out"),
            model: ModelConfig::default(),
            chains: 1,
            eta: 1,
            use_labels: false,
            resume: false,
            checkpoint_every: 100,
            test_fraction: 0.1,
            stopwords: None,
            phrases: None,
            exclusion_words: None,
            common_threshold: 0.18,
            rare_count: 50,
            fold_in_sweeps: 50,
            fold_in_burn_in: 10,
            top_words: 5,
            threshold: 0.1,
            chain: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid value {value:?} for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid value {value:?} for {key}: expected true or false"))),
    }
}

impl Settings {
    /// Set one field by name; dashes and underscores are interchangeable.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        let m = &mut self.model;
        match k {
            "data" => self.data = Some(PathBuf::from(value)),
            "format" => self.format = Some(parse(k, value)?),
            "out" => self.out = PathBuf::from(value),
            "variant" => {
                m.variant = value
                    .parse::<Variant>()
                    .map_err(|e| CliError::Usage(e.to_string()))?
            }
            "topic_cap" => m.topic_cap = parse(k, value)?,
            "fixed_k" => m.fixed_k = parse_bool(k, value)?,
            "topic_discount" => m.topic_discount = parse(k, value)?,
            "word_discount" => m.word_discount = parse(k, value)?,
            "initial_concentration" => m.initial_concentration = parse(k, value)?,
            "concentration_shape" => m.concentration_shape = parse(k, value)?,
            "concentration_rate" => m.concentration_rate = parse(k, value)?,
            "lambda_shape" => m.lambda_shape = parse(k, value)?,
            "lambda_rate" => m.lambda_rate = parse(k, value)?,
            "iterations" => m.iterations = parse(k, value)?,
            "network_start" => m.network_start = parse(k, value)?,
            "sample_hyperparameters" => m.sample_hyperparameters = parse_bool(k, value)?,
            "seed" => m.seed = parse(k, value)?,
            "chains" => self.chains = parse(k, value)?,
            "eta" => self.eta = parse(k, value)?,
            "use_labels" => self.use_labels = parse_bool(k, value)?,
            "resume" => self.resume = parse_bool(k, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(k, value)?,
            "test_fraction" => self.test_fraction = parse(k, value)?,
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            "phrases" => self.phrases = Some(PathBuf::from(value)),
            "exclusion_words" => self.exclusion_words = Some(PathBuf::from(value)),
            "common_threshold" => self.common_threshold = parse(k, value)?,
            "rare_count" => self.rare_count = parse(k, value)?,
            "fold_in_sweeps" => self.fold_in_sweeps = parse(k, value)?,
            "fold_in_burn_in" => self.fold_in_burn_in = parse(k, value)?,
            "top_words" => self.top_words = parse(k, value)?,
            "threshold" => self.threshold = parse(k, value)?,
            "chain" => self.chain = parse(k, value)?,
            _ => return Err(CliError::Usage(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Apply a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1))
            })?;
            self.apply(key, value).map_err(|e| {
                CliError::Usage(format!("{}:{}: {}", path.display(), n + 1, e.message()))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.chains == 0 {
            return Err(CliError::Usage("chains must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(CliError::Usage(format!(
                "test_fraction {} outside [0, 1)",
                self.test_fraction
            )));
        }
        if !(self.common_threshold > 0.0 && self.common_threshold <= 1.0) {
            return Err(CliError::Usage(format!(
                "common_threshold {} outside (0, 1]",
                self.common_threshold
            )));
        }
        Ok(())
    }

    /// The settings that shape a trained model, in config-file form.
    pub fn to_config_text(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("variant", m.variant.to_string());
        put("topic_cap", m.topic_cap.to_string());
        put("fixed_k", m.fixed_k.to_string());
        put("topic_discount", format!("{:?}", m.topic_discount));
        put("word_discount", format!("{:?}", m.word_discount));
        put("initial_concentration", format!("{:?}", m.initial_concentration));
        put("concentration_shape", format!("{:?}", m.concentration_shape));
        put("concentration_rate", format!("{:?}", m.concentration_rate));
        put("lambda_shape", format!("{:?}", m.lambda_shape));
        put("lambda_rate", format!("{:?}", m.lambda_rate));
        put("iterations", m.iterations.to_string());
        put("network_start", m.network_start.to_string());
        put("sample_hyperparameters", m.sample_hyperparameters.to_string());
        put("seed", m.seed.to_string());
        put("chains", self.chains.to_string());
        put("eta", self.eta.to_string());
        put("use_labels", self.use_labels.to_string());
        s
    }
}
