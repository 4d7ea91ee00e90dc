//! Experiment configuration: built-in defaults, overridden by a flat
//! `key = value` file, overridden by command-line settings.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hamnet::baselines::BpTrainerConfig;
use hamnet::bio::BioConfig;
use hamnet::metrics::EncoderConfig;
use hamnet::{Algorithm, Error, Result};

/// Environment variable consulted for the MNIST directory when neither the
/// config file nor the command line names one.
pub const DATA_DIR_ENV: &str = "HAMNET_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

pub const TABLE_SIZES: [usize; 4] = [10, 30, 100, 200];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub digits: Vec<u8>,
    pub algorithms: Vec<Algorithm>,
    pub hidden_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Seed fields inside the trainer configs are ignored; each run takes
    /// its seed from the grid.
    pub bio: BioConfig,
    pub bp: BpTrainerConfig,
    pub chorowski: BpTrainerConfig,
    pub encoder: EncoderConfig,
    pub mi_samples: usize,
    pub eps_silent: f64,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data_dir = std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
        Self {
            data_dir,
            digits: hamnet::dataset::DEFAULT_DIGITS.to_vec(),
            algorithms: Algorithm::ALL.to_vec(),
            hidden_sizes: TABLE_SIZES.to_vec(),
            seeds: vec![1, 2, 3],
            bio: BioConfig::default(),
            bp: BpTrainerConfig::bp(),
            chorowski: BpTrainerConfig::chorowski(),
            encoder: EncoderConfig::default(),
            mi_samples: 12,
            eps_silent: 0.0,
            out: PathBuf::from("results"),
            jobs: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Applies one setting. Unknown keys are errors so typos do not pass
    /// silently.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "data_dir" => self.data_dir = PathBuf::from(v),
            "digits" => self.digits = parse_list(key, v)?,
            "algorithms" => self.algorithms = parse_list(key, v)?,
            "hidden_sizes" => self.hidden_sizes = parse_list(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "bio.eta" => self.bio.eta = parse(key, v)?,
            "bio.alpha" => self.bio.alpha = parse(key, v)?,
            "bio.beta" => self.bio.beta_wp = parse(key, v)?,
            "bio.gamma" => self.bio.gamma = parse(key, v)?,
            "bio.sigma2" => self.bio.sigma2 = parse(key, v)?,
            "bio.batch_size" => self.bio.batch_size = parse(key, v)?,
            "bio.epochs" => self.bio.epochs = parse(key, v)?,
            "bio.signal" => self.bio.signal = parse(key, v)?,
            "bio.reduction" => self.bio.reduction = parse(key, v)?,
            "bp.learning_rate" => self.bp.learning_rate = parse(key, v)?,
            "bp.batch_size" => self.bp.batch_size = parse(key, v)?,
            "bp.epochs" => self.bp.epochs = parse(key, v)?,
            "chorowski.learning_rate" => self.chorowski.learning_rate = parse(key, v)?,
            "chorowski.batch_size" => self.chorowski.batch_size = parse(key, v)?,
            "chorowski.epochs" => self.chorowski.epochs = parse(key, v)?,
            "chorowski.lambda" => self.chorowski.lambda_sparsity = parse(key, v)?,
            "chorowski.weight_l1" => self.chorowski.weight_l1 = parse(key, v)?,
            "encoder.learning_rate" => self.encoder.learning_rate = parse(key, v)?,
            "encoder.epochs" => self.encoder.epochs = parse(key, v)?,
            "encoder.batch_size" => self.encoder.batch_size = parse(key, v)?,
            "mi_samples" => self.mi_samples = parse(key, v)?,
            "eps_silent" => self.eps_silent = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "jobs" => self.jobs = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.apply_text(&text)
    }

    /// Every setting as `key=value`, in a form [`ExperimentConfig::apply_text`]
    /// reads back to an equal config.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("data_dir", self.data_dir.display().to_string()),
            ("digits", join(&self.digits)),
            ("algorithms", join(&self.algorithms)),
            ("hidden_sizes", join(&self.hidden_sizes)),
            ("seeds", join(&self.seeds)),
            ("bio.eta", self.bio.eta.to_string()),
            ("bio.alpha", self.bio.alpha.to_string()),
            ("bio.beta", self.bio.beta_wp.to_string()),
            ("bio.gamma", self.bio.gamma.to_string()),
            ("bio.sigma2", self.bio.sigma2.to_string()),
            ("bio.batch_size", self.bio.batch_size.to_string()),
            ("bio.epochs", self.bio.epochs.to_string()),
            ("bio.signal", self.bio.signal.to_string()),
            ("bio.reduction", self.bio.reduction.to_string()),
            ("bp.learning_rate", self.bp.learning_rate.to_string()),
            ("bp.batch_size", self.bp.batch_size.to_string()),
            ("bp.epochs", self.bp.epochs.to_string()),
            ("chorowski.learning_rate", self.chorowski.learning_rate.to_string()),
            ("chorowski.batch_size", self.chorowski.batch_size.to_string()),
            ("chorowski.epochs", self.chorowski.epochs.to_string()),
            ("chorowski.lambda", self.chorowski.lambda_sparsity.to_string()),
            ("chorowski.weight_l1", self.chorowski.weight_l1.to_string()),
            ("encoder.learning_rate", self.encoder.learning_rate.to_string()),
            ("encoder.epochs", self.encoder.epochs.to_string()),
            ("encoder.batch_size", self.encoder.batch_size.to_string()),
            ("mi_samples", self.mi_samples.to_string()),
            ("eps_silent", self.eps_silent.to_string()),
            ("out", self.out.display().to_string()),
            ("jobs", self.jobs.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        if self.hidden_sizes.is_empty() {
            return bad("at least one hidden size is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if let Some(m) = self.hidden_sizes.iter().find(|&&m| m == 0 || m % 2 != 0) {
            return bad(format!("hidden size {m} must be even and positive"));
        }
        if self.digits.len() < 2 || self.digits.iter().any(|&d| d > 9) {
            return bad("need at least two digits in 0..=9".into());
        }
        if self.mi_samples == 0 {
            return bad("mi_samples must be positive".into());
        }
        if !(self.eps_silent >= 0.0) {
            return bad("eps_silent must be nonnegative".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.encoder.epochs > 0 && !(self.encoder.learning_rate > 0.0) {
            return bad("encoder learning rate must be positive".into());
        }
        let k = self.digits.len();
        self.bio.validate(k)?;
        self.bp.validate(k)?;
        self.chorowski.validate(k)?;
        if self.chorowski.variant != Algorithm::Chorowski || self.bp.variant != Algorithm::Bp {
            return bad("baseline variants are fixed".into());
        }
        Ok(())
    }

    pub fn bio_for(&self, seed: u64) -> BioConfig {
        BioConfig { seed, ..self.bio.clone() }
    }

    pub fn baseline_for(&self, algo: Algorithm, seed: u64) -> BpTrainerConfig {
        let base = match algo {
            Algorithm::Chorowski => &self.chorowski,
            _ => &self.bp,
        };
        BpTrainerConfig { seed, ..base.clone() }
    }

    pub fn encoder_for(&self, seed: u64) -> EncoderConfig {
        EncoderConfig { seed, ..self.encoder.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds = vec![4, 9];
        cfg.bio.eta = 1.5e-4;
        cfg.chorowski.lambda_sparsity = 0.002;
        cfg.bio.reduction = "mean".parse().unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# grid\n\nhidden_sizes = 10, 30  # small\nseeds=7\n").unwrap();
        assert_eq!(cfg.hidden_sizes, vec![10, 30]);
        assert_eq!(cfg.seeds, vec![7]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_text("no_such_key = 1").is_err());
        assert!(cfg.apply_text("bio.eta = fast").is_err());
        assert!(cfg.apply_text("just text").is_err());
        cfg.hidden_sizes = vec![10, 7];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.algorithms.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn defaults_carry_published_hyperparameters() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.bio.eta, 0.000158);
        assert_eq!(cfg.bio.alpha, 0.1);
        assert_eq!(cfg.bio.beta_wp, 446.25);
        assert_eq!(cfg.bio.gamma, 0.1);
        assert_eq!(cfg.bio.sigma2, 0.0157);
        assert_eq!(cfg.hidden_sizes, vec![10, 30, 100, 200]);
        cfg.validate().unwrap();
    }
}
