//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::anycbm::AnyCbmConfig;
use crate::blackbox::BlackBoxConfig;
use crate::cbm::{CbmConfig, TrainingMode};
use crate::data::Variant;
use crate::eval::DEFAULT_SIGMA;
use crate::nn::AdamConfig;
use crate::par::Execution;
use crate::train::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Variant,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    pub lr: f64,
    pub bb_hidden: Vec<usize>,
    pub tap_l: usize,
    pub tap_q: usize,
    pub bb_epochs: usize,
    pub cbm_g_hidden: Vec<usize>,
    pub cbm_f_hidden: Vec<usize>,
    pub cbm_mode: TrainingMode,
    pub cbm_epochs: usize,
    pub cbm_f_epochs: usize,
    pub anycbm_c_hidden: Vec<usize>,
    pub anycbm_y_hidden: Vec<usize>,
    pub anycbm_mode: TrainingMode,
    pub anycbm_epochs: usize,
    pub lambda_c: f32,
    pub lambda_r: f32,
    pub sigma: f64,
    pub noise_layer: usize,
    /// Use at most this many training rows (after the validation split).
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub synth_k: usize,
    pub synth_count: usize,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let any = AnyCbmConfig::default();
        Self {
            dataset: Variant::Grey,
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2, 3, 4],
            batch_size: 128,
            lr: 1e-3,
            bb_hidden: vec![256, 128, 64],
            tap_l: 1,
            tap_q: 2,
            bb_epochs: 8,
            cbm_g_hidden: vec![256, 128],
            cbm_f_hidden: vec![32],
            cbm_mode: TrainingMode::Independent,
            cbm_epochs: 16,
            cbm_f_epochs: 4,
            anycbm_c_hidden: any.psi_c_hidden,
            anycbm_y_hidden: any.psi_y_hidden,
            anycbm_mode: TrainingMode::Joint,
            anycbm_epochs: any.train.epochs,
            lambda_c: any.lambda_c,
            lambda_r: any.lambda_r,
            sigma: DEFAULT_SIGMA,
            noise_layer: 0,
            train_limit: None,
            test_limit: None,
            synth_k: 4,
            synth_count: 2000,
            parallel: true,
        }
    }
}

/// Every recognised key, in the order [`RunConfig::to_kv`] writes them.
pub const KEYS: &[&str] = &[
    "dataset",
    "data_dir",
    "out_dir",
    "seeds",
    "batch_size",
    "lr",
    "bb.hidden",
    "bb.tap_l",
    "bb.tap_q",
    "bb.epochs",
    "cbm.g_hidden",
    "cbm.f_hidden",
    "cbm.mode",
    "cbm.epochs",
    "cbm.f_epochs",
    "anycbm.c_hidden",
    "anycbm.y_hidden",
    "anycbm.mode",
    "anycbm.epochs",
    "anycbm.lambda_c",
    "anycbm.lambda_r",
    "sigma",
    "noise_layer",
    "train_limit",
    "test_limit",
    "synth.k",
    "synth.count",
    "parallel",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = value.parse()?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seeds" => self.seeds = parse_list(value)?,
            "batch_size" => self.batch_size = parse(value)?,
            "lr" => self.lr = parse(value)?,
            "bb.hidden" => self.bb_hidden = parse_list(value)?,
            "bb.tap_l" => self.tap_l = parse(value)?,
            "bb.tap_q" => self.tap_q = parse(value)?,
            "bb.epochs" => self.bb_epochs = parse(value)?,
            "cbm.g_hidden" => self.cbm_g_hidden = parse_list(value)?,
            "cbm.f_hidden" => self.cbm_f_hidden = parse_list(value)?,
            "cbm.mode" => self.cbm_mode = value.parse()?,
            "cbm.epochs" => self.cbm_epochs = parse(value)?,
            "cbm.f_epochs" => self.cbm_f_epochs = parse(value)?,
            "anycbm.c_hidden" => self.anycbm_c_hidden = parse_list(value)?,
            "anycbm.y_hidden" => self.anycbm_y_hidden = parse_list(value)?,
            "anycbm.mode" => self.anycbm_mode = value.parse()?,
            "anycbm.epochs" => self.anycbm_epochs = parse(value)?,
            "anycbm.lambda_c" => self.lambda_c = parse(value)?,
            "anycbm.lambda_r" => self.lambda_r = parse(value)?,
            "sigma" => self.sigma = parse(value)?,
            "noise_layer" => self.noise_layer = parse(value)?,
            "train_limit" => self.train_limit = parse_optional(value)?,
            "test_limit" => self.test_limit = parse_optional(value)?,
            "synth.k" => self.synth_k = parse(value)?,
            "synth.count" => self.synth_count = parse(value)?,
            "parallel" => self.parallel = parse(value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.tap_l > self.tap_q || self.tap_q > self.bb_hidden.len() + 1 {
            return Err(Error::Config(format!(
                "taps {}..{} invalid for {} hidden layers",
                self.tap_l,
                self.tap_q,
                self.bb_hidden.len()
            )));
        }
        if self.noise_layer >= self.tap_l {
            return Err(Error::Config(format!(
                "noise_layer {} must come before tap_l {}",
                self.noise_layer, self.tap_l
            )));
        }
        if self.cbm_g_hidden.is_empty() {
            return Err(Error::Config("cbm.g_hidden needs at least one layer".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    fn get(&self, key: &str) -> String {
        match key {
            "dataset" => self.dataset.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "seeds" => join(&self.seeds),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr.to_string(),
            "bb.hidden" => join(&self.bb_hidden),
            "bb.tap_l" => self.tap_l.to_string(),
            "bb.tap_q" => self.tap_q.to_string(),
            "bb.epochs" => self.bb_epochs.to_string(),
            "cbm.g_hidden" => join(&self.cbm_g_hidden),
            "cbm.f_hidden" => join(&self.cbm_f_hidden),
            "cbm.mode" => self.cbm_mode.to_string(),
            "cbm.epochs" => self.cbm_epochs.to_string(),
            "cbm.f_epochs" => self.cbm_f_epochs.to_string(),
            "anycbm.c_hidden" => join(&self.anycbm_c_hidden),
            "anycbm.y_hidden" => join(&self.anycbm_y_hidden),
            "anycbm.mode" => self.anycbm_mode.to_string(),
            "anycbm.epochs" => self.anycbm_epochs.to_string(),
            "anycbm.lambda_c" => self.lambda_c.to_string(),
            "anycbm.lambda_r" => self.lambda_r.to_string(),
            "sigma" => self.sigma.to_string(),
            "noise_layer" => self.noise_layer.to_string(),
            "train_limit" => self.train_limit.map_or("none".into(), |v| v.to_string()),
            "test_limit" => self.test_limit.map_or("none".into(), |v| v.to_string()),
            "synth.k" => self.synth_k.to_string(),
            "synth.count" => self.synth_count.to_string(),
            "parallel" => self.parallel.to_string(),
            _ => unreachable!("KEYS and get agree"),
        }
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    fn train_config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            seed,
        }
    }

    pub fn blackbox_config(&self, seed: u64) -> BlackBoxConfig {
        BlackBoxConfig {
            hidden: self.bb_hidden.clone(),
            tap_l: self.tap_l,
            tap_q: self.tap_q,
            train: self.train_config(self.bb_epochs, seed),
        }
    }

    pub fn cbm_config(&self, seed: u64) -> CbmConfig {
        CbmConfig {
            g_hidden: self.cbm_g_hidden.clone(),
            f_hidden: self.cbm_f_hidden.clone(),
            train: self.train_config(self.cbm_epochs, seed),
            f_epochs: self.cbm_f_epochs,
            ..CbmConfig::default()
        }
    }

    pub fn anycbm_config(&self, seed: u64) -> AnyCbmConfig {
        AnyCbmConfig {
            psi_c_hidden: self.anycbm_c_hidden.clone(),
            psi_y_hidden: self.anycbm_y_hidden.clone(),
            lambda_c: self.lambda_c,
            lambda_r: self.lambda_r,
            train: self.train_config(self.anycbm_epochs, seed),
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value {value:?}: {e}")))
}

fn parse_optional<T: FromStr>(value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(v.trim())).collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_text_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn file_values_apply_and_comments_are_skipped() {
        let cfg = RunConfig::parse("# comment\n\nseeds = 3, 7\nsigma=0.5\nanycbm.mode = independent\ntrain_limit = 100\n").unwrap();
        assert_eq!(cfg.seeds, vec![3, 7]);
        assert_eq!(cfg.sigma, 0.5);
        assert_eq!(cfg.anycbm_mode, TrainingMode::Independent);
        assert_eq!(cfg.train_limit, Some(100));
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in ["seeds =", "nonsense", "unknown = 1", "sigma = -1", "lr = abc", "bb.tap_l = 3"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn derived_model_configs_carry_settings() {
        let mut cfg = RunConfig::default();
        cfg.set("lr", "0.01").unwrap();
        cfg.set("bb.epochs", "3").unwrap();
        let bb = cfg.blackbox_config(9);
        assert_eq!(bb.train.seed, 9);
        assert_eq!(bb.train.epochs, 3);
        assert_eq!(bb.train.adam.lr, 0.01);
        assert_eq!(cfg.anycbm_config(1).lambda_r, cfg.lambda_r);
    }
}
