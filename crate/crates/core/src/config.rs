//! Flat `key = value` run configuration with two bundled profiles.
//!
//! Resolution order: profile defaults, then the config file, then explicit
//! overrides. A `profile` key is honoured first wherever it appears, so the
//! remaining keys always land on top of the right defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::masking::TokenizerMode;
use crate::objectives::{Ablation, HyperParams};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Backbone,
    Desk,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "backbone" => Ok(Profile::Backbone),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile `{other}` (expected backbone or desk)")),
        }
    }
}

impl Profile {
    fn name(self) -> &'static str {
        match self {
            Profile::Backbone => "backbone",
            Profile::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    /// Labeled data: a directory with train/valid/test files or one file.
    pub dataset: Option<PathBuf>,
    /// Prebuilt similarity pairs; built from the validation split if absent.
    pub benchmark: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub tokenizer_mode: TokenizerMode,
    pub max_len: usize,
    pub min_count: usize,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub hp: HyperParams,
    pub train: TrainConfig,
}

pub const KEYS: [&str; 25] = [
    "profile",
    "dataset",
    "benchmark",
    "lexicon",
    "tokenizer_mode",
    "max_len",
    "min_count",
    "num_layers",
    "hidden_dim",
    "num_heads",
    "tau",
    "alpha",
    "lambda_w",
    "learning_rate",
    "batch_size",
    "max_steps",
    "eval_interval",
    "mask_ratio",
    "weight_decay",
    "clip_norm",
    "use_word_loss",
    "use_pos_loss",
    "use_neg_loss",
    "seed",
    "output_dir",
];

impl RunConfig {
    pub fn profile(profile: Profile) -> RunConfig {
        let (enc, train) = match profile {
            Profile::Backbone => (EncoderConfig::backbone(0), TrainConfig::default()),
            Profile::Desk => (EncoderConfig::desk(0), TrainConfig::desk()),
        };
        RunConfig {
            profile,
            dataset: None,
            benchmark: None,
            lexicon: None,
            tokenizer_mode: match profile {
                Profile::Backbone => TokenizerMode::Subword,
                Profile::Desk => TokenizerMode::Word,
            },
            max_len: enc.max_len,
            min_count: 1,
            num_layers: enc.num_layers,
            hidden_dim: enc.hidden_dim,
            num_heads: enc.num_heads,
            hp: HyperParams::default(),
            train,
        }
    }

    /// Resolves `file` (optional) and `overrides` (`key=value` strings).
    pub fn resolve(file: Option<&Path>, overrides: &[String], default_profile: Profile) -> Result<RunConfig> {
        let mut pairs: Vec<(String, String, String)> = Vec::new();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected key = value, got `{line}`"),
                })?;
                pairs.push((k.trim().to_string(), v.trim().to_string(), format!("{}:{}", path.display(), i + 1)));
            }
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config {
                key: o.clone(),
                message: "override must look like key=value".into(),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string(), "--set".into()));
        }
        let profile = match pairs.iter().rev().find(|(k, _, _)| k == "profile") {
            Some((_, v, _)) => v.parse().map_err(|message| Error::Config {
                key: "profile".into(),
                message,
            })?,
            None => default_profile,
        };
        let mut cfg = RunConfig::profile(profile);
        for (k, v, origin) in &pairs {
            if k != "profile" {
                cfg.set(k, v).map_err(|e| match e {
                    Error::Config { key, message } => Error::Config {
                        key,
                        message: format!("{message} (from {origin})"),
                    },
                    other => other,
                })?;
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::Config {
                key: key.into(),
                message: format!("cannot parse `{value}`"),
            })
        }
        let path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        match key {
            "profile" => {
                return Err(Error::Config {
                    key: key.into(),
                    message: "profile can only be chosen during resolution".into(),
                })
            }
            "dataset" => self.dataset = path(value),
            "benchmark" => self.benchmark = path(value),
            "lexicon" => self.lexicon = path(value),
            "tokenizer_mode" => {
                self.tokenizer_mode = value.parse().map_err(|message| Error::Config {
                    key: key.into(),
                    message,
                })?
            }
            "max_len" => self.max_len = parse(key, value)?,
            "min_count" => self.min_count = parse(key, value)?,
            "num_layers" => self.num_layers = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "num_heads" => self.num_heads = parse(key, value)?,
            "tau" => self.hp.tau = parse(key, value)?,
            "alpha" => self.hp.alpha = parse(key, value)?,
            "lambda_w" => self.hp.lambda_w = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "max_steps" => self.train.max_steps = parse(key, value)?,
            "eval_interval" => self.train.eval_interval = parse(key, value)?,
            "mask_ratio" => self.train.mask_ratio = parse(key, value)?,
            "weight_decay" => self.train.weight_decay = parse(key, value)?,
            "clip_norm" => {
                self.train.clip_norm = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "use_word_loss" => self.train.losses.use_word_loss = parse(key, value)?,
            "use_pos_loss" => self.train.losses.use_pos_loss = parse(key, value)?,
            "use_neg_loss" => self.train.losses.use_neg_loss = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "output_dir" => self.train.output_dir = path(value),
            other => {
                return Err(Error::Config {
                    key: other.into(),
                    message: format!("unknown key; known keys: {}", KEYS.join(", ")),
                })
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn apply_ablation(&mut self, ablation: Ablation) {
        self.train.losses = ablation.selection();
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            num_heads: self.num_heads,
            max_len: self.max_len,
            vocab_size,
            seed: self.train.seed,
        }
    }

    /// Field-level checks; with `check_paths`, every referenced input must
    /// exist.
    pub fn validate(&self, check_paths: bool) -> Result<()> {
        self.hp.validate()?;
        self.train.validate()?;
        self.encoder_config(1).validate()?;
        if self.min_count == 0 {
            return Err(Error::Config {
                key: "min_count".into(),
                message: "must be at least 1".into(),
            });
        }
        if check_paths {
            for (key, p) in [("dataset", &self.dataset), ("benchmark", &self.benchmark), ("lexicon", &self.lexicon)] {
                if let Some(p) = p {
                    if !p.exists() {
                        return Err(Error::Config {
                            key: key.into(),
                            message: format!("{} does not exist", p.display()),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// The resolved configuration in the same flat format it is read from.
    pub fn to_kv(&self) -> String {
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        put("profile", self.profile.name().into());
        put("dataset", p(&self.dataset));
        put("benchmark", p(&self.benchmark));
        put("lexicon", p(&self.lexicon));
        put("tokenizer_mode", self.tokenizer_mode.to_string());
        put("max_len", self.max_len.to_string());
        put("min_count", self.min_count.to_string());
        put("num_layers", self.num_layers.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("num_heads", self.num_heads.to_string());
        put("tau", self.hp.tau.to_string());
        put("alpha", self.hp.alpha.to_string());
        put("lambda_w", self.hp.lambda_w.to_string());
        put("learning_rate", t.learning_rate.to_string());
        put("batch_size", t.batch_size.to_string());
        put("max_steps", t.max_steps.to_string());
        put("eval_interval", t.eval_interval.to_string());
        put("mask_ratio", t.mask_ratio.to_string());
        put("weight_decay", t.weight_decay.to_string());
        put("clip_norm", t.clip_norm.map(|c| c.to_string()).unwrap_or_else(|| "none".into()));
        put("use_word_loss", t.losses.use_word_loss.to_string());
        put("use_pos_loss", t.losses.use_pos_loss.to_string());
        put("use_neg_loss", t.losses.use_neg_loss.to_string());
        put("seed", t.seed.to_string());
        put("output_dir", p(&t.output_dir));
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_kv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backbone_defaults() {
        let c = RunConfig::profile(Profile::Backbone);
        assert_eq!((c.num_layers, c.hidden_dim, c.num_heads, c.max_len), (12, 768, 12, 128));
        assert_eq!(c.train.learning_rate, 1e-5);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.train.max_steps, 20_000);
        assert_eq!(c.train.eval_interval, 500);
        assert_eq!((c.hp.tau, c.hp.alpha, c.hp.lambda_w), (0.05, 1.0, 0.15));
        assert_eq!(c.train.mask_ratio, 0.1);
        let d = RunConfig::profile(Profile::Desk);
        assert_eq!((d.num_layers, d.hidden_dim, d.train.batch_size, d.train.max_steps, d.train.eval_interval), (4, 128, 16, 1000, 50));
    }

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.cfg");
        fs::write(&f, "# comment\nprofile = desk\nbatch_size = 8\nmax_steps = 30 # trailing\ntau=0.1\n").unwrap();
        let c = RunConfig::resolve(Some(&f), &["max_steps=7".into()], Profile::Backbone).unwrap();
        assert_eq!(c.profile, Profile::Desk);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.max_steps, 7);
        assert_eq!(c.hp.tau, 0.1);
        assert_eq!(c.num_layers, 4);
        let c = RunConfig::resolve(Some(&f), &["profile=backbone".into()], Profile::Desk).unwrap();
        assert_eq!((c.num_layers, c.train.batch_size), (12, 8));
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::profile(Profile::Desk);
        c.set("clip_norm", "none").unwrap();
        c.set("dataset", "/tmp/x").unwrap();
        c.apply_ablation(Ablation::PosNeg);
        let f = dir.path().join("resolved.cfg");
        c.write(&f).unwrap();
        assert_eq!(RunConfig::resolve(Some(&f), &[], Profile::Backbone).unwrap(), c);
    }

    #[test]
    fn field_level_errors() {
        let mut c = RunConfig::profile(Profile::Desk);
        match c.set("batch_sise", "3").unwrap_err() {
            Error::Config { key, .. } => assert_eq!(key, "batch_sise"),
            e => panic!("{e}"),
        }
        assert!(c.set("tau", "abc").is_err());
        c.set("num_heads", "3").unwrap();
        assert!(c.validate(false).is_err());
        let mut c = RunConfig::profile(Profile::Desk);
        c.set("lexicon", "/definitely/missing.tsv").unwrap();
        assert!(c.validate(false).is_ok());
        assert!(c.validate(true).is_err());
        assert!(RunConfig::resolve(None, &["nonsense".into()], Profile::Desk).is_err());
    }
}
