//! Training hyperparameters and the `key = value` config file that mirrors them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters. `Default` is the reference recipe: margin 0.5,
/// scale 32, contrastive weight 0.6, regularization weight 0.1, LoRA rank 8,
/// AdamW at 2e-4, 56 identities x 2 samples, 30k iterations.
///
/// The temperature and the optimizer's betas, epsilon and weight decay are not
/// part of the reference recipe; defaults follow common practice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub margin_m: f64,
    pub scale_alpha: f64,
    pub lambda_scon: f64,
    pub lambda_reg: f64,
    pub temperature_tau: f64,
    pub adapter_rank: usize,
    /// LoRA output scaling; `None` means `1 / adapter_rank`.
    pub adapter_scale: Option<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub batch_identities: usize,
    pub samples_per_identity: usize,
    pub total_iterations: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            margin_m: 0.5,
            scale_alpha: 32.0,
            lambda_scon: 0.6,
            lambda_reg: 0.1,
            temperature_tau: 0.07,
            adapter_rank: 8,
            adapter_scale: None,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            batch_identities: 56,
            samples_per_identity: 2,
            total_iterations: 30_000,
            checkpoint_every: 1_000,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn batch_size(&self) -> usize {
        self.batch_identities * self.samples_per_identity
    }

    pub fn effective_adapter_scale(&self) -> f64 {
        self.adapter_scale
            .unwrap_or(1.0 / self.adapter_rank.max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::field(name, format!("must be > 0, got {v}")))
            }
        }
        fn nonnegative(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::field(name, format!("must be >= 0, got {v}")))
            }
        }
        if !(0.0..std::f64::consts::PI).contains(&self.margin_m) {
            return Err(Error::field(
                "margin_m",
                format!("must lie in [0, pi), got {}", self.margin_m),
            ));
        }
        positive("scale_alpha", self.scale_alpha)?;
        nonnegative("lambda_scon", self.lambda_scon)?;
        nonnegative("lambda_reg", self.lambda_reg)?;
        positive("temperature_tau", self.temperature_tau)?;
        positive("learning_rate", self.learning_rate)?;
        positive("adam_eps", self.adam_eps)?;
        nonnegative("weight_decay", self.weight_decay)?;
        if let Some(scale) = self.adapter_scale {
            positive("adapter_scale", scale)?;
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::field(name, format!("must lie in [0, 1), got {beta}")));
            }
        }
        for (name, v) in [
            ("adapter_rank", self.adapter_rank),
            ("batch_identities", self.batch_identities),
            ("samples_per_identity", self.samples_per_identity),
        ] {
            if v == 0 {
                return Err(Error::field(name, "must be a positive integer"));
            }
        }
        if self.samples_per_identity < 2 {
            return Err(Error::field(
                "samples_per_identity",
                "must be >= 2 so every anchor has an in-batch positive",
            ));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::field("checkpoint_every", "must be a positive integer"));
        }
        Ok(())
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::field(key, format!("cannot parse `{value}`")))
        }
        match key {
            "margin_m" => self.margin_m = num(key, value)?,
            "scale_alpha" => self.scale_alpha = num(key, value)?,
            "lambda_scon" => self.lambda_scon = num(key, value)?,
            "lambda_reg" => self.lambda_reg = num(key, value)?,
            "temperature_tau" => self.temperature_tau = num(key, value)?,
            "adapter_rank" => self.adapter_rank = num(key, value)?,
            "adapter_scale" => {
                self.adapter_scale = match value {
                    "" | "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "learning_rate" => self.learning_rate = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "batch_identities" => self.batch_identities = num(key, value)?,
            "samples_per_identity" => self.samples_per_identity = num(key, value)?,
            "total_iterations" => self.total_iterations = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(Error::field(other, "unknown hyperparameter")),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse_config(text: &str, path: &Path) -> Result<Self> {
        let mut hp = Hyperparams::default();
        hp.apply_config(text, path)?;
        Ok(hp)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_config(&mut self, text: &str, path: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at("expected `key = value`".into()))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load_config(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_config(&text, path)
    }

    pub fn to_config(&self) -> String {
        let scale = self
            .adapter_scale
            .map_or_else(|| "auto".to_string(), |s| s.to_string());
        format!(
            "margin_m = {}\nscale_alpha = {}\nlambda_scon = {}\nlambda_reg = {}\n\
             temperature_tau = {}\nadapter_rank = {}\nadapter_scale = {}\nlearning_rate = {}\n\
             beta1 = {}\nbeta2 = {}\nadam_eps = {}\nweight_decay = {}\nbatch_identities = {}\n\
             samples_per_identity = {}\ntotal_iterations = {}\ncheckpoint_every = {}\nseed = {}\n",
            self.margin_m,
            self.scale_alpha,
            self.lambda_scon,
            self.lambda_reg,
            self.temperature_tau,
            self.adapter_rank,
            scale,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.adam_eps,
            self.weight_decay,
            self.batch_identities,
            self.samples_per_identity,
            self.total_iterations,
            self.checkpoint_every,
            self.seed,
        )
    }
}
