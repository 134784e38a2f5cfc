use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// `tanh` MLP: input -> hidden -> embedding.
    ToyMlp,
    /// Single self-attention block over `tokens` equal slices of the input.
    ToyTransformer,
    /// Caller-supplied backbone; see [`crate::encoder::Encoder::new`].
    External,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy-mlp" => Ok(Architecture::ToyMlp),
            "toy-transformer" => Ok(Architecture::ToyTransformer),
            "external" => Ok(Architecture::External),
            other => Err(Error::field("architecture", format!("unknown architecture `{other}`"))),
        }
    }
}

/// Capacity tier. Only the hidden width changes; inputs and outputs keep their shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeTier {
    Full,
    Small,
    Tiny,
}

impl SizeTier {
    pub fn width_divisor(self) -> usize {
        match self {
            SizeTier::Full => 1,
            SizeTier::Small => 2,
            SizeTier::Tiny => 4,
        }
    }
}

impl std::str::FromStr for SizeTier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SizeTier::Full),
            "small" => Ok(SizeTier::Small),
            "tiny" => Ok(SizeTier::Tiny),
            other => Err(Error::field("tier", format!("unknown size tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub architecture: Architecture,
    /// Length of each input feature vector.
    pub input_dim: usize,
    pub embed_dim: usize,
    /// Hidden width at the `full` tier.
    pub hidden_dim: usize,
    /// Token count for `toy-transformer`; `input_dim` must be a multiple of it.
    pub tokens: usize,
    pub tier: SizeTier,
    /// Seed for the frozen base weights of the toy backbones.
    pub base_seed: u64,
}

impl BackboneConfig {
    pub fn toy_mlp(input_dim: usize, hidden_dim: usize, embed_dim: usize, base_seed: u64) -> Self {
        BackboneConfig {
            architecture: Architecture::ToyMlp,
            input_dim,
            embed_dim,
            hidden_dim,
            tokens: 1,
            tier: SizeTier::Full,
            base_seed,
        }
    }

    pub fn toy_transformer(
        input_dim: usize,
        tokens: usize,
        hidden_dim: usize,
        embed_dim: usize,
        base_seed: u64,
    ) -> Self {
        BackboneConfig {
            architecture: Architecture::ToyTransformer,
            input_dim,
            embed_dim,
            hidden_dim,
            tokens,
            tier: SizeTier::Full,
            base_seed,
        }
    }

    pub fn with_tier(mut self, tier: SizeTier) -> Self {
        self.tier = tier;
        self
    }

    pub fn width(&self) -> usize {
        (self.hidden_dim / self.tier.width_divisor()).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::field("input_dim", "must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(Error::field("embed_dim", "must be positive"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::field("hidden_dim", "must be positive"));
        }
        if self.architecture == Architecture::ToyTransformer
            && (self.tokens == 0 || self.input_dim % self.tokens != 0)
        {
            return Err(Error::field(
                "tokens",
                format!("input_dim {} is not a multiple of tokens {}", self.input_dim, self.tokens),
            ));
        }
        Ok(())
    }
}
