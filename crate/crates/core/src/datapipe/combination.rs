use std::fmt;

use super::{Category, DataError};
use crate::model::ModelConfig;
use crate::protocol::{MATERIAL_INDICES, MIX_DIM};

/// Which inputs reach the network. Image channels keep the order
/// `O, D, OF_x, OF_y`; dropping `m` removes only the material entries of the
/// mix vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Combination {
    pub ortho: bool,
    pub depth: bool,
    pub flow: bool,
    pub materials: bool,
}

impl Combination {
    pub const NAMES: [&'static str; 6] = ["O+D+m", "O+D+m+OF", "O+D", "O+m", "D+m", "D+m+OF"];

    pub fn full() -> Self {
        Self {
            ortho: true,
            depth: true,
            flow: true,
            materials: true,
        }
    }

    pub fn all() -> Vec<Self> {
        Self::NAMES.iter().map(|n| Self::parse(n).unwrap()).collect()
    }

    pub fn parse(name: &str) -> Result<Self, DataError> {
        if !Self::NAMES.contains(&name) {
            return Err(DataError::UnknownCombination(name.to_string()));
        }
        let parts: Vec<&str> = name.split('+').collect();
        Ok(Self {
            ortho: parts.contains(&"O"),
            depth: parts.contains(&"D"),
            flow: parts.contains(&"OF"),
            materials: parts.contains(&"m"),
        })
    }

    pub fn image_channels(&self) -> usize {
        usize::from(self.ortho) + usize::from(self.depth) + 2 * usize::from(self.flow)
    }

    /// Normalisation category of each image channel, in stacking order.
    pub fn channel_categories(&self) -> Vec<Category> {
        let mut out = Vec::with_capacity(4);
        if self.ortho {
            out.push(Category::Ortho);
        }
        if self.depth {
            out.push(Category::Depth);
        }
        if self.flow {
            out.extend([Category::Flow, Category::Flow]);
        }
        out
    }

    pub fn mix_dim(&self) -> usize {
        if self.materials {
            MIX_DIM
        } else {
            MIX_DIM - MATERIAL_INDICES.len()
        }
    }

    /// `base` with the input widths adjusted to this combination.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            in_channels: self.image_channels(),
            mix_dim: self.mix_dim(),
            ..base.clone()
        }
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.ortho {
            parts.push("O");
        }
        if self.depth {
            parts.push("D");
        }
        if self.materials {
            parts.push("m");
        }
        if self.flow {
            parts.push("OF");
        }
        f.write_str(&parts.join("+"))
    }
}
