use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub expand_dim: usize,
    pub channels: usize,
    pub length: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    /// Width of the pooled representation; equals the last conv width.
    pub repr_dim: usize,
    pub proj_hidden_dim: usize,
    pub proj_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default architecture: 256 expanded units as 16 channels x 16
    /// positions, conv widths 32-32-32-32-64, projection 64 -> 64 -> 32.
    pub fn for_dims(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            expand_dim: 256,
            channels: 16,
            length: 16,
            conv_channels: vec![32, 32, 32, 32, 64],
            kernel_size: 3,
            dropout_rate: 0.3,
            repr_dim: 64,
            proj_hidden_dim: 64,
            proj_dim: 32,
            num_classes,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("model: {msg}")));
        if self.conv_channels.len() != 5 {
            return fail(format!("expected 5 conv widths, got {}", self.conv_channels.len()));
        }
        let dims = [
            ("input_dim", self.input_dim),
            ("expand_dim", self.expand_dim),
            ("channels", self.channels),
            ("length", self.length),
            ("repr_dim", self.repr_dim),
            ("proj_hidden_dim", self.proj_hidden_dim),
            ("proj_dim", self.proj_dim),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.conv_channels.contains(&0) {
            return fail("conv widths must be at least 1".into());
        }
        if self.channels * self.length != self.expand_dim {
            return fail(format!(
                "channels x length = {} x {} does not equal expand_dim {}",
                self.channels, self.length, self.expand_dim
            ));
        }
        if self.kernel_size % 2 == 0 {
            return fail(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.conv_channels[0] != self.conv_channels[2] {
            return fail("the residual skip needs conv1 and conv3 to have equal widths".into());
        }
        if self.repr_dim != self.conv_channels[4] {
            return fail(format!(
                "repr_dim {} must equal the last conv width {}",
                self.repr_dim, self.conv_channels[4]
            ));
        }
        Ok(())
    }

    /// Input width of conv layer `i`.
    pub(crate) fn conv_in(&self, i: usize) -> usize {
        if i == 0 {
            self.channels
        } else {
            self.conv_channels[i - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_for_nsl_kdd_width() {
        let c = ModelConfig::for_dims(122, 11);
        c.validate().unwrap();
        assert_eq!((c.expand_dim, c.channels, c.length), (256, 16, 16));
    }

    #[test]
    fn rejects_bad_reshape_and_kernel() {
        let mut c = ModelConfig::for_dims(10, 3);
        c.length = 15;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::for_dims(10, 3);
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::for_dims(10, 3);
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }
}
