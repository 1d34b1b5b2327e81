//! The synthetic benchmark shared by the end-to-end acceptance criteria, and
//! the verdict line format.

use ssids_core::experiment::{DataSource, ModelSettings, RunConfig};
use ssids_core::synthetic::SyntheticConfig;

/// Seeds averaged by every end-to-end criterion.
pub const SEEDS: u64 = 5;

/// Long-tailed Gaussian mixture (8 classes, imbalance 50, 10,000 samples,
/// 1% labels) with a compact backbone: 300 warm-up epochs, then 3 rounds of
/// 30 epochs, batch 128.
pub fn benchmark(seed: u64) -> RunConfig {
    let mut c = RunConfig {
        data: DataSource::Synthetic(SyntheticConfig {
            num_classes: 8,
            samples: 10_000,
            imbalance_ratio: 50.0,
            seed,
            ..SyntheticConfig::default()
        }),
        ..RunConfig::default()
    };
    c.split.label_fraction = 0.01;
    c.split.seed = seed;
    c.train.seed = seed;
    c.train.warmup_epochs = 300;
    c.train.epochs_per_round = 30;
    c.train.rounds = 3;
    c.train.batch_size = 128;
    c.train.model = ModelSettings {
        expand_dim: 64,
        channels: 8,
        length: 8,
        conv_channels: vec![16, 16, 16, 16, 32],
        proj_hidden_dim: 32,
        proj_dim: 16,
        ..ModelSettings::default()
    };
    c
}

/// `criterion  N PASS|FAIL what: detail`
pub fn verdict_line(id: u32, ok: bool, what: &str, detail: &str) -> String {
    format!("criterion {id:>2} {} {what}: {detail}", if ok { "PASS" } else { "FAIL" })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_is_valid_and_seeded() {
        let c = benchmark(3);
        c.validate().unwrap();
        assert_eq!((c.split.seed, c.train.seed), (3, 3));
        assert_eq!(verdict_line(9, false, "x", "y"), "criterion  9 FAIL x: y");
    }
}
