#![no_main]

use libfuzzer_sys::fuzz_target;
use stripe_core::detect::TrainConfig;
use stripe_core::evolve::{EvolutionConfig, SegmenterSpec};
use stripe_core::synth::DatasetConfig;

// Every TOML the CLI reads: parse errors are fine, panics are not, and
// neither is a panic in validation of whatever parsed.
fuzz_target!(|data: &str| {
    if let Ok(cfg) = DatasetConfig::from_toml_str(data) {
        let _ = cfg.validate();
    }
    if let Ok(cfg) = EvolutionConfig::from_toml_str(data) {
        let _ = cfg.validate();
    }
    if let Ok(cfg) = toml::from_str::<TrainConfig>(data) {
        let _ = cfg.validate();
    }
    let _ = toml::from_str::<SegmenterSpec>(data);
});
