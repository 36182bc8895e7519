//! File names inside a run directory.

use std::path::{Path, PathBuf};

use lrrg_core::dualloop::TrainMode;
use lrrg_core::{Regime, Split};

use crate::config::Benchmark;

pub const AUX_DATASET: &str = "aux_test.lrrg";
pub const SPLIT_MANIFEST: &str = "split_manifest.json";
pub const RUN_MANIFEST: &str = "manifest.json";

pub fn dataset_file(regime: Regime, split: Split) -> String {
    format!("{}_{}.lrrg", regime.short_name(), split.short_name())
}

pub fn benchmark_file(data_dir: &Path, benchmark: Benchmark) -> PathBuf {
    match benchmark.regime() {
        Some(r) => data_dir.join(dataset_file(r, Split::Test)),
        None => data_dir.join(AUX_DATASET),
    }
}

/// `<mode>_seed<seed>`, the stem of a run's log and parameter files.
pub fn run_stem(mode: TrainMode, seed: u64) -> String {
    format!("{}_seed{seed}", mode.as_str())
}

pub fn parse_run_stem(stem: &str) -> Option<(TrainMode, u64)> {
    let (mode, seed) = stem.rsplit_once("_seed")?;
    Some((mode.parse().ok()?, seed.parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_stems_round_trip() {
        for m in TrainMode::ALL {
            assert_eq!(parse_run_stem(&run_stem(m, 17)), Some((m, 17)));
        }
        assert_eq!(parse_run_stem("init"), None);
        assert_eq!(dataset_file(Regime::Severe, Split::Val), "severe_val.lrrg");
        assert_eq!(benchmark_file(Path::new("d"), Benchmark::Aux), Path::new("d/aux_test.lrrg"));
    }
}
