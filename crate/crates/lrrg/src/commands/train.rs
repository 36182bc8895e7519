use anyhow::Context;
use lrrg_core::dualloop::{self, Mlp, TrainMode};
use lrrg_core::rng::{seeded, streams};
use lrrg_core::synth::IMAGE_PIXELS;
use lrrg_core::{Split, NUM_FINDINGS};

use super::load_pools;
use crate::config::RunConfig;
use crate::jsonl::write_jsonl;
use crate::manifest::ManifestBuilder;
use crate::param_file::write_params;
use crate::paths::{run_stem, RUN_MANIFEST};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    /// (mode, seed, mean outer loss over the last 10% of steps).
    pub runs: Vec<(TrainMode, u64, f64)>,
}

pub fn train(config: &RunConfig) -> anyhow::Result<TrainSummary> {
    let mut manifest = ManifestBuilder::new("train", config.echo());
    let (pools, inputs) = load_pools(&config.data_dir(), Split::Train)?;
    for p in inputs {
        manifest.input(p);
    }
    let out = config.out.join("train");
    let model = Mlp::new(IMAGE_PIXELS, config.hidden, NUM_FINDINGS);
    let mut runs = Vec::new();

    for &mode in &config.modes {
        for seed in config.run_seeds() {
            let stem = run_stem(mode, seed);
            let log_path = out.join("logs").join(format!("{stem}.jsonl"));
            let params_path = out.join("params").join(format!("{stem}.bin"));
            let trainer = dualloop::TrainerConfig {
                mode,
                ..config.trainer_for(seed)
            };
            let theta0 = model.init(&mut seeded(seed, streams::INIT));
            let (log, failure) = match dualloop::train(&model, theta0, &pools, &trainer) {
                Ok(log) => (log, None),
                Err(f) => (f.partial.clone(), Some(f)),
            };
            write_jsonl(&log_path, &log.records).with_context(|| format!("writing {}", log_path.display()))?;
            write_params(&params_path, &log.final_params)?;
            if let Some(f) = failure {
                return Err(anyhow::Error::new(f)).with_context(|| {
                    format!(
                        "run {stem} stopped; partial log {} and last good parameters {} kept",
                        log_path.display(),
                        params_path.display()
                    )
                });
            }
            manifest.artifact(&log_path);
            manifest.artifact(&params_path);
            let tail = (log.records.len() / 10).max(1);
            let recent = &log.records[log.records.len().saturating_sub(tail)..];
            let loss = recent.iter().map(|r| r.stats.outer_loss).sum::<f64>() / recent.len().max(1) as f64;
            runs.push((mode, seed, loss));
        }
    }
    manifest.finish(&out.join(RUN_MANIFEST))?;
    Ok(TrainSummary { runs })
}
