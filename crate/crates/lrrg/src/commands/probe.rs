use lrrg_core::dualloop::{coherence_probe, PairCoherence, ProbeConfig};
use lrrg_core::metrics::evaluate_model;
use lrrg_core::rng::{seeded, streams};

use super::eval::load_benchmarks;
use super::{csv_bytes, load_pools, load_runs};
use crate::config::{Benchmark, RunConfig};
use crate::fsutil::atomic_write;
use crate::manifest::ManifestBuilder;
use crate::paths::RUN_MANIFEST;

pub const COHERENCE_HEADER: [&str; 7] = ["mode", "seed", "regime_a", "regime_b", "mean_cos", "defined", "samples"];
pub const GAPS_HEADER: [&str; 5] = ["mode", "seed", "benchmark", "f1", "f1_gap_vs_std"];

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSummary {
    pub coherence_csv: std::path::PathBuf,
    pub gaps_csv: std::path::PathBuf,
    /// (run label, seed, per-pair results).
    pub pairs: Vec<(String, u64, [PairCoherence; 3])>,
}

pub fn probe(config: &RunConfig) -> anyhow::Result<ProbeSummary> {
    let mut manifest = ManifestBuilder::new("probe", config.echo());
    let source = config
        .probe
        .params
        .clone()
        .or_else(|| config.params.clone())
        .unwrap_or_else(|| config.out.join("train").join("params"));
    let runs = load_runs(&source, config.seed)?;
    for r in &runs {
        manifest.input(&r.path);
    }
    let (pools, inputs) = load_pools(&config.data_dir(), config.probe.split)?;
    for p in inputs {
        manifest.input(p);
    }
    let mut wanted = vec![Benchmark::Std];
    wanted.extend(config.benchmarks.iter().copied().filter(|&b| b != Benchmark::Std));
    let benches = load_benchmarks(config, &wanted, &mut manifest)?;

    let probe_config = ProbeConfig {
        batches: config.probe.batches,
        batch_size: config.probe.batch_size,
        policy: config.trainer.zero_grad_policy,
    };
    let mut coherence_rows = Vec::new();
    let mut gap_rows = Vec::new();
    let mut pairs = Vec::new();
    for run in &runs {
        let mut rng = seeded(run.seed, streams::PROBE);
        let result = coherence_probe(&run.model, &run.theta, &pools, &probe_config, &mut rng)?;
        for p in &result {
            coherence_rows.push(vec![
                run.label.clone(),
                run.seed.to_string(),
                p.a.short_name().into(),
                p.b.short_name().into(),
                p.mean_cos.map_or(String::new(), |c| c.to_string()),
                p.defined.to_string(),
                p.samples.to_string(),
            ]);
        }
        pairs.push((run.label.clone(), run.seed, result));

        let mut f1 = Vec::new();
        for (b, d) in &benches {
            f1.push((*b, evaluate_model(&run.model, &run.theta, &d.studies, config.threshold)?.f1));
        }
        let std_f1 = f1[0].1;
        for (b, v) in f1.iter().filter(|(b, _)| config.benchmarks.contains(b)) {
            gap_rows.push(vec![
                run.label.clone(),
                run.seed.to_string(),
                b.name().into(),
                v.to_string(),
                (std_f1 - v).to_string(),
            ]);
        }
    }
    let dir = config.out.join("probe");
    let coherence_csv = dir.join("coherence.csv");
    let gaps_csv = dir.join("gaps.csv");
    atomic_write(&coherence_csv, &csv_bytes(&COHERENCE_HEADER, &coherence_rows))?;
    atomic_write(&gaps_csv, &csv_bytes(&GAPS_HEADER, &gap_rows))?;
    manifest.artifact(&coherence_csv);
    manifest.artifact(&gaps_csv);
    manifest.finish(&dir.join(RUN_MANIFEST))?;
    Ok(ProbeSummary {
        coherence_csv,
        gaps_csv,
        pairs,
    })
}
