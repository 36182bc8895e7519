use lrrg_core::metrics::evaluate_model;
use lrrg_core::synth::RegimeDataset;

use super::load_runs;
use crate::config::{Benchmark, RunConfig};
use crate::dataset_file::read_dataset;
use crate::fsutil::atomic_write;
use crate::manifest::ManifestBuilder;
use crate::metrics_csv::{self, MetricsRow};
use crate::paths::{benchmark_file, RUN_MANIFEST};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub csv: std::path::PathBuf,
    pub rows: Vec<MetricsRow>,
}

/// Benchmark test sets, each checked to be non-empty.
pub(crate) fn load_benchmarks(
    config: &RunConfig,
    benchmarks: &[Benchmark],
    manifest: &mut ManifestBuilder,
) -> anyhow::Result<Vec<(Benchmark, RegimeDataset)>> {
    let dir = config.data_dir();
    let mut out = Vec::new();
    for &b in benchmarks {
        let path = benchmark_file(&dir, b);
        if !path.exists() {
            anyhow::bail!("missing benchmark file {} for benchmark `{b}`", path.display());
        }
        let d = read_dataset(&path)?;
        if d.is_empty() {
            anyhow::bail!("benchmark `{b}` ({}) has no studies", path.display());
        }
        manifest.input(&path);
        out.push((b, d));
    }
    Ok(out)
}

pub fn eval(config: &RunConfig) -> anyhow::Result<EvalSummary> {
    let mut manifest = ManifestBuilder::new("eval", config.echo());
    let source = config.params.clone().unwrap_or_else(|| config.out.join("train").join("params"));
    let runs = load_runs(&source, config.seed)?;
    for r in &runs {
        manifest.input(&r.path);
    }
    let benches = load_benchmarks(config, &config.benchmarks, &mut manifest)?;

    let mut rows = Vec::new();
    for (b, data) in &benches {
        for run in &runs {
            let report = evaluate_model(&run.model, &run.theta, &data.studies, config.threshold)?;
            rows.push(MetricsRow::new(b.name(), &run.label, run.seed, &report));
        }
    }
    let csv = config.out.join("eval").join("metrics.csv");
    atomic_write(&csv, &metrics_csv::render(&rows))?;
    manifest.artifact(&csv);
    manifest.finish(&config.out.join("eval").join(RUN_MANIFEST))?;
    Ok(EvalSummary { csv, rows })
}
