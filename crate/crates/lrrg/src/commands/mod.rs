//! The five subcommands. Each writes its artifacts atomically and its run
//! manifest last.

mod curate;
mod eval;
mod gen_data;
mod probe;
mod train;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lrrg_core::autodiff::ParamVector;
use lrrg_core::dualloop::{LabeledBatch, Mlp, RegimePools, TrainMode};
use lrrg_core::{Regime, Split};

pub use curate::{curate, CurateSummary};
pub use eval::{eval, EvalSummary};
pub use gen_data::{gen_data, GenDataSummary, SplitManifestFile};
pub use probe::{probe, ProbeSummary, COHERENCE_HEADER, GAPS_HEADER};
pub use train::{train, TrainSummary};

use crate::dataset_file::read_dataset;
use crate::param_file::{mlp_for, read_params};
use crate::paths::{dataset_file, parse_run_stem};

/// A trained (or hand-supplied) parameter file.
pub struct Run {
    /// Mode name from the file stem, or the stem itself.
    pub label: String,
    pub mode: Option<TrainMode>,
    pub seed: u64,
    pub path: PathBuf,
    pub model: Mlp,
    pub theta: ParamVector,
}

/// Loads one `.bin` file or every `.bin` file of a directory, ordered by
/// mode then seed. Stems not of the form `<mode>_seed<n>` use `default_seed`.
pub fn load_runs(source: &Path, default_seed: u64) -> anyhow::Result<Vec<Run>> {
    let files: Vec<PathBuf> = if source.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(source)
            .with_context(|| format!("cannot list {}", source.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        v.sort();
        v
    } else if source.is_file() {
        vec![source.to_path_buf()]
    } else {
        bail!("parameter source {} does not exist", source.display());
    };
    if files.is_empty() {
        bail!("no parameter files in {}", source.display());
    }
    let mut runs = Vec::new();
    for path in files {
        let theta = read_params(&path)?;
        let model = mlp_for(&theta)
            .with_context(|| format!("{}: parameter layout is not a known classifier", path.display()))?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (label, mode, seed) = match parse_run_stem(&stem) {
            Some((m, s)) => (m.as_str().to_string(), Some(m), s),
            None => (stem, None, default_seed),
        };
        runs.push(Run {
            label,
            mode,
            seed,
            path,
            model,
            theta,
        });
    }
    let rank = |r: &Run| r.mode.map_or(TrainMode::ALL.len(), |m| TrainMode::ALL.iter().position(|&x| x == m).unwrap());
    runs.sort_by(|a, b| (rank(a), &a.label, a.seed).cmp(&(rank(b), &b.label, b.seed)));
    Ok(runs)
}

/// The three per-regime datasets of `split`, as training pools.
pub fn load_pools(data_dir: &Path, split: Split) -> anyhow::Result<(RegimePools<LabeledBatch>, [PathBuf; 3])> {
    let paths = Regime::ALL.map(|r| data_dir.join(dataset_file(r, split)));
    let mut batches = Vec::with_capacity(3);
    for (r, p) in Regime::ALL.iter().zip(&paths) {
        let d = read_dataset(p)?;
        if d.regime != Some(*r) || d.split != split {
            bail!("{}: header says {:?}/{}, expected {r}/{split}", p.display(), d.regime, d.split);
        }
        batches.push(LabeledBatch::from_studies(&d.studies));
    }
    let batches: [LabeledBatch; 3] = batches.try_into().map_err(|_| anyhow::anyhow!("three regimes"))?;
    Ok((RegimePools(batches), paths))
}

pub(crate) fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}
