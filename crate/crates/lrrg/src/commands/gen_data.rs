use std::collections::BTreeMap;

use anyhow::{bail, Context};
use lrrg_core::synth::{build_regime_datasets, RegimeDataset, SplitManifest};
use lrrg_core::{Regime, Split};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset_file::{read_dataset, write_dataset};
use crate::fsutil::atomic_write;
use crate::manifest::ManifestBuilder;
use crate::paths::{dataset_file, AUX_DATASET, RUN_MANIFEST, SPLIT_MANIFEST};

/// JSON form of [`SplitManifest`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifestFile {
    pub seed: u64,
    /// `regime → split → studies`.
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub aux_count: usize,
    pub train_patients: Vec<u32>,
    pub val_patients: Vec<u32>,
    pub test_patients: Vec<u32>,
}

impl From<&SplitManifest> for SplitManifestFile {
    fn from(m: &SplitManifest) -> SplitManifestFile {
        let counts = Regime::ALL
            .iter()
            .map(|r| {
                let per = Split::ALL
                    .iter()
                    .map(|s| (s.short_name().to_string(), m.counts[r.index()][s.index()]))
                    .collect();
                (r.short_name().to_string(), per)
            })
            .collect();
        SplitManifestFile {
            seed: m.seed,
            counts,
            aux_count: m.aux_count,
            train_patients: m.train_patients.iter().copied().collect(),
            val_patients: m.val_patients.iter().copied().collect(),
            test_patients: m.test_patients.iter().copied().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenDataSummary {
    pub files: Vec<std::path::PathBuf>,
    pub studies: usize,
}

pub fn gen_data(config: &RunConfig) -> anyhow::Result<GenDataSummary> {
    let mut manifest = ManifestBuilder::new("gen-data", config.echo());
    let dir = config.data_dir();
    let corpus = build_regime_datasets(&config.dataset, config.seed).context("cannot build the regime datasets")?;
    if !corpus.manifest.is_disjoint() {
        bail!("internal error: patient sets overlap");
    }

    let mut written: Vec<(std::path::PathBuf, &RegimeDataset)> = Vec::new();
    for r in Regime::ALL {
        for s in Split::ALL {
            written.push((dir.join(dataset_file(r, s)), corpus.get(r, s)));
        }
    }
    written.push((dir.join(AUX_DATASET), &corpus.aux));
    let mut studies = 0;
    for (path, d) in &written {
        write_dataset(path, d)?;
        let back = read_dataset(path)?;
        if &back != *d {
            bail!("{}: re-read differs from what was written", path.display());
        }
        studies += d.len();
        manifest.artifact(path);
    }
    for r in Regime::ALL {
        for s in Split::ALL {
            let want = match s {
                Split::Train => config.dataset.counts[r.index()].train,
                Split::Val => config.dataset.counts[r.index()].val,
                Split::Test => config.dataset.counts[r.index()].test,
            };
            if corpus.get(r, s).len() != want {
                bail!("{r}/{s}: produced {} studies, requested {want}", corpus.get(r, s).len());
            }
        }
    }

    let split_path = dir.join(SPLIT_MANIFEST);
    let mut json = serde_json::to_vec_pretty(&SplitManifestFile::from(&corpus.manifest))?;
    json.push(b'\n');
    atomic_write(&split_path, &json)?;
    manifest.artifact(&split_path);

    let files = manifest.artifacts().to_vec();
    manifest.finish(&dir.join(RUN_MANIFEST))?;
    Ok(GenDataSummary { files, studies })
}
