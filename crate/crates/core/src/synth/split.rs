use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::degrade::{degrade, DegradationGrade};
use super::study::{generate_clean_study, SyntheticStudy};
use super::SynthError;
use crate::domain::{Regime, Split};
use crate::rng::{seeded, streams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RegimeCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl RegimeCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    /// Requested studies per regime, indexed by [`Regime::index`].
    pub counts: [RegimeCounts; 3],
    /// Auxiliary low-quality test studies drawn from held-out Mild and Severe exams.
    pub aux_test: usize,
    /// Size of the synthetic patient population.
    pub patients: usize,
    pub grades: [DegradationGrade; 3],
}

impl Default for DatasetConfig {
    fn default() -> DatasetConfig {
        DatasetConfig {
            counts: [
                RegimeCounts {
                    train: 2000,
                    val: 100,
                    test: 200,
                },
                RegimeCounts {
                    train: 800,
                    val: 50,
                    test: 200,
                },
                RegimeCounts {
                    train: 600,
                    val: 50,
                    test: 200,
                },
            ],
            aux_test: 100,
            patients: 4000,
            grades: Regime::ALL.map(DegradationGrade::default_for),
        }
    }
}

/// Studies of one (regime, split) cell. `regime` is `None` for the mixed
/// auxiliary benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeDataset {
    pub regime: Option<Regime>,
    pub split: Split,
    pub studies: Vec<SyntheticStudy>,
}

impl RegimeDataset {
    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    /// Every study carries the dataset's regime tag (vacuous for mixed sets).
    pub fn is_consistent(&self) -> bool {
        match self.regime {
            Some(r) => self.studies.iter().all(|s| s.regime == r),
            None => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub train_patients: BTreeSet<u32>,
    pub val_patients: BTreeSet<u32>,
    /// Includes the auxiliary benchmark's patients.
    pub test_patients: BTreeSet<u32>,
    /// Study counts, `[regime][split]`.
    pub counts: [[usize; 3]; 3],
    pub aux_count: usize,
    pub seed: u64,
}

impl SplitManifest {
    pub fn is_disjoint(&self) -> bool {
        self.train_patients.is_disjoint(&self.test_patients)
            && self.val_patients.is_disjoint(&self.test_patients)
            && self.train_patients.is_disjoint(&self.val_patients)
    }
}

/// Metadata of one population study before any pixels are synthesized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlannedStudy {
    pub patient_id: u32,
    pub study_id: u32,
    pub regime: Regime,
}

/// Study assignment of a split, without images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    /// `[regime][split]` study lists, sorted by study id.
    pub cells: [[Vec<PlannedStudy>; 3]; 3],
    pub aux: Vec<PlannedStudy>,
    pub manifest: SplitManifest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeCorpus {
    /// `[regime][split]`.
    pub datasets: [[RegimeDataset; 3]; 3],
    pub aux: RegimeDataset,
    pub manifest: SplitManifest,
}

impl RegimeCorpus {
    pub fn get(&self, regime: Regime, split: Split) -> &RegimeDataset {
        &self.datasets[regime.index()][split.index()]
    }
}

fn population<R: Rng + ?Sized>(config: &DatasetConfig, rng: &mut R) -> Vec<PlannedStudy> {
    let aux_share = config.aux_test as f64 / 2.0;
    let mut weights = [0.0; 3];
    for r in Regime::ALL {
        weights[r.index()] = config.counts[r.index()].total() as f64;
    }
    weights[Regime::Mild.index()] += aux_share;
    weights[Regime::Severe.index()] += aux_share;
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        weights = [1.0; 3];
    }
    let total: f64 = weights.iter().sum();

    let mut studies = Vec::new();
    let mut next_study = 0u32;
    for patient in 0..config.patients as u32 {
        let n = rng.random_range(1..=3);
        for _ in 0..n {
            let u = rng.random::<f64>() * total;
            let regime = if u < weights[0] {
                Regime::Standard
            } else if u < weights[0] + weights[1] {
                Regime::Mild
            } else {
                Regime::Severe
            };
            studies.push(PlannedStudy {
                patient_id: patient,
                study_id: next_study,
                regime,
            });
            next_study += 1;
        }
    }
    studies
}

fn draw<R: Rng + ?Sized>(
    pool: &[PlannedStudy],
    excluded_patients: &BTreeSet<u32>,
    taken: &BTreeSet<u32>,
    regimes: &[Regime],
    count: usize,
    what: &'static str,
    rng: &mut R,
) -> Result<Vec<PlannedStudy>, SynthError> {
    let mut candidates: Vec<PlannedStudy> = pool
        .iter()
        .filter(|s| regimes.contains(&s.regime))
        .filter(|s| !excluded_patients.contains(&s.patient_id) && !taken.contains(&s.study_id))
        .copied()
        .collect();
    if candidates.len() < count {
        return Err(SynthError::Capacity {
            what,
            requested: count,
            available: candidates.len(),
        });
    }
    candidates.shuffle(rng);
    candidates.truncate(count);
    candidates.sort_by_key(|s| s.study_id);
    Ok(candidates)
}

/// Assigns population studies to splits: test (and auxiliary) exams are
/// locked down first, every study of a test patient is purged from the
/// remaining pool, then validation and training are drawn from patients
/// that are still clean.
pub fn plan_split(config: &DatasetConfig, seed: u64) -> Result<SplitPlan, SynthError> {
    let mut rng = seeded(seed, streams::SPLIT);
    let pool = population(config, &mut rng);
    let no_patients = BTreeSet::new();
    let mut taken = BTreeSet::new();
    let mut cells: [[Vec<PlannedStudy>; 3]; 3] = Default::default();

    // Lockdown.
    for r in Regime::ALL {
        let picked = draw(&pool, &no_patients, &taken, &[r], config.counts[r.index()].test, "test", &mut rng)?;
        taken.extend(picked.iter().map(|s| s.study_id));
        cells[r.index()][Split::Test.index()] = picked;
    }
    let aux = draw(&pool, &no_patients, &taken, &[Regime::Mild, Regime::Severe], config.aux_test, "aux", &mut rng)?;
    taken.extend(aux.iter().map(|s| s.study_id));

    // Decontamination.
    let mut test_patients: BTreeSet<u32> = cells.iter().flat_map(|c| c[Split::Test.index()].iter()).map(|s| s.patient_id).collect();
    test_patients.extend(aux.iter().map(|s| s.patient_id));

    let mut val_patients = BTreeSet::new();
    for r in Regime::ALL {
        let picked = draw(&pool, &test_patients, &taken, &[r], config.counts[r.index()].val, "val", &mut rng)?;
        taken.extend(picked.iter().map(|s| s.study_id));
        val_patients.extend(picked.iter().map(|s| s.patient_id));
        cells[r.index()][Split::Val.index()] = picked;
    }
    // A validation patient may own several validation studies; their other
    // studies leave the training pool.
    let held_out: BTreeSet<u32> = test_patients.union(&val_patients).copied().collect();
    let mut train_patients = BTreeSet::new();
    for r in Regime::ALL {
        let picked = draw(&pool, &held_out, &taken, &[r], config.counts[r.index()].train, "train", &mut rng)?;
        taken.extend(picked.iter().map(|s| s.study_id));
        train_patients.extend(picked.iter().map(|s| s.patient_id));
        cells[r.index()][Split::Train.index()] = picked;
    }

    let mut counts = [[0; 3]; 3];
    for r in 0..3 {
        for s in 0..3 {
            counts[r][s] = cells[r][s].len();
        }
    }
    let manifest = SplitManifest {
        train_patients,
        val_patients,
        test_patients,
        counts,
        aux_count: aux.len(),
        seed,
    };
    Ok(SplitPlan { cells, aux, manifest })
}

/// Synthesizes one planned study: clean draw, then the regime's degradation.
pub fn synthesize(planned: &PlannedStudy, config: &DatasetConfig, seed: u64) -> SyntheticStudy {
    let mut rng = seeded(seed, streams::STUDY_BASE + u64::from(planned.study_id));
    let clean = generate_clean_study(&mut rng, planned.patient_id, planned.study_id);
    let grade = &config.grades[planned.regime.index()];
    let spec = grade.sample_spec(&mut rng);
    degrade(&clean, &spec, planned.regime, &mut rng)
}

/// Plans the leakage-proof split and synthesizes every selected study.
pub fn build_regime_datasets(config: &DatasetConfig, seed: u64) -> Result<RegimeCorpus, SynthError> {
    let plan = plan_split(config, seed)?;
    let make = |planned: &[PlannedStudy]| planned.iter().map(|p| synthesize(p, config, seed)).collect::<Vec<_>>();
    let datasets = Regime::ALL.map(|r| {
        Split::ALL.map(|s| RegimeDataset {
            regime: Some(r),
            split: s,
            studies: make(&plan.cells[r.index()][s.index()]),
        })
    });
    let aux = RegimeDataset {
        regime: None,
        split: Split::Test,
        studies: make(&plan.aux),
    };
    Ok(RegimeCorpus {
        datasets,
        aux,
        manifest: plan.manifest,
    })
}
