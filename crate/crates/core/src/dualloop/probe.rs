use rand::Rng;

use super::model::{Gather, Objective};
use super::partition::RegimePools;
use super::trainer::{coherence, ZeroGradPolicy};
use crate::autodiff::{ParamVector, Result};
use crate::domain::Regime;

/// Unordered regime pairs in report order.
pub const REGIME_PAIRS: [(Regime, Regime); 3] = [
    (Regime::Standard, Regime::Mild),
    (Regime::Standard, Regime::Severe),
    (Regime::Mild, Regime::Severe),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub batches: usize,
    /// Rows drawn per regime for each resample; `None` uses every row once,
    /// in which case a single evaluation is made regardless of `batches`.
    pub batch_size: Option<usize>,
    pub policy: ZeroGradPolicy,
}

impl Default for ProbeConfig {
    fn default() -> ProbeConfig {
        ProbeConfig {
            batches: 20,
            batch_size: Some(128),
            policy: ZeroGradPolicy::SkipCoherence,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairCoherence {
    pub a: Regime,
    pub b: Regime,
    /// Mean cos φ over the resamples where it was defined.
    pub mean_cos: Option<f64>,
    pub defined: usize,
    pub samples: usize,
}

/// Mean cosine between per-regime gradients at `theta`, for each regime pair.
pub fn coherence_probe<O, R>(
    objective: &O,
    theta: &ParamVector,
    pools: &RegimePools<O::Batch>,
    config: &ProbeConfig,
    rng: &mut R,
) -> Result<[PairCoherence; 3]>
where
    O: Objective,
    O::Batch: Gather,
    R: Rng + ?Sized,
{
    let mut sums = [0.0f64; 3];
    let mut defined = [0usize; 3];
    let rounds = if config.batch_size.is_some() { config.batches } else { 1 };
    for _ in 0..rounds {
        let grads = match config.batch_size {
            Some(n) => {
                let b = pools.balanced(n, rng)?;
                [
                    objective.grad(theta, &b.0[0])?,
                    objective.grad(theta, &b.0[1])?,
                    objective.grad(theta, &b.0[2])?,
                ]
            }
            None => [
                objective.grad(theta, &pools.0[0])?,
                objective.grad(theta, &pools.0[1])?,
                objective.grad(theta, &pools.0[2])?,
            ],
        };
        for (i, (a, b)) in REGIME_PAIRS.iter().enumerate() {
            let c = coherence(&grads[a.index()], &grads[b.index()], 1.0, config.policy)?;
            if let Some(cos) = c.cos_phi {
                sums[i] += cos;
                defined[i] += 1;
            }
        }
    }
    Ok(core::array::from_fn(|i| PairCoherence {
        a: REGIME_PAIRS[i].0,
        b: REGIME_PAIRS[i].1,
        mean_cos: (defined[i] > 0).then(|| sums[i] / defined[i] as f64),
        defined: defined[i],
        samples: rounds,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualloop::{LabeledBatch, Mlp};
    use crate::rng::seeded;

    fn random_pool(rng: &mut crate::rng::Rng, rows: usize, dim: usize) -> LabeledBatch {
        let f = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = (0..rows).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        LabeledBatch::new(dim, 1, f, t).unwrap()
    }

    #[test]
    fn identical_regimes_are_fully_coherent() {
        let mut rng = seeded(1, 0);
        let pool = random_pool(&mut rng, 40, 6);
        let pools = RegimePools([pool.clone(), pool.clone(), pool]);
        let m = Mlp::new(6, Some(4), 1);
        let theta = m.init(&mut rng);
        let cfg = ProbeConfig {
            batch_size: None,
            ..ProbeConfig::default()
        };
        for p in coherence_probe(&m, &theta, &pools, &cfg, &mut rng).unwrap() {
            assert!((p.mean_cos.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_random_labels_are_near_orthogonal() {
        let mut rng = seeded(2, 0);
        let dim = 200;
        let pools = RegimePools([
            random_pool(&mut rng, 64, dim),
            random_pool(&mut rng, 64, dim),
            random_pool(&mut rng, 64, dim),
        ]);
        let m = Mlp::new(dim, None, 1);
        let theta = m.init(&mut rng);
        let cfg = ProbeConfig {
            batch_size: None,
            ..ProbeConfig::default()
        };
        for p in coherence_probe(&m, &theta, &pools, &cfg, &mut rng).unwrap() {
            assert!(p.mean_cos.unwrap().abs() <= 0.3, "{p:?}");
        }
    }

    #[test]
    fn resampled_probe_is_deterministic() {
        let mut rng = seeded(3, 0);
        let pools = RegimePools([random_pool(&mut rng, 30, 5), random_pool(&mut rng, 30, 5), random_pool(&mut rng, 30, 5)]);
        let m = Mlp::new(5, Some(3), 1);
        let theta = m.init(&mut rng);
        let cfg = ProbeConfig {
            batches: 5,
            batch_size: Some(8),
            ..ProbeConfig::default()
        };
        let a = coherence_probe(&m, &theta, &pools, &cfg, &mut seeded(7, 4)).unwrap();
        let b = coherence_probe(&m, &theta, &pools, &cfg, &mut seeded(7, 4)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.samples == 5));
    }
}
