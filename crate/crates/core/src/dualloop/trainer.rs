use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::model::{Batch, Gather, Objective};
use super::partition::{sample_partition, RegimeBatches, RegimePartition, RegimePools};
use crate::autodiff::{axpy, dot, norm, AdError, FlatVector, GradVector, ParamVector, Result};
use crate::rng::{seeded, streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TrainMode {
    /// Pooled risk minimization; the partition only feeds the diagnostics.
    #[cfg_attr(feature = "serde", serde(rename = "ERM"))]
    Erm,
    /// Query gradient taken at the adapted parameters, applied at θ.
    #[cfg_attr(feature = "serde", serde(rename = "DTS_FirstOrder"))]
    DtsFirstOrder,
    /// Expanded objective `L(Q;θ) − λ⟨g_Q, g_S⟩` with `g_S` held constant.
    #[cfg_attr(feature = "serde", serde(rename = "DTS_CoherencePenalty"))]
    DtsCoherencePenalty,
    /// Full meta-gradient `(I − αH_S)·g_Q(θ̃)` with a finite-difference HVP.
    #[cfg_attr(feature = "serde", serde(rename = "DTS_ExactFD"))]
    DtsExactFd,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::Erm,
        TrainMode::DtsFirstOrder,
        TrainMode::DtsCoherencePenalty,
        TrainMode::DtsExactFd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Erm => "ERM",
            TrainMode::DtsFirstOrder => "DTS_FirstOrder",
            TrainMode::DtsCoherencePenalty => "DTS_CoherencePenalty",
            TrainMode::DtsExactFd => "DTS_ExactFD",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = TrainError;

    fn from_str(s: &str) -> core::result::Result<TrainMode, TrainError> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or(TrainError::Config("unknown training mode"))
    }
}

/// What to report when a gradient has zero norm and the angle is undefined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ZeroGradPolicy {
    /// Leave the angle and coherence term undefined for that step.
    #[default]
    SkipCoherence,
    /// Report cos φ = 0 and a zero coherence term.
    TreatAsZero,
}

impl ZeroGradPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroGradPolicy::SkipCoherence => "SkipCoherence",
            ZeroGradPolicy::TreatAsZero => "TreatAsZero",
        }
    }
}

impl FromStr for ZeroGradPolicy {
    type Err = TrainError;

    fn from_str(s: &str) -> core::result::Result<ZeroGradPolicy, TrainError> {
        [ZeroGradPolicy::SkipCoherence, ZeroGradPolicy::TreatAsZero]
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or(TrainError::Config("unknown zero-gradient policy"))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainerConfig {
    /// Inner (virtual) step size.
    pub alpha: f64,
    /// Outer gradient-descent rate.
    pub outer_lr: f64,
    /// Coherence weight, used only by the penalty mode.
    pub lambda: f64,
    pub mode: TrainMode,
    pub steps: usize,
    /// Rows drawn per regime; ERM draws three times this from the pooled data.
    pub batch_size: usize,
    pub seed: u64,
    pub zero_grad_policy: ZeroGradPolicy,
    /// Step used by the finite-difference Hessian-vector products.
    pub fd_step: f64,
}

impl Default for TrainerConfig {
    fn default() -> TrainerConfig {
        TrainerConfig {
            alpha: 1e-2,
            outer_lr: 5e-2,
            lambda: 1e-2,
            mode: TrainMode::DtsFirstOrder,
            steps: 3000,
            batch_size: 32,
            seed: 0,
            zero_grad_policy: ZeroGradPolicy::SkipCoherence,
            fd_step: 1e-4,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> core::result::Result<(), TrainError> {
        let check = |ok: bool, what| if ok { Ok(()) } else { Err(TrainError::Config(what)) };
        check(self.alpha >= 0.0 && self.alpha.is_finite(), "alpha must be finite and >= 0")?;
        check(self.outer_lr > 0.0 && self.outer_lr.is_finite(), "outer_lr must be finite and > 0")?;
        check(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be finite and >= 0")?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(self.fd_step > 0.0 && self.fd_step.is_finite(), "fd_step must be finite and > 0")
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    Config(&'static str),
    #[error("numeric failure at step {step}: {source}")]
    Numeric { step: usize, source: AdError },
}

/// Per-step support/query gradient geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientStats {
    /// ‖∇L(S;θ)‖.
    pub gs_norm: f64,
    /// ‖∇L(Q;θ)‖, taken at θ rather than at the adapted parameters.
    pub gq_norm: f64,
    /// `None` when a norm is zero under [`ZeroGradPolicy::SkipCoherence`].
    pub cos_phi: Option<f64>,
    /// −α·⟨g_Q, g_S⟩.
    pub coherence_term: Option<f64>,
    /// L(S;θ).
    pub inner_loss: f64,
    /// L(Q;θ̃) for the bi-level modes, L(Q;θ) for ERM.
    pub outer_loss: f64,
}

/// Result of [`coherence`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coherence {
    pub r_cohere: Option<f64>,
    pub cos_phi: Option<f64>,
}

/// `−α⟨g_Q, g_S⟩` and the angle between the gradients.
pub fn coherence(g_q: &GradVector, g_s: &GradVector, alpha: f64, policy: ZeroGradPolicy) -> Result<Coherence> {
    let d = dot(g_q, g_s)?;
    let (nq, ns) = (norm(g_q), norm(g_s));
    if nq == 0.0 || ns == 0.0 {
        return Ok(match policy {
            ZeroGradPolicy::SkipCoherence => Coherence {
                r_cohere: None,
                cos_phi: None,
            },
            ZeroGradPolicy::TreatAsZero => Coherence {
                r_cohere: Some(0.0),
                cos_phi: Some(0.0),
            },
        });
    }
    Ok(Coherence {
        r_cohere: Some(-alpha * d),
        cos_phi: Some((d / (nq * ns)).clamp(-1.0, 1.0)),
    })
}

/// The same term written as `−α‖g_Q‖‖g_S‖cos φ`.
pub fn coherence_polar(gq_norm: f64, gs_norm: f64, cos_phi: f64, alpha: f64) -> f64 {
    -alpha * gq_norm * gs_norm * cos_phi
}

/// θ̃ = θ − α·g_S with the loss and gradient it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerStep {
    pub adapted: ParamVector,
    pub grad: GradVector,
    pub loss: f64,
}

pub fn inner_adapt<O: Objective>(objective: &O, theta: &ParamVector, support: &O::Batch, alpha: f64) -> Result<InnerStep> {
    let (loss, grad) = objective.loss_and_grad(theta, support)?;
    let adapted = axpy(-alpha, &grad, theta)?;
    Ok(InnerStep { adapted, grad, loss })
}

fn stats(
    g_q: &GradVector,
    g_s: &GradVector,
    alpha: f64,
    policy: ZeroGradPolicy,
    inner_loss: f64,
    outer_loss: f64,
) -> Result<GradientStats> {
    let c = coherence(g_q, g_s, alpha, policy)?;
    Ok(GradientStats {
        gs_norm: norm(g_s),
        gq_norm: norm(g_q),
        cos_phi: c.cos_phi,
        coherence_term: c.r_cohere,
        inner_loss,
        outer_loss,
    })
}

/// L(Q; θ − α∇L(S;θ)) with diagnostics.
pub fn outer_objective<O: Objective>(
    objective: &O,
    theta: &ParamVector,
    partition: RegimePartition,
    batches: &RegimeBatches<O::Batch>,
    alpha: f64,
    policy: ZeroGradPolicy,
) -> Result<(f64, GradientStats)> {
    let support = batches.assemble(partition.support())?;
    let query = batches.assemble(partition.query())?;
    let inner = inner_adapt(objective, theta, &support, alpha)?;
    let (_, g_q) = objective.loss_and_grad(theta, &query)?;
    let outer = objective.loss(&inner.adapted, &query)?;
    let s = stats(&g_q, &inner.grad, alpha, policy, inner.loss, outer)?;
    Ok((outer, s))
}

/// First-order expansion `L(Q;θ) − α⟨g_Q, g_S⟩` of [`outer_objective`].
pub fn taylor_objective<O: Objective>(
    objective: &O,
    theta: &ParamVector,
    partition: RegimePartition,
    batches: &RegimeBatches<O::Batch>,
    alpha: f64,
) -> Result<f64> {
    let support = batches.assemble(partition.support())?;
    let query = batches.assemble(partition.query())?;
    let g_s = objective.grad(theta, &support)?;
    let (l_q, g_q) = objective.loss_and_grad(theta, &query)?;
    Ok(l_q - alpha * dot(&g_q, &g_s)?)
}

/// Central-difference Hessian-vector product of the function whose gradient
/// is `grad`. The probe runs along `v/‖v‖` and is rescaled by ‖v‖ so `h`
/// keeps its meaning for any magnitude of `v`.
pub fn hvp_fd<F>(mut grad: F, theta: &ParamVector, v: &GradVector, h: f64) -> Result<GradVector>
where
    F: FnMut(&ParamVector) -> Result<GradVector>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let n = norm(v);
    if n == 0.0 {
        return Ok(GradVector::zeros(theta.layout().clone()));
    }
    let plus = axpy(h / n, v, theta)?;
    let minus = axpy(-h / n, v, theta)?;
    let gp = grad(&plus)?;
    let gm = grad(&minus)?;
    let diff = axpy(-1.0, &gm, &gp)?;
    let values = diff.values().iter().map(|d| d * n / (2.0 * h)).collect();
    Ok(GradVector::from_parts(theta.layout().clone(), values))
}

/// The vector the outer step descends along, per `config.mode`.
pub fn update_direction<O: Objective>(
    objective: &O,
    theta: &ParamVector,
    partition: RegimePartition,
    batches: &RegimeBatches<O::Batch>,
    config: &TrainerConfig,
) -> Result<(GradVector, GradientStats)> {
    let support = batches.assemble(partition.support())?;
    let query = batches.assemble(partition.query())?;
    let (alpha, policy) = (config.alpha, config.zero_grad_policy);

    if config.mode == TrainMode::Erm {
        // Pooled mean gradient, recovered from the two sides weighted by row
        // count. An empty side contributes zero loss and a zero gradient.
        let zero = || (0.0, GradVector::zeros(theta.layout().clone()));
        let side = |b: &O::Batch| if b.is_empty() { Ok(zero()) } else { objective.loss_and_grad(theta, b) };
        let (l_s, g_s) = side(&support)?;
        let (l_q, g_q) = side(&query)?;
        let (n_s, n_q) = (support.len() as f64, query.len() as f64);
        if n_s + n_q == 0.0 {
            return Err(AdError::Empty("pooled batch"));
        }
        let scaled: Vec<f64> = g_s.values().iter().zip(g_q.values()).map(|(s, q)| (n_s * s + n_q * q) / (n_s + n_q)).collect();
        let update = GradVector::from_parts(theta.layout().clone(), scaled);
        return Ok((update, stats(&g_q, &g_s, alpha, policy, l_s, l_q)?));
    }

    let inner = inner_adapt(objective, theta, &support, alpha)?;
    let (_, g_q) = objective.loss_and_grad(theta, &query)?;
    let (update, outer) = match config.mode {
        TrainMode::Erm => unreachable!(),
        TrainMode::DtsFirstOrder => {
            let (outer, g) = objective.loss_and_grad(&inner.adapted, &query)?;
            (g, outer)
        }
        TrainMode::DtsCoherencePenalty => {
            let outer = objective.loss(&inner.adapted, &query)?;
            let hv = hvp_fd(|t| objective.grad(t, &query), theta, &inner.grad, config.fd_step)?;
            (axpy(-config.lambda, &hv, &g_q)?, outer)
        }
        TrainMode::DtsExactFd => {
            let (outer, g_tilde) = objective.loss_and_grad(&inner.adapted, &query)?;
            let hv = hvp_fd(|t| objective.grad(t, &support), theta, &g_tilde, config.fd_step)?;
            (axpy(-alpha, &hv, &g_tilde)?, outer)
        }
    };
    Ok((update, stats(&g_q, &inner.grad, alpha, policy, inner.loss, outer)?))
}

/// One outer gradient-descent update.
pub fn train_step<O: Objective>(
    objective: &O,
    theta: &ParamVector,
    partition: RegimePartition,
    batches: &RegimeBatches<O::Batch>,
    config: &TrainerConfig,
) -> Result<(ParamVector, GradientStats)> {
    let (update, stats) = update_direction(objective, theta, partition, batches, config)?;
    let next = axpy(-config.outer_lr, &update, theta)?;
    if !next.is_finite() {
        return Err(AdError::NonFinite("parameter update"));
    }
    Ok((next, stats))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub mode: TrainMode,
    pub partition: RegimePartition,
    pub stats: GradientStats,
    /// ‖θ‖ after the update.
    pub param_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub config: TrainerConfig,
    pub records: Vec<StepRecord>,
    pub final_params: ParamVector,
}

/// A run that stopped early; `partial` ends at the last good parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainFailure {
    pub error: TrainError,
    pub partial: TrainLog,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} steps completed)", self.error, self.partial.records.len())
    }
}

impl core::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs `config.steps` rounds of partition sampling, batch drawing and
/// [`train_step`]. Bi-level modes draw `batch_size` rows per regime; ERM
/// draws `3·batch_size` rows from the pooled data.
pub fn train<O>(
    objective: &O,
    theta0: ParamVector,
    pools: &RegimePools<O::Batch>,
    config: &TrainerConfig,
) -> core::result::Result<TrainLog, TrainFailure>
where
    O: Objective,
    O::Batch: Gather,
{
    train_observed(objective, theta0, pools, config, |_, _| {})
}

/// [`train`] that hands every completed step and its updated parameters to
/// `observe`.
pub fn train_observed<O>(
    objective: &O,
    theta0: ParamVector,
    pools: &RegimePools<O::Batch>,
    config: &TrainerConfig,
    mut observe: impl FnMut(&StepRecord, &ParamVector),
) -> core::result::Result<TrainLog, TrainFailure>
where
    O: Objective,
    O::Batch: Gather,
{
    let mut log = TrainLog {
        config: config.clone(),
        records: Vec::with_capacity(config.steps),
        final_params: theta0,
    };
    if let Err(error) = config.validate() {
        return Err(TrainFailure { error, partial: log });
    }
    let mut rng = seeded(config.seed, streams::TRAIN);
    for step in 0..config.steps {
        let partition = sample_partition(&mut rng);
        let drawn = match config.mode {
            TrainMode::Erm => pools.pooled(3 * config.batch_size, &mut rng),
            _ => pools.balanced(config.batch_size, &mut rng),
        };
        let outcome = drawn.and_then(|b| train_step(objective, &log.final_params, partition, &b, config));
        match outcome {
            Ok((next, stats)) => {
                log.records.push(StepRecord {
                    step,
                    mode: config.mode,
                    partition,
                    stats,
                    param_norm: norm(&next),
                });
                observe(&log.records[step], &next);
                log.final_params = next;
            }
            Err(source) => {
                return Err(TrainFailure {
                    error: TrainError::Numeric { step, source },
                    partial: log,
                })
            }
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::cosine;
    use crate::domain::Regime;
    use crate::dualloop::{LabeledBatch, Mlp, RegimeSet};
    use crate::rng::seeded;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    /// Rows of `½Σ a_i θ_i² + Σ b_i θ_i`; the loss is the row mean.
    #[derive(Clone, Debug)]
    struct Quad(Vec<(Vec<f64>, Vec<f64>)>);

    impl Batch for Quad {
        fn len(&self) -> usize {
            self.0.len()
        }

        fn concat(parts: &[&Quad]) -> Result<Quad> {
            if parts.is_empty() {
                return Err(AdError::Empty("concat"));
            }
            Ok(Quad(parts.iter().flat_map(|p| p.0.iter().cloned()).collect()))
        }
    }

    struct QuadObjective;

    impl Objective for QuadObjective {
        type Batch = Quad;

        fn loss(&self, theta: &ParamVector, batch: &Quad) -> Result<f64> {
            Ok(self.loss_and_grad(theta, batch)?.0)
        }

        fn loss_and_grad(&self, theta: &ParamVector, batch: &Quad) -> Result<(f64, GradVector)> {
            if batch.0.is_empty() {
                return Err(AdError::Empty("loss"));
            }
            let t = theta.values();
            let n = batch.0.len() as f64;
            let mut loss = 0.0;
            let mut g = vec![0.0; t.len()];
            for (a, b) in &batch.0 {
                for i in 0..t.len() {
                    loss += 0.5 * a[i] * t[i] * t[i] + b[i] * t[i];
                    g[i] += a[i] * t[i] + b[i];
                }
            }
            let g = g.into_iter().map(|x| x / n).collect();
            Ok((loss / n, GradVector::from_parts(theta.layout().clone(), g)))
        }
    }

    fn iso(dim: usize) -> Quad {
        Quad(vec![(vec![1.0; dim], vec![0.0; dim])])
    }

    fn linear(b: Vec<f64>) -> Quad {
        Quad(vec![(vec![0.0; b.len()], b)])
    }

    fn same(b: Quad) -> RegimeBatches<Quad> {
        RegimeBatches([b.clone(), b.clone(), b])
    }

    fn part(support: &[Regime]) -> RegimePartition {
        RegimePartition::with_support(RegimeSet::new(support)).unwrap()
    }

    fn random_labeled(rng: &mut crate::rng::Rng, rows: usize, dim: usize, outputs: usize) -> LabeledBatch {
        let f = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = (0..rows * outputs).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        LabeledBatch::new(dim, outputs, f, t).unwrap()
    }

    fn labeled_batches(rng: &mut crate::rng::Rng, rows: usize, dim: usize, outputs: usize) -> RegimeBatches<LabeledBatch> {
        let a = random_labeled(rng, rows, dim, outputs);
        let b = random_labeled(rng, rows, dim, outputs);
        let c = random_labeled(rng, rows, dim, outputs);
        RegimeBatches([a, b, c])
    }

    #[test]
    fn inner_adapt_cases() {
        let theta = ParamVector::from_vec("t", vec![2.0]);
        let step = inner_adapt(&QuadObjective, &theta, &iso(1), 0.1).unwrap();
        assert!((step.adapted.values()[0] - 1.8).abs() < 1e-15);
        assert_eq!(inner_adapt(&QuadObjective, &theta, &iso(1), 0.0).unwrap().adapted, theta);

        let theta = ParamVector::from_vec("t", vec![0.3, -1.2, 4.0]);
        let b = Quad(vec![(vec![1.0, 2.0, 0.5], vec![0.1, 0.0, -1.0])]);
        let s = inner_adapt(&QuadObjective, &theta, &b, 0.05).unwrap();
        let moved = norm(&axpy(-1.0, &theta, &s.adapted).unwrap());
        assert!((moved - 0.05 * norm(&s.grad)).abs() < 1e-12);
    }

    #[test]
    fn outer_objective_closed_forms() {
        let theta = ParamVector::from_vec("t", vec![1.5, -0.5]);
        let l = 0.5 * (1.5f64 * 1.5 + 0.25);
        for alpha in [0.0, 0.1, 0.3] {
            let (v, s) = outer_objective(&QuadObjective, &theta, part(&[Regime::Mild]), &same(iso(2)), alpha, ZeroGradPolicy::SkipCoherence).unwrap();
            assert!((v - (1.0 - alpha) * (1.0 - alpha) * l).abs() < 1e-12);
            assert!((s.cos_phi.unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_zero_outer_objective_is_query_loss() {
        let mut rng = seeded(11, 0);
        let m = Mlp::new(6, Some(4), 2);
        let theta = m.init(&mut rng);
        let b = labeled_batches(&mut rng, 5, 6, 2);
        for p in RegimePartition::ALL {
            let (v, _) = outer_objective(&m, &theta, p, &b, 0.0, ZeroGradPolicy::SkipCoherence).unwrap();
            let q = m.loss(&theta, &b.assemble(p.query()).unwrap()).unwrap();
            assert_eq!(v.to_bits(), q.to_bits());
            assert_eq!(taylor_objective(&m, &theta, p, &b, 0.0).unwrap().to_bits(), q.to_bits());
        }
    }

    #[test]
    fn orthogonal_gradients_leave_taylor_at_query_loss() {
        let theta = ParamVector::from_vec("t", vec![0.7, 0.2]);
        let b = RegimeBatches([linear(vec![1.0, 0.0]), linear(vec![0.0, 3.0]), linear(vec![0.0, 3.0])]);
        let p = part(&[Regime::Standard]);
        let q = QuadObjective.loss(&theta, &b.assemble(p.query()).unwrap()).unwrap();
        assert_eq!(taylor_objective(&QuadObjective, &theta, p, &b, 0.1).unwrap(), q);
    }

    #[test]
    fn coherence_cases() {
        let g = GradVector::from_parts(ParamVector::from_vec("g", vec![0.0; 3]).layout().clone(), vec![1.0, -2.0, 2.0]);
        let neg = GradVector::from_parts(g.layout().clone(), g.values().iter().map(|x| -x).collect());
        let c = coherence(&g, &g, 0.1, ZeroGradPolicy::SkipCoherence).unwrap();
        assert!((c.r_cohere.unwrap() + 0.9).abs() < 1e-15);
        assert_eq!(c.cos_phi, Some(1.0));
        let c = coherence(&neg, &g, 0.1, ZeroGradPolicy::SkipCoherence).unwrap();
        assert_eq!(c.cos_phi, Some(-1.0));
        assert!((c.r_cohere.unwrap() - 0.9).abs() < 1e-15);

        let z = GradVector::zeros(g.layout().clone());
        let skip = coherence(&z, &g, 0.1, ZeroGradPolicy::SkipCoherence).unwrap();
        assert_eq!(skip, Coherence { r_cohere: None, cos_phi: None });
        let zero = coherence(&g, &z, 0.1, ZeroGradPolicy::TreatAsZero).unwrap();
        assert_eq!(zero, Coherence { r_cohere: Some(0.0), cos_phi: Some(0.0) });
    }

    #[test]
    fn hvp_closed_form_and_zero_direction() {
        let a = Quad(vec![(vec![1.0, 2.0], vec![0.0, 0.0])]);
        let theta = ParamVector::from_vec("t", vec![0.4, -0.9]);
        let v = ParamVector::from_vec("t", vec![1.0, 1.0]).to_grad();
        let hv = hvp_fd(|t| QuadObjective.grad(t, &a), &theta, &v, 1e-4).unwrap();
        assert!((hv.values()[0] - 1.0).abs() < 1e-6 && (hv.values()[1] - 2.0).abs() < 1e-6);
        let z = GradVector::zeros(theta.layout().clone());
        assert_eq!(hvp_fd(|t| QuadObjective.grad(t, &a), &theta, &z, 1e-4).unwrap(), z);
    }

    #[test]
    fn hvp_is_symmetric_on_smooth_loss() {
        let mut rng = seeded(12, 0);
        let m = Mlp::new(5, None, 2);
        let b = random_labeled(&mut rng, 9, 5, 2);
        for _ in 0..10 {
            let theta = m.init(&mut rng);
            let mut dir = || GradVector::from_parts(theta.layout().clone(), (0..theta.total_dim()).map(|_| rng.random_range(-1.0..1.0)).collect());
            let (v, w) = (dir(), dir());
            let hv = hvp_fd(|t| m.grad(t, &b), &theta, &v, 1e-4).unwrap();
            let hw = hvp_fd(|t| m.grad(t, &b), &theta, &w, 1e-4).unwrap();
            assert!((dot(&hv, &w).unwrap() - dot(&hw, &v).unwrap()).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_outer_rate_keeps_parameters() {
        let mut rng = seeded(13, 0);
        let m = Mlp::new(4, Some(3), 2);
        let theta = m.init(&mut rng);
        let b = labeled_batches(&mut rng, 4, 4, 2);
        for mode in TrainMode::ALL {
            let cfg = TrainerConfig { mode, outer_lr: 0.0, ..TrainerConfig::default() };
            let (next, _) = train_step(&m, &theta, part(&[Regime::Severe]), &b, &cfg).unwrap();
            assert_eq!(next, theta);
        }
    }

    #[test]
    fn first_order_at_alpha_zero_is_query_gradient_step() {
        let mut rng = seeded(14, 0);
        let m = Mlp::new(4, Some(3), 2);
        let theta = m.init(&mut rng);
        let b = labeled_batches(&mut rng, 6, 4, 2);
        let p = part(&[Regime::Standard, Regime::Mild]);
        let cfg = TrainerConfig { alpha: 0.0, mode: TrainMode::DtsFirstOrder, ..TrainerConfig::default() };
        let (next, _) = train_step(&m, &theta, p, &b, &cfg).unwrap();
        let g_q = m.grad(&theta, &b.assemble(p.query()).unwrap()).unwrap();
        assert_eq!(next, axpy(-cfg.outer_lr, &g_q, &theta).unwrap());
    }

    #[test]
    fn erm_and_first_order_agree_when_regimes_coincide() {
        let mut rng = seeded(15, 0);
        let m = Mlp::new(4, Some(3), 2);
        let theta = m.init(&mut rng);
        let one = random_labeled(&mut rng, 6, 4, 2);
        let b = RegimeBatches([one.clone(), one.clone(), one]);
        let p = part(&[Regime::Mild]);
        let erm = TrainerConfig { alpha: 0.0, mode: TrainMode::Erm, ..TrainerConfig::default() };
        let fo = TrainerConfig { mode: TrainMode::DtsFirstOrder, ..erm.clone() };
        let (u_erm, _) = update_direction(&m, &theta, p, &b, &erm).unwrap();
        let (u_fo, _) = update_direction(&m, &theta, p, &b, &fo).unwrap();
        for (x, y) in u_erm.values().iter().zip(u_fo.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_meta_gradient_tracks_first_order_for_small_alpha() {
        let mut rng = seeded(16, 0);
        let m = Mlp::new(8, Some(4), 2);
        assert!(m.param_count() <= 200);
        for _ in 0..5 {
            let theta = m.init(&mut rng);
            let b = labeled_batches(&mut rng, 8, 8, 2);
            let p = crate::dualloop::sample_partition(&mut rng);
            let fo = TrainerConfig { alpha: 1e-3, mode: TrainMode::DtsFirstOrder, ..TrainerConfig::default() };
            let ex = TrainerConfig { mode: TrainMode::DtsExactFd, ..fo.clone() };
            let (a, _) = update_direction(&m, &theta, p, &b, &fo).unwrap();
            let (e, _) = update_direction(&m, &theta, p, &b, &ex).unwrap();
            assert!(cosine(&a, &e).unwrap() >= 0.99);
        }
    }

    #[test]
    fn penalty_with_zero_lambda_is_query_gradient() {
        let mut rng = seeded(17, 0);
        let m = Mlp::new(4, None, 1);
        let theta = m.init(&mut rng);
        let b = labeled_batches(&mut rng, 5, 4, 1);
        let p = part(&[Regime::Standard]);
        let cfg = TrainerConfig { lambda: 0.0, mode: TrainMode::DtsCoherencePenalty, ..TrainerConfig::default() };
        let (u, _) = update_direction(&m, &theta, p, &b, &cfg).unwrap();
        assert_eq!(u, m.grad(&theta, &b.assemble(p.query()).unwrap()).unwrap());
    }

    #[test]
    fn penalty_direction_matches_finite_differences_of_objective() {
        // With g_S frozen at θ0, the penalty objective is L(Q;θ) − λ⟨∇L(Q;θ), g_S⟩.
        let mut rng = seeded(18, 0);
        let m = Mlp::new(3, Some(2), 1);
        let theta = m.init(&mut rng);
        let b = labeled_batches(&mut rng, 6, 3, 1);
        let p = part(&[Regime::Mild, Regime::Severe]);
        let (s, q) = (b.assemble(p.support()).unwrap(), b.assemble(p.query()).unwrap());
        let g_s = m.grad(&theta, &s).unwrap();
        let lambda = 0.3;
        let objective = |t: &ParamVector| -> Result<f64> {
            let (l, g) = m.loss_and_grad(t, &q)?;
            Ok(l - lambda * dot(&g, &g_s)?)
        };
        let fd = crate::autodiff::fd_gradient(objective, &theta, 1e-5).unwrap();
        let cfg = TrainerConfig { lambda, mode: TrainMode::DtsCoherencePenalty, fd_step: 1e-5, ..TrainerConfig::default() };
        let (u, _) = update_direction(&m, &theta, p, &b, &cfg).unwrap();
        for (x, y) in u.values().iter().zip(fd.values()) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    fn tiny_pools(rng: &mut crate::rng::Rng) -> RegimePools<LabeledBatch> {
        RegimePools([random_labeled(rng, 20, 4, 2), random_labeled(rng, 20, 4, 2), random_labeled(rng, 20, 4, 2)])
    }

    #[test]
    fn train_is_deterministic_and_logs_every_step() {
        let mut rng = seeded(19, 0);
        let pools = tiny_pools(&mut rng);
        let m = Mlp::new(4, Some(3), 2);
        let theta = m.init(&mut rng);
        for mode in TrainMode::ALL {
            let cfg = TrainerConfig { mode, steps: 25, batch_size: 4, seed: 5, ..TrainerConfig::default() };
            let a = train(&m, theta.clone(), &pools, &cfg).unwrap();
            let b = train(&m, theta.clone(), &pools, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.records.len(), 25);
            assert!(a.records.iter().enumerate().all(|(i, r)| r.step == i && r.mode == mode));
        }
    }

    #[test]
    fn divergence_keeps_last_good_parameters() {
        let mut rng = seeded(20, 0);
        let pools = tiny_pools(&mut rng);
        let m = Mlp::new(4, Some(3), 2);
        let theta = m.init(&mut rng);
        let cfg = TrainerConfig { outer_lr: 1e300, steps: 10, batch_size: 4, ..TrainerConfig::default() };
        let fail = train(&m, theta, &pools, &cfg).unwrap_err();
        assert!(matches!(fail.error, TrainError::Numeric { .. }));
        assert!(fail.partial.records.len() < 10);
        assert!(fail.partial.final_params.is_finite());
    }

    #[test]
    fn invalid_config_is_rejected() {
        for cfg in [
            TrainerConfig { alpha: -1.0, ..TrainerConfig::default() },
            TrainerConfig { outer_lr: 0.0, ..TrainerConfig::default() },
            TrainerConfig { lambda: f64::NAN, ..TrainerConfig::default() },
            TrainerConfig { batch_size: 0, ..TrainerConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert!(TrainerConfig::default().validate().is_ok());
        assert_eq!("dts_exactfd".parse::<TrainMode>().unwrap(), TrainMode::DtsExactFd);
    }

    #[test]
    fn taylor_remainder_is_second_order() {
        let mut rng = seeded(21, 0);
        let m = Mlp::new(6, Some(5), 2);
        let alphas = [1e-1, 1e-2, 1e-3, 1e-4];
        for _ in 0..5 {
            let theta = m.init(&mut rng);
            let b = labeled_batches(&mut rng, 8, 6, 2);
            let p = crate::dualloop::sample_partition(&mut rng);
            let pts: Vec<(f64, f64)> = alphas
                .iter()
                .map(|&a| {
                    let (o, _) = outer_objective(&m, &theta, p, &b, a, ZeroGradPolicy::SkipCoherence).unwrap();
                    let t = taylor_objective(&m, &theta, p, &b, a).unwrap();
                    (libm::log10(a), libm::log10((o - t).abs()))
                })
                .collect();
            let n = pts.len() as f64;
            let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
            let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
            assert!(slope >= 1.9, "slope {slope}");
        }
    }

    proptest! {
        #[test]
        fn coherence_factorizations_agree(
            q in proptest::collection::vec(-10.0f64..10.0, 10),
            s in proptest::collection::vec(-10.0f64..10.0, 10),
            alpha in 1e-4f64..1.0,
        ) {
            let gq = ParamVector::from_vec("g", q).to_grad();
            let gs = GradVector::from_parts(gq.layout().clone(), s);
            let c = coherence(&gq, &gs, alpha, ZeroGradPolicy::SkipCoherence).unwrap();
            if let (Some(r), Some(cos)) = (c.r_cohere, c.cos_phi) {
                let polar = coherence_polar(norm(&gq), norm(&gs), cos, alpha);
                prop_assert!((r - polar).abs() <= 1e-12 * r.abs().max(alpha * norm(&gq) * norm(&gs)));
                prop_assert!((-1.0..=1.0).contains(&cos));
                prop_assert!(r == 0.0 || r.signum() == -dot(&gq, &gs).unwrap().signum());
            }
        }

        #[test]
        fn taylor_objective_decreases_with_alignment(
            angle_a in 0.0f64..core::f64::consts::PI,
            angle_b in 0.0f64..core::f64::consts::PI,
            nq in 0.1f64..5.0,
            ns in 0.1f64..5.0,
            alpha in 1e-3f64..0.5,
        ) {
            prop_assume!((angle_a - angle_b).abs() > 1e-6);
            let theta = ParamVector::from_vec("t", vec![0.0, 0.0]);
            let value = |angle: f64| {
                let b = RegimeBatches([
                    linear(vec![ns, 0.0]),
                    linear(vec![nq * libm::cos(angle), nq * libm::sin(angle)]),
                    linear(vec![nq * libm::cos(angle), nq * libm::sin(angle)]),
                ]);
                taylor_objective(&QuadObjective, &theta, part(&[Regime::Standard]), &b, alpha).unwrap()
            };
            // Smaller angle = larger cos φ = lower objective.
            let (lo, hi) = if angle_a < angle_b { (angle_a, angle_b) } else { (angle_b, angle_a) };
            prop_assert!(value(lo) < value(hi));
        }
    }
}
