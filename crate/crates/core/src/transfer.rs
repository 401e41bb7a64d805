//! Transfer to a new task: freeze the pretrained representation and run
//! LinUCB on a target whose mean reward is a bounded mixture of the
//! training tasks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bandit::{BanditInstance, ContextSampler, GfucbOutcome, Noise, RegretTrace, StepRecord};
use crate::beta::linucb_radius;
use crate::error::{CoreError, Result};
use crate::function_class::{FeatureClass, MultiheadFunction, SharedFeature};
use crate::linalg::{dot, SpdSolver};

/// Tolerance on the mixture's ℓ₁ bound.
const MIXTURE_TOL: f64 = 1e-12;

/// The representation selected by pretraining together with its heads.
#[derive(Clone)]
pub struct FrozenRepresentation<X> {
    pub phi_index: usize,
    pub phi: SharedFeature<X>,
    pub heads: DMatrix<f64>,
}

/// The final ERM's feature map and head matrix.
pub fn extract_representation<X>(outcome: &GfucbOutcome<X>, class: &FeatureClass<X>) -> Result<FrozenRepresentation<X>> {
    let center = &outcome.center;
    if center.phi_index >= class.len() {
        return Err(CoreError::Dimension(format!(
            "center index {} out of range for {} members",
            center.phi_index,
            class.len()
        )));
    }
    Ok(FrozenRepresentation {
        phi_index: center.phi_index,
        phi: class.member(center.phi_index).clone(),
        heads: center.heads.clone(),
    })
}

/// A new task with mean reward `clamp(Σ λ_i f⁽ⁱ⁾(x), −1, 1)`, drawing
/// contexts from the training distribution.
#[derive(Clone)]
pub struct TransferTask<X> {
    pub frozen_phi: SharedFeature<X>,
    pub mixture: Vec<f64>,
    pub bound: f64,
    class: FeatureClass<X>,
    truth: MultiheadFunction,
    pub contexts: Arc<dyn ContextSampler<X>>,
    pub noise: Noise,
}

impl<X> TransferTask<X> {
    /// Index used for the target's noise and context streams.
    pub fn stream_task(&self) -> usize {
        self.mixture.len()
    }

    pub fn target_mean(&self, x: &X) -> f64 {
        let mix: f64 = self.mixture.iter().enumerate().map(|(i, l)| l * self.truth.predict(&self.class, i, x)).sum();
        mix.clamp(-1.0, 1.0)
    }

    /// `Σ λ_i f̂⁽ⁱ⁾(x)` for a pretrained multihead predictor on the source class.
    pub fn mixture_prediction(&self, fitted: &MultiheadFunction, x: &X) -> f64 {
        self.mixture.iter().enumerate().map(|(i, l)| l * fitted.predict(&self.class, i, x)).sum()
    }

    /// `max_x |Σ λ_i f̂⁽ⁱ⁾(x) − f⁽ᴹ⁺¹⁾(x)|` over `inputs`.
    pub fn mixture_sup_error(&self, fitted: &MultiheadFunction, inputs: &[X]) -> Result<f64> {
        fitted.validate_against(&self.class, self.mixture.len())?;
        Ok(inputs.iter().map(|x| (self.mixture_prediction(fitted, x) - self.target_mean(x)).abs()).fold(0.0, f64::max))
    }
}

/// Builds the target task for `mixture`, with `Σ|λ_i| ≤ bound`.
pub fn synthesize_target_task<X>(
    inst: &BanditInstance<X>,
    frozen_phi: SharedFeature<X>,
    mixture: &[f64],
    bound: f64,
) -> Result<TransferTask<X>> {
    if mixture.len() != inst.tasks() {
        return Err(CoreError::Dimension(format!(
            "mixture has {} weights for {} tasks",
            mixture.len(),
            inst.tasks()
        )));
    }
    if !(bound >= 0.0) || mixture.iter().any(|l| !l.is_finite()) {
        return Err(CoreError::Parameter("mixture weights and bound must be finite".into()));
    }
    let l1: f64 = mixture.iter().map(|l| l.abs()).sum();
    if l1 > bound + MIXTURE_TOL {
        return Err(CoreError::Parameter(format!("mixture ℓ₁ norm {l1} exceeds bound {bound}")));
    }
    if frozen_phi.dim() != inst.class.dim() {
        return Err(CoreError::Dimension("frozen representation dimension differs from the class's".into()));
    }
    Ok(TransferTask {
        frozen_phi,
        mixture: mixture.to_vec(),
        bound,
        class: inst.class.clone(),
        truth: inst.truth.clone(),
        contexts: inst.contexts.clone(),
        noise: inst.noise,
    })
}

/// Ridge-regression state `V = λI + Σ φφᵀ`, `b = Σ φ R`.
#[derive(Debug, Clone)]
pub struct LinUcbState {
    pub v: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lambda_reg: f64,
    pub steps: usize,
    solver: SpdSolver,
}

impl LinUcbState {
    pub fn new(k: usize, lambda_reg: f64) -> Result<Self> {
        if !(lambda_reg > 0.0) {
            return Err(CoreError::Parameter(format!("lambda must be positive, got {lambda_reg}")));
        }
        let v = DMatrix::identity(k, k) * lambda_reg;
        let solver = SpdSolver::new(&v)?;
        Ok(Self { v, b: DVector::zeros(k), lambda_reg, steps: 0, solver })
    }

    /// Rebuilds the state from scratch.
    pub fn from_samples(k: usize, lambda_reg: f64, samples: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut v = DMatrix::identity(k, k) * lambda_reg;
        let mut b = DVector::zeros(k);
        for (q, r) in samples {
            let q = DVector::from_column_slice(q);
            v += &q * q.transpose();
            b += &q * *r;
        }
        let solver = SpdSolver::new(&v)?;
        Ok(Self { v, b, lambda_reg, steps: samples.len(), solver })
    }

    /// Rank-one update with one observation.
    pub fn update(&mut self, q: &[f64], reward: f64) -> Result<()> {
        let col = DVector::from_column_slice(q);
        self.v.ger(1.0, &col, &col, 1.0);
        self.b.axpy(reward, &col, 1.0);
        self.solver = SpdSolver::new(&self.v)?;
        self.steps += 1;
        Ok(())
    }

    pub fn theta(&self) -> Vec<f64> {
        self.solver.solve(self.b.as_slice())
    }

    /// `√(φᵀV⁻¹φ)`.
    pub fn bonus(&self, q: &[f64]) -> f64 {
        self.solver.inv_quad(q).max(0.0).sqrt()
    }
}

/// LinUCB settings of the transfer phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinUcbConfig {
    pub lambda_reg: f64,
    pub delta: f64,
    /// Multiplier on the confidence radius; 1 is the theory radius.
    pub bonus_scale: f64,
}

impl Default for LinUcbConfig {
    fn default() -> Self {
        Self { lambda_reg: 1.0, delta: 0.1, bonus_scale: 1.0 }
    }
}

/// Runs LinUCB for `steps` rounds on the frozen representation. Round 1
/// plays the first action; afterwards the radius uses the number of
/// observations so far. Ties go to the lowest index. The trace's `beta`
/// is the scaled radius actually used.
pub fn linucb_transfer_run<X>(
    task: &TransferTask<X>,
    steps: usize,
    cfg: &LinUcbConfig,
    seed: u64,
) -> Result<RegretTrace> {
    if steps == 0 {
        return Err(CoreError::Parameter("need at least one step".into()));
    }
    if !(cfg.bonus_scale >= 0.0) || !cfg.bonus_scale.is_finite() {
        return Err(CoreError::Parameter(format!("bonus scale must be finite and nonnegative, got {}", cfg.bonus_scale)));
    }
    let LinUcbConfig { lambda_reg, delta, bonus_scale } = *cfg;
    let k = task.frozen_phi.dim();
    let mut state = LinUcbState::new(k, lambda_reg)?;
    linucb_radius(lambda_reg, k, delta, 0)?;
    let stream_task = task.stream_task();
    let mut trace = RegretTrace::new(1);
    for t in 1..=steps {
        let actions = task.contexts.actions(seed, stream_task, t)?;
        if actions.is_empty() {
            return Err(CoreError::Parameter(format!("round {t} has no actions")));
        }
        let beta = bonus_scale * linucb_radius(lambda_reg, k, delta, state.steps)?;
        let features: Vec<Vec<f64>> = actions.iter().map(|x| task.frozen_phi.eval(x)).collect();
        let choice = if t == 1 {
            0
        } else {
            let theta = state.theta();
            let mut best = (0, f64::NEG_INFINITY);
            for (a, q) in features.iter().enumerate() {
                let ucb = dot(&theta, q) + beta * state.bonus(q);
                if ucb > best.1 {
                    best = (a, ucb);
                }
            }
            best.0
        };
        let means: Vec<f64> = actions.iter().map(|x| task.target_mean(x)).collect();
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let reward = means[choice] + task.noise.draw(seed, stream_task, t as u64);
        state.update(&features[choice], reward)?;
        trace.push(StepRecord {
            t,
            task: 0,
            action: choice,
            reward,
            inst_regret: best - means[choice],
            cum_regret: 0.0,
            beta,
            width: None,
            contained: None,
            regret_bound: None,
        });
    }
    Ok(trace)
}
