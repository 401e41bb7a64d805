//! Multitask least-squares value iteration with functional confidence sets,
//! and the inherent-Bellman-error estimator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{MdpInstance, StateAction};
use crate::bandit::{RegretTrace, StepRecord};
use crate::beta::{mdp_beta_for, BetaMode};
use crate::confidence::{ConfidenceSet, Strategy, TieBreak};
use crate::design::{erm_fit_design, Design};
use crate::error::{CoreError, Result};
use crate::function_class::{FeatureClass, MultiheadFunction, MultitaskHistory};
use crate::linalg::norm;
use crate::rng::{stream, Purpose};

/// Regression targets are clamped to this range.
pub const TARGET_RANGE: (f64, f64) = (-1.0, 2.0);

#[derive(Debug, Clone, PartialEq)]
pub struct MdpConfig {
    pub delta: f64,
    pub ridge: f64,
    pub strategy: Strategy,
    pub beta: BetaMode,
    /// Saturated levels make every action's optimistic value equal; acting
    /// greedily on the center among them is the default here.
    pub tie_break: TieBreak,
    /// Inherent Bellman error assumed by the theory radius.
    pub ibe: f64,
}

impl Default for MdpConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            ridge: 1e-6,
            strategy: Strategy::Decoupled,
            beta: BetaMode::Theory,
            tie_break: TieBreak::CenterPrediction,
            ibe: 0.0,
        }
    }
}

impl MdpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(CoreError::Parameter(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        if !(self.ridge > 0.0) {
            return Err(CoreError::Parameter(format!(
                "ridge must be positive, got {}",
                self.ridge
            )));
        }
        if !(self.ibe >= 0.0) {
            return Err(CoreError::Parameter(format!(
                "ibe must be nonnegative, got {}",
                self.ibe
            )));
        }
        self.beta.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub h: usize,
    pub task: usize,
    pub s: usize,
    pub a: usize,
    pub reward: f64,
    pub next: usize,
}

/// One episode: `M·H` transitions and the per-task value gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub transitions: Vec<Transition>,
    /// `Σ_h V*_h(s_h) − Q*_h(s_h, a_h)` along the realized trajectory; its
    /// expectation is `V*_1(s_1) − V^π_1(s_1)`.
    pub value_gaps: Vec<f64>,
}

/// Everything observed at one level: inputs with raw rewards, next states,
/// and the cached design.
pub struct LevelData {
    pub history: MultitaskHistory<StateAction>,
    pub next_states: Vec<Vec<usize>>,
    pub design: Design,
}

impl LevelData {
    pub fn new(class: &FeatureClass<StateAction>, tasks: usize) -> Self {
        Self {
            history: MultitaskHistory::new(tasks),
            next_states: vec![Vec::new(); tasks],
            design: Design::new(class, tasks),
        }
    }

    pub fn push(
        &mut self,
        class: &FeatureClass<StateAction>,
        task: usize,
        x: StateAction,
        reward: f64,
        next: usize,
    ) -> Result<()> {
        self.history.push(task, x, reward)?;
        self.design.push(class, task, &x);
        self.next_states[task].push(next);
        Ok(())
    }
}

/// Fit level `h`: regress `R + V_{h+1}(s′)` (clamped to the target range)
/// on the features of every candidate, heads projected to the `D`-ball, and
/// return the minimal-loss candidate. Without `v_next` the targets are the
/// rewards alone.
pub fn lsvi_fit_level(
    level: &LevelData,
    v_next: Option<&[Vec<f64>]>,
    ridge: f64,
    head_bound: f64,
) -> Result<MultiheadFunction> {
    let m = level.history.tasks();
    let targets: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            level
                .history
                .samples(i)
                .iter()
                .zip(&level.next_states[i])
                .map(|((_, r), &next)| {
                    let v = v_next.map_or(0.0, |v| v[i][next]);
                    (r + v).clamp(TARGET_RANGE.0, TARGET_RANGE.1)
                })
                .collect()
        })
        .collect();
    erm_fit_design(&level.design, &targets, ridge, head_bound, 1.0).map(|(f, _)| f)
}

/// `V(s) = clamp(max_a f(s, a), 0, 1)` per task.
fn state_values(f: &MultiheadFunction, inst: &MdpInstance) -> Vec<Vec<f64>> {
    let phi = inst.class.member(f.phi_index);
    let mut q = vec![0.0; inst.class.dim()];
    (0..f.tasks())
        .map(|i| {
            (0..inst.states)
                .map(|s| {
                    let mut best = f64::NEG_INFINITY;
                    for a in 0..inst.actions {
                        phi.eval_into(&StateAction { s, a }, &mut q);
                        best = best.max(f.clamp(f.linear_from_features(i, &q)));
                    }
                    best.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

pub struct MdpOutcome {
    /// One record per episode and task; `action` is the first-level action,
    /// `reward` the observed return and `inst_regret` the value gap.
    pub trace: RegretTrace,
    pub episodes: Vec<EpisodeLog>,
}

/// Runs `episodes` episodes: a backward pass refits every level from all
/// data so far, then a forward pass acts optimistically at each level.
pub fn mtlsvi_run(
    inst: &MdpInstance,
    episodes: usize,
    cfg: &MdpConfig,
    seed: u64,
) -> Result<MdpOutcome> {
    if episodes == 0 {
        return Err(CoreError::Parameter("need at least one episode".into()));
    }
    cfg.validate()?;
    let class = &inst.class;
    let m = inst.task_count();
    let k = class.dim();
    let big_h = inst.horizon;
    let log_cover = class.log_cover(1.0);
    let mut levels: Vec<LevelData> = (0..big_h).map(|_| LevelData::new(class, m)).collect();
    let mut trace = RegretTrace::new(m);
    let mut logs = Vec::with_capacity(episodes);

    for t in 1..=episodes {
        let mut centers: Vec<Option<MultiheadFunction>> = vec![None; big_h];
        let mut v_next: Option<Vec<Vec<f64>>> = None;
        for h in (0..big_h).rev() {
            let f = lsvi_fit_level(&levels[h], v_next.as_deref(), cfg.ridge, inst.head_bound)?;
            if h > 0 {
                v_next = Some(state_values(&f, inst));
            }
            centers[h] = Some(f);
        }
        let beta = mdp_beta_for(cfg.beta, m, k, t, episodes, log_cover, cfg.delta, cfg.ibe)?;

        let mut states: Vec<usize> = (0..m).map(|i| inst.initial_state(seed, i, t)).collect();
        let mut first_actions = vec![0; m];
        let mut returns = vec![0.0; m];
        let mut gaps = vec![0.0; m];
        let mut transitions = Vec::with_capacity(m * big_h);
        for h in 0..big_h {
            let queries: Vec<Vec<StateAction>> = states
                .iter()
                .map(|&s| (0..inst.actions).map(|a| StateAction { s, a }).collect())
                .collect();
            let center = centers[h].take().expect("fitted in the backward pass");
            let selection = {
                let level = &levels[h];
                let set = ConfidenceSet::with_design(
                    center,
                    beta,
                    &level.history,
                    class,
                    cfg.ridge,
                    &level.design,
                )?;
                set.optimistic_select_with(&queries, cfg.strategy, cfg.tie_break)?
            };
            for (i, &a) in selection.actions.iter().enumerate() {
                let s = states[i];
                let reward = inst.observed_reward(seed, i, t, h, s, a);
                let next = inst.next_state(seed, i, t, h, s, a);
                let opt = inst.optimal(i);
                gaps[i] += opt.v[h][s] - opt.q[h][inst.index(s, a)];
                returns[i] += reward;
                if h == 0 {
                    first_actions[i] = a;
                }
                levels[h].push(class, i, StateAction { s, a }, reward, next)?;
                transitions.push(Transition {
                    h,
                    task: i,
                    s,
                    a,
                    reward,
                    next,
                });
                states[i] = next;
            }
        }
        for i in 0..m {
            trace.push(StepRecord {
                t,
                task: i,
                action: first_actions[i],
                reward: returns[i],
                inst_regret: gaps[i],
                cum_regret: 0.0,
                beta,
                width: None,
                contained: None,
                regret_bound: None,
            });
        }
        logs.push(EpisodeLog {
            transitions,
            value_gaps: gaps,
        });
    }
    Ok(MdpOutcome {
        trace,
        episodes: logs,
    })
}

/// Monte Carlo estimate of the inherent Bellman error of `cls` on `inst`:
/// draw `n_samples` next-level value functions (random member, random heads
/// in the `D`-ball), apply the exact Bellman operator at every level, fit
/// each representation by least squares and keep the best sup-norm
/// residual. Returns the running maximum over samples and levels.
pub fn ibe_estimate(
    inst: &MdpInstance,
    cls: &FeatureClass<StateAction>,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(CoreError::Parameter("need at least one sample".into()));
    }
    if cls.dim() != inst.class.dim() {
        return Err(CoreError::Dimension(
            "class dimension differs from the instance's".into(),
        ));
    }
    let (n_s, n_a) = (inst.states, inst.actions);
    let sa = n_s * n_a;
    let m = inst.task_count();
    let k = cls.dim();
    let features: Vec<DMatrix<f64>> = cls
        .members()
        .iter()
        .map(|phi| {
            let mut mat = DMatrix::zeros(sa, k);
            for s in 0..n_s {
                for a in 0..n_a {
                    let q = phi.eval(&StateAction { s, a });
                    for j in 0..k {
                        mat[(s * n_a + a, j)] = q[j];
                    }
                }
            }
            mat
        })
        .collect();
    let svds: Vec<_> = features.iter().map(|f| f.clone().svd(true, true)).collect();

    // Best sup-norm residual of the Bellman images `targets[i]` within `cls`.
    let best_fit = |targets: &[DVector<f64>]| -> Result<f64> {
        let mut best = f64::INFINITY;
        for (phi, svd) in features.iter().zip(&svds) {
            let mut worst: f64 = 0.0;
            for y in targets {
                let w = svd
                    .solve(y, 1e-12)
                    .map_err(|e| CoreError::Data(e.to_string()))?;
                let resid = phi * w - y;
                worst = worst.max(resid.amax());
            }
            best = best.min(worst);
        }
        Ok(best)
    };

    let mut estimate: f64 = 0.0;
    for j in 0..n_samples {
        let mut rng = stream(seed, Purpose::Sample, 0, j as u64);
        let member = rng.random_range(0..cls.len());
        let mut heads = DMatrix::zeros(k, m);
        for i in 0..m {
            let g: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let scale = inst.head_bound * rng.random::<f64>() / norm(&g).max(f64::MIN_POSITIVE);
            for (r, v) in g.iter().enumerate() {
                heads[(r, i)] = v * scale;
            }
        }
        let q_next = &features[member] * &heads;
        for h in 0..inst.horizon {
            let targets: Vec<DVector<f64>> = (0..m)
                .map(|i| {
                    let task = &inst.tasks[i];
                    let v: Vec<f64> = if h + 1 == inst.horizon {
                        vec![0.0; n_s]
                    } else {
                        (0..n_s)
                            .map(|s| {
                                (0..n_a)
                                    .map(|a| q_next[(s * n_a + a, i)])
                                    .fold(f64::NEG_INFINITY, f64::max)
                                    .clamp(0.0, 1.0)
                            })
                            .collect()
                    };
                    DVector::from_fn(sa, |row, _| {
                        let next: f64 = task.transitions[h][row]
                            .iter()
                            .zip(&v)
                            .map(|(p, x)| p * x)
                            .sum();
                        task.rewards[h][row] + next
                    })
                })
                .collect();
            estimate = estimate.max(best_fit(&targets)?);
        }
    }
    Ok(estimate)
}
