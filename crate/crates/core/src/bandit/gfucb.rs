//! The optimistic multitask learner and the ε-greedy baseline.

use rand::Rng;

use super::{BanditInstance, RegretTrace, StepRecord};
use crate::beta::{bandit_beta_for, Alpha, BetaMode};
use crate::confidence::{ConfidenceSet, Strategy, TieBreak};
use crate::design::{erm_fit_design, Design};
use crate::error::{CoreError, Result};
use crate::function_class::{MultiheadFunction, MultitaskHistory};
use crate::rng::{stream, Purpose};

/// Slack allowed when checking per-step regret against the width bound.
pub const LEMMA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GfucbConfig {
    pub delta: f64,
    pub alpha: Alpha,
    pub ridge: f64,
    pub strategy: Strategy,
    pub beta: BetaMode,
    pub tie_break: TieBreak,
    /// Record width, strategy-matched regret bound and containment per step.
    pub diagnostics: bool,
}

impl Default for GfucbConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            alpha: Alpha::Auto,
            ridge: 1e-6,
            strategy: Strategy::Decoupled,
            beta: BetaMode::Theory,
            tie_break: TieBreak::LowestIndex,
            diagnostics: true,
        }
    }
}

impl GfucbConfig {
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
        if let Alpha::Value(a) = self.alpha {
            if !(a >= 0.0) {
                return Err(CoreError::Parameter(format!(
                    "alpha must be nonnegative, got {a}"
                )));
            }
        }
        self.beta.validate()
    }
}

/// Everything a finished run leaves behind.
pub struct GfucbOutcome<X> {
    pub trace: RegretTrace,
    pub history: MultitaskHistory<X>,
    pub design: Design,
    /// Empirical risk minimizer over the full history.
    pub center: MultiheadFunction,
    /// Radius used at the last step.
    pub beta: f64,
    pub ridge: f64,
}

impl<X> GfucbOutcome<X> {
    /// Confidence set around the final center with the last radius.
    pub fn confidence_set<'a>(
        &'a self,
        inst: &'a BanditInstance<X>,
    ) -> Result<ConfidenceSet<'a, X>> {
        self.confidence_set_with_beta(inst, self.beta)
    }

    pub fn confidence_set_with_beta<'a>(
        &'a self,
        inst: &'a BanditInstance<X>,
        beta: f64,
    ) -> Result<ConfidenceSet<'a, X>> {
        ConfidenceSet::with_design(
            self.center.clone(),
            beta,
            &self.history,
            &inst.class,
            self.ridge,
            &self.design,
        )
    }
}

fn head_bound(k: usize) -> f64 {
    (k as f64).sqrt()
}

/// Runs the optimistic learner for `horizon` steps and keeps its state.
pub fn gfucb_train<X: Clone>(
    inst: &BanditInstance<X>,
    horizon: usize,
    cfg: &GfucbConfig,
    seed: u64,
) -> Result<GfucbOutcome<X>> {
    if horizon == 0 {
        return Err(CoreError::Parameter("horizon must be at least 1".into()));
    }
    cfg.validate()?;
    let class = &inst.class;
    let m = inst.tasks();
    let k = class.dim();
    let log_cover = class.log_cover(cfg.alpha.resolve(k, m, horizon));
    let mut history = MultitaskHistory::new(m);
    let mut design = Design::new(class, m);
    let mut targets: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut trace = RegretTrace::new(m);
    let mut beta = 0.0;

    for t in 1..=horizon {
        let (center, _) = erm_fit_design(&design, &targets, cfg.ridge, head_bound(k), 1.0)?;
        beta = bandit_beta_for(cfg.beta, m, k, t, horizon, log_cover, cfg.alpha, cfg.delta)?;
        let queries: Vec<Vec<X>> = (0..m)
            .map(|i| inst.contexts.actions(seed, i, t))
            .collect::<Result<_>>()?;
        let (selection, width, bound, contained) = {
            let set =
                ConfidenceSet::with_design(center, beta, &history, class, cfg.ridge, &design)?;
            let sel = set.optimistic_select_with(&queries, cfg.strategy, cfg.tie_break)?;
            if cfg.diagnostics {
                let chosen: Vec<X> = sel
                    .actions
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| queries[i][a].clone())
                    .collect();
                let width = set.width(&chosen)?;
                let bound = match cfg.strategy {
                    Strategy::Exact => Some(width),
                    Strategy::Decoupled => Some(set.decoupled_width(&chosen)?),
                    Strategy::Sweep => None,
                };
                (sel, Some(width), bound, Some(set.contains(&inst.truth)?))
            } else {
                (sel, None, None, None)
            }
        };
        for (i, &a) in selection.actions.iter().enumerate() {
            let x = &queries[i][a];
            let mean = inst.mean_reward(i, x);
            let (_, best) = inst.best_action(i, &queries[i]);
            let reward = mean + inst.noise.draw(seed, i, t as u64);
            trace.push(StepRecord {
                t,
                task: i,
                action: a,
                reward,
                inst_regret: best - mean,
                cum_regret: 0.0,
                beta,
                width,
                contained,
                regret_bound: bound,
            });
            design.push(class, i, x);
            history.push(i, x.clone(), reward)?;
            targets[i].push(reward);
        }
    }
    let (center, _) = erm_fit_design(&design, &targets, cfg.ridge, head_bound(k), 1.0)?;
    Ok(GfucbOutcome {
        trace,
        history,
        design,
        center,
        beta,
        ridge: cfg.ridge,
    })
}

pub fn gfucb_run<X: Clone>(
    inst: &BanditInstance<X>,
    horizon: usize,
    cfg: &GfucbConfig,
    seed: u64,
) -> Result<RegretTrace> {
    gfucb_train(inst, horizon, cfg, seed).map(|o| o.trace)
}

/// Exploration probability as a function of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSchedule {
    Constant(f64),
    /// `min(1, c / t)`.
    Inverse(f64),
}

impl EpsSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            EpsSchedule::Constant(e) => e,
            EpsSchedule::Inverse(c) => (c / t as f64).min(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            EpsSchedule::Constant(e) => (0.0..=1.0).contains(&e),
            EpsSchedule::Inverse(c) => c >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::Parameter(format!(
                "invalid exploration schedule {self:?}"
            )))
        }
    }
}

/// Independent per-task learners: fit each task on its own data, act
/// greedily, explore uniformly with probability `ε_t`.
pub fn eps_greedy_run<X: Clone>(
    inst: &BanditInstance<X>,
    horizon: usize,
    schedule: EpsSchedule,
    ridge: f64,
    seed: u64,
) -> Result<RegretTrace> {
    schedule.validate()?;
    if !(ridge > 0.0) {
        return Err(CoreError::Parameter(format!(
            "ridge must be positive, got {ridge}"
        )));
    }
    let class = &inst.class;
    let m = inst.tasks();
    let k = class.dim();
    let mut designs: Vec<Design> = (0..m).map(|_| Design::new(class, 1)).collect();
    let mut targets: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new()]; m];
    let mut trace = RegretTrace::new(m);
    for t in 1..=horizon {
        let eps = schedule.at(t);
        for i in 0..m {
            let actions = inst.contexts.actions(seed, i, t)?;
            let (fit, _) = erm_fit_design(&designs[i], &targets[i], ridge, head_bound(k), 1.0)?;
            let mut rng = stream(seed, Purpose::Explore, i, t as u64);
            let u: f64 = rng.random();
            let random_action = rng.random_range(0..actions.len());
            let a = if u < eps {
                random_action
            } else {
                let mut best = (0, f64::NEG_INFINITY);
                for (j, x) in actions.iter().enumerate() {
                    let v = fit.predict(class, 0, x);
                    if v > best.1 {
                        best = (j, v);
                    }
                }
                best.0
            };
            let x = &actions[a];
            let mean = inst.mean_reward(i, x);
            let (_, best) = inst.best_action(i, &actions);
            let reward = mean + inst.noise.draw(seed, i, t as u64);
            trace.push(StepRecord {
                t,
                task: i,
                action: a,
                reward,
                inst_regret: best - mean,
                cum_regret: 0.0,
                beta: f64::NAN,
                width: None,
                contained: None,
                regret_bound: None,
            });
            designs[i].push(class, 0, x);
            targets[i][0].push(reward);
        }
    }
    Ok(trace)
}
