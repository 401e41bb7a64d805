//! Multitask contextual bandits: environments, the optimistic learner and
//! an ε-greedy baseline, with exact regret accounting.

mod envs;
mod gfucb;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::function_class::{FeatureClass, MultiheadFunction};
use crate::rng::{stream, Purpose};

pub use envs::{
    make_latent_category_bandit, make_linear_rep_bandit, random_linear_rep_bandit,
    LatentCategoryBandit, LatentCategoryConfig, LatentContexts, PoolContexts,
};
pub use gfucb::{
    eps_greedy_run, gfucb_run, gfucb_train, EpsSchedule, GfucbConfig, GfucbOutcome, LEMMA_TOL,
};

/// Observation noise added to mean rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    Gaussian {
        sigma: f64,
    },
    /// Uniform on `[−half_width, half_width]`.
    Uniform {
        half_width: f64,
    },
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Noise::None => Ok(()),
            Noise::Gaussian { sigma } if (0.0..=1.0).contains(&sigma) => Ok(()),
            Noise::Uniform { half_width } if (0.0..=1.0).contains(&half_width) => Ok(()),
            other => Err(CoreError::Parameter(format!(
                "noise scale must lie in [0, 1]: {other:?}"
            ))),
        }
    }

    /// Noise for `(task, slot)` of the run seeded by `seed`.
    pub fn draw(&self, seed: u64, task: usize, slot: u64) -> f64 {
        match *self {
            Noise::None => 0.0,
            Noise::Gaussian { sigma } => {
                if sigma == 0.0 {
                    return 0.0;
                }
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                normal.sample(&mut stream(seed, Purpose::Noise, task, slot))
            }
            Noise::Uniform { half_width } => {
                if half_width == 0.0 {
                    return 0.0;
                }
                stream(seed, Purpose::Noise, task, slot).random_range(-half_width..=half_width)
            }
        }
    }
}

/// Supplies each task's finite action set at each step.
pub trait ContextSampler<X>: Send + Sync {
    fn actions(&self, seed: u64, task: usize, t: usize) -> Result<Vec<X>>;
}

/// Replays fixed action sets: `rounds[t − 1][task]`. Lets callers drive a
/// run with adversarially chosen contexts.
#[derive(Debug, Clone)]
pub struct ScriptedContexts<X> {
    pub rounds: Vec<Vec<Vec<X>>>,
}

impl<X: Clone + Send + Sync> ContextSampler<X> for ScriptedContexts<X> {
    fn actions(&self, _seed: u64, task: usize, t: usize) -> Result<Vec<X>> {
        self.rounds
            .get(t.wrapping_sub(1))
            .and_then(|r| r.get(task))
            .cloned()
            .ok_or_else(|| {
                CoreError::Data(format!("no scripted context for step {t}, task {task}"))
            })
    }
}

/// A ground-truth multitask bandit environment.
#[derive(Clone)]
pub struct BanditInstance<X> {
    pub class: FeatureClass<X>,
    pub truth: MultiheadFunction,
    pub contexts: Arc<dyn ContextSampler<X>>,
    pub noise: Noise,
}

impl<X> BanditInstance<X> {
    pub fn new(
        class: FeatureClass<X>,
        truth: MultiheadFunction,
        contexts: Arc<dyn ContextSampler<X>>,
        noise: Noise,
    ) -> Result<Self> {
        noise.validate()?;
        let true_index = class.true_index().ok_or_else(|| {
            CoreError::Construction("environment class needs a true index".into())
        })?;
        if truth.phi_index != true_index {
            return Err(CoreError::Construction(
                "truth must use the class's true representation".into(),
            ));
        }
        truth.validate_against(&class, truth.tasks())?;
        let bound = (class.dim() as f64).sqrt();
        for i in 0..truth.tasks() {
            if crate::linalg::norm(truth.head(i)) > bound + 1e-12 {
                return Err(CoreError::Construction(format!("task {i} head exceeds √k")));
            }
        }
        Ok(Self {
            class,
            truth,
            contexts,
            noise,
        })
    }

    pub fn tasks(&self) -> usize {
        self.truth.tasks()
    }

    pub fn mean_reward(&self, task: usize, x: &X) -> f64 {
        self.truth.predict(&self.class, task, x)
    }

    /// Index and value of the best action (lowest index on ties).
    pub fn best_action(&self, task: usize, actions: &[X]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (a, x) in actions.iter().enumerate() {
            let v = self.mean_reward(task, x);
            if v > best.1 {
                best = (a, v);
            }
        }
        best
    }
}

/// One task's outcome at one step (or episode).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub task: usize,
    pub action: usize,
    pub reward: f64,
    pub inst_regret: f64,
    /// Regret summed over all tasks and all records so far.
    pub cum_regret: f64,
    pub beta: f64,
    pub width: Option<f64>,
    pub contained: Option<bool>,
    /// Width matching the selection strategy; bounds the step's regret under
    /// containment.
    pub regret_bound: Option<f64>,
}

/// Per-step regret accounting of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretTrace {
    pub tasks: usize,
    pub records: Vec<StepRecord>,
}

impl RegretTrace {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks,
            records: Vec::new(),
        }
    }

    /// Append a record, filling in the running total.
    pub fn push(&mut self, mut rec: StepRecord) {
        rec.cum_regret = self.total_regret() + rec.inst_regret;
        self.records.push(rec);
    }

    pub fn total_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn steps(&self) -> usize {
        self.records.last().map_or(0, |r| r.t)
    }

    /// Cumulative regret (all tasks) after each step `t = 1..=steps`.
    pub fn cumulative_by_step(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.steps()];
        for r in &self.records {
            out[r.t - 1] = r.cum_regret;
        }
        out
    }

    /// Cumulative regret up to step `t`, averaged over tasks.
    pub fn per_task_average(&self, t: usize) -> f64 {
        let cum = self.cumulative_by_step();
        let idx = t.min(cum.len());
        if idx == 0 {
            return 0.0;
        }
        cum[idx - 1] / self.tasks as f64
    }

    /// `Some(true)` when the truth was in the set at every recorded step.
    pub fn all_contained(&self) -> Option<bool> {
        let mut any = false;
        for r in &self.records {
            match r.contained {
                Some(false) => return Some(false),
                Some(true) => any = true,
                None => {}
            }
        }
        any.then_some(true)
    }
}

/// Least-squares slope of `ln y` against `ln x` over the points with `y > 0`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize, task: usize, regret: f64) -> StepRecord {
        StepRecord {
            t,
            task,
            action: 0,
            reward: 0.0,
            inst_regret: regret,
            cum_regret: 0.0,
            beta: 1.0,
            width: None,
            contained: Some(true),
            regret_bound: None,
        }
    }

    #[test]
    fn trace_totals() {
        let mut tr = RegretTrace::new(2);
        tr.push(record(1, 0, 0.5));
        tr.push(record(1, 1, 0.25));
        tr.push(record(2, 0, 0.0));
        tr.push(record(2, 1, 1.0));
        assert_eq!(tr.cumulative_by_step(), vec![0.75, 1.75]);
        assert_eq!(tr.per_task_average(2), 0.875);
        assert_eq!(tr.all_contained(), Some(true));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..10)
            .map(|i| (i as f64, 3.0 * (i as f64).powf(0.5)))
            .collect();
        assert!((log_log_slope(&pts).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noise_is_deterministic_and_bounded() {
        let u = Noise::Uniform { half_width: 0.2 };
        assert_eq!(u.draw(3, 1, 7), u.draw(3, 1, 7));
        assert!((0..100).all(|s| u.draw(3, 0, s).abs() <= 0.2));
        assert!(Noise::Gaussian { sigma: 2.0 }.validate().is_err());
        assert_eq!(Noise::Gaussian { sigma: 0.0 }.draw(1, 0, 0), 0.0);
    }

    #[test]
    fn scripted_contexts_replay() {
        let s = ScriptedContexts {
            rounds: vec![vec![vec![1.0, 2.0]], vec![vec![3.0]]],
        };
        assert_eq!(s.actions(0, 0, 2).unwrap(), vec![3.0]);
        assert!(s.actions(0, 0, 3).is_err());
        assert!(s.actions(0, 1, 1).is_err());
    }
}
