//! Multitask episodic MDPs with shared state-action representations,
//! backward least-squares value iteration with per-level confidence sets,
//! and an inherent-Bellman-error estimator.

mod envs;
mod lsvi;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::bandit::{BanditInstance, ContextSampler, Noise};
use crate::error::{CoreError, Result};
use crate::function_class::{FeatureClass, MultiheadFunction};
use crate::rng::{stream, Purpose};

pub use envs::{make_grid_maze, make_random_linear_mdp, MazeLayout, GRID_SIDE, MAZE_HORIZON};
pub use lsvi::{
    ibe_estimate, lsvi_fit_level, mtlsvi_run, EpisodeLog, LevelData, MdpConfig, MdpOutcome,
    Transition, TARGET_RANGE,
};

/// Tolerance on transition row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Input of state-action feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateAction {
    pub s: usize,
    pub a: usize,
}

/// Dynamics and mean rewards of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpTask {
    pub initial: Vec<f64>,
    /// `transitions[h][s·A + a]`: next-state distribution.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[h][s·A + a]`: mean reward.
    pub rewards: Vec<Vec<f64>>,
}

/// Exact optimal values of one task: `q[h][s·A + a]`, `v[h][s]`, with
/// `v[H] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone)]
pub struct MdpInstance {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub tasks: Vec<MdpTask>,
    pub class: FeatureClass<StateAction>,
    pub noise: Noise,
    /// Bound `D` on head norms.
    pub head_bound: f64,
    /// Per-task reward heads on the true representation, when rewards are
    /// exactly linear in it.
    pub reward_heads: Option<DMatrix<f64>>,
    optimal: Vec<OptimalValues>,
}

fn sample_categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    // Rounding left u beyond the total mass: take the last supported state.
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

impl MdpInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        states: usize,
        actions: usize,
        horizon: usize,
        tasks: Vec<MdpTask>,
        class: FeatureClass<StateAction>,
        noise: Noise,
        head_bound: f64,
        reward_heads: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 || tasks.is_empty() {
            return Err(CoreError::Construction(
                "need states, actions, a horizon and a task".into(),
            ));
        }
        noise.validate()?;
        if class.true_index().is_none() {
            return Err(CoreError::Construction(
                "environment class needs a true index".into(),
            ));
        }
        let sa = states * actions;
        let check_dist = |p: &[f64], what: &str| -> Result<()> {
            if p.len() != states || p.iter().any(|&w| !(w >= 0.0)) {
                return Err(CoreError::Construction(format!(
                    "{what}: not a distribution over {states} states"
                )));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(CoreError::Construction(format!(
                    "{what}: mass {total} differs from 1"
                )));
            }
            Ok(())
        };
        for (i, task) in tasks.iter().enumerate() {
            check_dist(&task.initial, &format!("task {i} initial"))?;
            if task.transitions.len() != horizon || task.rewards.len() != horizon {
                return Err(CoreError::Construction(format!(
                    "task {i}: need one kernel per level"
                )));
            }
            for h in 0..horizon {
                if task.transitions[h].len() != sa || task.rewards[h].len() != sa {
                    return Err(CoreError::Construction(format!(
                        "task {i}, level {h}: wrong table size"
                    )));
                }
                for (j, row) in task.transitions[h].iter().enumerate() {
                    check_dist(row, &format!("task {i}, level {h}, pair {j}"))?;
                }
                if task.rewards[h].iter().any(|r| !(r.abs() <= 1.0)) {
                    return Err(CoreError::Construction(format!(
                        "task {i}, level {h}: reward outside [-1, 1]"
                    )));
                }
            }
        }
        if let Some(w) = &reward_heads {
            if w.shape() != (class.dim(), tasks.len()) {
                return Err(CoreError::Construction(
                    "reward heads have the wrong shape".into(),
                ));
            }
        }
        let mut inst = Self {
            states,
            actions,
            horizon,
            tasks,
            class,
            noise,
            head_bound,
            reward_heads,
            optimal: Vec::new(),
        };
        inst.optimal = (0..inst.tasks.len())
            .map(|i| inst.value_iteration(i))
            .collect();
        for (i, o) in inst.optimal.iter().enumerate() {
            if o.q.iter().flatten().any(|q| !(q.abs() <= 1.0 + 1e-12)) {
                return Err(CoreError::Construction(format!(
                    "task {i}: optimal values leave [-1, 1]"
                )));
            }
        }
        Ok(inst)
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.actions + a
    }

    fn value_iteration(&self, task: usize) -> OptimalValues {
        let (n_s, n_a, big_h) = (self.states, self.actions, self.horizon);
        let t = &self.tasks[task];
        let mut v = vec![vec![0.0; n_s]; big_h + 1];
        let mut q = vec![vec![0.0; n_s * n_a]; big_h];
        for h in (0..big_h).rev() {
            for s in 0..n_s {
                let mut best = f64::NEG_INFINITY;
                for a in 0..n_a {
                    let j = s * n_a + a;
                    let next: f64 = t.transitions[h][j]
                        .iter()
                        .zip(&v[h + 1])
                        .map(|(p, x)| p * x)
                        .sum();
                    q[h][j] = t.rewards[h][j] + next;
                    best = best.max(q[h][j]);
                }
                v[h][s] = best;
            }
        }
        OptimalValues { q, v }
    }

    pub fn optimal(&self, task: usize) -> &OptimalValues {
        &self.optimal[task]
    }

    /// Initial state of `task` in episode `t`.
    pub fn initial_state(&self, seed: u64, task: usize, t: usize) -> usize {
        let u: f64 = stream(seed, Purpose::Context, task, t as u64).random();
        sample_categorical(&self.tasks[task].initial, u)
    }

    /// Stream slot of level `h` (0-based) in episode `t` (1-based).
    pub fn slot(&self, t: usize, h: usize) -> u64 {
        ((t - 1) * self.horizon + h + 1) as u64
    }

    pub fn next_state(
        &self,
        seed: u64,
        task: usize,
        t: usize,
        h: usize,
        s: usize,
        a: usize,
    ) -> usize {
        let u: f64 = stream(seed, Purpose::Transition, task, self.slot(t, h)).random();
        sample_categorical(&self.tasks[task].transitions[h][self.index(s, a)], u)
    }

    pub fn observed_reward(
        &self,
        seed: u64,
        task: usize,
        t: usize,
        h: usize,
        s: usize,
        a: usize,
    ) -> f64 {
        self.tasks[task].rewards[h][self.index(s, a)] + self.noise.draw(seed, task, self.slot(t, h))
    }

    /// For a one-level instance with linear rewards: the contextual bandit
    /// whose contexts are initial states and whose actions are the MDP's.
    pub fn induced_bandit(&self) -> Result<BanditInstance<StateAction>> {
        if self.horizon != 1 {
            return Err(CoreError::Construction(
                "only one-level instances reduce to bandits".into(),
            ));
        }
        let heads = self.reward_heads.clone().ok_or_else(|| {
            CoreError::Construction("rewards are not linear in the true representation".into())
        })?;
        let truth = MultiheadFunction::new(
            self.class.true_index().expect("checked at construction"),
            heads,
        );
        let contexts = InitialStateContexts {
            initial: self.tasks.iter().map(|t| t.initial.clone()).collect(),
            actions: self.actions,
        };
        BanditInstance::new(self.class.clone(), truth, Arc::new(contexts), self.noise)
    }
}

/// Contexts drawn exactly as initial states of the originating MDP.
struct InitialStateContexts {
    initial: Vec<Vec<f64>>,
    actions: usize,
}

impl ContextSampler<StateAction> for InitialStateContexts {
    fn actions(&self, seed: u64, task: usize, t: usize) -> Result<Vec<StateAction>> {
        let u: f64 = stream(seed, Purpose::Context, task, t as u64).random();
        let s = sample_categorical(&self.initial[task], u);
        Ok((0..self.actions).map(|a| StateAction { s, a }).collect())
    }
}
