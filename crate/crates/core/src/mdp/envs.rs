//! MDP environment builders: the 4×4 grid maze and random linear MDPs.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

use super::{MdpInstance, MdpTask, StateAction};
use crate::bandit::Noise;
use crate::error::{CoreError, Result};
use crate::function_class::{FeatureClass, FnFeature, MultiheadFunction, SharedFeature};
use crate::rng::{stream, Purpose, StreamRng};

pub const GRID_SIDE: usize = 4;
pub const MAZE_HORIZON: usize = 20;
/// Cost of every move.
pub const STEP_REWARD: f64 = -0.01;
pub const LAVA_REWARD: f64 = -0.1;
/// Bonus for reaching the exit; the move itself also pays the step cost.
pub const EXIT_REWARD: f64 = 1.0;

/// Cells are `(row, column)` with `(0, 0)` top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeLayout {
    pub start: (usize, usize),
    pub exit: (usize, usize),
    pub lava: Vec<(usize, usize)>,
    /// Cells the agent cannot enter.
    pub walls: Vec<(usize, usize)>,
}

const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn cell_index((r, c): (usize, usize)) -> usize {
    r * GRID_SIDE + c
}

impl MazeLayout {
    fn validate(&self) -> Result<()> {
        let cells = std::iter::once(&self.start)
            .chain([&self.exit])
            .chain(&self.lava)
            .chain(&self.walls);
        for &(r, c) in cells {
            if r >= GRID_SIDE || c >= GRID_SIDE {
                return Err(CoreError::Construction(format!(
                    "cell ({r}, {c}) is outside the grid"
                )));
            }
        }
        if self.lava.len() > 2 {
            return Err(CoreError::Construction(
                "at most two lava cells per task".into(),
            ));
        }
        if self.walls.contains(&self.start) || self.walls.contains(&self.exit) {
            return Err(CoreError::Construction(
                "start and exit must be open cells".into(),
            ));
        }
        if self.lava.contains(&self.exit) {
            return Err(CoreError::Construction("the exit cannot be lava".into()));
        }
        Ok(())
    }

    /// Cell reached from `s` by action `a`; blocked moves stay put.
    pub fn step(&self, s: usize, a: usize) -> usize {
        let (r, c) = ((s / GRID_SIDE) as isize, (s % GRID_SIDE) as isize);
        let (dr, dc) = MOVES[a];
        let (nr, nc) = (r + dr, c + dc);
        if nr < 0 || nc < 0 || nr >= GRID_SIDE as isize || nc >= GRID_SIDE as isize {
            return s;
        }
        let next = (nr as usize, nc as usize);
        if self.walls.contains(&next) {
            s
        } else {
            cell_index(next)
        }
    }

    /// Moves needed from the start to the exit, if reachable.
    pub fn steps_to_exit(&self) -> Option<usize> {
        let n = GRID_SIDE * GRID_SIDE;
        let mut dist = vec![usize::MAX; n];
        let start = cell_index(self.start);
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for a in 0..4 {
                let nx = self.step(s, a);
                if dist[nx] == usize::MAX {
                    dist[nx] = dist[s] + 1;
                    queue.push_back(nx);
                }
            }
        }
        let d = dist[cell_index(self.exit)];
        (d != usize::MAX).then_some(d)
    }

    fn reward_and_next(&self, s: usize, a: usize) -> (f64, usize) {
        let exit = cell_index(self.exit);
        if s == exit {
            return (0.0, exit);
        }
        let next = self.step(s, a);
        let r = if next == exit {
            STEP_REWARD + EXIT_REWARD
        } else if self.lava.iter().any(|&l| cell_index(l) == next) {
            LAVA_REWARD
        } else {
            STEP_REWARD
        };
        (r, next)
    }
}

fn one_hot_member(alias: Vec<usize>, label: String, actions: usize) -> SharedFeature<StateAction> {
    let k = alias.len();
    Arc::new(FnFeature::new(
        k,
        label,
        move |x: &StateAction, out: &mut [f64]| {
            out.fill(0.0);
            out[alias[x.s * actions + x.a]] = 1.0;
        },
    ))
}

/// One task per layout; the class holds the tabular one-hot representation
/// of state-action pairs and `decoys` representations that alias
/// `aliased_states` random state pairs (all actions), at a seed-dependent
/// position.
pub fn make_grid_maze(
    layouts: &[MazeLayout],
    decoys: usize,
    aliased_states: usize,
    noise: Noise,
    seed: u64,
) -> Result<MdpInstance> {
    if layouts.is_empty() {
        return Err(CoreError::Construction("need at least one layout".into()));
    }
    let n_s = GRID_SIDE * GRID_SIDE;
    let n_a = MOVES.len();
    let mut tasks = Vec::with_capacity(layouts.len());
    for (i, layout) in layouts.iter().enumerate() {
        layout.validate()?;
        if layout.steps_to_exit().is_none() {
            return Err(CoreError::Construction(format!(
                "task {i}: the exit is unreachable"
            )));
        }
        let mut transitions = vec![vec![0.0; n_s]; n_s * n_a];
        let mut rewards = vec![0.0; n_s * n_a];
        for s in 0..n_s {
            for a in 0..n_a {
                let (r, next) = layout.reward_and_next(s, a);
                transitions[s * n_a + a][next] = 1.0;
                rewards[s * n_a + a] = r;
            }
        }
        let mut initial = vec![0.0; n_s];
        initial[cell_index(layout.start)] = 1.0;
        tasks.push(MdpTask {
            initial,
            transitions: vec![transitions; MAZE_HORIZON],
            rewards: vec![rewards; MAZE_HORIZON],
        });
    }
    let k = n_s * n_a;
    let mut rng = stream(seed, Purpose::Instance, 0, 3);
    let true_index = rng.random_range(0..=decoys);
    let mut members = Vec::with_capacity(decoys + 1);
    for idx in 0..=decoys {
        let mut alias: Vec<usize> = (0..k).collect();
        if idx != true_index {
            for _ in 0..aliased_states.max(1) {
                let pair = sample(&mut rng, n_s, 2).into_vec();
                for a in 0..n_a {
                    let (keep, gone) = (alias[pair[0] * n_a + a], alias[pair[1] * n_a + a]);
                    for l in alias.iter_mut() {
                        if *l == gone {
                            *l = keep;
                        }
                    }
                }
            }
        }
        let label = if idx == true_index {
            "tabular".to_string()
        } else {
            format!("aliased {idx}")
        };
        members.push(one_hot_member(alias, label, n_a));
    }
    let class = FeatureClass::new(members, Some(true_index))?;
    MdpInstance::new(
        n_s,
        n_a,
        MAZE_HORIZON,
        tasks,
        class,
        noise,
        (k as f64).sqrt(),
        None,
    )
}

fn simplex_point(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    // Normalized exponentials: uniform on the simplex.
    let e: Vec<f64> = (0..dim)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = e.iter().sum();
    let mut p: Vec<f64> = e.iter().map(|v| v / total).collect();
    // Put the rounding residue on the largest entry so the mass is 1.
    let residue = 1.0 - p.iter().sum::<f64>();
    let j = (0..dim).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
    p[j] += residue;
    p
}

fn table_member(table: Vec<Vec<f64>>, label: String, actions: usize) -> SharedFeature<StateAction> {
    let k = table[0].len();
    Arc::new(FnFeature::new(
        k,
        label,
        move |x: &StateAction, out: &mut [f64]| {
            out.copy_from_slice(&table[x.s * actions + x.a]);
        },
    ))
}

/// Random linear MDP: `φ*(s, a)` on the simplex over `k` factors,
/// `P_h(·|s, a) = Σ_j φ*_j(s, a) μ_{h,j}` with random stochastic factor
/// rows per task, and stationary rewards `r = φ*ᵀθ` with `θ ∈ [0, 1/H]^k`.
/// Decoy members are independent random simplex tables. Heads are bounded
/// by `D = √k·(1 + 1/H)`, enough to represent every Bellman image exactly.
#[allow(clippy::too_many_arguments)]
pub fn make_random_linear_mdp(
    k: usize,
    states: usize,
    actions: usize,
    horizon: usize,
    tasks: usize,
    decoys: usize,
    noise: Noise,
    seed: u64,
) -> Result<MdpInstance> {
    if k == 0 || k > states * actions {
        return Err(CoreError::Parameter(format!(
            "need 1 ≤ k ≤ |S||A| (k = {k})"
        )));
    }
    if tasks == 0 || horizon == 0 {
        return Err(CoreError::Parameter(
            "need at least one task and one level".into(),
        ));
    }
    let sa = states * actions;
    let mut rng = stream(seed, Purpose::Instance, 0, 4);
    let true_index = rng.random_range(0..=decoys);
    let tables: Vec<Vec<Vec<f64>>> = (0..=decoys)
        .map(|_| (0..sa).map(|_| simplex_point(k, &mut rng)).collect())
        .collect();
    let phi = tables[true_index].clone();
    let members = tables
        .into_iter()
        .enumerate()
        .map(|(j, t)| {
            table_member(
                t,
                if j == true_index {
                    "true".into()
                } else {
                    format!("decoy {j}")
                },
                actions,
            )
        })
        .collect();
    let class = FeatureClass::new(members, Some(true_index))?;

    let mut heads = DMatrix::zeros(k, tasks);
    let mut task_list = Vec::with_capacity(tasks);
    for i in 0..tasks {
        let mut r = stream(seed, Purpose::Instance, i, 5);
        for j in 0..k {
            heads[(j, i)] = r.random::<f64>() / horizon as f64;
        }
        let truth = MultiheadFunction::new(true_index, heads.clone());
        let rewards: Vec<f64> = (0..sa)
            .map(|j| truth.linear_from_features(i, &phi[j]))
            .collect();
        let mut transitions = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mu: Vec<Vec<f64>> = (0..k).map(|_| simplex_point(states, &mut r)).collect();
            let rows: Vec<Vec<f64>> = (0..sa)
                .map(|j| {
                    let mut row = vec![0.0; states];
                    for (f, m) in phi[j].iter().zip(&mu) {
                        for (x, p) in row.iter_mut().zip(m) {
                            *x += f * p;
                        }
                    }
                    let total: f64 = row.iter().sum();
                    let last = (0..states)
                        .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                        .unwrap_or(0);
                    row[last] += 1.0 - total;
                    row
                })
                .collect();
            transitions.push(rows);
        }
        let mut initial = vec![1.0 / states as f64; states];
        let residue = 1.0 - initial.iter().sum::<f64>();
        initial[0] += residue;
        task_list.push(MdpTask {
            initial,
            transitions,
            rewards: vec![rewards; horizon],
        });
    }
    // Rewards use heads in the unit cube scaled by 1/H and every
    // next-level value adds at most one unit of mass per coordinate; a
    // single level is a pure bandit whose heads lie in the √k-ball.
    let bound = if horizon == 1 {
        (k as f64).sqrt()
    } else {
        (k as f64).sqrt() * (1.0 + 1.0 / horizon as f64)
    };
    MdpInstance::new(
        states,
        actions,
        horizon,
        task_list,
        class,
        noise,
        bound,
        Some(heads),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(start: (usize, usize)) -> MazeLayout {
        MazeLayout {
            start,
            exit: (0, 3),
            lava: vec![(1, 1)],
            walls: vec![],
        }
    }

    #[test]
    fn reward_constants() {
        assert_eq!(STEP_REWARD, -0.01);
        assert_eq!(LAVA_REWARD, -0.1);
        assert_eq!(EXIT_REWARD, 1.0);
        assert_eq!(MAZE_HORIZON, 20);
    }

    #[test]
    fn exit_adjacent_start_value() {
        for (start, steps) in [((0, 2), 1usize), ((1, 3), 1), ((3, 0), 6)] {
            let m = make_grid_maze(&[layout(start)], 2, 2, Noise::None, 1).unwrap();
            let v1 = m.optimal(0).v[0][cell_index(start)];
            assert_eq!(layout(start).steps_to_exit(), Some(steps));
            assert!(
                (v1 - (1.0 - 0.01 * steps as f64)).abs() < 1e-12,
                "{start:?}: {v1}"
            );
        }
    }

    #[test]
    fn exit_is_absorbing() {
        let l = layout((3, 3));
        let exit = cell_index(l.exit);
        for a in 0..4 {
            assert_eq!(l.reward_and_next(exit, a), (0.0, exit));
        }
    }

    #[test]
    fn walls_block_and_unreachable_exit_fails() {
        let l = MazeLayout {
            start: (0, 0),
            exit: (3, 3),
            lava: vec![],
            walls: vec![(0, 1)],
        };
        assert_eq!(l.step(0, 3), 0);
        assert_eq!(l.step(0, 0), 0);
        let closed = MazeLayout {
            walls: vec![(2, 3), (3, 2)],
            ..l
        };
        assert!(matches!(
            make_grid_maze(&[closed], 1, 1, Noise::None, 0),
            Err(CoreError::Construction(_))
        ));
    }

    #[test]
    fn linear_mdp_rows_sum_to_one() {
        let m = make_random_linear_mdp(3, 5, 2, 4, 2, 2, Noise::None, 3).unwrap();
        for t in &m.tasks {
            for level in &t.transitions {
                for row in level {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_factor_shares_next_state_distribution() {
        let m = make_random_linear_mdp(1, 4, 3, 2, 1, 0, Noise::None, 8).unwrap();
        for level in &m.tasks[0].transitions {
            assert!(level.iter().all(|row| row == &level[0]));
        }
    }
}
