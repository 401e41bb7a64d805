//! The functional confidence set around the empirical risk minimizer and
//! the optimistic queries answered over it.
//!
//! For each candidate representation φ′ the set's heads form an ellipsoid:
//! fit `w̄_i` to the center's predictions, let `c′` be the residual, then any
//! heads with `Σ_i (w_i − w̄_i)ᵀ G_i (w_i − w̄_i) ≤ β − c′` belong to the set.
//! Maximizing a sum of linear predictions over that ellipsoid has a closed
//! form; with the value cap in play the budget is water-filled across tasks.

use std::borrow::Cow;
use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::design::Design;
use crate::error::{CoreError, Result};
use crate::function_class::{FeatureClass, MultiheadFunction, MultitaskHistory};
use crate::linalg::{dot, SpdSolver};

/// Residual slack under which a non-center candidate still counts as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Per-task maximization with the full slack each; upper-bounds `Exact`.
    #[default]
    Decoupled,
    /// λ-scalarized tuples, each evaluated exactly; lower-bounds `Exact`.
    Sweep,
    /// Exhaustive enumeration of action tuples.
    Exact,
}

impl std::str::FromStr for Strategy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decoupled" => Ok(Strategy::Decoupled),
            "sweep" => Ok(Strategy::Sweep),
            "exact" => Ok(Strategy::Exact),
            other => Err(CoreError::Parameter(format!("unknown strategy '{other}'"))),
        }
    }
}

/// How exact ties in optimistic value are resolved. Ties are common when
/// the radius is large and every action saturates at the value cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// First action (tuple) in index order.
    #[default]
    LowestIndex,
    /// Largest summed center prediction, then index order.
    CenterPrediction,
}

impl std::str::FromStr for TieBreak {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index" => Ok(TieBreak::LowestIndex),
            "center" => Ok(TieBreak::CenterPrediction),
            other => Err(CoreError::Parameter(format!("unknown tie-break '{other}'"))),
        }
    }
}

/// Closed-form solve of the set restricted to one candidate representation.
#[derive(Debug, Clone)]
pub struct PerPhiSolve {
    pub phi_index: usize,
    /// Per task, solver for `G_i = Φ′ᵢᵀΦ′ᵢ + ridge·I`.
    pub solvers: Vec<SpdSolver>,
    /// Least-squares heads `w̄_i` fitted to the center's predictions.
    pub fitted: DMatrix<f64>,
    /// `c′ = Σ_i ‖Φ′ᵢ w̄_i − ŷ_i‖²`.
    pub residual: f64,
    pub feasible: bool,
    /// `max(β − c′, 0)`.
    pub slack: f64,
}

impl PerPhiSolve {
    fn mean(&self, task: usize, q: &[f64]) -> f64 {
        let k = self.fitted.nrows();
        dot(q, &self.fitted.as_slice()[task * k..(task + 1) * k])
    }
}

/// Optimistic choice returned by [`ConfidenceSet::optimistic_select`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub actions: Vec<usize>,
    /// Per-task optimistic values, clamped to the value cap.
    pub values: Vec<f64>,
    pub total: f64,
    pub witness: Witness,
}

/// The function attaining the optimistic values. For `Decoupled` each head
/// uses the full slack on its own, so the stacked heads need not lie in the
/// set jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub phi_index: usize,
    pub heads: DMatrix<f64>,
}

/// Per-task mean and bonus base of every action under one candidate.
struct QueryStats {
    features: Vec<Vec<Vec<f64>>>,
    means: Vec<Vec<f64>>,
    bonus: Vec<Vec<f64>>,
}

/// Maximize `Σ_i min(m_i + √b_i·r_i, cap)` subject to `Σ r_i² ≤ slack`.
/// Returns per-task values (clamped to `[-cap, cap]`) and radii `r_i`.
pub fn waterfill(means: &[f64], bonus: &[f64], slack: f64, cap: f64) -> (Vec<f64>, Vec<f64>) {
    let n = means.len();
    let mut values = means.to_vec();
    let mut radii = vec![0.0; n];
    let mut active: Vec<usize> = (0..n)
        .filter(|&i| bonus[i] > 0.0 && means[i] < cap)
        .collect();
    let mut budget = slack.max(0.0);
    while !active.is_empty() && budget > 0.0 {
        let sum_b: f64 = active.iter().map(|&i| bonus[i]).sum();
        let rho = if budget.is_infinite() {
            f64::INFINITY
        } else {
            (budget / sum_b).sqrt()
        };
        let (saturated, open): (Vec<usize>, Vec<usize>) = active
            .iter()
            .partition(|&&i| means[i] + bonus[i] * rho >= cap);
        if saturated.is_empty() {
            for &i in &open {
                radii[i] = bonus[i].sqrt() * rho;
                values[i] = means[i] + bonus[i] * rho;
            }
            break;
        }
        for &i in &saturated {
            let r = (cap - means[i]) / bonus[i].sqrt();
            radii[i] = r;
            values[i] = cap;
            budget -= r * r;
        }
        budget = budget.max(0.0);
        active = open;
    }
    for v in &mut values {
        *v = v.clamp(-cap, cap);
    }
    (values, radii)
}

/// Minimizing counterpart of [`waterfill`].
pub fn waterfill_lower(means: &[f64], bonus: &[f64], slack: f64, cap: f64) -> Vec<f64> {
    let neg: Vec<f64> = means.iter().map(|m| -m).collect();
    waterfill(&neg, bonus, slack, cap)
        .0
        .into_iter()
        .map(|v| -v)
        .collect()
}

fn decoupled_value(mean: f64, bonus: f64, slack: f64, cap: f64) -> f64 {
    let b = if bonus > 0.0 && slack > 0.0 {
        (slack * bonus).sqrt()
    } else {
        0.0
    };
    (mean + b).clamp(-cap, cap)
}

fn decoupled_lower(mean: f64, bonus: f64, slack: f64, cap: f64) -> f64 {
    let b = if bonus > 0.0 && slack > 0.0 {
        (slack * bonus).sqrt()
    } else {
        0.0
    };
    (mean - b).clamp(-cap, cap)
}

/// λ grid for the sweep strategy besides the per-task breakpoints.
fn base_lambdas() -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend((0..=12).map(|j| 10f64.powf(-3.0 + 0.5 * j as f64)));
    v.push(f64::INFINITY);
    v
}

fn argmax_scalarized(means: &[f64], bonus: &[f64], lambda: f64) -> usize {
    let mut best = 0;
    for a in 1..means.len() {
        let better = if lambda.is_infinite() {
            bonus[a] > bonus[best] || (bonus[a] == bonus[best] && means[a] > means[best])
        } else {
            means[a] + lambda * bonus[a] > means[best] + lambda * bonus[best]
        };
        if better {
            best = a;
        }
    }
    best
}

pub struct ConfidenceSet<'a, X> {
    pub center: MultiheadFunction,
    pub beta: f64,
    pub history: &'a MultitaskHistory<X>,
    pub class: &'a FeatureClass<X>,
    pub ridge: f64,
    design: Cow<'a, Design>,
    solves: Vec<PerPhiSolve>,
}

impl<'a, X> ConfidenceSet<'a, X> {
    pub fn new(
        center: MultiheadFunction,
        beta: f64,
        history: &'a MultitaskHistory<X>,
        class: &'a FeatureClass<X>,
        ridge: f64,
    ) -> Result<Self> {
        let design = Design::from_history(history, class);
        Self::build(center, beta, history, class, ridge, Cow::Owned(design))
    }

    /// Same as [`ConfidenceSet::new`] but reuses a design kept in sync with
    /// `history` by the caller.
    pub fn with_design(
        center: MultiheadFunction,
        beta: f64,
        history: &'a MultitaskHistory<X>,
        class: &'a FeatureClass<X>,
        ridge: f64,
        design: &'a Design,
    ) -> Result<Self> {
        Self::build(center, beta, history, class, ridge, Cow::Borrowed(design))
    }

    fn build(
        center: MultiheadFunction,
        beta: f64,
        history: &'a MultitaskHistory<X>,
        class: &'a FeatureClass<X>,
        ridge: f64,
        design: Cow<'a, Design>,
    ) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(CoreError::Parameter(format!(
                "beta must be nonnegative, got {beta}"
            )));
        }
        if !(ridge > 0.0) {
            return Err(CoreError::Parameter(format!(
                "ridge must be positive, got {ridge}"
            )));
        }
        let m = history.tasks();
        center.validate_against(class, m)?;
        if design.tasks() != m || (0..m).any(|i| design.len(i) != history.len(i)) {
            return Err(CoreError::Dimension(
                "design is out of sync with the history".into(),
            ));
        }
        let k = class.dim();

        // Center predictions on every stored input.
        let targets: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let td = design.task(center.phi_index, i);
                (0..td.len())
                    .map(|s| center.clamp(td.row_dot(s, center.head(i))))
                    .collect()
            })
            .collect();

        let mut solves = Vec::with_capacity(class.len());
        for c in 0..class.len() {
            let mut solvers = Vec::with_capacity(m);
            let mut fitted = DMatrix::zeros(k, m);
            let mut residual = 0.0;
            for (i, y) in targets.iter().enumerate() {
                let td = design.task(c, i);
                let solver = td.regularized(ridge)?;
                if !td.is_empty() {
                    let w = solver.solve(&td.xty(y));
                    residual += td.sq_residual(&w, y);
                    fitted.column_mut(i).copy_from_slice(&w);
                }
                solvers.push(solver);
            }
            let feasible = c == center.phi_index || residual <= beta + FEASIBILITY_TOL;
            let slack = if feasible {
                (beta - residual).max(0.0)
            } else {
                0.0
            };
            solves.push(PerPhiSolve {
                phi_index: c,
                solvers,
                fitted,
                residual,
                feasible,
                slack,
            });
        }
        Ok(Self {
            center,
            beta,
            history,
            class,
            ridge,
            design,
            solves,
        })
    }

    pub fn tasks(&self) -> usize {
        self.history.tasks()
    }

    pub fn solves(&self) -> &[PerPhiSolve] {
        &self.solves
    }

    pub fn feasible(&self) -> impl Iterator<Item = &PerPhiSolve> {
        self.solves.iter().filter(|s| s.feasible)
    }

    /// `‖candidate − center‖²` over the history, from cached rows.
    pub fn sq_distance_to_center(&self, candidate: &MultiheadFunction) -> Result<f64> {
        candidate.validate_against(self.class, self.tasks())?;
        let mut total = 0.0;
        for i in 0..self.tasks() {
            let tc = self.design.task(self.center.phi_index, i);
            let tf = self.design.task(candidate.phi_index, i);
            for s in 0..tc.len() {
                let a = self.center.clamp(tc.row_dot(s, self.center.head(i)));
                let b = candidate.clamp(tf.row_dot(s, candidate.head(i)));
                total += (a - b) * (a - b);
            }
        }
        Ok(total)
    }

    /// Membership: within `β` of the center (inclusive) and every linear
    /// prediction on the history within the candidate's value cap.
    pub fn contains(&self, candidate: &MultiheadFunction) -> Result<bool> {
        let d = self.sq_distance_to_center(candidate)?;
        if !(d <= self.beta) {
            return Ok(false);
        }
        for i in 0..self.tasks() {
            let tf = self.design.task(candidate.phi_index, i);
            for s in 0..tf.len() {
                if tf.row_dot(s, candidate.head(i)).abs() > candidate.value_cap + 1e-12 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn query_stats(&self, solve: &PerPhiSolve, queries: &[Vec<X>]) -> QueryStats {
        let phi = self.class.member(solve.phi_index);
        let mut features = Vec::with_capacity(queries.len());
        let mut means = Vec::with_capacity(queries.len());
        let mut bonus = Vec::with_capacity(queries.len());
        for (i, actions) in queries.iter().enumerate() {
            let qs: Vec<Vec<f64>> = actions.iter().map(|x| phi.eval(x)).collect();
            means.push(qs.iter().map(|q| solve.mean(i, q)).collect());
            bonus.push(qs.iter().map(|q| solve.solvers[i].inv_quad(q)).collect());
            features.push(qs);
        }
        QueryStats {
            features,
            means,
            bonus,
        }
    }

    fn check_queries(&self, queries: &[Vec<X>]) -> Result<()> {
        if queries.len() != self.tasks() {
            return Err(CoreError::Dimension(format!(
                "{} queries for {} tasks",
                queries.len(),
                self.tasks()
            )));
        }
        if let Some(i) = queries.iter().position(Vec::is_empty) {
            return Err(CoreError::Parameter(format!(
                "task {i} has an empty action set"
            )));
        }
        Ok(())
    }

    fn witness_heads(
        &self,
        solve: &PerPhiSolve,
        stats: &QueryStats,
        actions: &[usize],
        radii: &[f64],
    ) -> DMatrix<f64> {
        let mut heads = solve.fitted.clone();
        for (i, (&a, &r)) in actions.iter().zip(radii).enumerate() {
            let b = stats.bonus[i][a];
            if r > 0.0 && b > 0.0 && r.is_finite() {
                let dir = solve.solvers[i].solve(&stats.features[i][a]);
                let scale = r / b.sqrt();
                for (j, d) in dir.iter().enumerate() {
                    heads[(j, i)] += scale * d;
                }
            }
        }
        heads
    }

    fn evaluate_tuple(
        &self,
        stats: &QueryStats,
        slack: f64,
        actions: &[usize],
    ) -> (Vec<f64>, Vec<f64>) {
        let m: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(i, &a)| stats.means[i][a])
            .collect();
        let b: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(i, &a)| stats.bonus[i][a])
            .collect();
        waterfill(&m, &b, slack, self.center.value_cap)
    }

    /// Optimistic action tuple: maximizes the summed value over functions in
    /// the set and actions in each task's action set. Ties go to the lowest
    /// φ index, then the lowest action indices.
    pub fn optimistic_select(&self, queries: &[Vec<X>], strategy: Strategy) -> Result<Selection> {
        self.optimistic_select_with(queries, strategy, TieBreak::LowestIndex)
    }

    /// [`Self::optimistic_select`] with an explicit tie-breaking rule.
    pub fn optimistic_select_with(
        &self,
        queries: &[Vec<X>],
        strategy: Strategy,
        tie_break: TieBreak,
    ) -> Result<Selection> {
        self.check_queries(queries)?;
        let cap = self.center.value_cap;
        let greedy: Vec<Vec<f64>> = queries
            .iter()
            .enumerate()
            .map(|(i, xs)| match tie_break {
                TieBreak::LowestIndex => vec![0.0; xs.len()],
                TieBreak::CenterPrediction => xs
                    .iter()
                    .map(|x| self.center.predict(self.class, i, x))
                    .collect(),
            })
            .collect();
        let key =
            |tuple: &[usize]| -> f64 { tuple.iter().enumerate().map(|(i, &a)| greedy[i][a]).sum() };
        let mut best: Option<(Selection, f64)> = None;
        for solve in self.feasible() {
            let stats = self.query_stats(solve, queries);
            let s = solve.slack;
            let candidate = match strategy {
                Strategy::Decoupled => {
                    let mut actions = Vec::with_capacity(queries.len());
                    let mut values = Vec::with_capacity(queries.len());
                    let mut radii = Vec::with_capacity(queries.len());
                    for i in 0..queries.len() {
                        let (mut ba, mut bv) = (0, f64::NEG_INFINITY);
                        for a in 0..queries[i].len() {
                            let v = decoupled_value(stats.means[i][a], stats.bonus[i][a], s, cap);
                            if v > bv || (v == bv && greedy[i][a] > greedy[i][ba]) {
                                ba = a;
                                bv = v;
                            }
                        }
                        // Radius spending the full slack, capped at saturation.
                        let (m, b) = (stats.means[i][ba], stats.bonus[i][ba]);
                        let r = if b > 0.0 && m < cap {
                            s.sqrt().min((cap - m) / b.sqrt())
                        } else {
                            0.0
                        };
                        actions.push(ba);
                        values.push(bv);
                        radii.push(r);
                    }
                    let heads = self.witness_heads(solve, &stats, &actions, &radii);
                    let total = values.iter().sum();
                    Selection {
                        actions,
                        values,
                        total,
                        witness: Witness {
                            phi_index: solve.phi_index,
                            heads,
                        },
                    }
                }
                Strategy::Exact => {
                    let sizes: Vec<usize> = queries.iter().map(Vec::len).collect();
                    let mut tuple = vec![0usize; sizes.len()];
                    let mut local: Option<(Vec<usize>, Vec<f64>, Vec<f64>, f64)> = None;
                    loop {
                        let (values, radii) = self.evaluate_tuple(&stats, s, &tuple);
                        let total: f64 = values.iter().sum();
                        if local.as_ref().is_none_or(|l| {
                            total > l.3 || (total == l.3 && key(&tuple) > key(&l.0))
                        }) {
                            local = Some((tuple.clone(), values, radii, total));
                        }
                        // Odometer increment, last task fastest.
                        let mut pos = sizes.len();
                        loop {
                            if pos == 0 {
                                break;
                            }
                            pos -= 1;
                            tuple[pos] += 1;
                            if tuple[pos] < sizes[pos] {
                                break;
                            }
                            tuple[pos] = 0;
                            if pos == 0 {
                                pos = usize::MAX;
                                break;
                            }
                        }
                        if pos == usize::MAX {
                            break;
                        }
                    }
                    let (actions, values, radii, total) = local.expect("non-empty action sets");
                    let heads = self.witness_heads(solve, &stats, &actions, &radii);
                    Selection {
                        actions,
                        values,
                        total,
                        witness: Witness {
                            phi_index: solve.phi_index,
                            heads,
                        },
                    }
                }
                Strategy::Sweep => {
                    let mut lambdas = base_lambdas();
                    for i in 0..queries.len() {
                        let (m, b) = (&stats.means[i], &stats.bonus[i]);
                        for a in 0..m.len() {
                            for a2 in 0..m.len() {
                                let db = b[a2] - b[a];
                                if db != 0.0 {
                                    let l = (m[a] - m[a2]) / db;
                                    if l > 0.0 && l.is_finite() {
                                        lambdas.push(l);
                                    }
                                }
                            }
                        }
                    }
                    lambdas.sort_by(f64::total_cmp);
                    lambdas.dedup();
                    let mut seen = HashSet::new();
                    let mut local: Option<(Vec<usize>, Vec<f64>, Vec<f64>, f64)> = None;
                    for &l in &lambdas {
                        let tuple: Vec<usize> = (0..queries.len())
                            .map(|i| argmax_scalarized(&stats.means[i], &stats.bonus[i], l))
                            .collect();
                        if !seen.insert(tuple.clone()) {
                            continue;
                        }
                        let (values, radii) = self.evaluate_tuple(&stats, s, &tuple);
                        let total: f64 = values.iter().sum();
                        let better = match &local {
                            None => true,
                            Some(l) => {
                                total > l.3
                                    || (total == l.3
                                        && (key(&tuple) > key(&l.0)
                                            || (key(&tuple) == key(&l.0) && tuple < l.0)))
                            }
                        };
                        if better {
                            local = Some((tuple, values, radii, total));
                        }
                    }
                    let (actions, values, radii, total) = local.expect("at least one lambda");
                    let heads = self.witness_heads(solve, &stats, &actions, &radii);
                    Selection {
                        actions,
                        values,
                        total,
                        witness: Witness {
                            phi_index: solve.phi_index,
                            heads,
                        },
                    }
                }
            };
            let candidate_key = key(&candidate.actions);
            let better = match &best {
                None => true,
                Some((b, b_key)) => {
                    candidate.total > b.total
                        || (candidate.total == b.total
                            && (candidate_key > *b_key
                                || (strategy == Strategy::Sweep
                                    && candidate_key == *b_key
                                    && candidate.actions < b.actions)))
                }
            };
            if better {
                best = Some((candidate, candidate_key));
            }
        }
        Ok(best
            .expect("the center's representation is always feasible")
            .0)
    }

    fn per_input_stats(&self, solve: &PerPhiSolve, inputs: &[X]) -> (Vec<f64>, Vec<f64>) {
        let phi = self.class.member(solve.phi_index);
        let mut m = Vec::with_capacity(inputs.len());
        let mut b = Vec::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            let q = phi.eval(x);
            m.push(solve.mean(i, &q));
            b.push(solve.solvers[i].inv_quad(&q));
        }
        (m, b)
    }

    fn check_inputs(&self, inputs: &[X]) -> Result<()> {
        if inputs.len() != self.tasks() {
            return Err(CoreError::Dimension(format!(
                "{} inputs for {} tasks",
                inputs.len(),
                self.tasks()
            )));
        }
        Ok(())
    }

    /// `sup_{f̄, f̲ ∈ F} Σ_i f̄⁽ⁱ⁾(x_i) − f̲⁽ⁱ⁾(x_i)` for one input per task.
    pub fn width(&self, inputs: &[X]) -> Result<f64> {
        self.check_inputs(inputs)?;
        let cap = self.center.value_cap;
        let mut upper = f64::NEG_INFINITY;
        let mut lower = f64::INFINITY;
        for solve in self.feasible() {
            let (m, b) = self.per_input_stats(solve, inputs);
            let u: f64 = waterfill(&m, &b, solve.slack, cap).0.iter().sum();
            let l: f64 = waterfill_lower(&m, &b, solve.slack, cap).iter().sum();
            upper = upper.max(u);
            lower = lower.min(l);
        }
        Ok((upper - lower).max(0.0))
    }

    /// Width with every task given the full slack independently; bounds
    /// per-step regret of the decoupled strategy.
    pub fn decoupled_width(&self, inputs: &[X]) -> Result<f64> {
        self.check_inputs(inputs)?;
        let cap = self.center.value_cap;
        let mut upper = vec![f64::NEG_INFINITY; inputs.len()];
        let mut lower = vec![f64::INFINITY; inputs.len()];
        for solve in self.feasible() {
            let (m, b) = self.per_input_stats(solve, inputs);
            for i in 0..inputs.len() {
                upper[i] = upper[i].max(decoupled_value(m[i], b[i], solve.slack, cap));
                lower[i] = lower[i].min(decoupled_lower(m[i], b[i], solve.slack, cap));
            }
        }
        Ok(upper
            .iter()
            .zip(&lower)
            .map(|(u, l)| (u - l).max(0.0))
            .sum())
    }

    /// Largest value any member assigns to `x` in task `task`.
    pub fn optimistic_value(&self, task: usize, x: &X) -> Result<f64> {
        if task >= self.tasks() {
            return Err(CoreError::Dimension(format!("task {task} out of range")));
        }
        let cap = self.center.value_cap;
        let mut best = f64::NEG_INFINITY;
        for solve in self.feasible() {
            let q = self.class.member(solve.phi_index).eval(x);
            let v = decoupled_value(
                solve.mean(task, &q),
                solve.solvers[task].inv_quad(&q),
                solve.slack,
                cap,
            );
            best = best.max(v);
        }
        Ok(best)
    }
}

/// Whether `candidate` lies in `set`.
pub fn confidence_contains<X>(
    candidate: &MultiheadFunction,
    set: &ConfidenceSet<'_, X>,
) -> Result<bool> {
    set.contains(candidate)
}
