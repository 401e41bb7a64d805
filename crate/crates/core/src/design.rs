//! Cached feature rows and Gram matrices for every candidate representation.
//!
//! Each candidate φ keeps, per task, the sparse feature rows of all observed
//! inputs and the unregularized Gram `ΦᵀΦ`. Engines append to a `Design` as
//! data arrives so a step never re-evaluates features of old inputs.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::function_class::{FeatureClass, MultiheadFunction, MultitaskHistory};
use crate::linalg::{project_to_ball, SpdSolver};

/// Relative tolerance under which two losses count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TaskDesign {
    k: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
    offsets: Vec<usize>,
    gram: DMatrix<f64>,
}

impl TaskDesign {
    fn new(k: usize) -> Self {
        Self {
            k,
            indices: Vec::new(),
            values: Vec::new(),
            offsets: vec![0],
            gram: DMatrix::zeros(k, k),
        }
    }

    fn push(&mut self, q: &[f64]) {
        let start = self.indices.len();
        for (j, &v) in q.iter().enumerate() {
            if v != 0.0 {
                self.indices.push(j as u32);
                self.values.push(v);
            }
        }
        let idx = &self.indices[start..];
        let val = &self.values[start..];
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                self.gram[(ia as usize, ib as usize)] += val[a] * val[b];
            }
        }
        self.offsets.push(self.indices.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn row(&self, s: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[s], self.offsets[s + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// `φ(x_s)ᵀ w` for stored row `s`.
    pub fn row_dot(&self, s: usize, w: &[f64]) -> f64 {
        let (idx, val) = self.row(s);
        idx.iter().zip(val).map(|(&j, &v)| v * w[j as usize]).sum()
    }

    /// `Φᵀ y`.
    pub fn xty(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (s, &ys) in y.iter().enumerate().take(self.len()) {
            let (idx, val) = self.row(s);
            for (&j, &v) in idx.iter().zip(val) {
                out[j as usize] += v * ys;
            }
        }
        out
    }

    /// Solver for `ΦᵀΦ + ridge·I`.
    pub fn regularized(&self, ridge: f64) -> Result<SpdSolver> {
        let mut g = self.gram.clone();
        for j in 0..self.k {
            g[(j, j)] += ridge;
        }
        SpdSolver::new(&g)
    }

    /// `‖Φ w − y‖²`.
    pub fn sq_residual(&self, w: &[f64], y: &[f64]) -> f64 {
        (0..self.len())
            .map(|s| {
                let r = self.row_dot(s, w) - y[s];
                r * r
            })
            .sum()
    }
}

/// Cached design for all candidates of a class over a multitask dataset.
#[derive(Debug, Clone)]
pub struct Design {
    k: usize,
    tasks: usize,
    /// `per_candidate[c][i]`.
    per_candidate: Vec<Vec<TaskDesign>>,
    scratch: Vec<f64>,
}

impl Design {
    pub fn new<X>(class: &FeatureClass<X>, tasks: usize) -> Self {
        let k = class.dim();
        Self {
            k,
            tasks,
            per_candidate: (0..class.len())
                .map(|_| (0..tasks).map(|_| TaskDesign::new(k)).collect())
                .collect(),
            scratch: vec![0.0; k],
        }
    }

    pub fn from_history<X>(history: &MultitaskHistory<X>, class: &FeatureClass<X>) -> Self {
        let mut d = Self::new(class, history.tasks());
        for task in 0..history.tasks() {
            for (x, _) in history.samples(task) {
                d.push(class, task, x);
            }
        }
        d
    }

    pub fn push<X>(&mut self, class: &FeatureClass<X>, task: usize, x: &X) {
        for (c, member) in class.members().iter().enumerate() {
            member.eval_into(x, &mut self.scratch);
            self.per_candidate[c][task].push(&self.scratch);
        }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn candidates(&self) -> usize {
        self.per_candidate.len()
    }

    pub fn len(&self, task: usize) -> usize {
        self.per_candidate[0][task].len()
    }

    pub fn task(&self, candidate: usize, task: usize) -> &TaskDesign {
        &self.per_candidate[candidate][task]
    }
}

/// Per-candidate outcome of the least-squares fit.
#[derive(Debug, Clone)]
pub struct CandidateFit {
    pub heads: DMatrix<f64>,
    pub loss: f64,
}

/// Ridge least squares of `targets` on candidate `c`'s features, heads
/// projected radially onto the ball of radius `head_bound`.
pub fn fit_candidate(
    design: &Design,
    c: usize,
    targets: &[Vec<f64>],
    ridge: f64,
    head_bound: f64,
) -> Result<CandidateFit> {
    if targets.len() != design.tasks() {
        return Err(CoreError::Dimension(format!(
            "{} target vectors for {} tasks",
            targets.len(),
            design.tasks()
        )));
    }
    let k = design.dim();
    let mut heads = DMatrix::zeros(k, design.tasks());
    let mut loss = 0.0;
    for (i, y) in targets.iter().enumerate() {
        let td = design.task(c, i);
        if y.len() != td.len() {
            return Err(CoreError::Dimension(format!(
                "task {i}: {} targets for {} samples",
                y.len(),
                td.len()
            )));
        }
        if td.is_empty() {
            continue;
        }
        let mut w = td.regularized(ridge)?.solve(&td.xty(y));
        project_to_ball(&mut w, head_bound);
        loss += td.sq_residual(&w, y);
        heads.column_mut(i).copy_from_slice(&w);
    }
    Ok(CandidateFit { heads, loss })
}

/// Fits every candidate and returns the minimal-loss one (lowest index on
/// ties) together with all per-candidate losses.
pub fn erm_fit_design(
    design: &Design,
    targets: &[Vec<f64>],
    ridge: f64,
    head_bound: f64,
    value_cap: f64,
) -> Result<(MultiheadFunction, Vec<f64>)> {
    if !(ridge > 0.0) {
        return Err(CoreError::Parameter(format!(
            "ridge must be positive, got {ridge}"
        )));
    }
    let mut best: Option<(usize, CandidateFit)> = None;
    let mut losses = Vec::with_capacity(design.candidates());
    for c in 0..design.candidates() {
        let fit = fit_candidate(design, c, targets, ridge, head_bound)?;
        losses.push(fit.loss);
        let better = match &best {
            None => true,
            Some((_, b)) => fit.loss < b.loss - TIE_TOL * b.loss.max(1.0),
        };
        if better {
            best = Some((c, fit));
        }
    }
    let (c, fit) = best.expect("design has at least one candidate");
    Ok((
        MultiheadFunction {
            phi_index: c,
            heads: fit.heads,
            value_cap,
        },
        losses,
    ))
}

pub fn rewards_of<X>(history: &MultitaskHistory<X>) -> Vec<Vec<f64>> {
    (0..history.tasks())
        .map(|i| history.samples(i).iter().map(|(_, r)| *r).collect())
        .collect()
}

/// Empirical risk minimizer over the class: per candidate, per-task ridge
/// regression of rewards on features; heads bounded by `√k`.
pub fn erm_fit<X>(
    history: &MultitaskHistory<X>,
    class: &FeatureClass<X>,
    ridge: f64,
) -> Result<MultiheadFunction> {
    let design = Design::from_history(history, class);
    let head_bound = (class.dim() as f64).sqrt();
    erm_fit_design(&design, &rewards_of(history), ridge, head_bound, 1.0).map(|(f, _)| f)
}

/// Total squared loss `Σ_i ‖Φ_i w_i − y_i‖²` of `f` (unclamped predictions).
pub fn total_loss<X>(
    f: &MultiheadFunction,
    history: &MultitaskHistory<X>,
    class: &FeatureClass<X>,
) -> Result<f64> {
    f.validate_against(class, history.tasks())?;
    let phi = class.member(f.phi_index);
    let mut q = vec![0.0; class.dim()];
    let mut loss = 0.0;
    for task in 0..history.tasks() {
        for (x, r) in history.samples(task) {
            phi.eval_into(x, &mut q);
            let e = f.linear_from_features(task, &q) - r;
            loss += e * e;
        }
    }
    Ok(loss)
}
