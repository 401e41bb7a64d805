//! Representation classes, multihead functions and multitask histories.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::linalg::dot;

/// Slack allowed when checking `‖φ(x)‖₂ ≤ 1`.
pub const FEATURE_NORM_TOL: f64 = 1e-12;

/// A deterministic map from inputs to k-dimensional feature vectors.
pub trait FeatureMap<X>: Send + Sync {
    fn dim(&self) -> usize;

    /// Write `φ(x)` into `out` (length `dim()`).
    fn eval_into(&self, x: &X, out: &mut [f64]);

    fn eval(&self, x: &X) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    fn label(&self) -> String {
        String::from("feature map")
    }
}

/// Feature map backed by a closure.
pub struct FnFeature<F> {
    dim: usize,
    label: String,
    f: F,
}

impl<F> FnFeature<F> {
    pub fn new(dim: usize, label: impl Into<String>, f: F) -> Self {
        Self {
            dim,
            label: label.into(),
            f,
        }
    }
}

impl<X, F> FeatureMap<X> for FnFeature<F>
where
    F: Fn(&X, &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &X, out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

pub type SharedFeature<X> = Arc<dyn FeatureMap<X>>;

/// A finite, ordered representation class Φ. All members share `dim`.
pub struct FeatureClass<X> {
    members: Vec<SharedFeature<X>>,
    true_index: Option<usize>,
    dim: usize,
}

impl<X> Clone for FeatureClass<X> {
    fn clone(&self) -> Self {
        Self {
            members: self.members.clone(),
            true_index: self.true_index,
            dim: self.dim,
        }
    }
}

impl<X> fmt::Debug for FeatureClass<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureClass")
            .field(
                "members",
                &self.members.iter().map(|m| m.label()).collect::<Vec<_>>(),
            )
            .field("true_index", &self.true_index)
            .field("dim", &self.dim)
            .finish()
    }
}

impl<X> FeatureClass<X> {
    pub fn new(members: Vec<SharedFeature<X>>, true_index: Option<usize>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| CoreError::Construction("feature class must be non-empty".into()))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(CoreError::Construction(
                "feature dimension must be positive".into(),
            ));
        }
        if let Some(bad) = members.iter().position(|m| m.dim() != dim) {
            return Err(CoreError::Dimension(format!(
                "member {bad} has dimension {} but the class has {dim}",
                members[bad].dim()
            )));
        }
        if let Some(t) = true_index {
            if t >= members.len() {
                return Err(CoreError::Construction(format!(
                    "true index {t} out of range for {} members",
                    members.len()
                )));
            }
        }
        Ok(Self {
            members,
            true_index,
            dim,
        })
    }

    pub fn singleton(member: SharedFeature<X>) -> Result<Self> {
        Self::new(vec![member], Some(0))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn true_index(&self) -> Option<usize> {
        self.true_index
    }

    pub fn member(&self, index: usize) -> &SharedFeature<X> {
        &self.members[index]
    }

    pub fn members(&self) -> &[SharedFeature<X>] {
        &self.members
    }

    /// Log covering number. A finite class covers itself at every scale.
    pub fn log_cover(&self, _alpha: f64) -> f64 {
        (self.members.len() as f64).ln()
    }

    /// Exhaustive check of `‖φ(x)‖₂ ≤ 1` for every member on `domain`.
    pub fn check_feature_bounds<'a, I>(&self, domain: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a X>,
        X: 'a,
    {
        let mut buf = vec![0.0; self.dim];
        for x in domain {
            for (j, m) in self.members.iter().enumerate() {
                m.eval_into(x, &mut buf);
                let n = dot(&buf, &buf).sqrt();
                if n > 1.0 + FEATURE_NORM_TOL {
                    return Err(CoreError::Construction(format!(
                        "member {j} ({}) has feature norm {n} > 1",
                        m.label()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A member of the multihead class: one shared representation index and a
/// `k × M` head matrix whose column `i` serves task `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiheadFunction {
    pub phi_index: usize,
    pub heads: DMatrix<f64>,
    pub value_cap: f64,
}

impl MultiheadFunction {
    pub fn new(phi_index: usize, heads: DMatrix<f64>) -> Self {
        Self {
            phi_index,
            heads,
            value_cap: 1.0,
        }
    }

    pub fn zeros(phi_index: usize, k: usize, tasks: usize) -> Self {
        Self::new(phi_index, DMatrix::zeros(k, tasks))
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.value_cap = cap;
        self
    }

    pub fn tasks(&self) -> usize {
        self.heads.ncols()
    }

    pub fn dim(&self) -> usize {
        self.heads.nrows()
    }

    pub fn head(&self, task: usize) -> &[f64] {
        let k = self.heads.nrows();
        &self.heads.as_slice()[task * k..(task + 1) * k]
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(-self.value_cap, self.value_cap)
    }

    /// Unclamped `φ(x)ᵀ w_task` given precomputed features.
    pub fn linear_from_features(&self, task: usize, features: &[f64]) -> f64 {
        dot(features, self.head(task))
    }

    pub fn linear<X>(&self, class: &FeatureClass<X>, task: usize, x: &X) -> f64 {
        let q = class.member(self.phi_index).eval(x);
        self.linear_from_features(task, &q)
    }

    /// Prediction clamped to `[-value_cap, value_cap]`.
    pub fn predict<X>(&self, class: &FeatureClass<X>, task: usize, x: &X) -> f64 {
        self.clamp(self.linear(class, task, x))
    }

    pub fn validate_against<X>(&self, class: &FeatureClass<X>, tasks: usize) -> Result<()> {
        if self.phi_index >= class.len() {
            return Err(CoreError::Dimension(format!(
                "phi index {} out of range for {} members",
                self.phi_index,
                class.len()
            )));
        }
        if self.heads.nrows() != class.dim() {
            return Err(CoreError::Dimension(format!(
                "heads have {} rows but features have dimension {}",
                self.heads.nrows(),
                class.dim()
            )));
        }
        if self.heads.ncols() != tasks {
            return Err(CoreError::Dimension(format!(
                "function has {} heads but history has {tasks} tasks",
                self.heads.ncols()
            )));
        }
        Ok(())
    }
}

/// Per-task append-only record of `(input, reward)` pairs.
#[derive(Debug, Clone)]
pub struct MultitaskHistory<X> {
    tasks: Vec<Vec<(X, f64)>>,
}

impl<X> MultitaskHistory<X> {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks: (0..tasks).map(|_| Vec::new()).collect(),
        }
    }

    pub fn tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn push(&mut self, task: usize, x: X, reward: f64) -> Result<()> {
        let m = self.tasks.len();
        self.tasks
            .get_mut(task)
            .ok_or_else(|| CoreError::Dimension(format!("task {task} out of range for {m} tasks")))?
            .push((x, reward));
        Ok(())
    }

    pub fn len(&self, task: usize) -> usize {
        self.tasks[task].len()
    }

    pub fn total_len(&self) -> usize {
        self.tasks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_len() == 0
    }

    pub fn samples(&self, task: usize) -> &[(X, f64)] {
        &self.tasks[task]
    }
}

/// `Σ_i Σ_s (f⁽ⁱ⁾(x_{s,i}) − g⁽ⁱ⁾(x_{s,i}))²` over the history, using
/// clamped predictions.
pub fn empirical_sq_distance<X>(
    f: &MultiheadFunction,
    g: &MultiheadFunction,
    history: &MultitaskHistory<X>,
    class: &FeatureClass<X>,
) -> Result<f64> {
    let m = history.tasks();
    f.validate_against(class, m)?;
    g.validate_against(class, m)?;
    let mut qf = vec![0.0; class.dim()];
    let mut qg = vec![0.0; class.dim()];
    let same_phi = f.phi_index == g.phi_index;
    let mut total = 0.0;
    for task in 0..m {
        for (x, _) in history.samples(task) {
            class.member(f.phi_index).eval_into(x, &mut qf);
            let pf = f.clamp(f.linear_from_features(task, &qf));
            let pg = if same_phi {
                g.clamp(g.linear_from_features(task, &qf))
            } else {
                class.member(g.phi_index).eval_into(x, &mut qg);
                g.clamp(g.linear_from_features(task, &qg))
            };
            total += (pf - pg) * (pf - pg);
        }
    }
    Ok(total)
}
