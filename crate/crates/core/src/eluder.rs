//! ε-dependence and eluder dimension of finite scalar classes on finite
//! domains.
//!
//! A sequence is valid at scale ε′ when every element is ε′-independent of
//! its predecessors: some pair `(f, g)` has `‖f − g‖_S ≤ ε′` on the
//! predecessors `S` yet `|f(x) − g(x)| > ε′`. Each pair therefore admits the
//! half-open range `ε′ ∈ [‖f − g‖_S, |f(x) − g(x)|)`. The exhaustive search
//! carries the set of admissible ε′ ≥ ε as a union of such ranges, which
//! makes the "for some ε′ ≥ ε" quantifier exact.

use std::collections::{HashMap, HashSet};

use crate::error::{CoreError, Result};
use crate::function_class::FeatureClass;

/// Largest domain the exhaustive search accepts by default.
pub const DEFAULT_DOMAIN_GUARD: usize = 12;

/// A finite class of functions tabulated on a finite domain of indexed points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarClass {
    /// `values[f][x]`: value of function `f` at domain point `x`.
    values: Vec<Vec<f64>>,
    domain: usize,
}

impl ScalarClass {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let domain = values.first().map(Vec::len).unwrap_or(0);
        if values.is_empty() || domain == 0 {
            return Err(CoreError::Construction(
                "class and domain must be non-empty".into(),
            ));
        }
        if values.iter().any(|v| v.len() != domain) {
            return Err(CoreError::Construction(
                "every function must be total on the domain".into(),
            ));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::Construction(
                "function values must be finite".into(),
            ));
        }
        Ok(Self { values, domain })
    }

    /// Tabulate `functions` on `domain`.
    pub fn from_fns<P, F: Fn(&P) -> f64>(domain: &[P], functions: &[F]) -> Result<Self> {
        Self::new(
            functions
                .iter()
                .map(|f| domain.iter().map(f).collect())
                .collect(),
        )
    }

    /// Scalarize multihead members: each member lists per-task value tables
    /// `member[i][x_i]`, and the scalar function on the product domain is
    /// `g(x_1, …, x_M) = Σ_i member[i][x_i]`. Product points are ordered
    /// with the last task varying fastest.
    pub fn summed_heads(members: &[Vec<Vec<f64>>]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| CoreError::Construction("no members".into()))?;
        let sizes: Vec<usize> = first.iter().map(Vec::len).collect();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(CoreError::Construction(
                "every task needs a non-empty domain".into(),
            ));
        }
        let total: usize = sizes.iter().product();
        let mut values = Vec::with_capacity(members.len());
        for m in members {
            if m.iter().map(Vec::len).ne(sizes.iter().copied()) {
                return Err(CoreError::Construction(
                    "members disagree on task domains".into(),
                ));
            }
            let mut row = Vec::with_capacity(total);
            let mut idx = vec![0usize; sizes.len()];
            for _ in 0..total {
                row.push(idx.iter().enumerate().map(|(i, &x)| m[i][x]).sum());
                for p in (0..sizes.len()).rev() {
                    idx[p] += 1;
                    if idx[p] < sizes[p] {
                        break;
                    }
                    idx[p] = 0;
                }
            }
            values.push(row);
        }
        Self::new(values)
    }

    pub fn functions(&self) -> usize {
        self.values.len()
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn value(&self, f: usize, x: usize) -> f64 {
        self.values[f][x]
    }

    /// Distinct non-zero difference vectors `f − g` up to sign.
    fn differences(&self) -> Vec<Vec<f64>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for a in 0..self.values.len() {
            for b in a + 1..self.values.len() {
                let d: Vec<f64> = self.values[a]
                    .iter()
                    .zip(&self.values[b])
                    .map(|(x, y)| x - y)
                    .collect();
                if d.iter().all(|&v| v == 0.0) {
                    continue;
                }
                // Canonical sign: first non-zero entry positive.
                let first = d.iter().find(|&&v| v != 0.0).copied().unwrap_or(1.0);
                let d: Vec<f64> = if first < 0.0 {
                    d.iter().map(|v| -v).collect()
                } else {
                    d
                };
                let key: Vec<u64> = d.iter().map(|v| (v + 0.0).to_bits()).collect();
                if seen.insert(key) {
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Multihead members built from a feature class: every representation, and
/// every head whose coordinates lie on `grid`, tabulated on the per-task
/// input lists with predictions clamped to `cap`. Duplicate members dropped.
pub fn multihead_grid_members<X>(
    class: &FeatureClass<X>,
    inputs: &[Vec<X>],
    grid: &[f64],
    head_bound: f64,
    cap: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if grid.is_empty() || inputs.is_empty() {
        return Err(CoreError::Parameter(
            "grid and task inputs must be non-empty".into(),
        ));
    }
    let k = class.dim();
    let mut heads = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let w: Vec<f64> = idx.iter().map(|&j| grid[j]).collect();
        if w.iter().map(|v| v * v).sum::<f64>() <= head_bound * head_bound + 1e-12 {
            heads.push(w);
        }
        let mut p = k;
        loop {
            if p == 0 {
                break;
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < grid.len() {
                break;
            }
            idx[p] = 0;
        }
        if idx.iter().all(|&j| j == 0) {
            break;
        }
    }
    let mut seen = HashSet::new();
    let mut members = Vec::new();
    for phi in class.members() {
        // Per task, the distinct value tables reachable by one head.
        let tables: Vec<Vec<Vec<f64>>> = inputs
            .iter()
            .map(|xs| {
                let feats: Vec<Vec<f64>> = xs.iter().map(|x| phi.eval(x)).collect();
                let mut uniq = HashSet::new();
                heads
                    .iter()
                    .map(|w| {
                        feats
                            .iter()
                            .map(|q| crate::linalg::dot(q, w).clamp(-cap, cap))
                            .collect::<Vec<f64>>()
                    })
                    .filter(|t| {
                        uniq.insert(t.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<_>>())
                    })
                    .collect()
            })
            .collect();
        let mut choice = vec![0usize; tables.len()];
        loop {
            let member: Vec<Vec<f64>> = choice
                .iter()
                .enumerate()
                .map(|(i, &c)| tables[i][c].clone())
                .collect();
            let key: Vec<u64> = member
                .iter()
                .flatten()
                .map(|v| (v + 0.0).to_bits())
                .collect();
            if seen.insert(key) {
                members.push(member);
            }
            let mut p = tables.len();
            let mut done = true;
            while p > 0 {
                p -= 1;
                choice[p] += 1;
                if choice[p] < tables[p].len() {
                    done = false;
                    break;
                }
                choice[p] = 0;
            }
            if done {
                break;
            }
        }
    }
    Ok(members)
}

/// Whether `x` is ε-dependent on the points `xs`: every pair of functions
/// within `eps` of each other on `xs` is within `eps` at `x`.
pub fn is_eps_dependent(x: usize, xs: &[usize], cls: &ScalarClass, eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(CoreError::Parameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    check_points(cls, std::iter::once(&x).chain(xs))?;
    for a in 0..cls.values.len() {
        for b in a + 1..cls.values.len() {
            let (fa, fb) = (&cls.values[a], &cls.values[b]);
            let sq: f64 = xs.iter().map(|&p| (fa[p] - fb[p]).powi(2)).sum();
            if sq.sqrt() <= eps && (fa[x] - fb[x]).abs() > eps {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn check_points<'a>(cls: &ScalarClass, points: impl Iterator<Item = &'a usize>) -> Result<()> {
    for &p in points {
        if p >= cls.domain {
            return Err(CoreError::Dimension(format!(
                "point {p} outside a domain of {}",
                cls.domain
            )));
        }
    }
    Ok(())
}

/// Sorted, disjoint half-open intervals `[lo, hi)`.
type Intervals = Vec<(f64, f64)>;

fn normalize(mut v: Intervals) -> Intervals {
    v.retain(|(lo, hi)| lo < hi);
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Intervals = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn intersect(a: &Intervals, b: &Intervals) -> Intervals {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn covers(outer: &Intervals, inner: &Intervals) -> bool {
    inner
        .iter()
        .all(|&(lo, hi)| outer.iter().any(|&(a, b)| a <= lo && hi <= b))
}

struct Search<'a> {
    diffs: &'a [Vec<f64>],
    domain: usize,
    best: usize,
    /// `sq[depth][v]`: squared norm of difference `v` over the first `depth`
    /// sequence points.
    sq: Vec<Vec<f64>>,
    /// Admissible-ε′ sets already explored per set of used points.
    visited: HashMap<u32, Vec<Intervals>>,
}

impl Search<'_> {
    fn admissible(&self, depth: usize, x: usize, current: &Intervals) -> Intervals {
        let (lo_c, hi_c) = (current[0].0, current[current.len() - 1].1);
        let norms = &self.sq[depth];
        let mut raw = Vec::new();
        for (v, d) in self.diffs.iter().enumerate() {
            let gap = d[x].abs();
            if gap <= lo_c {
                continue;
            }
            let n = norms[v].sqrt();
            if n >= hi_c || n >= gap {
                continue;
            }
            raw.push((n, gap));
        }
        intersect(current, &normalize(raw))
    }

    fn dfs(&mut self, depth: usize, used: u32, current: Intervals) {
        if depth > self.best {
            self.best = depth;
        }
        if depth + (self.domain - depth) <= self.best {
            return;
        }
        let seen = self.visited.entry(used).or_default();
        if seen.iter().any(|s| covers(s, &current)) {
            return;
        }
        seen.push(current.clone());
        for x in 0..self.domain {
            if used & (1 << x) != 0 {
                continue;
            }
            let next = self.admissible(depth, x, &current);
            if next.is_empty() {
                continue;
            }
            let (head, tail) = self.sq.split_at_mut(depth + 1);
            for (v, d) in self.diffs.iter().enumerate() {
                tail[0][v] = head[depth][v] + d[x] * d[x];
            }
            self.dfs(depth + 1, used | (1 << x), next);
            if self.best == self.domain {
                return;
            }
        }
    }
}

/// Length of the longest sequence of domain points each ε′-independent of
/// its predecessors, for some single ε′ ≥ `eps`, by depth-first search.
pub fn eluder_dimension_exhaustive(cls: &ScalarClass, eps: f64) -> Result<usize> {
    eluder_dimension_exhaustive_guarded(cls, eps, DEFAULT_DOMAIN_GUARD)
}

pub fn eluder_dimension_exhaustive_guarded(
    cls: &ScalarClass,
    eps: f64,
    guard: usize,
) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(CoreError::Parameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if cls.domain > guard.min(31) {
        return Err(CoreError::Size(format!(
            "domain of {} points exceeds the exhaustive-search guard of {guard}",
            cls.domain
        )));
    }
    let diffs = cls.differences();
    let mut search = Search {
        diffs: &diffs,
        domain: cls.domain,
        best: 0,
        sq: vec![vec![0.0; diffs.len()]; cls.domain + 1],
        visited: HashMap::new(),
    };
    search.dfs(0, 0, vec![(eps, f64::INFINITY)]);
    Ok(search.best)
}

/// Greedy lower bound at the fixed scale `eps`: repeatedly append the first
/// point (in domain order) that is ε-independent of the sequence so far.
pub fn eluder_dimension_greedy(cls: &ScalarClass, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(CoreError::Parameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut seq: Vec<usize> = Vec::new();
    loop {
        let mut next = None;
        for x in 0..cls.domain {
            if !seq.contains(&x) && !is_eps_dependent(x, &seq, cls, eps)? {
                next = Some(x);
                break;
            }
        }
        match next {
            Some(x) => seq.push(x),
            None => return Ok(seq.len()),
        }
    }
}

/// `{θᵀx}` for θ on a `step` grid of the unit ball, on the basis vectors.
pub fn linear_grid_class(d: usize, step: f64) -> Result<ScalarClass> {
    if d == 0 || !(step > 0.0 && step <= 1.0) {
        return Err(CoreError::Parameter(format!("need d ≥ 1 and step in (0, 1], got d={d}, step={step}")));
    }
    let n = (1.0 / step).round() as i64;
    let mut values = Vec::new();
    let mut idx = vec![-n; d];
    loop {
        let theta: Vec<f64> = idx.iter().map(|&j| j as f64 * step).collect();
        if theta.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12 {
            values.push(theta);
        }
        let mut p = d;
        let mut done = true;
        while p > 0 {
            p -= 1;
            idx[p] += 1;
            if idx[p] <= n {
                done = false;
                break;
            }
            idx[p] = -n;
        }
        if done {
            break;
        }
    }
    ScalarClass::new(values)
}
