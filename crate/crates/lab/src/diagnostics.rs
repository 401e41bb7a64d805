//! Category-kernel and bonus-versus-error diagnostics of trained models.

use mtrl_core::bandit::{gfucb_train, make_latent_category_bandit, BanditInstance, GfucbConfig, GfucbOutcome, LatentCategoryBandit};
use mtrl_core::rng::run_seed;
use mtrl_core::{CoreError, FeatureMap};
use nalgebra::DMatrix;

use crate::config::{DiagnosticsConfig, ExperimentConfig};
use crate::error::{LabError, Result};
use crate::experiment::{gfucb_config, parallel_map};
use crate::median;

/// `C(i, j) = ⟨T_i, T_j⟩` over category templates `T_i` (mean features).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub c: DMatrix<f64>,
    pub templates: Vec<Vec<f64>>,
}

fn group_by_category<'a, X>(dataset: &'a [(X, usize)], categories: usize) -> Result<Vec<Vec<&'a X>>> {
    let mut groups: Vec<Vec<&X>> = vec![Vec::new(); categories];
    for (x, c) in dataset {
        if *c >= categories {
            return Err(CoreError::Data(format!("category {c} out of range for {categories}")).into());
        }
        groups[*c].push(x);
    }
    if let Some(c) = groups.iter().position(Vec::is_empty) {
        return Err(CoreError::Data(format!("category {c} has no samples")).into());
    }
    Ok(groups)
}

/// Template form: mean feature vector per category, then inner products.
pub fn kernel_matrix<X>(phi: &dyn FeatureMap<X>, dataset: &[(X, usize)], categories: usize) -> Result<KernelMatrix> {
    let groups = group_by_category(dataset, categories)?;
    let k = phi.dim();
    let templates: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut t = vec![0.0; k];
            for x in g {
                for (acc, v) in t.iter_mut().zip(phi.eval(x)) {
                    *acc += v;
                }
            }
            t.iter_mut().for_each(|v| *v /= g.len() as f64);
            t
        })
        .collect();
    let c = DMatrix::from_fn(categories, categories, |i, j| {
        templates[i].iter().zip(&templates[j]).map(|(a, b)| a * b).sum()
    });
    Ok(KernelMatrix { c, templates })
}

/// Double-sum form: mean inner product over all cross-category pairs.
pub fn kernel_matrix_double_sum<X>(
    phi: &dyn FeatureMap<X>,
    dataset: &[(X, usize)],
    categories: usize,
) -> Result<DMatrix<f64>> {
    let groups = group_by_category(dataset, categories)?;
    let feats: Vec<Vec<Vec<f64>>> = groups.iter().map(|g| g.iter().map(|x| phi.eval(x)).collect()).collect();
    Ok(DMatrix::from_fn(categories, categories, |i, j| {
        let mut s = 0.0;
        for a in &feats[i] {
            for b in &feats[j] {
                s += a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
            }
        }
        s / (feats[i].len() * feats[j].len()) as f64
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusPoint {
    pub task: usize,
    /// `|f̂(x) − y|`.
    pub error: f64,
    /// Optimistic value minus `f̂(x)`.
    pub bonus: f64,
}

/// Prediction error and optimistic bonus of the trained center at every
/// heldout `(task, x, y)`.
pub fn bonus_vs_error<X: Clone>(
    outcome: &GfucbOutcome<X>,
    inst: &BanditInstance<X>,
    heldout: &[(usize, X, f64)],
) -> Result<Vec<BonusPoint>> {
    let set = outcome.confidence_set(inst)?;
    heldout
        .iter()
        .map(|(task, x, y)| {
            let fit = outcome.center.predict(&inst.class, *task, x);
            let upper = set.optimistic_value(*task, x)?;
            Ok(BonusPoint { task: *task, error: (fit - y).abs(), bonus: upper - fit })
        })
        .collect()
}

/// `n` labelled observations per task with their true mean reward.
pub fn latent_heldout(lb: &LatentCategoryBandit, n: usize, seed: u64) -> Vec<(usize, Vec<f64>, f64)> {
    let sample = lb.labelled_sample(n, seed);
    (0..lb.instance.tasks())
        .flat_map(|i| sample.iter().map(move |(x, _)| (i, x.clone(), lb.instance.mean_reward(i, x))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub training_size: usize,
    pub runs: usize,
    pub mean_bonus: f64,
    pub median_bonus: f64,
    pub mean_abs_error: f64,
    /// Fraction of heldout points with `bonus ≥ |error|`.
    pub covered: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsOutput {
    pub rows: Vec<DiagnosticsRow>,
    /// `(training size, run, point)`.
    pub points: Vec<(usize, usize, BonusPoint)>,
    /// Kernel of the learned representation after the longest training.
    pub kernel: KernelMatrix,
}

/// Seed of the heldout sample of a run, distinct from its training seed.
fn heldout_seed(seed: u64) -> u64 {
    run_seed(seed, u64::MAX)
}

/// GFUCB trained for each configured sample size; heldout bonuses and
/// errors, and the category kernel of the final representation.
pub fn diagnostics_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<DiagnosticsOutput> {
    let dcfg: DiagnosticsConfig = cfg.diagnostic.clone().unwrap_or_default();
    let lcfg = cfg
        .env()
        .latent_config(cfg.tasks)
        .ok_or_else(|| LabError::Config("diagnostics need the latent environment".into()))?;
    let gcfg = GfucbConfig { diagnostics: false, ..gfucb_config(cfg)? };
    let mut sizes = dcfg.training_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..cfg.runs).map(move |r| (n, r))).collect();
    let results = parallel_map(&jobs, workers, |&(n, r)| {
        let seed = run_seed(cfg.seed, r as u64);
        let lb = make_latent_category_bandit(&lcfg, seed)?;
        let outcome = gfucb_train(&lb.instance, n, &gcfg, seed)?;
        let heldout = latent_heldout(&lb, dcfg.heldout, heldout_seed(seed));
        let points = bonus_vs_error(&outcome, &lb.instance, &heldout)?;
        Ok((lb, outcome.center.phi_index, points))
    })?;

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n in &sizes {
        let mut bonuses = Vec::new();
        let mut errors = Vec::new();
        let mut covered = 0usize;
        for ((jn, r), (_, _, pts)) in jobs.iter().zip(&results) {
            if *jn != n {
                continue;
            }
            for p in pts {
                bonuses.push(p.bonus);
                errors.push(p.error);
                covered += usize::from(p.bonus >= p.error);
                points.push((n, *r, *p));
            }
        }
        let count = bonuses.len() as f64;
        rows.push(DiagnosticsRow {
            training_size: n,
            runs: cfg.runs,
            mean_bonus: bonuses.iter().sum::<f64>() / count,
            median_bonus: median(&bonuses),
            mean_abs_error: errors.iter().sum::<f64>() / count,
            covered: covered as f64 / count,
        });
    }
    let last = jobs.iter().position(|&(n, r)| n == *sizes.last().expect("non-empty") && r == 0).expect("job exists");
    let (lb, phi_index, _) = &results[last];
    let dataset = lb.labelled_sample(dcfg.heldout.max(lcfg.categories), heldout_seed(run_seed(cfg.seed, 0)));
    let kernel = kernel_matrix(lb.instance.class.member(*phi_index).as_ref(), &dataset, lcfg.categories)?;
    Ok(DiagnosticsOutput { rows, points, kernel })
}
