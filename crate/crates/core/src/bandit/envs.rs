//! Bandit environment builders.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BanditInstance, ContextSampler, Noise};
use crate::error::{CoreError, Result};
use crate::function_class::{
    FeatureClass, FnFeature, MultiheadFunction, SharedFeature, FEATURE_NORM_TOL,
};
use crate::rng::{stream, Purpose, StreamRng};

/// Settings of the latent-category bandit.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCategoryConfig {
    pub categories: usize,
    /// Observations offered per context.
    pub actions: usize,
    pub tasks: usize,
    /// Feature dimension; the decoders are one-hot, so this must equal
    /// `categories`.
    pub k: usize,
    /// Number of wrong decoders in the class besides the true one.
    pub decoys: usize,
    /// Category pairs each decoy cannot tell apart.
    pub merges_per_decoy: usize,
    /// Standard deviation of the Gaussian perturbation of prototypes.
    pub perturbation: f64,
    pub noise_sigma: f64,
}

impl Default for LatentCategoryConfig {
    fn default() -> Self {
        Self {
            categories: 10,
            actions: 5,
            tasks: 1,
            k: 10,
            decoys: 7,
            merges_per_decoy: 1,
            perturbation: 0.1,
            noise_sigma: 0.01,
        }
    }
}

/// Draws `actions` distinct categories and perturbs their prototypes.
#[derive(Debug, Clone)]
pub struct LatentContexts {
    pub categories: usize,
    pub actions: usize,
    pub perturbation: f64,
}

impl LatentContexts {
    fn observation(&self, category: usize, rng: &mut StreamRng) -> Vec<f64> {
        (0..self.categories)
            .map(|j| {
                let e: f64 = StandardNormal.sample(rng);
                f64::from(u8::from(j == category)) + self.perturbation * e
            })
            .collect()
    }

    /// Categories and observations of one context.
    pub fn draw(&self, seed: u64, task: usize, t: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
        let mut rng = stream(seed, Purpose::Context, task, t as u64);
        let cats = sample(&mut rng, self.categories, self.actions).into_vec();
        let obs = cats
            .iter()
            .map(|&c| self.observation(c, &mut rng))
            .collect();
        (cats, obs)
    }
}

impl ContextSampler<Vec<f64>> for LatentContexts {
    fn actions(&self, seed: u64, task: usize, t: usize) -> Result<Vec<Vec<f64>>> {
        Ok(self.draw(seed, task, t).1)
    }
}

/// Nearest-prototype decoding: prototypes are the basis vectors, so the
/// nearest one is the largest coordinate (lowest index on ties).
pub fn decode(x: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..x.len() {
        if x[j] > x[best] {
            best = j;
        }
    }
    best
}

fn decoder(relabel: Vec<usize>, label: String) -> SharedFeature<Vec<f64>> {
    let k = relabel.len();
    Arc::new(FnFeature::new(
        k,
        label,
        move |x: &Vec<f64>, out: &mut [f64]| {
            out.fill(0.0);
            out[relabel[decode(x)]] = 1.0;
        },
    ))
}

/// A latent-category bandit together with its construction details.
#[derive(Clone)]
pub struct LatentCategoryBandit {
    pub instance: BanditInstance<Vec<f64>>,
    pub config: LatentCategoryConfig,
    pub contexts: LatentContexts,
    /// Category relabeling of every class member (identity for the truth).
    pub relabelings: Vec<Vec<usize>>,
    /// `category_rewards[(c, i)]`: mean reward of category `c` in task `i`.
    pub category_rewards: DMatrix<f64>,
}

impl LatentCategoryBandit {
    /// `n` observations labelled with their category, cycling through the
    /// categories so every category is represented once `n ≥ categories`.
    pub fn labelled_sample(&self, n: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
        (0..n)
            .map(|j| {
                let c = j % self.config.categories;
                let mut rng = stream(seed, Purpose::Sample, 0, j as u64);
                (self.contexts.observation(c, &mut rng), c)
            })
            .collect()
    }
}

/// Each context offers observations of distinct categories; task `i` pays
/// `σ_i(category)` plus Gaussian noise. The class holds the true decoder and
/// decoys that merge category pairs, in a seed-dependent order.
pub fn make_latent_category_bandit(
    cfg: &LatentCategoryConfig,
    seed: u64,
) -> Result<LatentCategoryBandit> {
    if cfg.categories < 2 || cfg.actions < 2 {
        return Err(CoreError::Parameter(
            "need at least 2 categories and 2 actions".into(),
        ));
    }
    if cfg.k != cfg.categories {
        return Err(CoreError::Parameter(format!(
            "one-hot decoders need k = categories (k = {}, categories = {})",
            cfg.k, cfg.categories
        )));
    }
    if cfg.actions > cfg.categories {
        return Err(CoreError::Parameter(
            "actions per context cannot exceed categories".into(),
        ));
    }
    if cfg.tasks == 0 {
        return Err(CoreError::Parameter("need at least one task".into()));
    }
    if !(cfg.perturbation >= 0.0) {
        return Err(CoreError::Parameter(
            "perturbation must be nonnegative".into(),
        ));
    }
    let c = cfg.categories;
    let mut rng = stream(seed, Purpose::Instance, 0, 1);
    let true_index = rng.random_range(0..=cfg.decoys);
    let mut relabelings = Vec::with_capacity(cfg.decoys + 1);
    for idx in 0..=cfg.decoys {
        let mut map: Vec<usize> = (0..c).collect();
        if idx != true_index {
            for _ in 0..cfg.merges_per_decoy.max(1) {
                let pair = sample(&mut rng, c, 2).into_vec();
                let (keep, gone) = (map[pair[0]], map[pair[1]]);
                for l in map.iter_mut() {
                    if *l == gone {
                        *l = keep;
                    }
                }
            }
        }
        relabelings.push(map);
    }
    let members = relabelings
        .iter()
        .enumerate()
        .map(|(i, m)| {
            decoder(
                m.clone(),
                if i == true_index {
                    "true decoder".into()
                } else {
                    format!("decoy {i}")
                },
            )
        })
        .collect();
    let class = FeatureClass::new(members, Some(true_index))?;

    let mut category_rewards = DMatrix::zeros(c, cfg.tasks);
    for i in 0..cfg.tasks {
        let mut r = stream(seed, Purpose::Instance, i, 0);
        for j in 0..c {
            category_rewards[(j, i)] = r.random::<f64>();
        }
    }
    let truth = MultiheadFunction::new(true_index, category_rewards.clone());
    let contexts = LatentContexts {
        categories: c,
        actions: cfg.actions,
        perturbation: cfg.perturbation,
    };
    let instance = BanditInstance::new(
        class,
        truth,
        Arc::new(contexts.clone()),
        Noise::Gaussian {
            sigma: cfg.noise_sigma,
        },
    )?;
    Ok(LatentCategoryBandit {
        instance,
        config: cfg.clone(),
        contexts,
        relabelings,
        category_rewards,
    })
}

/// Draws `actions` distinct points of a fixed pool.
#[derive(Debug, Clone)]
pub struct PoolContexts {
    pub pool: Arc<Vec<Vec<f64>>>,
    pub actions: usize,
}

impl ContextSampler<Vec<f64>> for PoolContexts {
    fn actions(&self, seed: u64, task: usize, t: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = stream(seed, Purpose::Context, task, t as u64);
        Ok(sample(&mut rng, self.pool.len(), self.actions)
            .into_iter()
            .map(|j| self.pool[j].clone())
            .collect())
    }
}

fn unit_ball_point(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = crate::linalg::norm(&g).max(f64::MIN_POSITIVE);
    let radius = rng.random::<f64>().powf(1.0 / dim as f64);
    g.iter().map(|v| v / n * radius).collect()
}

/// Linear-representation bandit: member `j` maps `x ↦ B_j x`, task `i`
/// pays `θ_iᵀ B* x` plus noise with `θ_i` drawn uniformly from the unit ball.
pub fn make_linear_rep_bandit(
    pool: Vec<Vec<f64>>,
    matrices: Vec<DMatrix<f64>>,
    true_index: usize,
    tasks: usize,
    actions: usize,
    noise: Noise,
    seed: u64,
) -> Result<BanditInstance<Vec<f64>>> {
    let first = matrices
        .first()
        .ok_or_else(|| CoreError::Construction("empty matrix class".into()))?;
    let (k, p) = first.shape();
    if matrices.iter().any(|m| m.shape() != (k, p)) || pool.iter().any(|x| x.len() != p) {
        return Err(CoreError::Construction(
            "matrix and pool dimensions disagree".into(),
        ));
    }
    if pool.is_empty() || actions == 0 || actions > pool.len() || tasks == 0 {
        return Err(CoreError::Construction(
            "need a non-empty pool, 1..=pool actions and a task".into(),
        ));
    }
    for (j, b) in matrices.iter().enumerate() {
        for x in &pool {
            let q = b * nalgebra::DVector::from_column_slice(x);
            if q.norm() > 1.0 + FEATURE_NORM_TOL {
                return Err(CoreError::Construction(format!(
                    "member {j} maps a pool point outside the unit ball"
                )));
            }
        }
    }
    let members: Vec<SharedFeature<Vec<f64>>> = matrices
        .into_iter()
        .enumerate()
        .map(|(j, b)| {
            let f: SharedFeature<Vec<f64>> = Arc::new(FnFeature::new(
                k,
                format!("matrix {j}"),
                move |x: &Vec<f64>, out: &mut [f64]| {
                    for (r, o) in out.iter_mut().enumerate() {
                        *o = (0..x.len()).map(|c| b[(r, c)] * x[c]).sum();
                    }
                },
            ));
            f
        })
        .collect();
    let class = FeatureClass::new(members, Some(true_index))?;
    let mut heads = DMatrix::zeros(k, tasks);
    for i in 0..tasks {
        let w = unit_ball_point(k, &mut stream(seed, Purpose::Instance, i, 0));
        heads.column_mut(i).copy_from_slice(&w);
    }
    let truth = MultiheadFunction::new(true_index, heads);
    BanditInstance::new(
        class,
        truth,
        Arc::new(PoolContexts {
            pool: Arc::new(pool),
            actions,
        }),
        noise,
    )
}

/// Random pool on the unit sphere and `members` random `k×p` matrices with
/// orthonormal rows (so features stay in the unit ball); the truth sits at
/// a seed-dependent index.
#[allow(clippy::too_many_arguments)]
pub fn random_linear_rep_bandit(
    p: usize,
    k: usize,
    pool_size: usize,
    members: usize,
    tasks: usize,
    actions: usize,
    noise: Noise,
    seed: u64,
) -> Result<BanditInstance<Vec<f64>>> {
    if k == 0 || k > p || members == 0 {
        return Err(CoreError::Parameter(
            "need 1 ≤ k ≤ p and at least one member".into(),
        ));
    }
    let mut rng = stream(seed, Purpose::Instance, 0, 2);
    let pool: Vec<Vec<f64>> = (0..pool_size)
        .map(|_| {
            let g: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = crate::linalg::norm(&g).max(f64::MIN_POSITIVE);
            g.iter().map(|v| v / n).collect()
        })
        .collect();
    let matrices = (0..members)
        .map(|_| {
            let g = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(&mut rng));
            g.qr().q().transpose()
        })
        .collect();
    let true_index = rng.random_range(0..members);
    make_linear_rep_bandit(pool, matrices, true_index, tasks, actions, noise, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{erm_fit, total_loss};
    use crate::function_class::MultitaskHistory;

    #[test]
    fn rejects_k_mismatch() {
        let cfg = LatentCategoryConfig {
            k: 5,
            ..Default::default()
        };
        assert!(matches!(
            make_latent_category_bandit(&cfg, 1),
            Err(CoreError::Parameter(_))
        ));
    }

    #[test]
    fn default_noise_level() {
        let b = make_latent_category_bandit(&LatentCategoryConfig::default(), 3).unwrap();
        assert_eq!(b.instance.noise, Noise::Gaussian { sigma: 0.01 });
        assert_eq!(b.instance.class.len(), 8);
        assert!(b.instance.class.true_index().unwrap() < 8);
    }

    #[test]
    fn exact_prototypes_give_zero_loss_erm() {
        let cfg = LatentCategoryConfig {
            perturbation: 0.0,
            noise_sigma: 0.0,
            tasks: 2,
            ..Default::default()
        };
        let b = make_latent_category_bandit(&cfg, 11).unwrap();
        let inst = &b.instance;
        let mut h = MultitaskHistory::new(2);
        for (x, _) in b.labelled_sample(cfg.categories, 5) {
            for i in 0..2 {
                let r = inst.mean_reward(i, &x);
                h.push(i, x.clone(), r).unwrap();
            }
        }
        let f = erm_fit(&h, &inst.class, 1e-9).unwrap();
        assert_eq!(Some(f.phi_index), inst.class.true_index());
        assert!(total_loss(&f, &h, &inst.class).unwrap() < 1e-12);
    }

    #[test]
    fn tasks_prefer_different_categories() {
        let cfg = LatentCategoryConfig {
            perturbation: 0.0,
            tasks: 2,
            ..Default::default()
        };
        let b = make_latent_category_bandit(&cfg, 7).unwrap();
        let col = |i: usize| {
            b.category_rewards
                .column(i)
                .iter()
                .copied()
                .collect::<Vec<f64>>()
        };
        let best = |v: &[f64]| (0..v.len()).max_by(|&a, &c| v[a].total_cmp(&v[c])).unwrap();
        let (b0, b1) = (best(&col(0)), best(&col(1)));
        assert_ne!(col(0), col(1));
        assert_ne!(
            b0, b1,
            "seed chosen so the tasks' favourite categories differ"
        );
        let obs: Vec<Vec<f64>> = [b0, b1]
            .iter()
            .map(|&c| {
                (0..cfg.categories)
                    .map(|j| f64::from(u8::from(j == c)))
                    .collect()
            })
            .collect();
        assert_eq!(b.instance.best_action(0, &obs).0, 0);
        assert_eq!(b.instance.best_action(1, &obs).0, 1);
    }

    #[test]
    fn decoys_are_not_injective() {
        let b = make_latent_category_bandit(&LatentCategoryConfig::default(), 2).unwrap();
        let t = b.instance.class.true_index().unwrap();
        for (i, m) in b.relabelings.iter().enumerate() {
            let mut s = m.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len() == m.len(), i == t);
        }
    }

    #[test]
    fn linear_rep_norm_violation() {
        let pool = vec![vec![1.0, 0.0]];
        let m = vec![DMatrix::from_row_slice(1, 2, &[2.0, 0.0])];
        assert!(matches!(
            make_linear_rep_bandit(pool, m, 0, 1, 1, Noise::None, 0),
            Err(CoreError::Construction(_))
        ));
    }

    #[test]
    fn identity_matrix_is_identity_features() {
        let pool = vec![vec![0.6, 0.8], vec![1.0, 0.0]];
        let inst = make_linear_rep_bandit(
            pool.clone(),
            vec![DMatrix::identity(2, 2)],
            0,
            1,
            2,
            Noise::None,
            0,
        )
        .unwrap();
        for x in &pool {
            assert_eq!(inst.class.member(0).eval(x), *x);
        }
    }

    #[test]
    fn linear_rep_truth_recoverable() {
        let k = 2;
        let inst = random_linear_rep_bandit(4, k, 20, 4, 2, 2, Noise::None, 9).unwrap();
        let mut h = MultitaskHistory::new(2);
        let pool = inst.contexts.actions(0, 0, 1).unwrap();
        assert_eq!(pool.len(), 2);
        for t in 1..=5 * k {
            for i in 0..2 {
                for x in inst.contexts.actions(0, i, t).unwrap() {
                    let r = inst.mean_reward(i, &x);
                    h.push(i, x, r).unwrap();
                }
            }
        }
        let f = erm_fit(&h, &inst.class, 1e-9).unwrap();
        assert_eq!(Some(f.phi_index), inst.class.true_index());
    }
}
