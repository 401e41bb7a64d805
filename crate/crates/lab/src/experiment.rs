//! Experiment orchestration: environment construction, seeded runs,
//! parameter sweeps and Monte Carlo containment.

use mtrl_core::bandit::{
    eps_greedy_run, gfucb_run, gfucb_train, make_latent_category_bandit, random_linear_rep_bandit, BanditInstance,
    EpsSchedule, GfucbConfig, RegretTrace,
};
use mtrl_core::eluder::{
    eluder_dimension_exhaustive_guarded, eluder_dimension_greedy, linear_grid_class, multihead_grid_members,
    ScalarClass,
};
use mtrl_core::mdp::{make_grid_maze, make_random_linear_mdp, mtlsvi_run, MazeLayout, MdpConfig, MdpInstance};
use mtrl_core::rng::{run_seed, stream, Purpose};
use mtrl_core::transfer::{extract_representation, linucb_transfer_run, synthesize_target_task, LinUcbConfig};
use mtrl_core::BetaMode;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{default_layout, gaussian, uniform, EluderClassKind, EnvConfig, ExperimentConfig, Kind};
use crate::error::{LabError, Result};

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Setting {
    pub tasks: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Gfucb,
    EpsGreedy,
    Mtlsvi,
    Pretrained,
    Decoy,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Gfucb => "gfucb",
            Algorithm::EpsGreedy => "eps_greedy",
            Algorithm::Mtlsvi => "mtlsvi",
            Algorithm::Pretrained => "pretrained",
            Algorithm::Decoy => "decoy",
        }
    }
}

/// All traces of one seeded run; the first is the primary algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub key: String,
    pub setting: Setting,
    pub run: usize,
    pub seed: u64,
    pub traces: Vec<(Algorithm, RegretTrace)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub kind: Kind,
    /// Sweep keys in sorted order with their settings.
    pub keys: Vec<(String, Setting)>,
    pub runs: Vec<RunOutput>,
}

impl ExperimentOutput {
    /// Identifier of a run in the trace file.
    pub fn run_id(&self, run: &RunOutput) -> String {
        if self.keys.len() == 1 {
            run.run.to_string()
        } else {
            format!("{}/{}", run.key, run.run)
        }
    }
}

pub fn build_bandit(env: &EnvConfig, tasks: usize, seed: u64) -> Result<BanditInstance<Vec<f64>>> {
    match env {
        EnvConfig::Latent { .. } => {
            let cfg = env.latent_config(tasks).expect("latent environment");
            Ok(make_latent_category_bandit(&cfg, seed)?.instance)
        }
        &EnvConfig::LinearRep { p, k, pool, members, actions, noise_sigma } => {
            Ok(random_linear_rep_bandit(p, k, pool, members, tasks, actions, gaussian(noise_sigma), seed)?)
        }
        _ => Err(LabError::Config("not a bandit environment".into())),
    }
}

pub fn build_mdp(env: &EnvConfig, tasks: usize, seed: u64) -> Result<MdpInstance> {
    match env {
        EnvConfig::Maze { decoys, aliased_states, noise, layouts } => {
            let layouts: Vec<MazeLayout> = match layouts {
                Some(l) => l.iter().map(MazeLayout::from).collect(),
                None => (0..tasks).map(default_layout).collect(),
            };
            Ok(make_grid_maze(&layouts, *decoys, *aliased_states, uniform(*noise), seed)?)
        }
        &EnvConfig::LinearMdp { k, states, actions, horizon, decoys, noise } => {
            Ok(make_random_linear_mdp(k, states, actions, horizon, tasks, decoys, uniform(noise), seed)?)
        }
        _ => Err(LabError::Config("not an MDP environment".into())),
    }
}

pub fn gfucb_config(cfg: &ExperimentConfig) -> Result<GfucbConfig> {
    Ok(GfucbConfig {
        delta: cfg.delta,
        alpha: cfg.alpha.resolve()?,
        ridge: cfg.ridge,
        strategy: cfg.strategy.into(),
        beta: cfg.beta.into(),
        tie_break: cfg.tie_break(),
        diagnostics: cfg.diagnostics,
    })
}

pub fn mdp_config(cfg: &ExperimentConfig) -> MdpConfig {
    MdpConfig {
        delta: cfg.delta,
        ridge: cfg.ridge,
        strategy: cfg.strategy.into(),
        beta: cfg.beta.into(),
        tie_break: cfg.tie_break(),
        ibe: cfg.ibe,
    }
}

/// Runs every algorithm of `cfg.kind` once at `setting` with `seed`.
pub fn run_once(cfg: &ExperimentConfig, setting: Setting, seed: u64) -> Result<Vec<(Algorithm, RegretTrace)>> {
    let env = cfg.env();
    match cfg.kind {
        Kind::Bandit => {
            let inst = build_bandit(&env, setting.tasks, seed)?;
            let mut out = vec![(Algorithm::Gfucb, gfucb_run(&inst, setting.horizon, &gfucb_config(cfg)?, seed)?)];
            if let Some(b) = &cfg.baseline {
                let trace = eps_greedy_run(&inst, setting.horizon, EpsSchedule::Constant(b.epsilon), cfg.ridge, seed)?;
                out.push((Algorithm::EpsGreedy, trace));
            }
            Ok(out)
        }
        Kind::Mdp => {
            let inst = build_mdp(&env, setting.tasks, seed)?;
            Ok(vec![(Algorithm::Mtlsvi, mtlsvi_run(&inst, setting.horizon, &mdp_config(cfg), seed)?.trace)])
        }
        Kind::Transfer => transfer_once(cfg, setting, seed),
        Kind::Eluder | Kind::Diagnostics => {
            Err(LabError::Config(format!("{:?} experiments produce no regret traces", cfg.kind)))
        }
    }
}

/// Pretrain GFUCB for `setting.horizon` steps, freeze its representation
/// and run LinUCB on the mixture task; optionally also on a random decoy.
fn transfer_once(cfg: &ExperimentConfig, setting: Setting, seed: u64) -> Result<Vec<(Algorithm, RegretTrace)>> {
    let tcfg = cfg.transfer.clone().unwrap_or_default();
    let inst = build_bandit(&cfg.env(), setting.tasks, seed)?;
    let gcfg = GfucbConfig { diagnostics: false, ..gfucb_config(cfg)? };
    let outcome = gfucb_train(&inst, setting.horizon, &gcfg, seed)?;
    let frozen = extract_representation(&outcome, &inst.class)?;
    let weights = tcfg.weights(setting.tasks)?;
    let task = synthesize_target_task(&inst, frozen.phi.clone(), &weights, tcfg.bound)?;
    let lcfg = LinUcbConfig { lambda_reg: tcfg.lambda, delta: cfg.delta, bonus_scale: tcfg.bonus_scale };
    let mut out = vec![(Algorithm::Pretrained, linucb_transfer_run(&task, tcfg.steps, &lcfg, seed)?)];
    if tcfg.decoy_baseline && inst.class.len() > 1 {
        let decoy = decoy_index(inst.class.len(), frozen.phi_index, seed);
        let task = synthesize_target_task(&inst, inst.class.member(decoy).clone(), &weights, tcfg.bound)?;
        out.push((Algorithm::Decoy, linucb_transfer_run(&task, tcfg.steps, &lcfg, seed)?));
    }
    Ok(out)
}

/// A uniformly random member index other than `exclude`.
pub fn decoy_index(members: usize, exclude: usize, seed: u64) -> usize {
    let j = stream(seed, Purpose::Instance, 0, 9).random_range(0..members - 1);
    if j >= exclude {
        j + 1
    } else {
        j
    }
}

/// Sweep points in sorted order with their keys. Dimensions without a
/// sweep list use the base value; the key names only swept dimensions,
/// plus `tasks` always.
pub fn settings(cfg: &ExperimentConfig, sweep: bool) -> Result<Vec<(String, Setting)>> {
    let base = Setting { tasks: cfg.tasks, horizon: cfg.horizon };
    let (tasks, horizons) = match (&cfg.sweep, sweep) {
        (Some(s), true) => (
            if s.tasks.is_empty() { vec![base.tasks] } else { s.tasks.clone() },
            if s.horizon.is_empty() { vec![base.horizon] } else { s.horizon.clone() },
        ),
        (None, true) => return Err(LabError::Config("sweep needs a [sweep] section".into())),
        (_, false) => (vec![base.tasks], vec![base.horizon]),
    };
    let mut points: Vec<Setting> =
        tasks.iter().flat_map(|&t| horizons.iter().map(move |&h| Setting { tasks: t, horizon: h })).collect();
    points.sort();
    points.dedup();
    let swept_horizon = horizons.len() > 1;
    if let EnvConfig::Maze { layouts: Some(l), .. } = cfg.env() {
        if points.iter().any(|p| p.tasks != l.len()) {
            return Err(LabError::Config("explicit maze layouts fix the number of tasks".into()));
        }
    }
    Ok(points
        .into_iter()
        .map(|p| {
            let key = if swept_horizon {
                format!("tasks={},horizon={}", p.tasks, p.horizon)
            } else {
                format!("tasks={}", p.tasks)
            };
            (key, p)
        })
        .collect())
}

/// Runs `f` on every job with `workers` threads, preserving job order.
pub fn parallel_map<J, T, F>(jobs: &[J], workers: usize, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return jobs.iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

/// Runs `cfg.runs` seeded repetitions at every setting.
pub fn run_settings(cfg: &ExperimentConfig, keys: Vec<(String, Setting)>, workers: usize) -> Result<ExperimentOutput> {
    let jobs: Vec<(usize, usize)> = (0..keys.len()).flat_map(|k| (0..cfg.runs).map(move |r| (k, r))).collect();
    let runs = parallel_map(&jobs, workers, |&(k, r)| {
        let (key, setting) = &keys[k];
        let seed = run_seed(cfg.seed, r as u64);
        Ok(RunOutput { key: key.clone(), setting: *setting, run: r, seed, traces: run_once(cfg, *setting, seed)? })
    })?;
    Ok(ExperimentOutput { kind: cfg.kind, keys, runs })
}

/// The configured setting only.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    run_settings(cfg, settings(cfg, false)?, workers)
}

/// Every point of the `[sweep]` grid.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    run_settings(cfg, settings(cfg, true)?, workers)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub runs: usize,
    pub contained: usize,
}

impl Containment {
    pub fn frequency(&self) -> f64 {
        self.contained as f64 / self.runs as f64
    }
}

/// Fraction of bandit runs whose confidence set contained the truth at
/// every step.
pub fn containment_monte_carlo(cfg: &ExperimentConfig, n_runs: usize, workers: usize) -> Result<Containment> {
    if cfg.kind != Kind::Bandit {
        return Err(LabError::Config("containment needs a bandit experiment".into()));
    }
    if n_runs == 0 {
        return Err(LabError::Config("containment needs at least one run".into()));
    }
    let gcfg = GfucbConfig { diagnostics: true, ..gfucb_config(cfg)? };
    let env = cfg.env();
    let runs: Vec<usize> = (0..n_runs).collect();
    let flags = parallel_map(&runs, workers, |&r| {
        let seed = run_seed(cfg.seed, r as u64);
        let inst = build_bandit(&env, cfg.tasks, seed)?;
        Ok(gfucb_run(&inst, cfg.horizon, &gcfg, seed)?.all_contained() == Some(true))
    })?;
    Ok(Containment { runs: n_runs, contained: flags.iter().filter(|&&c| c).count() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EluderRow {
    pub eps: f64,
    pub functions: usize,
    pub domain: usize,
    pub exhaustive: usize,
    pub greedy: usize,
}

/// `step`-spaced grid of `[-bound, bound]` containing 0.
pub fn symmetric_grid(step: f64, bound: f64) -> Vec<f64> {
    let n = (bound / step + 1e-9).floor() as i64;
    (-n..=n).map(|j| j as f64 * step).collect()
}

/// The scalar class of the eluder experiment.
pub fn eluder_class(cfg: &ExperimentConfig) -> Result<ScalarClass> {
    let e = cfg.eluder.as_ref().ok_or_else(|| LabError::Config("eluder needs an [eluder] section".into()))?;
    match e.class {
        EluderClassKind::LinearGrid => Ok(linear_grid_class(e.dim, e.step)?),
        EluderClassKind::Latent => {
            let env = cfg.env();
            let lcfg = env
                .latent_config(cfg.tasks)
                .ok_or_else(|| LabError::Config("latent eluder class needs the latent environment".into()))?;
            let inst = make_latent_category_bandit(&lcfg, cfg.seed)?;
            let prototypes: Vec<Vec<f64>> = (0..lcfg.categories)
                .map(|c| (0..lcfg.k).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
                .collect();
            let inputs = vec![prototypes; cfg.tasks];
            let bound = (lcfg.k as f64).sqrt();
            let grid = symmetric_grid(e.step, 1.0);
            let members = multihead_grid_members(&inst.instance.class, &inputs, &grid, bound, 1.0)?;
            Ok(ScalarClass::summed_heads(&members)?)
        }
    }
}

pub fn eluder_experiment(cfg: &ExperimentConfig) -> Result<Vec<EluderRow>> {
    let e = cfg.eluder.as_ref().ok_or_else(|| LabError::Config("eluder needs an [eluder] section".into()))?;
    let cls = eluder_class(cfg)?;
    let mut eps = e.eps.clone();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    eps.iter()
        .map(|&eps| {
            Ok(EluderRow {
                eps,
                functions: cls.functions(),
                domain: cls.domain(),
                exhaustive: eluder_dimension_exhaustive_guarded(&cls, eps, e.guard)?,
                greedy: eluder_dimension_greedy(&cls, eps)?,
            })
        })
        .collect()
}

/// `true` when the radius is the theory formula.
pub fn uses_theory_beta(cfg: &ExperimentConfig) -> bool {
    BetaMode::from(cfg.beta) == BetaMode::Theory
}
