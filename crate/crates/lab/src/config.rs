//! Experiment configuration, read from TOML. Unknown keys are errors.

use std::path::{Path, PathBuf};

use mtrl_core::bandit::{LatentCategoryConfig, Noise};
use mtrl_core::mdp::MazeLayout;
use mtrl_core::{Alpha, BetaMode, Strategy, TieBreak};
use serde::Deserialize;

use crate::error::{io_err, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Bandit,
    Mdp,
    Transfer,
    Eluder,
    Diagnostics,
}

/// `alpha = "auto"` (resolves to `1/(kMT)`) or a positive number.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Word(String),
}

impl Default for AlphaSpec {
    fn default() -> Self {
        AlphaSpec::Word("auto".into())
    }
}

impl AlphaSpec {
    pub fn resolve(&self) -> Result<Alpha> {
        match self {
            AlphaSpec::Value(v) if *v > 0.0 => Ok(Alpha::Value(*v)),
            AlphaSpec::Value(v) => Err(LabError::Config(format!("alpha must be positive, got {v}"))),
            AlphaSpec::Word(w) if w == "auto" => Ok(Alpha::Auto),
            AlphaSpec::Word(w) => Err(LabError::Config(format!("alpha must be a number or \"auto\", got \"{w}\""))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    /// Written with braces so stray keys are rejected.
    Theory {},
    /// `a · ln(b·t + c)`.
    Tuned { a: f64, b: f64, c: f64 },
    Fixed { value: f64 },
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::Theory {}
    }
}

impl From<BetaSpec> for BetaMode {
    fn from(b: BetaSpec) -> Self {
        match b {
            BetaSpec::Theory {} => BetaMode::Theory,
            BetaSpec::Tuned { a, b, c } => BetaMode::Tuned { a, b, c },
            BetaSpec::Fixed { value } => BetaMode::Fixed(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    #[default]
    Decoupled,
    Sweep,
    Exact,
}

impl From<StrategySpec> for Strategy {
    fn from(s: StrategySpec) -> Self {
        match s {
            StrategySpec::Decoupled => Strategy::Decoupled,
            StrategySpec::Sweep => Strategy::Sweep,
            StrategySpec::Exact => Strategy::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakSpec {
    Index,
    Center,
}

impl From<TieBreakSpec> for TieBreak {
    fn from(t: TieBreakSpec) -> Self {
        match t {
            TieBreakSpec::Index => TieBreak::LowestIndex,
            TieBreakSpec::Center => TieBreak::CenterPrediction,
        }
    }
}

fn d_categories() -> usize {
    10
}
fn d_actions() -> usize {
    5
}
fn d_decoys() -> usize {
    7
}
fn d_one() -> usize {
    1
}
fn d_perturbation() -> f64 {
    0.1
}
fn d_latent_noise() -> f64 {
    0.01
}
fn d_p() -> usize {
    4
}
fn d_k2() -> usize {
    2
}
fn d_pool() -> usize {
    30
}
fn d_members() -> usize {
    4
}
fn d_four() -> usize {
    4
}
fn d_rep_noise() -> f64 {
    0.1
}
fn d_three() -> usize {
    3
}
fn d_two() -> usize {
    2
}
fn d_maze_noise() -> f64 {
    0.01
}
fn d_k5() -> usize {
    5
}
fn d_states() -> usize {
    12
}
fn d_mdp_noise() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub start: (usize, usize),
    pub exit: (usize, usize),
    #[serde(default)]
    pub lava: Vec<(usize, usize)>,
    #[serde(default)]
    pub walls: Vec<(usize, usize)>,
}

impl From<&LayoutSpec> for MazeLayout {
    fn from(l: &LayoutSpec) -> Self {
        MazeLayout { start: l.start, exit: l.exit, lava: l.lava.clone(), walls: l.walls.clone() }
    }
}

/// Environment parameters, selected by `name`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    /// Observations are noisy category prototypes; rewards depend on the
    /// latent category.
    Latent {
        #[serde(default = "d_categories")]
        categories: usize,
        #[serde(default = "d_actions")]
        actions: usize,
        /// Feature dimension; defaults to `categories`.
        k: Option<usize>,
        #[serde(default = "d_decoys")]
        decoys: usize,
        #[serde(default = "d_one")]
        merges_per_decoy: usize,
        #[serde(default = "d_perturbation")]
        perturbation: f64,
        #[serde(default = "d_latent_noise")]
        noise_sigma: f64,
    },
    /// Linear features `A·x` of pool vectors for a finite set of matrices.
    LinearRep {
        #[serde(default = "d_p")]
        p: usize,
        #[serde(default = "d_k2")]
        k: usize,
        #[serde(default = "d_pool")]
        pool: usize,
        #[serde(default = "d_members")]
        members: usize,
        #[serde(default = "d_four")]
        actions: usize,
        #[serde(default = "d_rep_noise")]
        noise_sigma: f64,
    },
    /// 4×4 grid maze; one layout per task (generated when omitted).
    Maze {
        #[serde(default = "d_three")]
        decoys: usize,
        #[serde(default = "d_two")]
        aliased_states: usize,
        #[serde(default = "d_maze_noise")]
        noise: f64,
        layouts: Option<Vec<LayoutSpec>>,
    },
    /// Random linear MDP with simplex features.
    LinearMdp {
        #[serde(default = "d_k5")]
        k: usize,
        #[serde(default = "d_states")]
        states: usize,
        #[serde(default = "d_four")]
        actions: usize,
        #[serde(default = "d_k5")]
        horizon: usize,
        #[serde(default = "d_three")]
        decoys: usize,
        #[serde(default = "d_mdp_noise")]
        noise: f64,
    },
}

impl EnvConfig {
    pub fn default_for(kind: Kind) -> Self {
        match kind {
            Kind::Mdp => EnvConfig::LinearMdp {
                k: d_k5(),
                states: d_states(),
                actions: d_four(),
                horizon: d_k5(),
                decoys: d_three(),
                noise: d_mdp_noise(),
            },
            _ => EnvConfig::Latent {
                categories: d_categories(),
                actions: d_actions(),
                k: None,
                decoys: d_decoys(),
                merges_per_decoy: d_one(),
                perturbation: d_perturbation(),
                noise_sigma: d_latent_noise(),
            },
        }
    }

    pub fn is_bandit(&self) -> bool {
        matches!(self, EnvConfig::Latent { .. } | EnvConfig::LinearRep { .. })
    }

    pub fn latent_config(&self, tasks: usize) -> Option<LatentCategoryConfig> {
        match *self {
            EnvConfig::Latent { categories, actions, k, decoys, merges_per_decoy, perturbation, noise_sigma } => {
                Some(LatentCategoryConfig {
                    categories,
                    actions,
                    tasks,
                    k: k.unwrap_or(categories),
                    decoys,
                    merges_per_decoy,
                    perturbation,
                    noise_sigma,
                })
            }
            _ => None,
        }
    }
}

/// The default maze layout of task `i`: bottom-row start, top-right exit,
/// one lava cell in the second row and a wall in the third.
pub fn default_layout(i: usize) -> MazeLayout {
    MazeLayout { start: (3, i % 4), exit: (0, 3), lava: vec![(1, (i + 1) % 3)], walls: vec![(2, 1)] }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Constant exploration rate of the ε-greedy baseline.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MixtureSpec {
    Weights(Vec<f64>),
    Named(String),
}

fn d_transfer_steps() -> usize {
    300
}
fn d_unit_scale() -> f64 {
    1.0
}
fn d_lambda() -> f64 {
    1.0
}
fn d_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// LinUCB rounds on the new task.
    #[serde(default = "d_transfer_steps")]
    pub steps: usize,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// Multiplier on the LinUCB confidence radius; 1 is the theory radius.
    #[serde(default = "d_unit_scale")]
    pub bonus_scale: f64,
    /// `"uniform"` or explicit weights, one per training task.
    pub mixture: Option<MixtureSpec>,
    #[serde(default = "d_bound")]
    pub bound: f64,
    /// Also run LinUCB on a random decoy representation.
    #[serde(default = "d_true")]
    pub decoy_baseline: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self { steps: d_transfer_steps(), lambda: d_lambda(), bonus_scale: d_unit_scale(), mixture: None, bound: d_bound(), decoy_baseline: true }
    }
}

impl TransferConfig {
    pub fn weights(&self, tasks: usize) -> Result<Vec<f64>> {
        match &self.mixture {
            None => Ok(vec![1.0 / tasks as f64; tasks]),
            Some(MixtureSpec::Named(n)) if n == "uniform" => Ok(vec![1.0 / tasks as f64; tasks]),
            Some(MixtureSpec::Named(n)) => Err(LabError::Config(format!("unknown mixture \"{n}\""))),
            Some(MixtureSpec::Weights(w)) if w.len() == tasks => Ok(w.clone()),
            Some(MixtureSpec::Weights(w)) => {
                Err(LabError::Config(format!("mixture has {} weights for {tasks} tasks", w.len())))
            }
        }
    }
}

fn d_true() -> bool {
    true
}
fn d_eps() -> Vec<f64> {
    vec![0.25, 0.5]
}
fn d_guard() -> usize {
    mtrl_core::eluder::DEFAULT_DOMAIN_GUARD
}

fn d_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EluderClassKind {
    /// `{θᵀx}` on the `dim` basis vectors with θ on a `step` grid of the
    /// unit ball.
    LinearGrid,
    /// Two-task class of the configured latent environment on its
    /// noiseless prototypes, heads on a `step` grid.
    Latent,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EluderConfig {
    pub class: EluderClassKind,
    #[serde(default = "d_three")]
    pub dim: usize,
    #[serde(default = "d_half")]
    pub step: f64,
    #[serde(default = "d_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "d_guard")]
    pub guard: usize,
}

fn d_sizes() -> Vec<usize> {
    vec![10, 100, 1000]
}
fn d_heldout() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "d_sizes")]
    pub training_sizes: Vec<usize>,
    #[serde(default = "d_heldout")]
    pub heldout: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { training_sizes: d_sizes(), heldout: d_heldout() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub tasks: Vec<usize>,
    #[serde(default)]
    pub horizon: Vec<usize>,
}

fn d_horizon() -> usize {
    500
}
fn d_delta() -> f64 {
    0.1
}
fn d_ridge() -> f64 {
    1e-6
}
fn d_runs() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Steps (bandit), episodes (MDP) or pretraining steps (transfer).
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    /// Number of tasks M.
    #[serde(default = "d_one")]
    pub tasks: usize,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default)]
    pub alpha: AlphaSpec,
    #[serde(default = "d_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub strategy: StrategySpec,
    /// Defaults to `index` for bandits and `center` for MDPs.
    pub tie_break: Option<TieBreakSpec>,
    #[serde(default)]
    pub beta: BetaSpec,
    /// Assumed inherent Bellman error in the MDP radius.
    #[serde(default)]
    pub ibe: f64,
    /// Seeded repetitions per setting.
    #[serde(default = "d_runs")]
    pub runs: usize,
    /// Record width and containment per step (bandit runs).
    #[serde(default = "d_true")]
    pub diagnostics: bool,
    pub out: Option<PathBuf>,
    pub env: Option<EnvConfig>,
    pub baseline: Option<BaselineConfig>,
    pub transfer: Option<TransferConfig>,
    pub eluder: Option<EluderConfig>,
    #[serde(rename = "diagnostic")]
    pub diagnostic: Option<DiagnosticsConfig>,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn env(&self) -> EnvConfig {
        self.env.clone().unwrap_or_else(|| EnvConfig::default_for(self.kind))
    }

    pub fn tie_break(&self) -> TieBreak {
        match self.tie_break {
            Some(t) => t.into(),
            None if self.kind == Kind::Mdp => TieBreak::CenterPrediction,
            None => TieBreak::LowestIndex,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.tasks == 0 {
            return bad("tasks must be at least 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if !(self.ridge > 0.0) {
            return bad(format!("ridge must be positive, got {}", self.ridge));
        }
        if !(self.ibe >= 0.0) {
            return bad(format!("ibe must be nonnegative, got {}", self.ibe));
        }
        self.alpha.resolve()?;
        BetaMode::from(self.beta).validate()?;
        let env = self.env();
        match self.kind {
            Kind::Bandit | Kind::Transfer | Kind::Diagnostics if !env.is_bandit() => {
                return bad(format!("{:?} experiments need a bandit environment (latent or linear_rep)", self.kind));
            }
            Kind::Mdp if env.is_bandit() => {
                return bad("mdp experiments need an MDP environment (maze or linear_mdp)".into());
            }
            _ => {}
        }
        if matches!(self.kind, Kind::Diagnostics) && env.latent_config(1).is_none() {
            return bad("diagnostics need the latent environment".into());
        }
        if let EnvConfig::Maze { layouts: Some(l), .. } = &env {
            if l.len() != self.tasks {
                return bad(format!("{} maze layouts for {} tasks", l.len(), self.tasks));
            }
        }
        if let Some(b) = &self.baseline {
            if !(0.0..=1.0).contains(&b.epsilon) {
                return bad(format!("baseline epsilon must lie in [0, 1], got {}", b.epsilon));
            }
        }
        if let Some(t) = &self.transfer {
            if t.steps == 0 || !(t.lambda > 0.0) || !(t.bound >= 0.0) || !(t.bonus_scale >= 0.0) || !t.bonus_scale.is_finite() {
                return bad("transfer needs steps ≥ 1, lambda > 0, bound ≥ 0 and a finite bonus_scale ≥ 0".into());
            }
            t.weights(self.tasks)?;
        }
        if let Some(e) = &self.eluder {
            if e.eps.is_empty() || e.eps.iter().any(|&x| !(x > 0.0)) {
                return bad("eluder eps values must be positive".into());
            }
            if e.dim == 0 || !(e.step > 0.0 && e.step <= 1.0) {
                return bad("eluder class needs dim ≥ 1 and step in (0, 1]".into());
            }
        }
        if let Some(d) = &self.diagnostic {
            if d.training_sizes.is_empty() || d.training_sizes.contains(&0) || d.heldout == 0 {
                return bad("diagnostic training sizes and heldout count must be positive".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.tasks.contains(&0) || s.horizon.contains(&0) {
                return bad("sweep values must be positive".into());
            }
        }
        Ok(())
    }
}

/// `Noise::Gaussian` for bandits and `Noise::Uniform` for MDPs, from a scale.
pub(crate) fn gaussian(sigma: f64) -> Noise {
    if sigma == 0.0 {
        Noise::None
    } else {
        Noise::Gaussian { sigma }
    }
}

pub(crate) fn uniform(half_width: f64) -> Noise {
    if half_width == 0.0 {
        Noise::None
    } else {
        Noise::Uniform { half_width }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("kind = \"bandit\"").unwrap();
        assert_eq!(cfg.horizon, 500);
        assert_eq!(cfg.tasks, 1);
        assert_eq!(cfg.alpha.resolve().unwrap(), Alpha::Auto);
        assert_eq!(cfg.beta, BetaSpec::Theory {});
        assert_eq!(cfg.env().latent_config(1).unwrap(), LatentCategoryConfig::default());
        assert_eq!(cfg.tie_break(), TieBreak::LowestIndex);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("kind = \"bandit\"\nhorizn = 3").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"bandit\"\n[env]\nname = \"latent\"\ncolour = 1").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"bandit\"\n[beta]\nmode = \"theory\"\na = 1").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"bandit\"\n[sweep]\nm = [1]").is_err());
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
kind = "bandit"
seed = 3
horizon = 200
tasks = 5
delta = 0.05
alpha = 0.001
strategy = "sweep"
tie_break = "center"
beta = { mode = "tuned", a = 0.4, b = 0.5, c = 2.0 }
runs = 4
out = "results"

[env]
name = "latent"
categories = 6
actions = 3
decoys = 2

[baseline]
epsilon = 0.1

[sweep]
tasks = [1, 5, 10]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.alpha.resolve().unwrap(), Alpha::Value(0.001));
        assert_eq!(BetaMode::from(cfg.beta), BetaMode::Tuned { a: 0.4, b: 0.5, c: 2.0 });
        assert_eq!(Strategy::from(cfg.strategy), Strategy::Sweep);
        assert_eq!(cfg.tie_break(), TieBreak::CenterPrediction);
        assert_eq!(cfg.env().latent_config(5).unwrap().k, 6);
        assert_eq!(cfg.sweep.unwrap().tasks, vec![1, 5, 10]);
    }

    #[test]
    fn fixed_infinite_beta_parses() {
        let cfg = ExperimentConfig::from_toml("kind = \"bandit\"\nbeta = { mode = \"fixed\", value = inf }").unwrap();
        assert_eq!(BetaMode::from(cfg.beta), BetaMode::Fixed(f64::INFINITY));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "kind = \"bandit\"\nalpha = \"sometimes\"",
            "kind = \"bandit\"\ndelta = 0.0",
            "kind = \"bandit\"\nhorizon = 0",
            "kind = \"bandit\"\nbeta = { mode = \"tuned\", a = 1.0, b = 1.0, c = 0.5 }",
            "kind = \"mdp\"\n[env]\nname = \"latent\"",
            "kind = \"bandit\"\n[env]\nname = \"maze\"",
            "kind = \"transfer\"\ntasks = 2\n[transfer]\nmixture = [1.0]",
            "kind = \"mdp\"\ntasks = 2\n[env]\nname = \"maze\"\nlayouts = [{ start = [3, 0], exit = [0, 3] }]",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn mdp_defaults() {
        let cfg = ExperimentConfig::from_toml("kind = \"mdp\"").unwrap();
        assert!(matches!(cfg.env(), EnvConfig::LinearMdp { .. }));
        assert_eq!(cfg.tie_break(), TieBreak::CenterPrediction);
        let maze = ExperimentConfig::from_toml(
            "kind = \"mdp\"\n[env]\nname = \"maze\"\nlayouts = [{ start = [3, 0], exit = [0, 3], lava = [[1, 1]] }]",
        )
        .unwrap();
        assert!(matches!(maze.env(), EnvConfig::Maze { layouts: Some(_), .. }));
    }

    #[test]
    fn eluder_section_parses() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"eluder\"\n[eluder]\nclass = \"linear_grid\"\ndim = 3\nstep = 0.5\neps = [0.5]",
        )
        .unwrap();
        let e = cfg.eluder.unwrap();
        assert_eq!((e.class, e.dim, e.step), (EluderClassKind::LinearGrid, 3, 0.5));
        assert_eq!(e.guard, 12);
    }
}
