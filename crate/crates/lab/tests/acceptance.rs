//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when
//! any criterion fails. Positional arguments filter criteria by substring.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use mtrl_core::bandit::{
    gfucb_run, gfucb_train, log_log_slope, make_latent_category_bandit, GfucbConfig,
    LatentCategoryConfig, Noise, RegretTrace,
};
use mtrl_core::beta::{beta_bandit, beta_mdp, linucb_radius};
use mtrl_core::eluder::{
    eluder_dimension_exhaustive, eluder_dimension_exhaustive_guarded, eluder_dimension_greedy,
    linear_grid_class, ScalarClass,
};
use mtrl_core::mdp::{make_random_linear_mdp, mtlsvi_run, MdpConfig};
use mtrl_core::rng::{stream, Purpose, StreamRng};
use mtrl_core::transfer::synthesize_target_task;
use mtrl_core::{
    erm_fit, ConfidenceSet, FeatureClass, FeatureMap, FnFeature, MultitaskHistory, SharedFeature,
    Strategy, TieBreak,
};
use mtrl_lab::diagnostics::{diagnostics_experiment, kernel_matrix, kernel_matrix_double_sum};
use mtrl_lab::experiment::{
    containment_monte_carlo, eluder_class, run_experiment, run_sweep, Algorithm,
};
use mtrl_lab::output::summarize;
use mtrl_lab::{median, ExperimentConfig};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

/// Outcome of one criterion: pass flag and a one-line summary of the
/// measured quantities.
struct Verdict {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Verdict, String>;

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict, String> {
    Ok(Verdict { pass, detail: detail.into() })
}

fn config(text: &str) -> Result<ExperimentConfig, String> {
    ExperimentConfig::from_toml(text).map_err(|e| e.to_string())
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const WORKERS: usize = 4;

fn containment() -> Result<Verdict, String> {
    let cfg = config(
        r#"
kind = "bandit"
tasks = 2
horizon = 100
delta = 0.1
[env]
name = "latent"
categories = 4
k = 4
actions = 3
"#,
    )?;
    let start = Instant::now();
    let c = containment_monte_carlo(&cfg, 200, WORKERS).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        c.frequency() >= 0.8 && secs < 120.0,
        format!("{}/{} runs contained (frequency {:.3} ≥ 0.8) in {secs:.1}s", c.contained, c.runs, c.frequency()),
    )
}

fn width_counting() -> Result<Verdict, String> {
    // Noise-free prototypes over three categories: the tuple domain of two
    // tasks has nine points, within the exhaustive search guard.
    let text = r#"
kind = "bandit"
tasks = 2
horizon = 150
runs = 20
delta = 0.1
diagnostics = true
[env]
name = "latent"
categories = 3
actions = 3
decoys = 2
perturbation = 0.0
[eluder]
class = "latent"
step = 1.0
eps = [0.25, 0.5]
guard = 12
"#;
    let cfg = config(text)?;
    let out = run_experiment(&cfg, WORKERS).map_err(err)?;
    let m = cfg.tasks as f64;
    let mut worst: f64 = 0.0;
    let mut dims = Vec::new();
    let mut pass = true;
    for run in &out.runs {
        let trace = &run.traces[0].1;
        let beta_t = trace.records.last().ok_or("empty trace")?.beta;
        let mut run_cfg = cfg.clone();
        run_cfg.seed = run.seed;
        let cls = eluder_class(&run_cfg).map_err(err)?;
        for eps in [0.25, 0.5] {
            let dim = eluder_dimension_exhaustive_guarded(&cls, eps, 12).map_err(err)?;
            dims.push(dim);
            let count = trace
                .records
                .iter()
                .filter(|r| r.task == 0)
                .filter(|r| r.width.expect("diagnostics on") > eps)
                .count();
            let bound = (4.0 * m * beta_t / (eps * eps) + 1.0) * dim as f64;
            worst = worst.max(count as f64 / bound);
            pass &= count as f64 <= bound;
        }
    }
    verdict(
        pass,
        format!(
            "{} runs × 2 ε: max count/bound {worst:.4}, dim_E ∈ [{}, {}]",
            out.runs.len(),
            dims.iter().min().unwrap_or(&0),
            dims.iter().max().unwrap_or(&0)
        ),
    )
}

fn multitask_benefit() -> Result<Verdict, String> {
    let cfg = config(
        r#"
kind = "bandit"
horizon = 500
runs = 20
strategy = "sweep"
diagnostics = false
beta = { mode = "tuned", a = 0.4, b = 0.5, c = 2.0 }
[env]
name = "latent"
[baseline]
epsilon = 0.1
[sweep]
tasks = [1, 5, 10]
"#,
    )?;
    let rows = summarize(&run_sweep(&cfg, WORKERS).map_err(err)?);
    let get = |tasks: usize, alg: Algorithm| {
        rows.iter()
            .find(|r| r.tasks == tasks && r.algorithm == alg)
            .map(|r| r.median_per_task_regret)
            .ok_or(format!("missing row tasks={tasks}"))
    };
    let g: Vec<f64> = [1, 5, 10].iter().map(|&m| get(m, Algorithm::Gfucb)).collect::<Result<_, _>>()?;
    let e: Vec<f64> = [1, 5, 10].iter().map(|&m| get(m, Algorithm::EpsGreedy)).collect::<Result<_, _>>()?;
    let ordered = g[2] < g[1] && g[1] < g[0];
    let beats = g.iter().zip(&e).all(|(a, b)| a < b);
    verdict(
        ordered && beats,
        format!(
            "median per-task regret M=1 {:.2}, M=5 {:.2}, M=10 {:.2}; ε-greedy {:.2}/{:.2}/{:.2}",
            g[0], g[1], g[2], e[0], e[1], e[2]
        ),
    )
}

fn slope_of(trace: &RegretTrace, checkpoints: &[usize]) -> Result<f64, String> {
    let cum = trace.cumulative_by_step();
    let pts: Vec<(f64, f64)> = checkpoints.iter().map(|&t| (t as f64, cum[t - 1])).collect();
    log_log_slope(&pts).ok_or_else(|| "regret stayed zero".into())
}

fn median_slope(text: &str, checkpoints: &[usize]) -> Result<(f64, f64), String> {
    let cfg = config(text)?;
    let out = run_experiment(&cfg, WORKERS).map_err(err)?;
    let slopes: Vec<f64> =
        out.runs.iter().map(|r| slope_of(&r.traces[0].1, checkpoints)).collect::<Result<_, _>>()?;
    Ok((median(&slopes), slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
}

fn sublinearity() -> Result<Verdict, String> {
    let (bandit, bandit_max) = median_slope(
        r#"
kind = "bandit"
tasks = 1
horizon = 2000
runs = 5
diagnostics = false
[env]
name = "linear_rep"
"#,
        &[100, 200, 400, 800, 1200, 1600, 2000],
    )?;
    let (mdp, mdp_max) = median_slope(
        r#"
kind = "mdp"
tasks = 2
horizon = 300
runs = 5
[env]
name = "linear_mdp"
horizon = 5
"#,
        &[30, 60, 100, 150, 200, 250, 300],
    )?;
    verdict(
        bandit <= 0.85 && mdp <= 0.85,
        format!("median log-log slope: bandit {bandit:.3} (max {bandit_max:.3}), linear MDP {mdp:.3} (max {mdp_max:.3})"),
    )
}

/// A random small instance: class, history, center, radius and queries.
struct SmallInstance {
    class: FeatureClass<Vec<f64>>,
    history: MultitaskHistory<Vec<f64>>,
    beta: f64,
    queries: Vec<Vec<Vec<f64>>>,
}

const SANDWICH_RIDGE: f64 = 1e-6;

fn small_instance(n: u64) -> SmallInstance {
    let mut rng = stream(7, Purpose::Sample, 0, n);
    let dim = if n % 2 == 0 { 1 } else { 2 };
    let tasks = rng.random_range(1..=3usize);
    let actions = rng.random_range(1..=4usize);
    let members = rng.random_range(1..=3usize);
    let mut class = Vec::new();
    for j in 0..members {
        let c: f64 = rng.random_range(-1.0..1.0);
        let feature: SharedFeature<Vec<f64>> = if dim == 1 {
            // |c·x + (1 − |c|)·x²| ≤ 1 on [−1, 1].
            Arc::new(FnFeature::new(1, format!("poly{j}"), move |x: &Vec<f64>, o: &mut [f64]| {
                o[0] = c * x[0] + (1.0 - c.abs()) * x[0] * x[0];
            }))
        } else {
            Arc::new(FnFeature::new(2, format!("mix{j}"), move |x: &Vec<f64>, o: &mut [f64]| {
                o[0] = 0.5 * (x[0] + c * x[1]);
                o[1] = 0.5 * (x[1] - c * x[0]);
            }))
        };
        class.push(feature);
    }
    let class = FeatureClass::new(class, Some(0)).expect("valid class");
    let point = |rng: &mut StreamRng| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let mut history = MultitaskHistory::new(tasks);
    for i in 0..tasks {
        for _ in 0..rng.random_range(1..=4usize) {
            let x = point(&mut rng);
            let r = (0.5 * x.iter().sum::<f64>() + rng.random_range(-0.2..0.2)).clamp(-1.0, 1.0);
            history.push(i, x, r).expect("task in range");
        }
    }
    let queries = (0..tasks).map(|_| (0..actions).map(|_| point(&mut rng)).collect()).collect();
    let beta = rng.random_range(0.0..2.0);
    SmallInstance { class, history, beta, queries }
}

/// Largest `Σ_i clamp(min(cap, m_i + √b_i·r_i))` over `Σ r_i² ≤ slack`, by
/// enumerating which tasks end saturated, interior or untouched. Interior
/// tasks share the leftover budget in proportion to their bonus, which is
/// optimal by Cauchy–Schwarz.
fn saturation_oracle(means: &[f64], bonus: &[f64], slack: f64, cap: f64) -> f64 {
    let n = means.len();
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = c % 3;
            c /= 3;
        }
        // 0 untouched, 1 saturated, 2 interior.
        let mut cost = 0.0;
        let mut ok = true;
        for i in 0..n {
            if state[i] != 0 && !(bonus[i] > 0.0 && means[i] < cap) {
                ok = false;
            }
            if state[i] == 1 && ok {
                cost += (cap - means[i]).powi(2) / bonus[i];
            }
        }
        if !ok || cost > slack {
            continue;
        }
        let open: f64 = (0..n).filter(|&i| state[i] == 2).map(|i| bonus[i]).sum();
        let rho = if open > 0.0 { ((slack - cost) / open).sqrt() } else { 0.0 };
        let total: f64 = (0..n)
            .map(|i| match state[i] {
                0 => means[i],
                1 => cap,
                _ => (means[i] + bonus[i] * rho).min(cap),
            })
            .map(|v| v.clamp(-cap, cap))
            .sum();
        best = best.max(total);
    }
    best
}

/// Exhaustive optimistic value of a one-dimensional instance recomputed
/// from the history: per-representation least squares on the center's
/// predictions, feasibility against the radius, then every action tuple.
fn scalar_oracle(inst: &SmallInstance, center: &mtrl_core::MultiheadFunction) -> f64 {
    let m = inst.history.tasks();
    let cap = center.value_cap;
    let mut best = f64::NEG_INFINITY;
    for c in 0..inst.class.len() {
        let phi = inst.class.member(c);
        let mut residual = 0.0;
        let mut fitted = vec![0.0; m];
        let mut gram = vec![0.0; m];
        for i in 0..m {
            let samples = inst.history.samples(i);
            let feats: Vec<f64> = samples.iter().map(|(x, _)| phi.eval(x)[0]).collect();
            let ys: Vec<f64> = samples.iter().map(|(x, _)| center.predict(&inst.class, i, x)).collect();
            gram[i] = feats.iter().map(|q| q * q).sum::<f64>() + SANDWICH_RIDGE;
            fitted[i] = feats.iter().zip(&ys).map(|(q, y)| q * y).sum::<f64>() / gram[i];
            residual += feats.iter().zip(&ys).map(|(q, y)| (q * fitted[i] - y).powi(2)).sum::<f64>();
        }
        if c != center.phi_index && residual > inst.beta + 1e-9 {
            continue;
        }
        let slack = (inst.beta - residual).max(0.0);
        let sizes: Vec<usize> = inst.queries.iter().map(Vec::len).collect();
        let mut tuple = vec![0usize; m];
        loop {
            let q: Vec<f64> = (0..m).map(|i| phi.eval(&inst.queries[i][tuple[i]])[0]).collect();
            let means: Vec<f64> = (0..m).map(|i| q[i] * fitted[i]).collect();
            let bonus: Vec<f64> = (0..m).map(|i| q[i] * q[i] / gram[i]).collect();
            best = best.max(saturation_oracle(&means, &bonus, slack, cap));
            let mut p = m;
            while p > 0 {
                p -= 1;
                tuple[p] += 1;
                if tuple[p] < sizes[p] {
                    break;
                }
                tuple[p] = 0;
            }
            if tuple.iter().all(|&a| a == 0) {
                break;
            }
        }
    }
    best
}

fn optimism_sandwich() -> Result<Verdict, String> {
    let results: Vec<Result<(bool, Option<f64>), String>> = (0..500u64)
        .into_par_iter()
        .map(|n| {
            let inst = small_instance(n);
            let center = erm_fit(&inst.history, &inst.class, SANDWICH_RIDGE).map_err(err)?;
            let set = ConfidenceSet::new(center.clone(), inst.beta, &inst.history, &inst.class, SANDWICH_RIDGE)
                .map_err(err)?;
            let value = |s| set.optimistic_select(&inst.queries, s).map(|x| x.total).map_err(err);
            let (sw, ex, de) = (value(Strategy::Sweep)?, value(Strategy::Exact)?, value(Strategy::Decoupled)?);
            let ordered = sw <= ex + 1e-9 && ex <= de + 1e-9;
            let gap = (inst.class.dim() == 1).then(|| (ex - scalar_oracle(&inst, &center)).abs());
            Ok((ordered, gap))
        })
        .collect();
    let mut ordered = 0;
    let mut scalar = 0;
    let mut worst_gap: f64 = 0.0;
    for r in results {
        let (o, g) = r?;
        ordered += usize::from(o);
        if let Some(g) = g {
            scalar += 1;
            worst_gap = worst_gap.max(g);
        }
    }
    verdict(
        ordered == 500 && worst_gap <= 1e-9,
        format!("{ordered}/500 ordered sweep ≤ exact ≤ decoupled; {scalar} one-dimensional cases, max |exact − oracle| {worst_gap:.2e}"),
    )
}

fn eluder_oracle() -> Result<Verdict, String> {
    let singleton = ScalarClass::new(vec![vec![0.3, -0.2, 0.9]]).map_err(err)?;
    let d0 = eluder_dimension_exhaustive(&singleton, 0.5).map_err(err)?;
    let one_point = ScalarClass::new(vec![vec![0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]).map_err(err)?;
    let d1 = eluder_dimension_exhaustive(&one_point, 0.5).map_err(err)?;
    let linear = linear_grid_class(3, 0.5).map_err(err)?;
    let d3 = eluder_dimension_exhaustive(&linear, 0.5).map_err(err)?;
    let mut greedy_ok = 0;
    for n in 0..100u64 {
        let mut rng = stream(11, Purpose::Sample, 0, n);
        let functions = rng.random_range(1..=6usize);
        let domain = rng.random_range(1..=6usize);
        let values: Vec<Vec<f64>> = (0..functions)
            .map(|_| (0..domain).map(|_| (rng.random_range(-4..=4i32) as f64) * 0.25).collect())
            .collect();
        let cls = ScalarClass::new(values).map_err(err)?;
        let eps = [0.25, 0.5, 1.0][rng.random_range(0..3usize)];
        let g = eluder_dimension_greedy(&cls, eps).map_err(err)?;
        let e = eluder_dimension_exhaustive(&cls, eps).map_err(err)?;
        greedy_ok += usize::from(g <= e);
    }
    verdict(
        d0 == 0 && d1 == 1 && d3 >= 3 && greedy_ok == 100,
        format!("singleton {d0}, one-point difference {d1}, linear grid {d3}; greedy ≤ exhaustive on {greedy_ok}/100"),
    )
}

fn formula_spot_checks() -> Result<Verdict, String> {
    let bandit: Vec<f64> = [1, 7, 1000].iter().map(|&t| beta_bandit(1, 1, t, 0.0, 0.0, 1.0)).collect::<Result<_, _>>().map_err(err)?;
    let mdp = beta_mdp(1, 1, 1, 0.0, 1.0, 0.0).map_err(err)?;
    let lin = linucb_radius(1.0, 1, 1.0, 0).map_err(err)?;
    verdict(
        bandit.iter().all(|b| (b - 12.0).abs() <= 1e-9) && (mdp - 16.220).abs() <= 1e-3 && lin == 1.0,
        format!("bandit radius {:?}, MDP radius {mdp:.6}, LinUCB radius {lin}", bandit),
    )
}

fn mdp_reduction() -> Result<Verdict, String> {
    let mut compared = 0;
    for seed in 0..5u64 {
        let inst = make_random_linear_mdp(3, 6, 3, 1, 2, 2, Noise::Uniform { half_width: 0.05 }, seed).map_err(err)?;
        let bandit = inst.induced_bandit().map_err(err)?;
        for strategy in [Strategy::Decoupled, Strategy::Sweep, Strategy::Exact] {
            for tie_break in [TieBreak::LowestIndex, TieBreak::CenterPrediction] {
                let mcfg = MdpConfig { strategy, tie_break, ..Default::default() };
                let bcfg = GfucbConfig { strategy, tie_break, diagnostics: false, ..Default::default() };
                let a = mtlsvi_run(&inst, 60, &mcfg, seed).map_err(err)?.trace;
                let b = gfucb_run(&bandit, 60, &bcfg, seed).map_err(err)?;
                let same = a.records.len() == b.records.len()
                    && a.records.iter().zip(&b.records).all(|(x, y)| {
                        (x.t, x.task, x.action) == (y.t, y.task, y.action)
                            && x.inst_regret.to_bits() == y.inst_regret.to_bits()
                            && x.cum_regret.to_bits() == y.cum_regret.to_bits()
                    });
                if !same {
                    return verdict(false, format!("traces differ at seed {seed}, {strategy:?}, {tie_break:?}"));
                }
                compared += 1;
            }
        }
    }
    verdict(true, format!("{compared} seed/strategy/tie-break combinations identical in actions and regrets"))
}

fn transfer() -> Result<Verdict, String> {
    let cfg = config(
        r#"
kind = "transfer"
tasks = 10
horizon = 350
runs = 20
[env]
name = "latent"
merges_per_decoy = 3
[transfer]
steps = 300
bonus_scale = 0.1
"#,
    )?;
    let out = run_experiment(&cfg, WORKERS).map_err(err)?;
    let at = |alg: Algorithm| -> Vec<f64> {
        out.runs
            .iter()
            .filter_map(|r| r.traces.iter().find(|(a, _)| *a == alg))
            .map(|(_, t)| t.per_task_average(300))
            .collect()
    };
    let (pre, decoy) = (median(&at(Algorithm::Pretrained)), median(&at(Algorithm::Decoy)));

    // Decoys conflate three category pairs each, so the baseline is a
    // materially wrong representation rather than a near-copy of the truth.

    // Noise-free pretraining of increasing length on the same instances.
    let lengths = [50usize, 100, 350];
    let per_seed: Vec<Result<Vec<f64>, String>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let lcfg = LatentCategoryConfig { tasks: 10, noise_sigma: 0.0, ..Default::default() };
            let lb = make_latent_category_bandit(&lcfg, seed).map_err(err)?;
            let inputs: Vec<Vec<f64>> = lb.labelled_sample(200, seed).into_iter().map(|(x, _)| x).collect();
            let weights = vec![0.1; 10];
            let gcfg = GfucbConfig { diagnostics: false, ..Default::default() };
            lengths
                .iter()
                .map(|&t| {
                    let outcome = gfucb_train(&lb.instance, t, &gcfg, seed).map_err(err)?;
                    let phi = lb.instance.class.member(outcome.center.phi_index).clone();
                    let task = synthesize_target_task(&lb.instance, phi, &weights, 1.0).map_err(err)?;
                    task.mixture_sup_error(&outcome.center, &inputs).map_err(err)
                })
                .collect()
        })
        .collect();
    let per_seed: Vec<Vec<f64>> = per_seed.into_iter().collect::<Result<_, _>>()?;
    let sup: Vec<f64> = (0..lengths.len()).map(|j| median(&per_seed.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
    let mean: Vec<f64> =
        (0..lengths.len()).map(|j| per_seed.iter().map(|v| v[j]).sum::<f64>() / per_seed.len() as f64).collect();
    let nonincreasing = sup.windows(2).all(|w| w[1] <= w[0]);
    verdict(
        pre < decoy && nonincreasing,
        format!(
            "median regret at t=300: pretrained {pre:.2} vs decoy {decoy:.2}; sup-error over pretraining 50/100/350: median {:.4}/{:.4}/{:.4}, mean {:.4}/{:.4}/{:.4}",
            sup[0], sup[1], sup[2], mean[0], mean[1], mean[2]
        ),
    )
}

fn diagnostics() -> Result<Verdict, String> {
    // Template and double-sum forms on a random nonlinear feature.
    let mut rng = stream(13, Purpose::Sample, 0, 0);
    let phi = FnFeature::new(3, "wave", |x: &Vec<f64>, o: &mut [f64]| {
        o[0] = (x[0] * 2.0).sin() * 0.5;
        o[1] = (x[1] - x[0]) * 0.4;
        o[2] = (x[0] * x[1]).cos() * 0.5;
    });
    let dataset: Vec<(Vec<f64>, usize)> =
        (0..60).map(|j| (vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], j % 4)).collect();
    let template = kernel_matrix(&phi, &dataset, 4).map_err(err)?.c;
    let double = kernel_matrix_double_sum(&phi, &dataset, 4).map_err(err)?;
    let form_gap = (template - double).abs().max();

    let lb = make_latent_category_bandit(&LatentCategoryConfig { perturbation: 0.0, ..Default::default() }, 3).map_err(err)?;
    let truth = lb.instance.truth.phi_index;
    let onehot = kernel_matrix(lb.instance.class.member(truth).as_ref() as &dyn FeatureMap<Vec<f64>>, &lb.labelled_sample(40, 3), 10)
        .map_err(err)?
        .c;
    let identity_gap = (onehot - DMatrix::<f64>::identity(10, 10)).abs().max();

    let cfg = config(
        r#"
kind = "diagnostics"
tasks = 2
runs = 20
beta = { mode = "tuned", a = 0.4, b = 0.5, c = 2.0 }
[env]
name = "latent"
[diagnostic]
training_sizes = [10, 100, 1000]
heldout = 200
"#,
    )?;
    let d = diagnostics_experiment(&cfg, WORKERS).map_err(err)?;
    let covered = d.rows.iter().all(|r| r.covered >= 0.8);
    let shrinking = d.rows.windows(2).all(|w| w[1].mean_bonus < w[0].mean_bonus);
    let rows: Vec<String> =
        d.rows.iter().map(|r| format!("n={} bonus {:.3} covered {:.3}", r.training_size, r.mean_bonus, r.covered)).collect();
    verdict(
        form_gap <= 1e-12 && identity_gap <= 1e-12 && covered && shrinking,
        format!("template vs double sum {form_gap:.1e}; one-hot vs identity {identity_gap:.1e}; {}", rows.join(", ")),
    )
}

struct Subcommand {
    name: &'static str,
    config: &'static str,
}

const DETERMINISM_CASES: &[Subcommand] = &[
    Subcommand {
        name: "run",
        config: "kind = \"bandit\"\nhorizon = 40\ntasks = 2\nruns = 3\n[env]\nname = \"latent\"\n[baseline]\nepsilon = 0.1\n",
    },
    Subcommand {
        name: "sweep",
        config: "kind = \"bandit\"\nhorizon = 30\nruns = 2\nstrategy = \"sweep\"\n[env]\nname = \"linear_rep\"\n[sweep]\ntasks = [1, 3]\nhorizon = [20, 30]\n",
    },
    Subcommand {
        name: "run",
        config: "kind = \"mdp\"\nhorizon = 20\ntasks = 2\nruns = 2\n[env]\nname = \"linear_mdp\"\n",
    },
    Subcommand {
        name: "run",
        config: "kind = \"mdp\"\nhorizon = 5\ntasks = 2\nruns = 2\n[env]\nname = \"maze\"\n",
    },
    Subcommand {
        name: "run",
        config: "kind = \"transfer\"\nhorizon = 40\ntasks = 3\nruns = 2\n[env]\nname = \"latent\"\n[transfer]\nsteps = 30\n",
    },
    Subcommand {
        name: "containment",
        config: "kind = \"bandit\"\nhorizon = 30\ntasks = 2\nruns = 6\n[env]\nname = \"latent\"\ncategories = 4\nactions = 3\n",
    },
    Subcommand {
        name: "eluder",
        config: "kind = \"eluder\"\n[eluder]\nclass = \"linear_grid\"\ndim = 2\nstep = 0.5\n",
    },
    Subcommand {
        name: "diagnostics",
        config: "kind = \"diagnostics\"\ntasks = 2\nruns = 2\n[env]\nname = \"latent\"\n[diagnostic]\ntraining_sizes = [10, 30]\nheldout = 20\n",
    },
];

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(err)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "svg"))
        .map(|p| Ok((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).map_err(err)?)))
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Result<Verdict, String> {
    let tmp = tempfile::TempDir::new().map_err(err)?;
    let mut files = 0;
    for (n, case) in DETERMINISM_CASES.iter().enumerate() {
        let cfg = tmp.path().join(format!("case{n}.toml"));
        std::fs::write(&cfg, case.config).map_err(err)?;
        let mut outputs = Vec::new();
        for (rep, workers) in [(0, "1"), (1, "1"), (2, "3")] {
            let out = tmp.path().join(format!("case{n}-{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_mtrl"))
                .args([case.name, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .args(["--seed", "21", "--workers", workers])
                .output()
                .map_err(err)?;
            if !status.status.success() {
                return verdict(false, format!("case {n} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(csv_files(&out)?);
        }
        if outputs[0].is_empty() || outputs.iter().any(|o| o != &outputs[0]) {
            return verdict(false, format!("case {n} ({}) produced differing files", case.name));
        }
        files += outputs[0].len();
    }
    verdict(true, format!("{} configurations, {files} files byte-identical across repeats and worker counts", DETERMINISM_CASES.len()))
}

const CRITERIA: &[(&str, Check)] = &[
    ("containment", containment),
    ("width-counting", width_counting),
    ("multitask-benefit", multitask_benefit),
    ("sublinearity", sublinearity),
    ("optimism-sandwich", optimism_sandwich),
    ("eluder-oracle", eluder_oracle),
    ("formula-spot-checks", formula_spot_checks),
    ("mdp-reduction", mdp_reduction),
    ("transfer", transfer),
    ("diagnostics", diagnostics),
    ("determinism", determinism),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&(&str, Check)> =
        CRITERIA.iter().filter(|(name, _)| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()))).collect();
    let results: Vec<(bool, String)> = selected
        .par_iter()
        .map(|(name, check)| {
            let start = Instant::now();
            let (pass, detail) = match check() {
                Ok(v) => (v.pass, v.detail),
                Err(e) => (false, format!("error: {e}")),
            };
            let line = format!(
                "{} {name}: {detail} [{:.1}s]",
                if pass { "PASS" } else { "FAIL" },
                start.elapsed().as_secs_f64()
            );
            (pass, line)
        })
        .collect();
    for (_, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|(p, _)| !p).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
