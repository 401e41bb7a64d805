use mtrl_core::bandit::{
    gfucb_run, gfucb_train, make_latent_category_bandit, GfucbConfig, LatentCategoryConfig,
};
use mtrl_core::mdp::{ibe_estimate, make_grid_maze, mtlsvi_run, MazeLayout, MdpConfig, MAZE_HORIZON};
use mtrl_core::bandit::Noise;
use mtrl_core::transfer::{extract_representation, linucb_transfer_run, synthesize_target_task, LinUcbConfig};
use mtrl_core::{BetaMode, Strategy};

fn layout(col: usize) -> MazeLayout {
    MazeLayout { start: (3, col), exit: (0, 3), lava: vec![(1, (col + 1) % 3)], walls: vec![(2, 1)] }
}

#[test]
fn noiseless_pretraining_recovers_the_true_decoder_and_transfers() {
    let cfg = LatentCategoryConfig { tasks: 5, noise_sigma: 0.0, ..Default::default() };
    let lb = make_latent_category_bandit(&cfg, 2).unwrap();
    let gcfg = GfucbConfig { diagnostics: false, ..Default::default() };
    let outcome = gfucb_train(&lb.instance, 200, &gcfg, 2).unwrap();
    let frozen = extract_representation(&outcome, &lb.instance.class).unwrap();
    assert_eq!(Some(frozen.phi_index), lb.instance.class.true_index());

    let mixture = [0.2; 5];
    let task = synthesize_target_task(&lb.instance, frozen.phi.clone(), &mixture, 1.0).unwrap();
    // The pretrained heads already predict the mixture target exactly.
    let inputs: Vec<Vec<f64>> = lb.labelled_sample(50, 9).into_iter().map(|(x, _)| x).collect();
    assert!(task.mixture_sup_error(&outcome.center, &inputs).unwrap() < 1e-3);

    let lcfg = LinUcbConfig { bonus_scale: 0.1, ..Default::default() };
    let trace = linucb_transfer_run(&task, 200, &lcfg, 4).unwrap();
    let early = trace.records[..50].iter().map(|r| r.inst_regret).sum::<f64>();
    let late = trace.records[150..].iter().map(|r| r.inst_regret).sum::<f64>();
    assert!(late <= early, "late regret {late} above early {early}");
}

#[test]
fn more_tasks_share_exploration_on_the_latent_bandit() {
    // Same per-task budget; jointly trained tasks pay less per task.
    let beta = BetaMode::Tuned { a: 0.4, b: 0.5, c: 2.0 };
    let gcfg = GfucbConfig { beta, strategy: Strategy::Sweep, diagnostics: false, ..Default::default() };
    let per_task = |tasks: usize| -> f64 {
        let mut v: Vec<f64> = (0..9u64)
            .map(|seed| {
                let cfg = LatentCategoryConfig { tasks, ..Default::default() };
                let inst = make_latent_category_bandit(&cfg, seed).unwrap().instance;
                gfucb_run(&inst, 300, &gcfg, seed).unwrap().per_task_average(300)
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v[4]
    };
    let (one, five) = (per_task(1), per_task(5));
    assert!(five < one, "M=5 {five} not below M=1 {one}");
}

#[test]
fn maze_runs_fill_every_level_and_stay_deterministic() {
    let layouts = [layout(0), layout(2)];
    let inst = make_grid_maze(&layouts, 2, 1, Noise::Uniform { half_width: 0.01 }, 3).unwrap();
    let cfg = MdpConfig::default();
    let out = mtlsvi_run(&inst, 4, &cfg, 3).unwrap();
    assert_eq!(out.trace.records.len(), 4 * 2);
    for ep in &out.episodes {
        assert_eq!(ep.transitions.len(), 2 * MAZE_HORIZON);
        assert!(ep.value_gaps.iter().all(|&g| g >= -1e-12));
    }
    assert!(out.trace.records.iter().all(|r| r.action < 4 && r.width.is_none() && r.contained.is_none()));
    assert_eq!(out.trace, mtlsvi_run(&inst, 4, &cfg, 3).unwrap().trace);
}

#[test]
fn maze_class_is_closed_under_the_bellman_operator() {
    let inst = make_grid_maze(&[layout(1)], 2, 1, Noise::None, 5).unwrap();
    let ibe = ibe_estimate(&inst, &inst.class, 3, 7).unwrap();
    assert!(ibe < 1e-9, "tabular class has inherent Bellman error {ibe}");
}
