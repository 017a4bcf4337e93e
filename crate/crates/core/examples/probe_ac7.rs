// Scaled trial of the small-instance feasibility-dominance run.
use std::collections::BTreeSet;
use std::time::Instant;

use safeq_core::env::ris::{RisConfig, RisEnv};
use safeq_core::env::Environment;
use safeq_core::lagrangian::{DualConfig, TrainingConfig};
use safeq_core::qlearn::training::{
    build_agents, end_of_episode, evaluate, train_episode, EpsilonSchedule, TrainSettings,
};

fn ac7_env_cfg() -> RisConfig {
    RisConfig {
        ebs_antennas: 4,
        ris_elements: 16,
        users: 2,
        blocks: (2, 2),
        codebook_size: 8,
        power_levels_dbm: vec![0.0, 7.0, 14.0, 21.0],
        sinr_threshold_db: 0.0,
        noise_w: 2e-3,
        rician_k_db: 10.0,
        clusters: 5,
        steps_per_episode: 512,
        freeze_channels: false,
    }
}

fn settings(episodes: usize, t: usize, penalties: bool, seed: u64) -> TrainSettings {
    TrainSettings {
        episodes,
        seed,
        training: TrainingConfig {
            gamma: 0.0,
            horizon: t,
            ..TrainingConfig::default()
        },
        dual: DualConfig {
            rho_max: 30.0,
            ..DualConfig::default()
        },
        hidden: vec![16],
        learning_rate: 1e-3,
        grad_clip: Some(10.0),
        batch_size: 128,
        buffer_capacity: episodes * t,
        update_period: 12,
        target_sync_period: 100,
        epsilon: EpsilonSchedule::default(),
        penalties_enabled: penalties,
        tabular: false,
        tabular_alpha: 0.5,
        vhat_window: 10,
        write_trajectories: false,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let episodes: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(600);
    let t: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(512);
    let penalties: bool = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(true);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);

    let mut cfg = ac7_env_cfg();
    cfg.steps_per_episode = t;
    let start = Instant::now();
    let mut env = RisEnv::new(cfg.clone(), seed).unwrap();
    let settings = settings(episodes, t, penalties, seed);
    let mut agents = build_agents(&env, &settings).unwrap();
    let specs = env.constraints().clone();
    for episode in 0..settings.episodes {
        let reports = train_episode(&mut agents, &mut env, &settings, episode, None).unwrap();
        end_of_episode(&mut agents[0], &reports[0], &specs, &settings).unwrap();
        if episode % 100 == 0 || episode + 1 == settings.episodes {
            let r = &reports[0];
            println!(
                "ep {episode}: viol/step {:.3} ret/step {:.4} nu0 {:.2} rho0 {:.2} eps {:.2} loss {:.3} [{:?}]",
                r.total_violations as f64 / r.steps as f64,
                r.return_sum / r.steps as f64,
                agents[0].duals.nu["sinr_user0"],
                agents[0].duals.rho_inst["sinr_user0"],
                r.epsilon,
                r.loss_mean,
                start.elapsed()
            );
        }
    }
    let train_time = start.elapsed();

    // coverage: actions ever stored
    let seen: BTreeSet<usize> = agents[0].buffer.iter().map(|t| t.action).collect();
    println!(
        "coverage: {} of {} heads ever executed ({} missing)",
        seen.len(),
        env.action_count(),
        env.action_count() - seen.len()
    );

    // eval on fresh draws, one decision per episode
    let mut eval_env = RisEnv::new(cfg, seed + 7777).unwrap();
    let summary = evaluate(&agents, &mut eval_env, 100, 1, None).unwrap();
    println!(
        "eval feasibility {:.3} mean return {:.4} | train {:?} total {:?}",
        summary.feasibility,
        summary.mean_return,
        train_time,
        start.elapsed()
    );
}
