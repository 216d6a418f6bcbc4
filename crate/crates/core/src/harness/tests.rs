use std::time::Duration;

use super::*;
use crate::control::{EpisodeLog, Variant};
use crate::error::Error;

fn fake_run(variant: Variant, seed: u64, scores: &[f64], game_max: f64) -> RunMetrics {
    let mut best = 0.0f64;
    let episodes = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            best = best.max(s);
            EpisodeLog {
                episode: i + 1,
                score: s,
                length: 10,
                phase1_steps: i % 3,
                max_seen: best,
                limit: 50,
                td_loss: 0.0,
                retrained: None,
            }
        })
        .collect();
    RunMetrics {
        variant,
        seed,
        game_max,
        episodes,
        wall_clock: Duration::from_millis(5),
    }
}

/// Small, fast configuration for end-to-end checks.
fn tiny_config() -> ExperimentConfig {
    "[experiment]
     episodes = 12
     seeds = 0, 1, 2
     [game]
     depth = 3
     branching = 3
     bottlenecks = 2
     rewards = 1:1, 2:2
     deadends = 1, 2
     [agent]
     batch = 4
     retrain_every = 3
     [invdy]
     hidden = 8
     embed_dim = 8
     [il]
     hidden = 8
     embed_dim = 8
     passes = 2"
        .parse()
        .unwrap()
}

#[test]
fn avg_uses_last_hundred_or_all() {
    let short = fake_run(Variant::Xtx, 0, &[1.0, 2.0, 3.0], 20.0);
    assert_eq!(short.avg(), 2.0);
    let mut scores = vec![0.0; 50];
    scores.extend(vec![10.0; 100]);
    let long = fake_run(Variant::Xtx, 0, &scores, 20.0);
    assert_eq!(long.avg(), 10.0);
    assert_eq!(long.normalized(), 0.5);
    assert_eq!(long.max(), 10.0);
    assert_eq!(trailing_mean(&[], 100), 0.0);
}

#[test]
fn max_bounds_every_score() {
    let r = fake_run(Variant::Drrn, 3, &[4.0, 0.0, 7.0, 2.0], 10.0);
    assert!(r.scores().iter().all(|&s| s <= r.max()));
    assert!(r.episodes.iter().all(|e| e.score <= e.max_seen));
}

#[test]
fn population_std() {
    let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!((m, s), (5.0, 2.0));
}

#[test]
fn summary_matches_recomputation_from_csv() {
    let cfg = ExperimentConfig::default();
    let runs = vec![
        fake_run(Variant::Xtx, 0, &[1.0, 5.0, 15.0, 15.0], 15.0),
        fake_run(Variant::Xtx, 1, &[0.0, 5.0, 5.0, 5.0], 15.0),
        fake_run(Variant::Xtx, 2, &[0.0, 0.0, 15.0, 5.0], 15.0),
        fake_run(Variant::Drrn, 0, &[0.0, 0.0, 0.0, 5.0], 15.0),
    ];
    let text = metrics_csv(&cfg, &runs).unwrap();
    let (parsed, game_max) = parse_metrics(&text).unwrap();
    assert_eq!(game_max, Some(15.0));
    assert_eq!(parsed, rows(&runs));
    let direct = summaries(&runs);
    assert_eq!(summaries_from_rows(&parsed, 15.0), direct);

    let xtx = &direct[0];
    let avgs = [36.0 / 4.0, 15.0 / 4.0, 20.0 / 4.0];
    let (m, s) = mean_std(&avgs);
    assert!((xtx.avg_mean - m).abs() < 1e-12 && (xtx.avg_std - s).abs() < 1e-12);
    assert!((xtx.normalized - m / 15.0).abs() < 1e-12);
    assert!((xtx.max_mean - 35.0 / 3.0).abs() < 1e-12);
    assert!(summary_table(&direct).contains("| xtx | 3 |"));
}

#[test]
fn three_seeds_give_three_rows_per_episode() {
    let cfg = tiny_config();
    let runs = run_experiment(&cfg).unwrap();
    assert_eq!(runs.len(), 3);
    let rs = rows(&runs);
    for e in 1..=cfg.episodes {
        assert_eq!(rs.iter().filter(|r| r.episode == e).count(), 3);
    }
    let s = summaries(&runs);
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].seeds.len(), 3);
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = tiny_config();
    let a = metrics_csv(&cfg, &run_grid(&cfg, &[Variant::Xtx, Variant::Drrn]).unwrap()).unwrap();
    let b = metrics_csv(&cfg, &run_grid(&cfg, &[Variant::Xtx, Variant::Drrn]).unwrap()).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("# [experiment]"));
    assert!(a.contains("# lr = 0.0001"));
}

#[test]
fn seeds_change_the_outcome() {
    let cfg = tiny_config();
    let a = run_seed(&cfg, Variant::Lambda1, 0).unwrap();
    let b = run_seed(&cfg, Variant::Lambda1, 1).unwrap();
    assert_ne!(a.scores().iter().zip(b.scores()).filter(|(x, y)| *x != y).count(), 0);
}

#[test]
fn baseline_configurations() {
    let cfg = ExperimentConfig {
        variant: Variant::Drrn,
        ..ExperimentConfig::default()
    };
    let eff = cfg.agent_config().effective();
    assert_eq!(
        (
            eff.intrinsic.alpha1,
            eff.intrinsic.alpha2,
            eff.intrinsic.alpha3,
            eff.rho
        ),
        (0.0, 0.0, 0.0, 0.0)
    );
    assert!(!Variant::Drrn.uses_phases());

    // lambda1 is the exploration network alone, with the full objective.
    let l1 = ExperimentConfig {
        variant: Variant::Lambda1,
        ..ExperimentConfig::default()
    }
    .agent_config()
    .effective();
    assert_eq!(Variant::Lambda1.global_lambda(), Some(1.0));
    assert_eq!(l1.intrinsic, cfg.agent.intrinsic);
    assert_eq!(l1.rho, cfg.agent.rho);
}

#[test]
fn unknown_variant_lists_the_valid_ones() {
    let e = "[experiment]\nvariant = dqn".parse::<ExperimentConfig>().unwrap_err();
    assert!(matches!(e, Error::UnknownVariant(_)));
    let msg = e.to_string();
    for v in Variant::ALL {
        assert!(msg.contains(v.name()), "{msg}");
    }
}

#[test]
fn report_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let runs = vec![
        fake_run(Variant::Xtx, 0, &[1.0, 2.0], 20.0),
        fake_run(Variant::Lambda0, 0, &[0.0, 2.0], 20.0),
    ];
    let paths = emit_report(dir.path(), &cfg, &runs).unwrap();
    assert!(paths.iter().all(|p| p.exists()));
    let svg = std::fs::read_to_string(dir.path().join(PLOT_FILE)).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("lambda0"));
    assert_eq!(report_dir(dir.path()).unwrap(), summaries(&runs));
    assert!(emit_report(dir.path(), &cfg, &[]).is_err());
}
