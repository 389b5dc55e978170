//! Closed-loop survey invariants on the circle benchmark.

use polysdf::oracle::{self, NEAR_THRESHOLD};
use polysdf::snapshot::Snapshot;
use polysdf::survey::{run_episode, AgentState, ControlParams, Episode, EpisodeConfig, HiddenShape, SensorConfig};
use polysdf::{init_spherical_prior, BasisConfig, RegularizerSpec};

fn circle_episode(steps: usize, output_dir: Option<std::path::PathBuf>) -> (Episode, Vec<Vec<f64>>, HiddenShape) {
    let config = BasisConfig::unit(3, 4, 2).unwrap();
    let shape = HiddenShape::circle([0.5, 0.5], 0.2).unwrap();
    let prior = init_spherical_prior(&config, &[0.5, 0.5], 0.25, 100.0).unwrap();
    let eval_points = oracle::shell_points(&shape, &config, 300, NEAR_THRESHOLD, 7).unwrap();
    let episode = run_episode(
        &shape,
        &prior,
        &RegularizerSpec::defaults_for(&config),
        &EpisodeConfig {
            steps,
            seed: 0,
            sensor: SensorConfig::default(),
            control: ControlParams::default(),
            start: AgentState::new([0.8, 0.5], [0.0, 1.0]).unwrap(),
            eval_points: eval_points.clone(),
            report_interval: 100,
            snapshot_interval: 250,
            output_dir,
        },
    )
    .unwrap();
    (episode, eval_points, shape)
}

#[test]
fn circle_benchmark_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let (episode, eval_points, shape) = circle_episode(500, Some(dir.path().to_path_buf()));
    assert_eq!(episode.records.len(), 500);
    assert!(episode.halted.is_none());

    // near MAE every 50 steps, starting from the prior at step 0
    let config = BasisConfig::unit(3, 4, 2).unwrap();
    let prior = init_spherical_prior(&config, &[0.5, 0.5], 0.25, 100.0).unwrap();
    let start = oracle::evaluate(&prior, &shape, &eval_points).unwrap().near.mae.mean;
    let mut series = vec![start];
    series.extend(episode.records.iter().filter(|r| r.step % 50 == 0).map(|r| r.mae_near));
    let intervals = series.len() - 1;
    let non_increasing = series.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(non_increasing * 5 >= intervals * 4, "MAE series {series:?}");

    let d_star = ControlParams::default().target_distance;
    for r in episode.records.iter().filter(|r| r.step > 100) {
        assert!((0.5 * d_star..=2.0 * d_star).contains(&r.true_distance), "step {} at {}", r.step, r.true_distance);
    }
    let mean_ms = episode.records.iter().map(|r| r.seconds).sum::<f64>() * 1e3 / 500.0;
    assert!(mean_ms < 30.0, "mean step {mean_ms} ms");

    assert_eq!(episode.reports.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![100, 200, 300, 400, 500]);
    let snap = Snapshot::load(&dir.path().join("snapshot_000500.snap")).unwrap();
    assert_eq!(snap.model, episode.model);
    let log = std::fs::read_to_string(dir.path().join("trajectory.txt")).unwrap();
    assert_eq!(log.lines().count(), 501);
}

#[test]
fn episodes_are_deterministic() {
    let (a, _, _) = circle_episode(60, None);
    let (b, _, _) = circle_episode(60, None);
    assert_eq!(a.trajectory_log(), b.trajectory_log());
    assert_eq!(a.model, b.model);
}

#[test]
fn square_is_tracked_and_capsule_runs() {
    let config = BasisConfig::unit(3, 4, 2).unwrap();
    let prior = init_spherical_prior(&config, &[0.5, 0.5], 0.25, 100.0).unwrap();
    let run = |shape: &HiddenShape| {
        run_episode(
            shape,
            &prior,
            &RegularizerSpec::defaults_for(&config),
            &EpisodeConfig {
                steps: 400,
                seed: 1,
                sensor: SensorConfig::default(),
                control: ControlParams::default(),
                start: AgentState::new([0.8, 0.5], [0.0, 1.0]).unwrap(),
                eval_points: Vec::new(),
                report_interval: 0,
                snapshot_interval: 0,
                output_dir: None,
            },
        )
        .unwrap()
    };
    let square = run(&HiddenShape::polygon(vec![[0.3, 0.3], [0.7, 0.3], [0.7, 0.7], [0.3, 0.7]]).unwrap());
    for r in square.records.iter().filter(|r| r.step > 100) {
        assert!((0.05..=0.2).contains(&r.true_distance), "step {} at {}", r.step, r.true_distance);
    }
    // the capsule's flat flanks are not tracked reliably at the default tension; only check the loop completes
    let capsule = run(&HiddenShape::capsule([0.4, 0.5], [0.6, 0.5], 0.15).unwrap());
    assert_eq!(capsule.records.len(), 400);
    assert!(capsule.records.iter().all(|r| r.true_distance.is_finite()));
}
