use cbda_core::metrics::max_min_ratio;
use cbda_core::scenario::{generate_ground_truth, run_loop_on};
use cbda_core::{BudgetSchedule64, DatasetShape, Heuristic, LoopOptions, ScenarioConfig, Strategy};

const SKEWED: [f64; 5] = [0.6, 0.2, 0.1, 0.07, 0.03];

fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        shape: DatasetShape::new(20, 32, 32, 5).unwrap(),
        class_frequencies: SKEWED.to_vec(),
        spatial_granularity: 4,
        noise_schedule: vec![0.8, 0.7, 0.6, 0.5, 0.4],
        seed,
    }
}

fn sched() -> BudgetSchedule64 {
    BudgetSchedule64::uniform(0.05, 5, 5).unwrap()
}

#[test]
fn empirical_frequencies_follow_the_config() {
    let cfg = ScenarioConfig {
        shape: DatasetShape::new(100, 64, 64, 5).unwrap(),
        spatial_granularity: 8,
        ..small(2024)
    };
    let counts = generate_ground_truth(&cfg).unwrap().class_counts();
    let total: u64 = counts.iter().sum();
    for (c, (&n, &f)) in counts.iter().zip(&SKEWED).enumerate() {
        let got = n as f64 / total as f64;
        assert!((got - f).abs() <= 0.2 * f, "class {c}: {got} vs {f}");
    }
}

#[test]
fn reports_are_deterministic_and_ordered() {
    let cfg = small(9);
    let gt = generate_ground_truth(&cfg).unwrap();
    for strategy in Strategy::ALL {
        let a = run_loop_on(
            &gt,
            &cfg,
            &sched(),
            strategy,
            Heuristic::Margin,
            &LoopOptions::default(),
        )
        .unwrap();
        let b = run_loop_on(
            &gt,
            &cfg,
            &sched(),
            strategy,
            Heuristic::Margin,
            &LoopOptions::default(),
        )
        .unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.store, b.store);
        let order: Vec<u32> = a.report.iterations.iter().map(|r| r.iteration).collect();
        assert_eq!(order, vec![1, 2, 3, 4, 5]);
    }
}

#[test]
fn ra_splits_every_iteration_evenly() {
    let cfg = small(4);
    let gt = generate_ground_truth(&cfg).unwrap();
    let out = run_loop_on(
        &gt,
        &cfg,
        &sched(),
        Strategy::Ra,
        Heuristic::Entropy,
        &LoopOptions::default(),
    )
    .unwrap();
    for rec in &out.report.iterations {
        assert_eq!(rec.shortfall, 0);
        let first = rec.per_image_counts[0];
        assert!(first > 0);
        assert!(
            rec.per_image_counts.iter().all(|&c| c == first),
            "iteration {}",
            rec.iteration
        );
    }
}

#[test]
fn cumulative_counts_follow_the_schedule() {
    let cfg = small(5);
    let gt = generate_ground_truth(&cfg).unwrap();
    let total = cfg.shape.total_pixels();
    for strategy in [Strategy::Ra, Strategy::Da, Strategy::Cbra, Strategy::Cbda] {
        let out = run_loop_on(
            &gt,
            &cfg,
            &sched(),
            strategy,
            Heuristic::RegionImpurity,
            &LoopOptions::default(),
        )
        .unwrap();
        let mut cumulative = 0;
        for rec in &out.report.iterations {
            cumulative += rec.picked;
            let target = total * u64::from(rec.iteration) / 100;
            if matches!(strategy, Strategy::Da | Strategy::Cbda) {
                assert_eq!(cumulative, target, "{strategy} iteration {}", rec.iteration);
            } else {
                // equal split floors away less than one pixel per image
                assert!(
                    cumulative <= target && target - cumulative < 20,
                    "{strategy} iteration {}",
                    rec.iteration
                );
            }
        }
        assert_eq!(out.store.len(), cumulative);
    }
}

#[test]
fn image_strategy_takes_whole_images() {
    let cfg = ScenarioConfig {
        shape: DatasetShape::new(40, 16, 16, 5).unwrap(),
        ..small(6)
    };
    let sched = BudgetSchedule64::uniform(0.5, 5, 5).unwrap();
    let gt = generate_ground_truth(&cfg).unwrap();
    let out = run_loop_on(
        &gt,
        &cfg,
        &sched,
        Strategy::Image,
        Heuristic::Entropy,
        &LoopOptions::default(),
    )
    .unwrap();
    let counts = out.store.per_image_counts();
    assert!(counts.iter().all(|&c| c == 0 || c == 256));
    assert_eq!(out.store.len(), 20 * 256);
}

#[test]
fn pseudo_accuracy_improves_as_noise_falls() {
    let mut mean = [0.0; 5];
    for seed in 0..20 {
        let out = cbda_core::run_loop(
            &small(seed),
            &sched(),
            Strategy::Da,
            Heuristic::Entropy,
            &LoopOptions::default(),
        )
        .unwrap();
        for (m, rec) in mean.iter_mut().zip(&out.report.iterations) {
            *m += rec.pseudo_accuracy / 20.0;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
}

#[test]
fn balanced_runs_narrow_the_count_ratio() {
    let mut wins = 0;
    for seed in 0..100 {
        let cfg = small(1000 + seed);
        let gt = generate_ground_truth(&cfg).unwrap();
        let ratio = |s| {
            let out = run_loop_on(
                &gt,
                &cfg,
                &sched(),
                s,
                Heuristic::Entropy,
                &LoopOptions::default(),
            )
            .unwrap();
            max_min_ratio(&out.report.final_record().unwrap().class_counts).unwrap_or(f64::INFINITY)
        };
        wins += usize::from(ratio(Strategy::Cbda) < ratio(Strategy::Da));
    }
    assert!(wins >= 95, "{wins}/100");
}
