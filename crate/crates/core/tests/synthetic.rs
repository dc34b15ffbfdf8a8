use adma::active::{Session, StrategyConfig};
use adma::store::{generate_synthetic_task, SourceInput, SyntheticConfig};

fn distinctiveness(ds: &adma::store::EmbeddingDataset, source: &SourceInput) -> Vec<f64> {
    let config = StrategyConfig {
        batch_size: 1,
        budget: 1,
        ..StrategyConfig::default()
    };
    Session::new(ds, None, source, config).unwrap().distinctiveness().to_vec()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn unshifted_targets_look_like_fresh_source_draws() {
    let cfg = SyntheticConfig {
        k_source: 5,
        k_target: 5,
        target_per_class: vec![120],
        holdout_per_class: 120,
        shift: 0.0,
        ..SyntheticConfig::default()
    };
    let task = generate_synthetic_task(&cfg, 21).unwrap();
    let source = SourceInput::Centers(task.snapshot.clone());
    let target = distinctiveness(&task.target, &source);
    let holdout = distinctiveness(task.source_holdout.as_ref().unwrap(), &source);
    let (n, m) = (target.len() as f64, holdout.len() as f64);
    let d = ks_statistic(target, holdout);
    // critical value at alpha = 0.001
    let critical = 1.949 * ((n + m) / (n * m)).sqrt();
    assert!(d < critical, "KS statistic {d:.4} exceeds {critical:.4}");
}

#[test]
fn shifted_targets_are_more_distinctive_than_fresh_source_draws() {
    let cfg = SyntheticConfig {
        k_source: 5,
        k_target: 5,
        target_per_class: vec![120],
        holdout_per_class: 120,
        shift: 2.0,
        ..SyntheticConfig::default()
    };
    let task = generate_synthetic_task(&cfg, 21).unwrap();
    let source = SourceInput::Centers(task.snapshot.clone());
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let target = mean(distinctiveness(&task.target, &source));
    let holdout = mean(distinctiveness(task.source_holdout.as_ref().unwrap(), &source));
    assert!(target > holdout, "{target} vs {holdout}");
}

#[test]
fn ks_statistic_matches_hand_computed_values() {
    assert_eq!(ks_statistic(vec![1.0, 2.0], vec![1.0, 2.0]), 0.0);
    assert_eq!(ks_statistic(vec![1.0, 2.0], vec![3.0, 4.0]), 1.0);
    assert_eq!(ks_statistic(vec![1.0, 3.0], vec![2.0, 4.0]), 0.5);
}
