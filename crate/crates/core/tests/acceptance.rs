//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adma::active::{self, Lambda, Session, SimulatedOracle, Strategy, StrategyConfig};
use adma::pattern::{distinctiveness, kendall_tau, select_centers, TransformPattern};
use adma::store::{generate_synthetic_task, split_pool, EmbeddingDataset, SourceInput, SyntheticConfig};
use adma::trainer::{init_head, loss_and_gradient, macro_auc};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!(
            "panicked: {}",
            e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        ),
    });
    println!(
        "{} {name}: {} [{:.2}s]",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        start.elapsed().as_secs_f64()
    );
    out.pass
}

// ---------------------------------------------------------------- oracles

fn brute_tau_b(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let (mut concordant, mut discordant, mut tie_u, mut tie_v) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let du = u[i] - u[j];
            let dv = v[i] - v[j];
            match (du == 0.0, dv == 0.0) {
                (true, true) => {}
                (true, false) => tie_u += 1,
                (false, true) => tie_v += 1,
                (false, false) => {
                    if (du > 0.0) == (dv > 0.0) {
                        concordant += 1
                    } else {
                        discordant += 1
                    }
                }
            }
        }
    }
    let denom = (((concordant + discordant + tie_u) * (concordant + discordant + tie_v)) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

fn tied_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let levels = rng.random_range(1..=n.max(2));
    (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                rng.random_range(0..levels) as f64
            } else {
                rng.random::<f64>() * levels as f64
            }
        })
        .collect()
}

fn exhaustive_centers(reps: ArrayView2<f32>, labels: &[usize], classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|c| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            let dim = reps.ncols();
            let mean: Vec<f64> = (0..dim)
                .map(|d| members.iter().map(|&i| reps[[i, d]] as f64).sum::<f64>() / members.len() as f64)
                .collect();
            let dist = |i: usize| -> f64 { (0..dim).map(|d| (reps[[i, d]] as f64 - mean[d]).powi(2)).sum() };
            let mut best = members[0];
            for &i in &members {
                if dist(i) < dist(best) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn pair_count_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn softmax_probs(w: &Array2<f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = (0..w.nrows())
        .map(|k| b[k] + (0..x.len()).map(|d| w[[k, d]] * x[d]).sum::<f64>())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn top_b(values: &[(usize, f64)], b: usize) -> BTreeSet<usize> {
    let mut v = values.to_vec();
    v.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    v.into_iter().take(b).map(|(id, _)| id).collect()
}

// ---------------------------------------------------------------- criteria

fn tau_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=500);
        let u = tied_vector(&mut rng, n);
        let v = tied_vector(&mut rng, n);
        let fast = kendall_tau(&u, &v).expect("valid input");
        worst = worst.max((fast - brute_tau_b(&u, &v)).abs());
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-12 && elapsed < Duration::from_secs(30),
        detail: format!("1000 vectors, max |diff| = {worst:.3e}, {:.2}s (limit 30s)", elapsed.as_secs_f64()),
    }
}

fn distinctiveness_bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut out_of_range = 0;
    let mut endpoint_failures = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=20);
        let a = TransformPattern::new(tied_vector(&mut rng, k)).unwrap();
        let b = TransformPattern::new(tied_vector(&mut rng, k)).unwrap();
        let d = distinctiveness(&a, &b).unwrap();
        if !(0.0..=1.0).contains(&d) {
            out_of_range += 1;
        }
        let mut distinct: Vec<f64> = (0..k).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        distinct.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let shuffled: Vec<usize> = {
            let mut idx: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            idx
        };
        let p: Vec<f64> = shuffled.iter().map(|&i| distinct[i]).collect();
        let reversed: Vec<f64> = p.iter().map(|x| -x).collect();
        let same = TransformPattern::new(p.clone()).unwrap();
        let rev = TransformPattern::new(reversed).unwrap();
        if distinctiveness(&same, &same).unwrap() != 0.0 || distinctiveness(&same, &rev).unwrap() != 1.0 {
            endpoint_failures += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: out_of_range == 0 && endpoint_failures == 0 && elapsed < Duration::from_secs(10),
        detail: format!(
            "10000 pairs, {out_of_range} outside [0,1], {endpoint_failures} endpoint failures, {:.2}s (limit 10s)",
            elapsed.as_secs_f64()
        ),
    }
}

fn center_selection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..50 {
        let classes = rng.random_range(1..=10);
        let n = rng.random_range(classes..=500);
        let dim = rng.random_range(1..=12);
        let mut labels: Vec<usize> = (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        // coarse grid values create exact distance ties
        let reps = Array2::from_shape_fn((n, dim), |_| rng.random_range(-3i32..=3) as f32 * 0.5);
        let got = select_centers(reps.view(), &labels, classes).unwrap().indices;
        if got != exhaustive_centers(reps.view(), &labels, classes) {
            mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("50 labeled sets, {mismatches} mismatches"),
    }
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let problems = 25;
    for p in 0..problems {
        let classes = rng.random_range(2..=6);
        let dim = rng.random_range(1..=8);
        let m = rng.random_range(1..=30);
        let l2 = if p % 2 == 0 { 0.0 } else { rng.random::<f64>() * 0.1 };
        let x = Array2::from_shape_fn((m, dim), |_| rng.random::<f64>() * 4.0 - 2.0);
        let y: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        let head = init_head(dim, classes, p as u64).unwrap();
        let mut w = head.weights.clone();
        let mut b = head.bias.mapv(|_| rng.random::<f64>() - 0.5);
        let (_, grad) = loss_and_gradient(&w, &b, x.view(), &y, l2);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
        for k in 0..classes {
            for d in 0..dim {
                let orig = w[[k, d]];
                w[[k, d]] = orig + h;
                let plus = loss_and_gradient(&w, &b, x.view(), &y, l2).0;
                w[[k, d]] = orig - h;
                let minus = loss_and_gradient(&w, &b, x.view(), &y, l2).0;
                w[[k, d]] = orig;
                worst = worst.max(rel(grad.weights[[k, d]], (plus - minus) / (2.0 * h)));
            }
            let orig = b[k];
            b[k] = orig + h;
            let plus = loss_and_gradient(&w, &b, x.view(), &y, l2).0;
            b[k] = orig - h;
            let minus = loss_and_gradient(&w, &b, x.view(), &y, l2).0;
            b[k] = orig;
            worst = worst.max(rel(grad.bias[k], (plus - minus) / (2.0 * h)));
        }
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("{problems} problems, max relative error {worst:.3e} (limit 1e-4)"),
    }
}

fn small_task(seed: u64) -> (EmbeddingDataset, SourceInput) {
    let cfg = SyntheticConfig {
        k_source: 6,
        k_target: 3,
        dim_a: 10,
        dim_b: 8,
        source_per_class: 12,
        target_per_class: vec![20],
        ..SyntheticConfig::default()
    };
    let task = generate_synthetic_task(&cfg, seed).unwrap();
    (task.target, SourceInput::Centers(task.snapshot))
}

fn score_endpoints() -> Outcome {
    let b = 7;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let (pool, source) = small_task(seed);
        let config = StrategyConfig {
            batch_size: b,
            budget: 2 * b,
            lambda: Lambda::Fixed(1.0),
            seed,
            ..StrategyConfig::default()
        };
        let session = Session::new(&pool, None, &source, config).unwrap();
        let mut oracle = SimulatedOracle::new(&pool).unwrap();
        let mut state = session.initial_state().unwrap();

        let by_distinctiveness: Vec<(usize, f64)> = session.distinctiveness().iter().copied().enumerate().collect();
        let first = session.run_iteration(&mut state, &mut oracle).unwrap();
        if first.selected.iter().copied().collect::<BTreeSet<_>>() != top_b(&by_distinctiveness, b) {
            failures.push(format!("seed {seed} t=0"));
        }

        let k = pool.k_target as f64;
        let by_uncertainty: Vec<(usize, f64)> = state
            .unlabeled
            .iter()
            .map(|&id| {
                let x: Vec<f64> = pool.layer_b.row(id).iter().map(|&v| v as f64).collect();
                let p = softmax_probs(&state.head.weights, state.head.bias.as_slice().unwrap(), &x);
                let gini = 1.0 - p.iter().map(|q| q * q).sum::<f64>();
                (id, gini * k / (k - 1.0))
            })
            .collect();
        let second = session.run_iteration(&mut state, &mut oracle).unwrap();
        if second.selected.iter().copied().collect::<BTreeSet<_>>() != top_b(&by_uncertainty, b) {
            failures.push(format!("seed {seed} t=1"));
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!("20 pools, mismatches: {:?}", failures),
    }
}

fn run_outputs(pool: &EmbeddingDataset, test: &EmbeddingDataset, source: &SourceInput, threads: usize) -> (Vec<u8>, Vec<u8>) {
    let config = StrategyConfig {
        batch_size: 10,
        budget: 60,
        seed: 11,
        threads: Some(threads),
        ..StrategyConfig::default()
    };
    let mut oracle = SimulatedOracle::new(pool).unwrap();
    let (state, curve) = active::run(pool, Some(test), source, config, &mut oracle).unwrap();
    let mut scores = Vec::new();
    active::write_query_log_csv(&mut scores, &state.query_log).unwrap();
    let mut curve_csv = Vec::new();
    active::write_curve_csv(&mut curve_csv, &curve).unwrap();
    (scores, curve_csv)
}

fn determinism() -> Outcome {
    let cfg = SyntheticConfig {
        target_per_class: vec![60],
        ..SyntheticConfig::default()
    };
    let task = generate_synthetic_task(&cfg, 5).unwrap();
    let (pool, test) = split_pool(&task.target, 0.3, 5).unwrap();
    let source = SourceInput::Centers(task.snapshot);
    let a = run_outputs(&pool, &test, &source, 1);
    let b = run_outputs(&pool, &test, &source, 1);
    let c = run_outputs(&pool, &test, &source, 4);
    Outcome {
        pass: a == b && a == c,
        detail: format!(
            "repeat identical: {}, 1 vs 4 threads identical: {} ({} bytes of query log)",
            a == b,
            a == c,
            a.0.len()
        ),
    }
}

/// Shifted-cluster transfer task used for the strategy comparison.
fn comparison_config() -> SyntheticConfig {
    SyntheticConfig {
        k_source: 10,
        k_target: 5,
        target_per_class: vec![300],
        cluster_spread: 2.0,
        shift: 1.0,
        ..SyntheticConfig::default()
    }
}

fn final_accuracy(task: &adma::store::SyntheticTask, seed: u64, strategy: Strategy) -> f64 {
    let (pool, test) = split_pool(&task.target, 1.0 / 3.0, seed).unwrap();
    assert_eq!(pool.len(), 1000);
    let config = StrategyConfig {
        strategy,
        batch_size: 10,
        budget: 100,
        seed,
        ..StrategyConfig::default()
    };
    let mut oracle = SimulatedOracle::new(&pool).unwrap();
    let source = SourceInput::Centers(task.snapshot.clone());
    let (_, curve) = active::run(&pool, Some(&test), &source, config, &mut oracle).unwrap();
    curve.last().and_then(|m| m.accuracy).expect("test accuracy")
}

fn adma_vs_random() -> Outcome {
    let start = Instant::now();
    let cfg = comparison_config();
    let mut wins = 0;
    let (mut sum_adma, mut sum_random) = (0.0, 0.0);
    for seed in 0..10 {
        let task = generate_synthetic_task(&cfg, seed).unwrap();
        let adma = final_accuracy(&task, seed, Strategy::Adma);
        let random = final_accuracy(&task, seed, Strategy::Random);
        if adma >= random {
            wins += 1;
        }
        sum_adma += adma;
        sum_random += random;
    }
    let elapsed = start.elapsed();
    let (mean_adma, mean_random) = (sum_adma / 10.0, sum_random / 10.0);
    Outcome {
        pass: wins >= 8 && mean_adma > mean_random && elapsed < Duration::from_secs(300),
        detail: format!(
            "adma >= random in {wins}/10 seeds, mean {mean_adma:.4} vs {mean_random:.4}, {:.1}s (limit 300s)",
            elapsed.as_secs_f64()
        ),
    }
}

fn monotone_mismatch() -> Outcome {
    let means: Vec<f64> = [0.0, 1.0, 2.0]
        .iter()
        .map(|&shift| {
            let cfg = SyntheticConfig {
                target_per_class: vec![100],
                shift,
                ..SyntheticConfig::default()
            };
            let per_seed: Vec<f64> = (0..10)
                .map(|seed| {
                    let task = generate_synthetic_task(&cfg, seed).unwrap();
                    let source = SourceInput::Centers(task.snapshot);
                    let config = StrategyConfig {
                        batch_size: 1,
                        budget: 1,
                        ..StrategyConfig::default()
                    };
                    let session = Session::new(&task.target, None, &source, config).unwrap();
                    let d = session.distinctiveness();
                    d.iter().sum::<f64>() / d.len() as f64
                })
                .collect();
            per_seed.iter().sum::<f64>() / per_seed.len() as f64
        })
        .collect();
    Outcome {
        pass: means.windows(2).all(|w| w[0] <= w[1]),
        detail: format!("mean distinctiveness at shift 0/1/2: {:.4} / {:.4} / {:.4}", means[0], means[1], means[2]),
    }
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for _ in 0..20 {
        let classes = rng.random_range(2..=5);
        let n = rng.random_range(2..=50);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        // quantized scores produce ties
        let mut probs = Array2::from_shape_fn((n, classes), |_| rng.random_range(1..=8) as f64);
        for mut row in probs.outer_iter_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let per_class: Vec<f64> = (0..classes)
            .filter_map(|c| {
                let scores: Vec<f64> = probs.column(c).to_vec();
                let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                pair_count_auc(&scores, &positive)
            })
            .collect();
        let expected = (!per_class.is_empty()).then(|| per_class.iter().sum::<f64>() / per_class.len() as f64);
        if macro_auc(probs.view(), &labels) != expected {
            mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("20 test sets, {mismatches} mismatches"),
    }
}

fn main() {
    let results = [
        check("kendall tau-b matches pair enumeration", tau_equivalence),
        check("distinctiveness bounds and endpoints", distinctiveness_bounds),
        check("center selection matches exhaustive scan", center_selection),
        check("softmax head gradient matches finite differences", gradient_check),
        check("score endpoints select by distinctiveness then uncertainty", score_endpoints),
        check("full-run determinism across repeats and thread counts", determinism),
        check("adma beats random on shifted synthetic tasks", adma_vs_random),
        check("mean distinctiveness grows with shift", monotone_mismatch),
        check("macro auc matches pair counting", auc_oracle),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
