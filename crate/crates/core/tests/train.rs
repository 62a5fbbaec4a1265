use std::sync::Arc;

use proptest::prelude::*;
use propgen_core::autodiff::Interrupt;
use propgen_core::dsl::{builtin, check_shapes, parse, print, Dims};
use propgen_core::graph::{gen_synthetic, make_split, Graph, Split, SplitRatios, SyntheticSpec};
use propgen_core::train::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three classes, features are the one-hot label, edges form a ring inside
/// each class.
fn onehot_toy() -> Graph {
    let n = 60;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mut features = vec![0.0; n * 3];
    for (i, &y) in labels.iter().enumerate() {
        features[i * 3 + y] = 1.0;
    }
    let edges = (0..n).map(|i| (i, (i + 3) % n));
    Graph::new("onehot", n, 3, 3, edges, features, labels).unwrap()
}

fn model(graph: &Graph, split: &Split, cfg: &TrainConfig, name: &str) -> ModelAssembly<f32> {
    let dims = Dims {
        n: graph.num_nodes(),
        f: graph.num_features(),
        h: cfg.hidden,
        c: graph.num_classes(),
    };
    let tp = check_shapes(&parse(builtin(name).unwrap()).unwrap(), dims).unwrap();
    ModelAssembly::build(&tp, graph, split, cfg).unwrap()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        hidden: 16,
        ..TrainConfig::default()
    }
}

fn homophilic(n: usize, seed: u64) -> (Arc<Graph>, Arc<Split>) {
    let g = gen_synthetic(&SyntheticSpec {
        n,
        classes: 3,
        homophily: 0.9,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let s = make_split(n, SplitRatios::DENSE, g.labels(), seed, true).unwrap();
    (Arc::new(g), Arc::new(s))
}

#[test]
fn onehot_toy_is_fit_exactly() {
    let g = onehot_toy();
    // the identity map already separates the classes
    for i in 0..g.num_nodes() {
        let row = g.feature_row(i);
        let best = (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(best, g.labels()[i]);
    }
    let split = make_split(60, SplitRatios::DENSE, g.labels(), 1, true).unwrap();
    let cfg = small_cfg();
    let mut m = model(&g, &split, &cfg, "gcn");
    let out = train(&mut m, &split, &cfg, &Interrupt::none()).unwrap();
    assert_eq!(out.train_accuracy, 1.0);
    assert_eq!(out.test_accuracy, Some(1.0));
    assert_eq!(m.evaluate(&split.test).unwrap(), 1.0);
}

#[test]
fn same_seed_same_losses() {
    let (g, s) = homophilic(120, 3);
    let cfg = TrainConfig {
        max_epochs: 30,
        ..small_cfg()
    };
    let run = || {
        let mut m = model(&g, &s, &cfg, "appnp");
        train(&mut m, &s, &cfg, &Interrupt::none()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.losses.len(), 30);
    let bits = |o: &TrainOutcome| o.losses.iter().map(|l| l.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a, b);
}

#[test]
fn restored_checkpoint_matches_best_validation() {
    let (g, s) = homophilic(150, 8);
    let cfg = TrainConfig {
        patience: 10,
        ..small_cfg()
    };
    let mut m = model(&g, &s, &cfg, "gpr");
    let out = train(&mut m, &s, &cfg, &Interrupt::none()).unwrap();
    let best = out.val_history.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(out.val_accuracy, best);
    assert_eq!(out.val_history[out.best_epoch], best);
    assert!(out.epochs_run <= out.best_epoch + 1 + cfg.patience);
    assert_eq!(m.evaluate(&s.val).unwrap(), best);
}

#[test]
fn loss_falls_early_in_training() {
    let (g, s) = homophilic(200, 5);
    let cfg = TrainConfig {
        max_epochs: 5,
        ..small_cfg()
    };
    let mut m = model(&g, &s, &cfg, "gcn");
    let out = train(&mut m, &s, &cfg, &Interrupt::none()).unwrap();
    assert!(out.losses.iter().all(|l| l.is_finite()));
    assert!(out.losses[4] < out.losses[0], "{:?}", out.losses);
}

#[test]
fn untrained_model_is_at_chance() {
    let n = 1000;
    let c = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let features: Vec<f64> = (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let edges: Vec<(usize, usize)> = (0..3 * n)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    let g = Graph::new("random", n, c, 8, edges, features, labels).unwrap();
    let split = make_split(n, SplitRatios::DENSE, g.labels(), 0, false).unwrap();
    let mut m = model(&g, &split, &small_cfg(), "gcn");
    let all: Vec<usize> = (0..n).collect();
    let acc = m.evaluate(&all).unwrap();

    // predictions are independent of the labels, so correct ~ Binomial(n, 1/c)
    let p = 1.0 / c as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!(0.05 > 3.0 * sigma);
    assert!((acc - p).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn accuracy_edge_cases() {
    let labels = [0, 1, 2, 1];
    assert_eq!(accuracy(&labels, &labels, &[0, 1, 2, 3]).unwrap(), 1.0);
    assert_eq!(accuracy(&[0, 0, 0, 0], &labels, &[0, 1]).unwrap(), 0.5);
    for i in 0..4 {
        let a = accuracy(&[1, 1, 1, 1], &labels, &[i]).unwrap();
        assert!(a == 0.0 || a == 1.0);
    }
    assert_eq!(
        accuracy(&labels, &labels, &[]),
        Err(TrainError::EmptyIndexSet)
    );
}

#[test]
fn head_skipped_when_output_has_class_width() {
    let g = onehot_toy();
    let split = make_split(60, SplitRatios::DENSE, g.labels(), 1, true).unwrap();
    let cfg = small_cfg();
    let dims = Dims {
        n: 60,
        f: 3,
        h: 16,
        c: 3,
    };
    let text = "mechanism direct { consts { K = 1; } params { W: matrix(h, c) = glorot; }
        graph { Ahat = sym_norm(c = 1); } out { Y = spmm(Ahat, X) @ W; } }";
    let tp = check_shapes(&parse(text).unwrap(), dims).unwrap();
    let m = ModelAssembly::<f32>::build(&tp, &g, &split, &cfg).unwrap();
    assert!(!m.has_head());
    assert!(m.compute_graph().param_node("head.W").is_none());
    assert!(model(&g, &split, &cfg, "gcn").has_head());
}

#[test]
fn scoring_maps_failures_to_reasons() {
    let (g, s) = homophilic(120, 2);
    let cfg = TrainConfig {
        max_epochs: 40,
        ..small_cfg()
    };
    let ok = score_individual(builtin("gcn").unwrap(), g.clone(), s.clone(), &cfg);
    assert!(ok.is_ok(), "{ok:?}");
    let fit = ok.fitness.unwrap();
    assert!((0.0..=1.0).contains(&fit));
    assert!(ok.epochs_run <= 40);

    let cases = [
        ("not a program", DiscardReason::Parse),
        (
            "mechanism m { consts { K = 1; } params { W: matrix(c, h) = glorot; } out { Y = X @ W; } }",
            DiscardReason::Shape,
        ),
        (
            "mechanism m { consts { K = 1; } out { Y = X / (X - X); } }",
            DiscardReason::Numeric,
        ),
    ];
    for (text, reason) in cases {
        let r = score_individual(text, g.clone(), s.clone(), &cfg);
        assert_eq!(r.status, FitStatus::Discarded(reason), "{text}: {r:?}");
        assert_eq!(r.fitness, None);
    }
}

#[test]
fn fitness_is_validation_accuracy() {
    let (g, s) = homophilic(120, 4);
    let cfg = TrainConfig {
        max_epochs: 25,
        ..small_cfg()
    };
    let r = score_program(builtin("appnp").unwrap(), &g, &s, &cfg, &Interrupt::none());
    let mut m = model(&g, &s, &cfg, "appnp");
    let out = train(&mut m, &s, &cfg, &Interrupt::none()).unwrap();
    assert_eq!(r.fitness, Some(out.val_accuracy));
    assert_eq!(r.test_accuracy, out.test_accuracy);
}

#[test]
fn oversized_candidate_times_out_and_caller_continues() {
    let (g, s) = homophilic(500, 6);
    let mut prog = parse(builtin("gcn").unwrap()).unwrap();
    prog.set_const("K", 16.0).unwrap();
    let slow = print(&prog);
    let cfg = TrainConfig {
        hidden: 512,
        timeout_seconds: 1.0,
        ..TrainConfig::default()
    };
    let r = score_individual(&slow, g.clone(), s.clone(), &cfg);
    assert_eq!(r.status, FitStatus::Discarded(DiscardReason::Timeout));
    assert!(r.wall_seconds < 1.0 + 5.0, "{}", r.wall_seconds);

    let quick = TrainConfig {
        max_epochs: 10,
        ..small_cfg()
    };
    assert!(score_individual(builtin("gcn").unwrap(), g, s, &quick).is_ok());
}

#[test]
fn batch_keeps_submission_order() {
    let (g, s) = homophilic(100, 9);
    let cfg = TrainConfig {
        max_epochs: 10,
        ..small_cfg()
    };
    let texts: Vec<String> = [builtin("gcn").unwrap(), "junk", builtin("appnp").unwrap(), "x {"]
        .iter()
        .map(|t| t.to_string())
        .collect();
    let serial: Vec<FitResult> = texts
        .iter()
        .map(|t| score_individual(t, g.clone(), s.clone(), &cfg))
        .collect();
    let pooled = score_batch(&texts, g, s, &cfg, 3);
    let key = |r: &FitResult| (r.status, r.fitness, r.test_accuracy, r.epochs_run);
    assert_eq!(
        pooled.iter().map(key).collect::<Vec<_>>(),
        serial.iter().map(key).collect::<Vec<_>>()
    );
    assert_eq!(pooled[1].status, FitStatus::Discarded(DiscardReason::Parse));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ok_results_stay_in_range(seed in 0u64..1000, epochs in 1usize..12, which in 0usize..4) {
        let (g, s) = homophilic(60, seed);
        let cfg = TrainConfig { max_epochs: epochs, patience: 3, seed, ..small_cfg() };
        let name = ["gcn", "appnp", "gpr", "fagcn-lite"][which];
        let r = score_program(builtin(name).unwrap(), &g, &s, &cfg, &Interrupt::none());
        prop_assert!(r.is_ok());
        let f = r.fitness.unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(r.epochs_run <= epochs && r.epochs_run >= 1);
    }
}
