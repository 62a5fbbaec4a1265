use propgen_core::autodiff::gradcheck::{gradient_suite, relative_gradient_error, FD_STEP};
use propgen_core::autodiff::{ComputeGraph, Interrupt, Mode, ParamInit, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_op_matches_finite_differences() {
    let report = gradient_suite(20, 2024).unwrap();
    for check in &report {
        println!(
            "{:<16} worst rel err {:.3e}",
            check.op, check.worst_relative_error
        );
    }
    for check in report {
        assert!(
            check.worst_relative_error < 1e-4,
            "{} failed: {:e}",
            check.op,
            check.worst_relative_error
        );
    }
}

#[test]
fn relu_of_matmul_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut g = ComputeGraph::<f64>::new();
        let x = g.param("X", (4, 3), ParamInit::Normal, &mut rng).unwrap();
        let w = g
            .param("W", (3, 2), ParamInit::GlorotUniform, &mut rng)
            .unwrap();
        let y = g.matmul(x, w).unwrap();
        let r = g.relu(y);
        let loss = g.sum(r);
        assert!(relative_gradient_error(&mut g, loss, FD_STEP).unwrap() < 1e-4);
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = ComputeGraph::<f64>::new();
    let x = g
        .param("X", (6, 5), ParamInit::GlorotUniform, &mut rng)
        .unwrap();
    let big = g.scale(x, 30.0);
    let s = g.softmax_rows(big);
    g.forward(&[], Mode::Eval, &Interrupt::none()).unwrap();
    let v = g.value(s).unwrap();
    for r in 0..6 {
        let total: f64 = v.row(r).iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(v.row(r).iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn cross_entropy_decreases_as_correct_logit_grows() {
    let mut losses = Vec::new();
    for scale in [1.0, 3.0, 9.0] {
        let mut g = ComputeGraph::<f64>::new();
        let z = g.input("z", (2, 3));
        let loss = g
            .cross_entropy(z, vec![0, 2].into(), vec![0, 1].into())
            .unwrap();
        let logits = Tensor::from_f64((2, 3), &[scale, 0.0, 0.0, 0.0, 0.0, scale]);
        g.forward(&[logits], Mode::Eval, &Interrupt::none())
            .unwrap();
        losses.push(g.value(loss).unwrap().at(0, 0));
    }
    assert!(losses[0] > losses[1] && losses[1] > losses[2], "{losses:?}");
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = ComputeGraph::<f32>::new();
        let x = g.param("X", (16, 8), ParamInit::Normal, &mut rng).unwrap();
        let w = g
            .param("W", (8, 8), ParamInit::GlorotUniform, &mut rng)
            .unwrap();
        let y = g.matmul(x, w).unwrap();
        let d = g.dropout(y, 0.5).unwrap();
        let e = g.elu(d);
        g.forward(&[], Mode::Train { seed: 4, epoch: 2 }, &Interrupt::none())
            .unwrap();
        g.value(e)
            .unwrap()
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
