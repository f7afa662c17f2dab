#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
}

#[test]
fn tensor_rejects_inconsistent_shape() {
    assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
    let mut x = t(&[2], &[1.0, 2.0]);
    x.zero_grad();
    assert_eq!(x.grad().unwrap().len(), 2);
}

#[test]
fn matmul_hand_case() {
    let mut g = Graph::new();
    let a = g.input(t(&[1, 2], &[1.0, 2.0]));
    let b = g.input(t(&[2, 1], &[3.0, 4.0]));
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).values(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_operation() {
    let mut g = Graph::<f64>::new();
    let a = g.input(t(&[1, 2], &[1.0, 2.0]));
    let b = g.input(t(&[3, 1], &[3.0, 4.0, 5.0]));
    match g.matmul(a, b) {
        Err(Error::Shape { op, .. }) => assert_eq!(op, "matmul"),
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn concat_keeps_order() {
    let mut g = Graph::new();
    let a = g.input(t(&[4], &[1.0, 2.0, 3.0, 4.0]));
    let b = g.input(t(&[8], &[5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]));
    let c = g.concat(&[a, b]).unwrap();
    assert_eq!(g.value(c).shape(), &[12]);
    let expected: Vec<f64> = (1..=12).map(f64::from).collect();
    assert_eq!(g.value(c).values(), expected.as_slice());
}

#[test]
fn mse_of_equal_tensors_is_zero() {
    let mut g = Graph::new();
    let a = g.input(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
    let b = g.input(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
    let l = g.mse(a, b).unwrap();
    assert_eq!(g.value(l).item(), Some(0.0));
}

#[test]
fn derivative_of_square() {
    let mut params = ParamSet::new();
    let gi = params.add_group("x", true).unwrap();
    let x = params.add_param(gi, "x", t(&[1, 1], &[3.0]));
    params.zero_grad();
    let mut g = Graph::new();
    let xn = g.param(&params, x);
    let y = g.mul(xn, xn).unwrap();
    g.backward(y, &mut params).unwrap();
    assert_eq!(params.tensor(x).grad().unwrap(), &[6.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut params = ParamSet::new();
    let gi = params.add_group("w", true).unwrap();
    let w = params.add_param(gi, "w", t(&[1, 2], &[1.0, 2.0]));
    let mut g = Graph::new();
    let wn = g.param(&params, w);
    let y = g.scale(wn, 2.0);
    assert!(matches!(
        g.backward(y, &mut params),
        Err(Error::NonScalarBackward(_))
    ));
}

#[test]
fn linear_regression_gradient_matches_finite_difference() {
    let xs = [0.3, -1.2, 2.0, 0.7];
    let ys = [1.0, 0.5, -0.3, 2.2];
    let loss = |w: f64| {
        xs.iter()
            .zip(&ys)
            .map(|(x, y)| (w * x - y) * (w * x - y))
            .sum::<f64>()
            / xs.len() as f64
    };
    let w0 = 0.37;
    let mut params = ParamSet::new();
    let gi = params.add_group("w", true).unwrap();
    let w = params.add_param(gi, "w", t(&[1, 1], &[w0]));
    params.zero_grad();
    let mut g = Graph::new();
    let x = g.input(t(&[4, 1], &xs));
    let y = g.input(t(&[4, 1], &ys));
    let wn = g.param(&params, w);
    let pred = g.matmul(x, wn).unwrap();
    let l = g.mse(pred, y).unwrap();
    g.backward(l, &mut params).unwrap();
    let analytic = params.tensor(w).grad().unwrap()[0];
    let h = 1e-6;
    let fd = (loss(w0 + h) - loss(w0 - h)) / (2.0 * h);
    assert!(((analytic - fd) / fd).abs() < 1e-5, "{analytic} vs {fd}");
}

/// Builds a small two-layer network loss touching every primitive.
fn mixed_loss(params: &ParamSet<f64>, ids: &[ParamId], x: &Tensor<f64>, y: &Tensor<f64>) -> (Graph<f64>, NodeId) {
    let mut g = Graph::new();
    let xn = g.input(x.clone());
    let yn = g.input(y.clone());
    let w1 = g.param(params, ids[0]);
    let b1 = g.param(params, ids[1]);
    let w2 = g.param(params, ids[2]);
    let w3 = g.param(params, ids[3]);
    let h = g.matmul(xn, w1).unwrap();
    let h = g.add_bias(h, b1).unwrap();
    let h1 = g.activation(h, Activation::Silu);
    let h2 = g.activation(h, Activation::Tanh);
    let h = g.concat(&[h1, h2]).unwrap();
    let p = g.matmul(h, w2).unwrap();
    let q = g.matmul(h, w3).unwrap();
    let pq = g.mul(p, q).unwrap();
    let s = g.sub(p, pq).unwrap();
    let s = g.add(s, q).unwrap();
    let a = g.mse(s, yn).unwrap();
    let b = g.weighted_sq(p, yn, &[0.3, 1.7]).unwrap();
    let m = g.mean(q);
    let b = g.scale(b, 0.4);
    let l = g.add(a, b).unwrap();
    let l = g.add(l, m).unwrap();
    (g, l)
}

#[test]
fn every_primitive_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let mut params = ParamSet::new();
        let gi = params.add_group("net", true).unwrap();
        let ids = vec![
            params.add_glorot(gi, "w1", 3, 4, &mut rng),
            params.add_param(gi, "b1", t(&[4], &[0.1, -0.2, 0.05, 0.3])),
            params.add_glorot(gi, "w2", 8, 2, &mut rng),
            params.add_glorot(gi, "w3", 8, 2, &mut rng),
        ];
        let x = Tensor::new(vec![5, 3], (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y = Tensor::new(vec![5, 2], (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        params.zero_grad();
        let (g, l) = mixed_loss(&params, &ids, &x, &y);
        g.backward(l, &mut params).unwrap();

        let h = 1e-6;
        for &id in &ids {
            let analytic = params.tensor(id).grad().unwrap().to_vec();
            for k in 0..analytic.len() {
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    p.groups_mut()[id.group].params[id.index].tensor.values_mut()[k] += delta;
                    let (g, l) = mixed_loss(&p, &ids, &x, &y);
                    g.value(l).item().unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let denom = fd.abs().max(analytic[k].abs()).max(1e-6);
                assert!(
                    (analytic[k] - fd).abs() / denom < 1e-4,
                    "param {id:?}[{k}]: {} vs {fd}",
                    analytic[k]
                );
            }
        }
    }
}

#[test]
fn unreachable_group_stays_untouched_and_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamSet::new();
    let a = params.add_group("a", true).unwrap();
    let b = params.add_group("b", true).unwrap();
    let wa = params.add_glorot(a, "w", 2, 1, &mut rng);
    let wb = params.add_glorot(b, "w", 2, 1, &mut rng);
    let before = params.group(b).flat_values();
    let mut opt = OptimizerState::new(AdamWConfig::default());
    for _ in 0..3 {
        params.zero_grad();
        let mut g = Graph::new();
        let x = g.input(t(&[1, 2], &[0.5, -1.0]));
        let w = g.param(&params, wa);
        let _unused = g.param(&params, wb);
        let y = g.matmul(x, w).unwrap();
        let l = g.mean(y);
        g.backward(l, &mut params).unwrap();
        assert!(params.group(a).touched());
        assert!(!params.group(b).touched());
        assert!(params.group(b).params[0].tensor.grad().unwrap().iter().all(|&v| v == 0.0));
        adamw_step(&mut params, &mut opt).unwrap();
    }
    assert_eq!(params.group(b).flat_values(), before);
}

#[test]
fn frozen_group_enters_as_constant() {
    let mut params = ParamSet::new();
    let a = params.add_group("a", false).unwrap();
    let w = params.add_param(a, "w", t(&[1, 1], &[2.0]));
    params.zero_grad();
    let mut g = Graph::new();
    let wn = g.param(&params, w);
    let l = g.mul(wn, wn).unwrap();
    g.backward(l, &mut params).unwrap();
    assert!(!params.group(a).touched());
}

#[test]
fn adamw_zero_gradient_no_decay_is_identity() {
    let mut params = ParamSet::new();
    let a = params.add_group("a", true).unwrap();
    let w = params.add_param(a, "w", t(&[3], &[1.0, -2.0, 0.5]));
    params.zero_grad();
    params.groups_mut()[0].params[0].touched = true;
    let mut opt = OptimizerState::new(AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    });
    adamw_step(&mut params, &mut opt).unwrap();
    assert_eq!(params.tensor(w).values(), &[1.0, -2.0, 0.5]);
}

#[test]
fn adamw_single_step_hand_value() {
    // m̂ = 1, v̂ = 1 after bias correction: Δ = lr / (1 + ε).
    let mut params = ParamSet::new();
    let a = params.add_group("a", true).unwrap();
    let w = params.add_param(a, "w", t(&[1], &[1.0]));
    params.zero_grad();
    params.groups_mut()[0].params[0].tensor.grad_mut()[0] = 1.0;
    params.groups_mut()[0].params[0].touched = true;
    let mut opt = OptimizerState::new(AdamWConfig {
        lr: 1e-3,
        weight_decay: 0.0,
        ..AdamWConfig::default()
    });
    adamw_step(&mut params, &mut opt).unwrap();
    let v = params.tensor(w).values()[0];
    assert!((v - 0.99900000001).abs() < 1e-14, "{v}");
    assert!((1.0 - v - 1e-3).abs() < 1e-10);
}

#[test]
fn adamw_clips_to_unit_norm() {
    let mut params = ParamSet::new();
    let a = params.add_group("a", true).unwrap();
    params.add_param(a, "w", t(&[2], &[0.0, 0.0]));
    params.zero_grad();
    params.groups_mut()[0].params[0].tensor.grad_mut().copy_from_slice(&[6.0, 8.0]);
    params.groups_mut()[0].params[0].touched = true;
    let mut opt = OptimizerState::new(AdamWConfig::default());
    let report = adamw_step(&mut params, &mut opt).unwrap();
    assert_eq!(report.grad_norm, 10.0);
    assert!((report.applied_norm - 1.0).abs() < 1e-15);
}

#[test]
fn adamw_aborts_on_nan_naming_group() {
    let mut params = ParamSet::new();
    params.add_group("clean", true).unwrap();
    let a = params.add_group("loc_encoder", true).unwrap();
    params.add_param(a, "w", t(&[1], &[0.0]));
    params.zero_grad();
    params.groups_mut()[1].params[0].tensor.grad_mut()[0] = f64::NAN;
    params.groups_mut()[1].params[0].touched = true;
    let mut opt = OptimizerState::new(AdamWConfig::default());
    match adamw_step(&mut params, &mut opt) {
        Err(Error::NonFiniteGradient { group }) => assert_eq!(group, "loc_encoder"),
        other => panic!("{other:?}"),
    }
    assert_eq!(params.group(1).params[0].tensor.values(), &[0.0]);
}

#[test]
fn plateau_keeps_lr_while_improving() {
    let mut opt = OptimizerState::new(AdamWConfig::<f64>::default());
    for i in 0..40 {
        let (lr, stop) = plateau_and_early_stop(&mut opt, 10.0 - i as f64 * 0.1);
        assert_eq!(lr, 3e-4);
        assert!(!stop);
    }
}

#[test]
fn plateau_halves_after_patience_plus_one_flat_rounds() {
    let mut opt = OptimizerState::new(AdamWConfig::<f64>::default());
    plateau_and_early_stop(&mut opt, 1.0);
    for _ in 0..5 {
        let (lr, _) = plateau_and_early_stop(&mut opt, 1.0);
        assert_eq!(lr, 3e-4);
    }
    let (lr, stop) = plateau_and_early_stop(&mut opt, 1.0);
    assert_eq!(lr, 1.5e-4);
    assert!(!stop);
}

#[test]
fn early_stop_after_stop_patience_flat_rounds() {
    let mut opt = OptimizerState::new(AdamWConfig::<f64>::default());
    plateau_and_early_stop(&mut opt, 1.0);
    for i in 1..15 {
        let (_, stop) = plateau_and_early_stop(&mut opt, 1.0 + 1e-6 * i as f64);
        assert!(!stop, "stopped early at {i}");
    }
    let (lr, stop) = plateau_and_early_stop(&mut opt, 1.0);
    assert!(stop);
    // two reductions happened on rounds 6 and 12
    assert_eq!(lr, 3e-4 * 0.25);
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = ParamSet::<f64>::new();
    let a = params.add_group("obs_encoder", true).unwrap();
    let b = params.add_group("loc_encoder", false).unwrap();
    params.add_glorot(a, "layer0.weight", 3, 4, &mut rng);
    params.add_param(a, "layer0.bias", Tensor::zeros(vec![4]));
    params.add_glorot(b, "layer0.weight", 2, 2, &mut rng);
    let mut meta = std::collections::BTreeMap::new();
    meta.insert("norm.y.mean".to_string(), "1.5".to_string());
    let ck = Checkpoint {
        seed: 42,
        config_hash: "abc123".into(),
        meta,
        params,
    };
    let bytes = ck.to_bytes();
    let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
    assert_eq!(back.seed, 42);
    assert_eq!(back.config_hash, "abc123");
    assert_eq!(back.meta["norm.y.mean"], "1.5");
    assert_eq!(back.params.groups().len(), 2);
    assert!(!back.params.group(1).trainable);
    for (x, y) in back.params.groups().iter().zip(ck.params.groups()) {
        assert_eq!(x.flat_values(), y.flat_values());
    }
    assert_eq!(back.to_bytes(), bytes);
}

#[test]
fn single_precision_graph_works() {
    let mut g = Graph::<f32>::new();
    let a = g.input(Tensor::new(vec![1, 2], vec![1.0f32, 2.0]).unwrap());
    let b = g.input(Tensor::new(vec![2, 1], vec![3.0f32, 4.0]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).values(), &[11.0f32]);
}
