use super::*;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};

#[test]
fn init_is_deterministic_with_expected_shapes() {
    let a = Mlp::init(&[4, 8, 3], 11).unwrap();
    let b = Mlp::init(&[4, 8, 3], 11).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, Mlp::init(&[4, 8, 3], 12).unwrap());
    assert_eq!(a.weight(0).dim(), (8, 4));
    assert_eq!(a.weight(1).dim(), (3, 8));
    assert_eq!(a.bias(0).len(), 8);
    assert_eq!(a.bias(1).len(), 3);
    assert!(a.bias(0).iter().chain(a.bias(1).iter()).all(|&b| b == 0.0));
    assert_eq!(a.n_params(), 8 * 4 + 8 + 3 * 8 + 3);
}

#[test]
fn init_rejects_bad_widths() {
    assert!(matches!(Mlp::init(&[4], 0), Err(NnError::BadWidths(_))));
    assert!(matches!(Mlp::init(&[], 0), Err(NnError::BadWidths(_))));
    assert!(matches!(Mlp::init(&[4, 0, 2], 0), Err(NnError::BadWidths(_))));
}

#[test]
fn he_init_standard_deviation() {
    let net = Mlp::init(&[256, 256], 3).unwrap();
    let w = net.weight(0);
    let n = w.len() as f64;
    let mean = w.sum() / n;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = (2.0f64 / 256.0).sqrt();
    assert!((var.sqrt() - expected).abs() / expected < 0.1, "std {}", var.sqrt());
    assert!(mean.abs() < 0.01);
}

#[test]
fn identity_single_layer() {
    let mut net = Mlp::init(&[3, 3], 0).unwrap();
    net.weight_mut(0).fill(0.0);
    net.weight_mut(0).diag_mut().fill(1.0);
    let x = [0.5, -2.0, 7.25];
    assert_eq!(net.forward(&x).unwrap(), x.to_vec());
}

#[test]
fn zero_weights_give_bias() {
    let mut net = Mlp::init(&[2, 4, 2], 0).unwrap();
    net.params_mut().fill(0.0);
    net.bias_mut(1).copy_from_slice(&[0.3, -1.5]);
    assert_eq!(net.forward(&[9.0, -9.0]).unwrap(), vec![0.3, -1.5]);
}

#[test]
fn hand_computed_two_two_one() {
    // h = relu([[1, -1], [0.5, 2]] x + [0, -1]); y = [2, -3] h + 0.5
    let params = vec![1.0, -1.0, 0.5, 2.0, 0.0, -1.0, 2.0, -3.0, 0.5];
    let net = Mlp::from_params(&[2, 2, 1], params).unwrap();
    // x = (3, 1): z = (2, 2.5), h = (2, 2.5), y = 4 - 7.5 + 0.5 = -3
    assert_eq!(net.forward(&[3.0, 1.0]).unwrap(), vec![-3.0]);
    // x = (1, 2): z = (-1, 3.5), h = (0, 3.5), y = -10.5 + 0.5 = -10
    assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![-10.0]);
    assert!(matches!(
        net.forward(&[1.0]),
        Err(NnError::ShapeMismatch { expected: 2, got: 1 })
    ));
}

#[test]
fn backward_linear_identities() {
    let net = Mlp::init(&[3, 2], 5).unwrap();
    let x = [1.0, -2.0, 0.5];
    let zero = net.backward(&x, &[0.0, 0.0]).unwrap();
    assert!(zero.params.iter().all(|&g| g == 0.0));
    let g = [0.25, -4.0];
    let grads = net.backward(&x, &g).unwrap();
    for o in 0..2 {
        for i in 0..3 {
            assert_eq!(grads.params[o * 3 + i], g[o] * x[i]);
        }
    }
    assert_eq!(&grads.params[6..], &g);
    assert!(net.backward(&x, &[1.0]).is_err());
}

#[test]
fn finite_difference_checks() {
    let net = Mlp::init(&[4, 8, 3], 9).unwrap();
    let report = finite_diff_check(&net, &[0.3, -0.7, 1.1, 0.2], 1e-3).unwrap();
    assert!(report.passed, "{report:?}");

    let probe = probe_weights(3);
    let x = [0.3, -0.7, 1.1, 0.2];
    let mut grads = net.backward(&x, &probe).unwrap().params;
    let i = grads.iter().position(|g| g.abs() > 1e-3).unwrap();
    grads[i] *= 2.0;
    let bad = compare_gradients(&net, &x, &probe, &grads, 1e-4, 1e-3).unwrap();
    assert!(!bad.passed);
    assert_eq!(bad.worst_param, Some(i));

    let mut dead = net.clone();
    for l in 0..dead.n_layers() {
        dead.bias_mut(l).fill(0.0);
    }
    let report = finite_diff_check(&dead, &[0.0; 4], 1e-3).unwrap();
    assert!(report.passed);
    assert_eq!(report.max_rel_error, 0.0);
}

#[test]
fn adam_rules() {
    let mut p = vec![1.0, -2.0];
    let mut opt = Adam::new(2, 0.01);
    opt.step(&mut p, &[0.0, 0.0]).unwrap();
    assert_eq!(p, vec![1.0, -2.0]);

    let mut p = vec![1.0, -2.0];
    let mut opt = Adam::new(2, 0.01);
    opt.step(&mut p, &[3.0, -0.001]).unwrap();
    assert!((p[0] - (1.0 - 0.01)).abs() < 1e-6);
    assert!((p[1] - (-2.0 + 0.01)).abs() < 1e-4);
}

#[test]
fn adam_minimizes_quadratic() {
    // f(x) = (x - 3)^2
    let mut x = vec![0.0];
    let mut opt = Adam::new(1, 0.1);
    for _ in 0..200 {
        let g = vec![2.0 * (x[0] - 3.0)];
        opt.step(&mut x, &g).unwrap();
    }
    assert!((x[0] - 3.0).abs() < 1e-3, "{}", x[0]);
}

#[test]
fn clip_grad_norm_scales() {
    let mut g = vec![3.0, 4.0];
    assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
    assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    let mut small = vec![0.1];
    clip_grad_norm(&mut small, 1.0);
    assert_eq!(small, vec![0.1]);
}

#[test]
fn batch_matches_single_rows() {
    let net = Mlp::init(&[5, 7, 4], 2).unwrap();
    let rows: Vec<Vec<f64>> = (0..6).map(|r| (0..5).map(|c| (r * 5 + c) as f64 * 0.1 - 1.0).collect()).collect();
    let x = stack_rows(&rows, 5);
    let cache = net.forward_batch(x.view()).unwrap();
    let gout = Array2::from_elem((6, 4), 0.5);
    let (gp, _) = net.backward_batch(&cache, gout.view()).unwrap();
    let mut sum = vec![0.0; net.n_params()];
    for (r, row) in rows.iter().enumerate() {
        let y = net.forward(row).unwrap();
        for (a, b) in y.iter().zip(cache.output().row(r)) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = net.backward(row, &[0.5; 4]).unwrap();
        sum.iter_mut().zip(&g.params).for_each(|(s, v)| *s += v);
    }
    for (a, b) in gp.iter().zip(&sum) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn serde_round_trip_is_bit_exact() {
    let net = Mlp::init(&[6, 16, 5], 77).unwrap();
    let mut opt = Adam::new(net.n_params(), 5e-4);
    let mut p = net.params().to_vec();
    let g = vec![0.123456789; p.len()];
    opt.step(&mut p, &g).unwrap();
    let text = serde_json::to_string(&(&net, &opt)).unwrap();
    let (back, opt_back): (Mlp, Adam) = serde_json::from_str(&text).unwrap();
    assert_eq!(back.param_hash(), net.param_hash());
    assert_eq!(opt_back, opt);
}

#[test]
fn gradient_correctness_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let depth = rng.random_range(1..4);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..9)).collect();
        let net = Mlp::init(&widths, k).unwrap();
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let report = finite_diff_check(&net, &x, 1e-3).unwrap();
        worst = worst.max(report.max_rel_error);
    }
    assert!(worst < 1e-3, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_and_backward_are_pure(seed in 0u64..10_000, x in prop::collection::vec(-3.0f64..3.0, 4)) {
        let net = Mlp::init(&[4, 6, 2], seed).unwrap();
        let before = net.clone();
        let y1 = net.forward(&x).unwrap();
        let g1 = net.backward(&x, &[1.0, -1.0]).unwrap();
        prop_assert_eq!(&net, &before);
        prop_assert_eq!(y1, net.forward(&x).unwrap());
        prop_assert_eq!(g1, net.backward(&x, &[1.0, -1.0]).unwrap());
    }

    #[test]
    fn training_trajectory_is_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut net = Mlp::init(&[3, 5, 1], seed).unwrap();
            let mut opt = Adam::new(net.n_params(), 0.01);
            for step in 0..20 {
                let x = [step as f64 * 0.1, 1.0, -0.5];
                let y = net.forward(&x).unwrap()[0];
                let g = net.backward(&x, &[2.0 * (y - 1.0)]).unwrap();
                let mut p = net.params().to_vec();
                opt.step(&mut p, &g.params).unwrap();
                net.params_mut().copy_from_slice(&p);
            }
            net.param_hash()
        };
        prop_assert_eq!(run(), run());
    }
}
