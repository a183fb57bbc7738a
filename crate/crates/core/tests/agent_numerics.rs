mod common;

use cloudedge::agent::{Dense, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain nested-loop evaluation: ReLU between layers, identity at the end.
fn reference_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let layers = mlp.layers();
    for (k, layer) in layers.iter().enumerate() {
        let mut z = vec![0.0; layer.outputs];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut acc = layer.biases[o];
            for (i, ai) in a.iter().enumerate() {
                acc += layer.weights[o * layer.inputs + i] * ai;
            }
            *zo = if k + 1 < layers.len() { acc.max(0.0) } else { acc };
        }
        a = z;
    }
    a
}

#[test]
fn forward_matches_independent_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for sizes in [vec![4, 8, 9], vec![76, 64, 64, 9], vec![3, 9]] {
        let mlp = Mlp::new(&sizes, &mut rng).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = mlp.forward(&x).unwrap();
            let want = reference_forward(&mlp, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
            }
        }
    }
}

#[test]
fn zero_network_outputs_zero() {
    let mlp = Mlp::zeros(&[5, 7, 9]).unwrap();
    assert_eq!(mlp.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), vec![0.0; 9]);
}

#[test]
fn identity_layer_passes_input_through() {
    let n = 9;
    let mut layer = Dense::zeros(n, n);
    for i in 0..n {
        layer.weights[i * n + i] = 1.0;
    }
    let mlp = Mlp::from_layers(vec![layer]).unwrap();
    let x: Vec<f64> = (0..n).map(|i| i as f64 - 4.5).collect();
    assert_eq!(mlp.forward(&x).unwrap(), x);
}

#[test]
fn param_count_examples() {
    assert_eq!(Mlp::zeros(&[2, 3]).unwrap().param_count(), 9);
    assert_eq!(Mlp::zeros(&[4, 8, 9]).unwrap().param_count(), 121);
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let worst = common::gradient_check(31, 100, 1e-5);
    assert!(worst < 1e-4, "max relative error {worst}");
}
