//! Analytic gradients of every layer kind against central differences.

mod common;

use common::{grad_check, loss, random_array, rel_err, H, TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use topoforge::nn::{LayerSpec, Network};

fn check(name: &str, input: Vec<usize>, specs: Vec<LayerSpec>, batch: usize) {
    let worst = grad_check(name, input, specs, batch).unwrap();
    println!("{name}: worst relative error {worst:.2e}");
}

#[test]
fn conv_gradients() {
    check("conv", vec![2, 6, 5], vec![LayerSpec::conv(2, 3, 3, 2, 1)], 2);
    check("conv_1x1", vec![3, 4, 4], vec![LayerSpec::conv(3, 2, 1, 1, 0)], 3);
}

#[test]
fn conv_transpose_gradients() {
    check("conv_transpose", vec![3, 3, 4], vec![LayerSpec::conv_transpose(3, 2, 4, 2, 1)], 2);
    check("conv_transpose_s1", vec![2, 3, 3], vec![LayerSpec::conv_transpose(2, 2, 3, 1, 0)], 2);
}

#[test]
fn dense_gradients() {
    check("dense", vec![7], vec![LayerSpec::dense(7, 4)], 3);
    check("dense_from_image", vec![2, 3, 3], vec![LayerSpec::dense(18, 2)], 2);
}

#[test]
fn batch_norm_gradients() {
    check("batch_norm_2d", vec![3, 4, 4], vec![LayerSpec::batch_norm(3)], 3);
    check("batch_norm_flat", vec![5], vec![LayerSpec::batch_norm(5)], 6);
}

#[test]
fn batch_norm_inference_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net: Network<f64> = Network::new(vec![2, 3, 3], vec![LayerSpec::batch_norm(2)], &mut rng).unwrap();
    // populate running statistics, then freeze them
    for _ in 0..5 {
        let x = random_array(vec![4, 2, 3, 3], &mut rng);
        net.forward(&x, &mut rng).unwrap();
    }
    net.set_training(false);
    let x = random_array(vec![2, 2, 3, 3], &mut rng);
    let w = random_array(vec![2, 2, 3, 3], &mut rng);
    loss(&mut net, &x, &w);
    net.zero_grads();
    let dx = net.backward(&w).unwrap();
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[j] += H;
        let mut xm = x.clone();
        xm.data_mut()[j] -= H;
        let fd = (loss(&mut net, &xp, &w) - loss(&mut net, &xm, &w)) / (2.0 * H);
        assert!(rel_err(dx.data()[j], fd) < TOL);
    }
}

#[test]
fn dropout_gradients() {
    check("dropout", vec![4, 3, 3], vec![LayerSpec::dropout(0.3)], 2);
}

#[test]
fn activation_gradients() {
    check("leaky_relu", vec![3, 4, 2], vec![LayerSpec::leaky_relu()], 2);
    check("tanh", vec![10], vec![LayerSpec::Tanh], 3);
}

#[test]
fn reshape_gradients() {
    check("reshape", vec![12], vec![LayerSpec::reshape(vec![3, 2, 2])], 2);
}

#[test]
fn generator_like_chain_gradients() {
    check(
        "generator_chain",
        vec![6],
        vec![
            LayerSpec::dense(6, 2 * 3 * 3),
            LayerSpec::reshape(vec![2, 3, 3]),
            LayerSpec::batch_norm(2),
            LayerSpec::leaky_relu(),
            LayerSpec::conv_transpose(2, 1, 4, 2, 1),
            LayerSpec::Tanh,
        ],
        3,
    );
}

#[test]
fn critic_like_chain_gradients() {
    check(
        "critic_chain",
        vec![1, 8, 8],
        vec![
            LayerSpec::conv(1, 3, 4, 2, 1),
            LayerSpec::leaky_relu(),
            LayerSpec::dropout(0.2),
            LayerSpec::conv(3, 4, 4, 2, 1),
            LayerSpec::leaky_relu(),
            LayerSpec::dense(16, 1),
        ],
        3,
    );
}
