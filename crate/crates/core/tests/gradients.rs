//! Central finite-difference checks of every network used by the agents and
//! the similarity model.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use slicenet_core::nn::{Activation, Gradients, Mlp};
use slicenet_core::similarity::{Standardizer, VaeConfig, VaeModel};
use slicenet_core::SimRng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

fn flatten(g: &Gradients) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|(w, b)| w.iter().chain(b).copied())
        .collect()
}

/// Visits every parameter of `net` in the order of [`flatten`].
fn for_each_param(net: &mut Mlp, mut f: impl FnMut(&mut Mlp, usize, usize, bool)) {
    let shape: Vec<(usize, usize)> = net
        .layers()
        .iter()
        .map(|l| (l.weights.len(), l.bias.len()))
        .collect();
    for (li, (nw, nb)) in shape.into_iter().enumerate() {
        for i in 0..nw {
            f(net, li, i, false);
        }
        for i in 0..nb {
            f(net, li, i, true);
        }
    }
}

fn param(net: &mut Mlp, layer: usize, i: usize, bias: bool) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    if bias {
        &mut l.bias[i]
    } else {
        &mut l.weights[i]
    }
}

fn numeric_param_grad(net: &Mlp, loss: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    let mut out = Vec::new();
    for_each_param(&mut probe, |n, li, i, bias| {
        let orig = *param(n, li, i, bias);
        *param(n, li, i, bias) = orig + H;
        let up = loss(n);
        *param(n, li, i, bias) = orig - H;
        let down = loss(n);
        *param(n, li, i, bias) = orig;
        out.push((up - down) / (2.0 * H));
    });
    out
}

fn numeric_input_grad(x: &[f64], loss: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + H;
            let up = loss(&probe);
            probe[i] = orig - H;
            let down = loss(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Checks parameter and input gradients of `L = Σ c_i · y_i` at a few inputs.
fn check_network(name: &str, sizes: &[usize], head: Activation, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let net = Mlp::new(sizes, Activation::Relu, head, &mut rng);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..*sizes.last().unwrap())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let loss_at = |n: &Mlp, x: &[f64]| {
            n.predict(x)
                .unwrap()
                .iter()
                .zip(&c)
                .map(|(y, c)| y * c)
                .sum::<f64>()
        };

        let (_, cache) = net.forward(&x).unwrap();
        let (grads, dx) = net.backward(&cache, &c).unwrap();
        let e_params = rel_error(&flatten(&grads), &numeric_param_grad(&net, |n| loss_at(n, &x)));
        let e_input = rel_error(&dx, &numeric_input_grad(&x, |x| loss_at(&net, x)));
        worst = worst.max(e_params).max(e_input);
    }
    assert!(worst < TOL, "{name}: relative error {worst:e}");
    worst
}

#[test]
fn actor_gradients() {
    check_network("actor 16-48-24-4", &[16, 48, 24, 4], Activation::Softmax, 1);
}

#[test]
fn critic_gradients() {
    check_network("critic 20-64-24-1", &[20, 64, 24, 1], Activation::Identity, 2);
}

#[test]
fn encoder_gradients() {
    check_network("encoder 17-64-24-8", &[17, 64, 24, 8], Activation::Identity, 3);
}

#[test]
fn decoder_gradients() {
    check_network("decoder 4-24-64-17", &[4, 24, 64, 17], Activation::Identity, 4);
}

#[test]
fn vae_loss_gradients() {
    let mut rng = SimRng::seed_from_u64(5);
    let samples: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..17).map(|_| rng.random_range(0.0..3.0)).collect())
        .collect();
    let cfg = VaeConfig {
        kl_weight: 0.3,
        ..VaeConfig::default()
    };
    let model = VaeModel::new(17, &cfg, Standardizer::fit(&samples).unwrap(), &mut rng).unwrap();
    let xs = model.standardizer.apply(&samples[0]).unwrap();
    let eps: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
    let (_, ge, gd) = model.sample_gradients(&xs, &eps, 1.0).unwrap();

    let with_encoder = |enc: &Mlp| {
        let mut m = model.clone();
        m.encoder = enc.clone();
        m.sample_gradients(&xs, &eps, 1.0).unwrap().0
    };
    let with_decoder = |dec: &Mlp| {
        let mut m = model.clone();
        m.decoder = dec.clone();
        m.sample_gradients(&xs, &eps, 1.0).unwrap().0
    };
    let e_enc = rel_error(&flatten(&ge), &numeric_param_grad(&model.encoder, with_encoder));
    let e_dec = rel_error(&flatten(&gd), &numeric_param_grad(&model.decoder, with_decoder));
    assert!(e_enc < TOL, "encoder through ELBO: {e_enc:e}");
    assert!(e_dec < TOL, "decoder through ELBO: {e_dec:e}");
}

#[test]
fn all_checks_within_budget() {
    let start = Instant::now();
    check_network("actor", &[16, 48, 24, 4], Activation::Softmax, 11);
    check_network("critic", &[20, 64, 24, 1], Activation::Identity, 12);
    check_network("encoder", &[17, 64, 24, 8], Activation::Identity, 13);
    check_network("decoder", &[4, 24, 64, 17], Activation::Identity, 14);
    assert!(start.elapsed().as_secs_f64() < 10.0, "took {:?}", start.elapsed());
}
