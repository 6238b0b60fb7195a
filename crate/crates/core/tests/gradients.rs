//! Analytic gradients against central finite differences.

use pvae_policy::cpvae::CpvaeModel;
use pvae_policy::nn::gradcheck::{check_gradient, relative_error};
use pvae_policy::nn::{Activation, DenseNet, Parameterized};
use pvae_policy::pvae::{PartialVae, VaeDims, VaeParams};
use pvae_policy::{AttributeKind, FeatureSchema, PartialFeature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn mixed_schema(rng: &mut ChaCha8Rng, d: usize) -> FeatureSchema {
    let attrs = (0..d)
        .map(|j| {
            if j % 3 == 2 {
                AttributeKind::Categorical {
                    cardinality: 2 + j % 4,
                }
            } else {
                AttributeKind::Continuous {
                    mean: rng.random_range(-1.0..1.0),
                    std: rng.random_range(0.5..2.0),
                }
            }
        })
        .collect();
    FeatureSchema::new(attrs).unwrap()
}

fn random_partial(schema: &FeatureSchema, rng: &mut ChaCha8Rng, keep: f64) -> (PartialFeature, PartialFeature) {
    let values: Vec<f64> = schema
        .attributes()
        .iter()
        .map(|a| match a {
            AttributeKind::Continuous { mean, std } => mean + std * rng.random_range(-2.0..2.0),
            AttributeKind::Categorical { cardinality } => rng.random_range(0..*cardinality) as f64,
        })
        .collect();
    let mut mask: Vec<bool> = (0..values.len()).map(|_| rng.random::<f64>() > keep).collect();
    mask[0] = false;
    let target = PartialFeature::new(values.clone(), mask.clone()).unwrap();
    // the encoder sees a subset of the target's observed attributes
    let enc_mask: Vec<bool> = mask.iter().map(|&m| m || rng.random::<f64>() < 0.3).collect();
    let enc = PartialFeature::new(values, enc_mask).unwrap();
    (enc, target)
}

fn small_dims(seed: u64) -> VaeDims {
    VaeDims {
        embed_dim: 3 + seed as usize % 3,
        feature_dim: 4,
        latent_dim: 2 + seed as usize % 2,
        h_hidden: if seed.is_multiple_of(2) { vec![] } else { vec![5] },
        f_hidden: vec![6],
        decoder_hidden: vec![5, 4],
    }
}

fn perturb_params(p: &mut VaeParams, rng: &mut ChaCha8Rng) {
    // move biases off zero so ReLU units are not all at the same kink
    let mut flat = p.to_flat();
    for v in &mut flat {
        *v += rng.random_range(-0.1..0.1);
    }
    p.read_params(&flat);
}

#[test]
fn dense_net_three_four_two() {
    // hand-sized network: 3 inputs, 4 ReLU hidden units, 2 linear outputs
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = DenseNet::mlp(3, &[4], 2, Activation::Identity, &mut rng);
    let x = [0.3, -1.2, 0.8];
    let c = [1.0, -0.5];
    let (_, cache) = net.forward(&x).unwrap();
    let (g, _) = net.backward(&cache, &c).unwrap();
    let res = check_gradient(&net, &g.to_flat(), STEP, FLOOR, |n| {
        n.predict(&x).unwrap().iter().zip(&c).map(|(o, w)| o * w).sum()
    });
    assert!(res.max_rel_error < TOL, "{res:?}");
}

#[test]
fn pvae_elbo_gradients_with_frozen_noise() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = mixed_schema(&mut rng, 3 + seed as usize % 4);
        let mut vae = PartialVae::new(schema.clone(), small_dims(seed), 0, seed).unwrap();
        perturb_params(vae.params_mut(), &mut rng);
        let (enc, target) = random_partial(&schema, &mut rng, 0.7);
        let noise = vae.draw_noise(1 + seed as usize % 2, &mut rng);
        let mut grads = vae.params().zeros_like();
        vae.elbo_with_noise(&enc, &target, &[], &noise, Some((&mut grads, 1.0))).unwrap();
        let res = check_gradient(vae.params(), &grads.to_flat(), STEP, FLOOR, |p| {
            let mut v = vae.clone();
            *v.params_mut() = p.clone();
            v.elbo_with_noise(&enc, &target, &[], &noise, None).unwrap().elbo()
        });
        assert!(res.max_rel_error < TOL, "seed {seed}: {res:?}");
    }
}

#[test]
fn cpvae_weighted_loss_gradients() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let schema = mixed_schema(&mut rng, 2 + seed as usize % 3);
        let k = 2 + seed as usize % 3;
        let mut model = CpvaeModel::new(&schema, k, 0.4, 1.7, small_dims(seed), seed).unwrap();
        perturb_params(model.params_mut(), &mut rng);
        let (_, target) = random_partial(&schema, &mut rng, 0.8);
        let action = rng.random_range(0..k);
        let reward = rng.random_range(-2.0..3.0);
        let visible = seed % 3 != 0;
        let weight = rng.random_range(1.0..10.0);
        let noise = model.vae().draw_noise(1, &mut rng);
        let mut grads = model.params().zeros_like();
        model
            .weighted_elbo(&target, action, reward, visible, weight, &noise, Some((&mut grads, 1.0)))
            .unwrap();
        let res = check_gradient(model.params(), &grads.to_flat(), STEP, FLOOR, |p| {
            let mut m = model.clone();
            *m.params_mut() = p.clone();
            m.weighted_elbo(&target, action, reward, visible, weight, &noise, None).unwrap()
        });
        assert!(res.max_rel_error < TOL, "seed {seed}: {res:?}");
    }
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
    assert!(relative_error(1e-9, 2e-9, 1e-6) < 1e-2);
}
