#![allow(dead_code)]

use apshare::scenario::{self, ScenarioSpec};
use apshare::{NetworkInstance, PowerProfile};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Geometric instance from the scenario generator with the default noise.
pub fn scenario_instance(n: usize, k: usize, seed: u64) -> NetworkInstance {
    scenario::generate(&ScenarioSpec::new(n, k, seed)).unwrap()
}

/// Every user spends its whole budget; each entry is zeroed with
/// probability `sparsity`.
pub fn random_tight_profile(rng: &mut ChaCha8Rng, inst: &NetworkInstance, sparsity: f64) -> PowerProfile {
    let k = inst.n_channels();
    let rows: Vec<Vec<f64>> = (0..inst.n_users())
        .map(|i| {
            let mut w: Vec<f64> = (0..k)
                .map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { rng.gen::<f64>() })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                w[rng.gen_range(0..k)] = 1.0;
            }
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s * inst.budget()[i]).collect()
        })
        .collect();
    PowerProfile::from_rows(&rows).unwrap()
}

pub fn build_instance(n: usize, k: usize, gains: Vec<f64>, noise: Vec<f64>, budget: Vec<f64>) -> NetworkInstance {
    let rows: Vec<Vec<f64>> = gains.chunks(k).map(<[f64]>::to_vec).collect();
    assert_eq!(rows.len(), n);
    NetworkInstance::from_rows(&rows, noise, budget).unwrap()
}

/// Rows of nonnegative weights scaled to `fill` times each budget.
pub fn scaled_profile(inst: &NetworkInstance, weights: &[f64], fill: f64) -> PowerProfile {
    let k = inst.n_channels();
    let rows: Vec<Vec<f64>> = weights
        .chunks(k)
        .enumerate()
        .map(|(i, w)| {
            let s: f64 = w.iter().sum();
            if s == 0.0 {
                let mut r = vec![0.0; k];
                r[0] = fill * inst.budget()[i];
                r
            } else {
                w.iter().map(|x| x / s * fill * inst.budget()[i]).collect()
            }
        })
        .collect();
    PowerProfile::from_rows(&rows).unwrap()
}

/// A random instance with at most `max_n` users and `max_k` channels,
/// together with raw nonnegative profile weights (some exactly zero).
pub fn instance_and_weights(max_n: usize, max_k: usize) -> impl Strategy<Value = (NetworkInstance, Vec<f64>)> {
    (1..=max_n, 1..=max_k).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(0.05f64..5.0, n * k),
            prop::collection::vec(0.1f64..2.0, k),
            prop::collection::vec(0.2f64..3.0, n),
            prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0f64..1.0], n * k),
        )
            .prop_map(move |(g, noise, budget, w)| (build_instance(n, k, g, noise, budget), w))
    })
}
