#![allow(dead_code)]

use aggplace::scenario::{
    derive_seed, gen_complete_binary, gen_loads, gen_rpa, rng_from_seed, LoadDist, RateScheme,
};
use aggplace::topology::{NodeSpec, TreeNetwork};
use aggplace::Scalar;
use rand::Rng;

#[derive(Clone, Copy, Debug)]
pub enum Rates {
    Constant,
    Linear,
    Exponential,
    Random,
}

pub const RATES: [Rates; 4] = [
    Rates::Constant,
    Rates::Linear,
    Rates::Exponential,
    Rates::Random,
];

/// Random recursive tree with up to `max_n` switches, integer loads 0..=9
/// on every switch, and roughly one switch in five unavailable.
pub fn random_tree<S: Scalar>(rng: &mut impl Rng, max_n: usize, rates: Rates) -> TreeNetwork<S> {
    let n = rng.random_range(1..=max_n);
    let parent: Vec<Option<usize>> = (0..n)
        .map(|i| (i > 0).then(|| rng.random_range(0..i)))
        .collect();
    let mut depth = vec![0usize; n];
    for i in 1..n {
        depth[i] = depth[parent[i].unwrap()] + 1;
    }
    let height = depth.iter().copied().max().unwrap_or(0);
    let specs = (0..n)
        .map(|i| {
            let level = height - depth[i];
            let rate = match rates {
                Rates::Constant => 1.0,
                Rates::Linear => 1.0 + level as f64,
                Rates::Exponential => 2f64.powi(level as i32),
                // quarter steps keep the rationals small
                Rates::Random => rng.random_range(2..=16) as f64 / 4.0,
            };
            NodeSpec {
                id: format!("s{i}"),
                parent: parent[i].map(|p| format!("s{p}")),
                rate: S::from_f64(rate).unwrap(),
                load: rng.random_range(0..=9),
                available: rng.random_bool(0.8),
            }
        })
        .collect();
    TreeNetwork::from_specs(specs).unwrap()
}

/// Mix of random recursive trees, complete binary trees with every rate
/// scheme and load distribution, and preferential-attachment trees.
pub fn generated_instances(count: usize, seed: u64) -> Vec<TreeNetwork<f64>> {
    let schemes = [
        RateScheme::Constant,
        RateScheme::Linear,
        RateScheme::Exponential,
    ];
    let dists = [LoadDist::Uniform, LoadDist::PowerLaw, LoadDist::Unit];
    (0..count)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            match i % 3 {
                0 => random_tree(&mut rng, 40, RATES[i % 4]),
                1 => {
                    let n = 1 << rng.random_range(2..=7);
                    let t: TreeNetwork<f64> = gen_complete_binary(n, schemes[(i / 3) % 3]).unwrap();
                    t.with_loads(gen_loads(&t, &dists[(i / 9) % 3], &mut rng).unwrap())
                        .unwrap()
                }
                _ => gen_rpa(rng.random_range(3..=128), &mut rng).unwrap(),
            }
        })
        .collect()
}
