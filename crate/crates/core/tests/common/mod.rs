#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdpp::graph::{NetworkTopology, WeightParams, WeightSystem};

/// Random digraph: each ordered pair gets an edge with probability `density`,
/// plus a directed ring when `ring` is set.
pub fn random_topology(rng: &mut ChaCha8Rng, n: usize, density: f64, ring: bool) -> NetworkTopology {
    let mut edges = Vec::new();
    for to in 0..n {
        for from in 0..n {
            if to != from && rng.random::<f64>() < density {
                edges.push((to, from));
            }
        }
    }
    if ring && n > 1 {
        edges.extend((0..n).map(|i| ((i + 1) % n, i)));
    }
    NetworkTopology::new(n, edges).expect("valid edges")
}

pub fn random_params(rng: &mut ChaCha8Rng, n: usize) -> WeightParams {
    WeightParams {
        c_r: rng.random_range(0.5..2.0),
        zeta: rng.random_range(0.01..0.4),
        c_c: rng.random_range(0.5..2.0),
        beta: (0..n).map(|_| rng.random_range(0.1..0.9)).collect(),
    }
}

/// First random network from `seed` that passes validation.
pub fn random_weights(seed: u64, n_range: std::ops::RangeInclusive<usize>) -> (NetworkTopology, WeightSystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(n_range.clone());
        let density = rng.random_range(0.1..0.6);
        let ring = rng.random_bool(0.5);
        let topo = random_topology(&mut rng, n, density, ring);
        let params = random_params(&mut rng, n);
        if let Ok(ws) = WeightSystem::from_topology(&topo, &params) {
            return (topo, ws);
        }
    }
}
