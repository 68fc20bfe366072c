//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use valcast::clearing::Market;
use valcast::sysmodel::{GeneratorFleet, Line, LoadSeries, MarketInstance, Network, WindFleet};

/// A meshed three-node market with a generator at two or three nodes, one
/// or two wind farms and random hourly loads. Regulation limits are wide
/// enough that most forecasts clear in real time.
pub fn random_three_node(rng: &mut ChaCha8Rng, horizon: usize) -> MarketInstance {
    let lines = [(0, 1), (1, 2), (0, 2)]
        .into_iter()
        .map(|(from, to)| Line {
            from,
            to,
            reactance: rng.random_range(0.05..0.3),
            capacity: rng.random_range(45.0..120.0),
        })
        .collect();
    let network = Network::new(3, lines, 0).expect("triangle is connected");
    let mut g = GeneratorFleet::empty(3);
    let skip = if rng.random_bool(0.5) {
        Some(rng.random_range(0..3))
    } else {
        None
    };
    for n in (0..3).filter(|&n| Some(n) != skip) {
        let rho = rng.random_range(15.0..30.0);
        g.present[n] = true;
        g.rho[n] = rho;
        g.p_max[n] = rng.random_range(150.0..250.0);
        g.ramp[n] = rng.random_range(60.0..120.0);
        g.rho_plus[n] = rho + rng.random_range(1.0..40.0);
        g.rho_minus[n] = (rho - rng.random_range(0.5..8.0)).max(0.0);
        g.up_max[n] = rng.random_range(60.0..120.0);
        g.down_max[n] = rng.random_range(60.0..120.0);
    }
    let mut capacity = vec![0.0; 3];
    capacity[rng.random_range(0..3)] = rng.random_range(20.0..60.0);
    if rng.random_bool(0.5) {
        capacity[rng.random_range(0..3)] = rng.random_range(20.0..60.0);
    }
    let day: Vec<Vec<f64>> = (0..horizon)
        .map(|_| (0..3).map(|_| rng.random_range(0.0..40.0)).collect())
        .collect();
    MarketInstance {
        name: "random-3".into(),
        network,
        generators: g,
        wind: WindFleet {
            capacity,
            feature_dim: 1,
        },
        loads: LoadSeries::new(horizon, vec![1], vec![day]),
    }
}

/// A stacked vector with every wind coordinate drawn from `[lo, hi]` times
/// its capacity and zeros elsewhere.
pub fn random_wind(rng: &mut ChaCha8Rng, market: &Market, lo: f64, hi: f64) -> Vec<f64> {
    let inst = market.instance();
    (0..inst.horizon())
        .flat_map(|_| inst.wind.capacity.clone())
        .map(|c| {
            if c > 0.0 {
                c * rng.random_range(lo..hi)
            } else {
                0.0
            }
        })
        .collect()
}

/// A stacked vector with every wind coordinate at `v`, capped by capacity.
pub fn flat_wind(market: &Market, v: f64) -> Vec<f64> {
    let inst = market.instance();
    (0..inst.horizon())
        .flat_map(|_| inst.wind.capacity.clone())
        .map(|c| if c > 0.0 { v.min(c) } else { 0.0 })
        .collect()
}
