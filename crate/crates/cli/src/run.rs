//! Per-run seeding and the manifest written beside every output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

/// The one generator of a run. Every seed a command needs is drawn from it
/// in a fixed order and recorded in the manifest.
pub struct Run {
    command: &'static str,
    seed: u64,
    rng: ChaCha8Rng,
    derived: Map<String, Value>,
}

impl Run {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Run {
            command,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            derived: Map::new(),
        }
    }

    pub fn derive(&mut self, name: &str) -> u64 {
        let s = self.rng.random::<u64>();
        self.derived.insert(name.to_string(), json!(s));
        s
    }

    pub fn manifest(&self, config: &impl Serialize) -> Value {
        json!({
            "tool": "valcast",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "derived_seeds": self.derived,
            "config": config,
        })
    }
}
