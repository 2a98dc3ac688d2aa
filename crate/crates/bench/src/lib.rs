//! Shared fixtures for benchmarks.

use brickir::graph::{match_connectors, MatchTolerances};
use brickir::synth::{random_structure, synthetic_catalog, SynthStructure};
use brickir::{Catalog, ConnectivityGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub catalog: Catalog,
    pub structure: SynthStructure,
    pub graph: ConnectivityGraph,
}

/// A random demo-catalog structure of `parts` parts and its matched graph.
pub fn fixture(parts: usize, seed: u64) -> Fixture {
    let catalog = synthetic_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let structure = random_structure(&catalog, parts, &mut rng).expect("demo structure");
    let graph = match_connectors(&structure.instances, &catalog, &MatchTolerances::default()).expect("match");
    Fixture { catalog, structure, graph }
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_is_connected() {
        let f = super::fixture(30, 1);
        assert_eq!(f.graph.nodes.len(), 30);
        assert_eq!(f.graph.components().len(), 1);
    }
}
