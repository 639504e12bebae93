//! Fixtures shared by the kernel benchmarks.

use avglemma_core::transport::{make_pair, KineticPair, PairMode};
use avglemma_core::{catalog, Field, ForceField, TorusGrid};

/// Planar polynomial curve with its suggested force.
pub fn planar_curve() -> (Field, ForceField) {
    catalog("polynomial-curve", 2, 1).expect("catalog field")
}

/// Seeded random pair on a moderate grid.
pub fn random_pair(n_x: usize, n_v: usize, cutoff: f64) -> (Field, TorusGrid, KineticPair) {
    let (a, force) = planar_curve();
    let grid = TorusGrid::new(2, 1, 1.0, n_x, n_v, 3.0, 1.1).expect("grid");
    let pair = make_pair(PairMode::Random { seed: 7, cutoff }, &a, &force, &grid).expect("pair");
    (a, grid, pair)
}
