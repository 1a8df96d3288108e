//! Shared inputs for the criterion benchmarks.

use cadrecon_core::dsl::{execute, Program};
use cadrecon_core::fixtures;
use cadrecon_core::synth::{generate_convertible_corpus, GenConfig};
use cadrecon_core::Solid;

/// Hand-built designs of increasing face count.
pub fn named_designs() -> Vec<(&'static str, Program)> {
    vec![
        ("cube", fixtures::cube(1.0)),
        ("washer", fixtures::washer(1.0, 0.5, 0.25)),
        ("stepped_block", fixtures::stepped_block()),
        ("rounded_plate", fixtures::rounded_plate(2.0, 0.75, 0.5)),
    ]
}

/// `count` seeded synthetic designs with up to three extrudes.
pub fn synthetic_designs(count: usize) -> Vec<Program> {
    generate_convertible_corpus(&GenConfig::synthetic(99, (1, 3)), count, 1)
}

pub fn bodies(p: &Program) -> Vec<Solid> {
    execute(p).expect("fixture executes").final_bodies().to_vec()
}
