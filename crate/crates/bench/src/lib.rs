//! Fixtures shared by the benchmarks.

use nonholo_core::scenarios::builtin;
use nonholo_core::{Scenario, TangentState};

/// Built-ins exercised by the benchmarks, smallest first.
pub const BENCH_SCENARIOS: [&str; 4] = [
    "nonholonomic_particle",
    "chaplygin_sleigh",
    "vertical_rolling_disk",
    "contact_5d",
];

pub fn scenario(name: &str) -> Scenario {
    builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Seeded states on the constraint submanifold.
pub fn states(scenario: &Scenario, count: usize) -> Vec<TangentState> {
    scenario.samples(count, 1).expect("sampling a built-in").states
}
