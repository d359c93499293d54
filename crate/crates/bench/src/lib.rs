//! Shared fixtures for the pipeline benchmarks.

use entrap_core::simulator::{parse_script, simulate, Scenario};
use entrap_core::{RoverGeometry, Trace};

/// Flat driving that ends high-centered, ten seconds each.
pub fn entrapment_trace(seed: u64) -> Trace {
    let script = parse_script("0:flat,10000:high_centered").expect("static script");
    simulate(
        &Scenario::scripted(script, 20_000, seed),
        &RoverGeometry::default(),
    )
    .expect("valid scenario")
}
