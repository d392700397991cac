//! Shared fixtures for the benchmarks.

use fbg_tpe::{simulate, BendingScenario, Dataset, Interpolation, SensorGeometry, Simulation};

/// Default scenario shortened to `duration` seconds.
pub fn simulation(duration: f64) -> Simulation {
    let mut sc = BendingScenario::default();
    sc.duration = duration;
    simulate(&sc, &SensorGeometry::nominal()).expect("default scenario simulates")
}

pub fn dataset(duration: f64) -> Dataset {
    Dataset::from_simulation(&simulation(duration), Interpolation::Linear).expect("simulated streams overlap")
}
