//! Benchmark fixtures shared by the criterion suites.

use mkalloc::discrete::{build_direct, MckpInstance};
use mkalloc::simlab::{generate, option_grid, Scenario, ScenarioSpec};

/// Random budget scenario with `n` segments.
pub fn scenario(n: usize, seed: u64) -> Scenario {
    generate(&ScenarioSpec::new(n, seed)).expect("scenario generation")
}

/// Knapsack over evenly spaced options around each segment's market cost.
pub fn knapsack(n: usize, options_per_segment: usize, seed: u64) -> MckpInstance {
    let sc = scenario(n, seed);
    let segments: Vec<_> = sc
        .segments
        .into_iter()
        .map(|s| {
            let c = s.market_cost().0;
            let opts = option_grid(c, 0.5, options_per_segment / 2);
            s.with_options(opts).expect("ascending options")
        })
        .collect();
    build_direct(&segments, sc.budget).expect("knapsack instance")
}

/// Log-spaced arguments for the Lambert W benchmarks.
pub fn lambert_points(count: usize) -> Vec<f64> {
    (0..count).map(|k| 10f64.powf(-6.0 + 12.0 * k as f64 / count as f64)).collect()
}
