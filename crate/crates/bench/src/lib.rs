//! Fixtures shared by the benchmarks.

use switchback::{optimal_design, ExperimentData, LinearCarryoverModel, Result};

/// One experiment under the optimal design for order `m`, with unit lag
/// effects at every lag.
pub fn experiment(horizon: usize, m: usize, seed: u64) -> Result<ExperimentData> {
    let design = optimal_design(horizon, m)?;
    let oracle = LinearCarryoverModel::standard(vec![1.0; m + 1], seed).oracle(horizon)?;
    let path = design.sample_path(seed);
    ExperimentData::simulate(design, m, &oracle, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic() {
        let a = experiment(120, 2, 5).unwrap();
        assert_eq!(a.observed(), experiment(120, 2, 5).unwrap().observed());
        assert_eq!(a.design().points().len(), 58);
    }
}
