//! Randomization and asymptotic inference, and carryover-order identification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::design::RandomizationOutcome;
use crate::error::{Error, Result};
use crate::estimation::{ht_estimator, variance_estimates, ExperimentData, HtKernel};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactTestConfig {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub alternative: Alternative,
}

fn default_resamples() -> usize {
    100_000
}

impl ExactTestConfig {
    pub fn new(resamples: usize, seed: u64) -> Self {
        ExactTestConfig { resamples, seed, alternative: Alternative::TwoSided }
    }
}

impl Default for ExactTestConfig {
    fn default() -> Self {
        Self::new(default_resamples(), 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    Asymptotic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resamples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

impl TestResult {
    /// Rejection at level `alpha` means `p_value <= alpha`.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

// Resampled statistics that differ from the observed one by rounding only
// count as ties.
fn at_least(candidate: f64, observed: f64) -> bool {
    candidate >= observed - 1e-10 * observed.abs().max(1.0)
}

fn check_resamples(config: &ExactTestConfig) -> Result<()> {
    if config.resamples == 0 {
        return Err(Error::ZeroReplications);
    }
    Ok(())
}

fn observed_coins(data: &ExperimentData) -> Result<RandomizationOutcome> {
    data.design().coins_of(data.path())?.ok_or(Error::InvalidPath)
}

/// Fraction of resampled statistics at least as extreme as the observed one.
fn resampled_p_value(
    kernel: &HtKernel,
    data: &ExperimentData,
    config: &ExactTestConfig,
    ones: &[f64],
    zeros: &[f64],
    tau0: f64,
) -> (f64, f64) {
    let design = data.design();
    let observed = (kernel.estimate(ones, zeros, &observed_coins(data).expect("validated path").coins) - tau0).abs();
    let hits: usize = (0..config.resamples)
        .into_par_iter()
        .filter(|&i| {
            let coins = design.sample_coins(&mut stream_rng(config.seed, i as u64));
            at_least((kernel.estimate(ones, zeros, &coins.coins) - tau0).abs(), observed)
        })
        .count();
    (observed, hits as f64 / config.resamples as f64)
}

/// Randomization test of the sharp null of no effect: observed outcomes are
/// held fixed while the path is redrawn from the design. The p-value counts
/// resamples with `|tau^[i]| >= |tau|`.
pub fn exact_test(data: &ExperimentData, config: &ExactTestConfig) -> Result<TestResult> {
    check_resamples(config)?;
    let kernel = HtKernel::new(data.design(), data.p())?;
    let sums = kernel.group_sums(data.observed());
    let (statistic, p_value) = resampled_p_value(&kernel, data, config, &sums, &sums, 0.0);
    Ok(TestResult {
        statistic,
        p_value,
        method: TestMethod::Exact,
        resamples: Some(config.resamples),
        seed: Some(config.seed),
        variance: None,
    })
}

/// Exact test of the shifted sharp null `Y_t(1) - Y_t(0) = tau0`. Outcomes in
/// windows observed all ones are shifted down by `tau0` to impute the
/// control arm, and shifted back up wherever a resample makes the window
/// all ones.
pub fn exact_test_shifted(data: &ExperimentData, config: &ExactTestConfig, tau0: f64) -> Result<TestResult> {
    check_resamples(config)?;
    let kernel = HtKernel::new(data.design(), data.p())?;
    let sums = kernel.group_sums(data.observed());
    let sizes = kernel.group_sizes();
    let coins = observed_coins(data)?;
    let treated: Vec<bool> = kernel.window_arms(&coins.coins).iter().map(|&arm| arm == Some(true)).collect();
    let base: Vec<f64> = sums
        .iter()
        .zip(&sizes)
        .zip(&treated)
        .map(|((s, n), &on)| if on { s - tau0 * n } else { *s })
        .collect();
    let shifted: Vec<f64> = base.iter().zip(&sizes).map(|(b, n)| b + tau0 * n).collect();
    let (statistic, p_value) = resampled_p_value(&kernel, data, config, &shifted, &base, tau0);
    Ok(TestResult {
        statistic,
        p_value,
        method: TestMethod::Exact,
        resamples: Some(config.resamples),
        seed: Some(config.seed),
        variance: None,
    })
}

/// Confidence set from inverting [`exact_test_shifted`] over a sorted grid,
/// reported as the hull of the accepted points. Every grid point reuses the
/// same resampled paths.
pub fn exact_ci(data: &ExperimentData, config: &ExactTestConfig, level: f64, grid: &[f64]) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::UnsortedGrid);
    }
    let alpha = 1.0 - level;
    let mut accepted = Vec::new();
    for &tau0 in grid {
        if !exact_test_shifted(data, config, tau0)?.rejects(alpha) {
            accepted.push(tau0);
        }
    }
    match (accepted.first(), accepted.last()) {
        (Some(&lower), Some(&upper)) => Ok(ConfidenceInterval { lower, upper }),
        _ => Err(Error::NoPointAccepted),
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::BadLevel(level));
    }
    Ok(())
}

/// Two-sided normal p-value `2 - 2 Phi(|tau| / sqrt(sigma2))`.
pub fn asymptotic_test(tau_hat: f64, sigma2_hat: f64) -> Result<TestResult> {
    if !(sigma2_hat > 0.0) {
        return Err(Error::ZeroVariance(sigma2_hat));
    }
    let z = tau_hat.abs() / sigma2_hat.sqrt();
    Ok(TestResult {
        statistic: z,
        p_value: erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
        method: TestMethod::Asymptotic,
        resamples: None,
        seed: None,
        variance: Some(sigma2_hat),
    })
}

/// `tau_hat -/+ z_{(1+level)/2} sqrt(sigma2_hat)`.
pub fn normal_ci(tau_hat: f64, sigma2_hat: f64, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if !(sigma2_hat >= 0.0) {
        return Err(Error::ZeroVariance(sigma2_hat));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * sigma2_hat.sqrt();
    Ok(ConfidenceInterval { lower: tau_hat - half, upper: tau_hat + half })
}

/// Estimate and variance estimate from one experiment run under order `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub tau_hat: f64,
    pub sigma2_hat: f64,
    pub p: usize,
    #[serde(default)]
    pub n: usize,
}

impl ExperimentSummary {
    /// Summarizes data collected under the optimal design for order `p`,
    /// with the second variance-bound estimate.
    pub fn from_data(data: &ExperimentData) -> Result<Self> {
        let p = data.p();
        let (_, sigma2_hat) = variance_estimates(data, p)?;
        Ok(ExperimentSummary {
            tau_hat: ht_estimator(data)?,
            sigma2_hat,
            p,
            n: data.design().horizon() / p.max(1),
        })
    }
}

/// Tests `m <= s1.p` by comparing the estimates of two independent
/// experiments run under orders `s1.p < s2.p`.
pub fn identify_m_subroutine(s1: &ExperimentSummary, s2: &ExperimentSummary) -> Result<TestResult> {
    if s1.p >= s2.p {
        return Err(Error::OrderNotIncreasing { p1: s1.p, p2: s2.p });
    }
    asymptotic_test(s1.tau_hat - s2.tau_hat, s1.sigma2_hat + s2.sigma2_hat)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub p1: usize,
    pub p2: usize,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOutcome {
    pub order: usize,
    pub tests: Vec<PairTest>,
}

/// Scans adjacent candidate pairs from the top down. The first rejection of
/// `m <= p_j` returns `p_{j+1}`; with no rejection the smallest candidate is
/// returned. `runner` is called at most once per candidate and must return
/// summaries from independent experiments.
pub fn identify_m_search(
    candidates: &[usize],
    mut runner: impl FnMut(usize) -> Result<ExperimentSummary>,
    alpha: f64,
) -> Result<IdentifyOutcome> {
    if candidates.len() < 2 {
        return Err(Error::TooFewCandidates);
    }
    if let Some(w) = candidates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::OrderNotIncreasing { p1: w[0], p2: w[1] });
    }
    let mut cache: Vec<Option<ExperimentSummary>> = vec![None; candidates.len()];
    let mut summary = |j: usize, cache: &mut Vec<Option<ExperimentSummary>>| -> Result<ExperimentSummary> {
        if let Some(s) = &cache[j] {
            return Ok(s.clone());
        }
        let p = candidates[j];
        let s = runner(p).map_err(|e| Error::RunnerFailure { p, message: e.to_string() })?;
        cache[j] = Some(s.clone());
        Ok(s)
    };
    let mut tests = Vec::new();
    for j in (0..candidates.len() - 1).rev() {
        let hi = summary(j + 1, &mut cache)?;
        let lo = summary(j, &mut cache)?;
        let result = identify_m_subroutine(&lo, &hi)?;
        let rejected = result.rejects(alpha);
        tests.push(PairTest { p1: lo.p, p2: hi.p, p_value: result.p_value, rejected });
        if rejected {
            return Ok(IdentifyOutcome { order: candidates[j + 1], tests });
        }
    }
    Ok(IdentifyOutcome { order: candidates[0], tests })
}

/// Everything the `analyze` command reports for one data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub p: usize,
    pub tau_hat: f64,
    pub tau_hat_total: f64,
    pub sigma2_u1: Option<f64>,
    pub sigma2_u2: Option<f64>,
    pub p_exact: f64,
    pub p_asymptotic: Option<f64>,
    pub ci_normal: Option<ConfidenceInterval>,
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// Estimate, variance-bound estimates, both p-values and a normal interval.
/// The asymptotic quantities use the second bound estimate.
/// Variance estimates need the data to come from the optimal design for
/// order `p` with `T = n p`, `n >= 4`; otherwise those fields are empty.
pub fn analyze(data: &ExperimentData, config: &ExactTestConfig, level: f64) -> Result<AnalysisReport> {
    check_level(level)?;
    let tau_hat = ht_estimator(data)?;
    let bounds = variance_estimates(data, data.p()).ok();
    let exact = exact_test(data, config)?;
    let (p_asymptotic, ci_normal) = match bounds {
        Some((_, u2)) if u2 > 0.0 => (Some(asymptotic_test(tau_hat, u2)?.p_value), Some(normal_ci(tau_hat, u2, level)?)),
        _ => (None, None),
    };
    Ok(AnalysisReport {
        p: data.p(),
        tau_hat,
        tau_hat_total: tau_hat * (data.design().horizon() - data.p()) as f64,
        sigma2_u1: bounds.map(|b| b.0),
        sigma2_u2: bounds.map(|b| b.1),
        p_exact: exact.p_value,
        p_asymptotic,
        ci_normal,
        level,
        resamples: config.resamples,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Design;
    use crate::outcomes::{worst_case_outcomes, LinearCarryoverModel, Sign};

    fn summary(tau_hat: f64, sigma2_hat: f64, p: usize) -> ExperimentSummary {
        ExperimentSummary { tau_hat, sigma2_hat, p, n: 0 }
    }

    #[test]
    fn asymptotic_values() {
        assert!((asymptotic_test(7.25, 23.88).unwrap().p_value - 0.138).abs() < 1e-3);
        assert_eq!(asymptotic_test(0.0, 2.0).unwrap().p_value, 1.0);
        let v = 3.0f64;
        assert!((asymptotic_test(1.959963984540054 * v.sqrt(), v).unwrap().p_value - 0.05).abs() < 1e-6);
        assert!(matches!(asymptotic_test(1.0, 0.0), Err(Error::ZeroVariance(_))));
        let a = asymptotic_test(1.0, 1.0).unwrap().p_value;
        let b = asymptotic_test(1.1, 1.0).unwrap().p_value;
        assert!(b < a);
    }

    #[test]
    fn normal_intervals() {
        let ci = normal_ci(0.0, 1.0, 0.95).unwrap();
        assert!((ci.upper - 1.959964).abs() < 1e-6 && (ci.lower + 1.959964).abs() < 1e-6);
        let ci = normal_ci(7.25, 23.88, 0.90).unwrap();
        assert!(ci.contains(0.0));
        assert!(normal_ci(2.0, 4.0, 1e-9).unwrap().width() < 1e-6);
        assert!(matches!(normal_ci(0.0, 1.0, 1.0), Err(Error::BadLevel(_))));
    }

    #[test]
    fn identification_arithmetic() {
        let p2 = summary(7.25, 23.88, 2);
        let p3 = summary(8.23, 39.00, 3);
        let p1 = summary(1.86, 9.47, 1);
        assert!((identify_m_subroutine(&p2, &p3).unwrap().p_value - 0.902).abs() < 1e-3);
        assert!((identify_m_subroutine(&p1, &p2).unwrap().p_value - 0.350).abs() < 1e-3);
        assert_eq!(identify_m_subroutine(&p1, &summary(1.86, 1.0, 2)).unwrap().p_value, 1.0);
        assert!(matches!(identify_m_subroutine(&p3, &p2), Err(Error::OrderNotIncreasing { .. })));
    }

    #[test]
    fn search_scans_downward() {
        let table = |p: usize| match p {
            1 => Ok(summary(1.86, 9.47, 1)),
            2 => Ok(summary(7.25, 23.88, 2)),
            3 => Ok(summary(8.23, 39.00, 3)),
            _ => Err(Error::ConfigInvalid("no such order".into())),
        };
        let out = identify_m_search(&[1, 2, 3], table, 0.1).unwrap();
        assert_eq!(out.order, 1);
        assert_eq!(out.tests.len(), 2);
        assert_eq!((out.tests[0].p1, out.tests[0].p2), (2, 3));
        let strong = |p: usize| Ok(summary(if p == 1 { 0.0 } else { 10.0 }, 0.5, p));
        assert_eq!(identify_m_search(&[1, 2, 3], strong, 0.05).unwrap().order, 2);
        assert!(matches!(identify_m_search(&[1, 4], table, 0.1), Err(Error::RunnerFailure { p: 4, .. })));
        assert!(matches!(identify_m_search(&[1], table, 0.1), Err(Error::TooFewCandidates)));
    }

    fn constant_data(horizon: usize, m: usize, seed: u64) -> ExperimentData {
        let design = crate::optimal::optimal_design(horizon, m).unwrap();
        let oracle = worst_case_outcomes(horizon, m, 3.0, Sign::Plus).unwrap();
        let path = design.sample_path(seed);
        ExperimentData::simulate(design, m, &oracle, path).unwrap()
    }

    #[test]
    fn exact_test_is_deterministic() {
        let data = constant_data(24, 2, 1);
        let cfg = ExactTestConfig::new(2000, 5);
        let a = exact_test(&data, &cfg).unwrap();
        assert_eq!(a, exact_test(&data, &cfg).unwrap());
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        assert_eq!(a.statistic, ht_estimator(&data).unwrap().abs());
    }

    #[test]
    fn exceedance_counts_ties() {
        assert!(at_least(2.0, 2.0));
        assert!(at_least(2.0 - 1e-13, 2.0));
        assert!(!at_least(1.9, 2.0));
        // nothing reaches the observed statistic: empty exceedance set
        assert_eq!([0.5, -1.0, 1.5].iter().filter(|&&x| at_least(f64::abs(x), 2.0)).count(), 0);
        // an all-zero experiment ties with every resample
        let design = Design::new(12, vec![1, 5, 7, 9]).unwrap();
        let zero = ExperimentData::new(design, 2, "111100110000".parse().unwrap(), vec![0.0; 12]).unwrap();
        assert_eq!(exact_test(&zero, &ExactTestConfig::new(10, 1)).unwrap().p_value, 1.0);
    }

    #[test]
    fn shifted_test_at_zero_is_the_plain_test() {
        let model = LinearCarryoverModel::standard(vec![2.0, 1.0, 1.0], 3);
        let design = crate::optimal::optimal_design(60, 2).unwrap();
        let data = ExperimentData::simulate(design.clone(), 2, &model.oracle(60).unwrap(), design.sample_path(4)).unwrap();
        let cfg = ExactTestConfig::new(1000, 2);
        assert_eq!(exact_test(&data, &cfg).unwrap().p_value, exact_test_shifted(&data, &cfg, 0.0).unwrap().p_value);
    }

    #[test]
    fn exact_interval_properties() {
        let model = LinearCarryoverModel::standard(vec![2.0, 1.0, 1.0], 3);
        let design = crate::optimal::optimal_design(60, 2).unwrap();
        let data = ExperimentData::simulate(design.clone(), 2, &model.oracle(60).unwrap(), design.sample_path(4)).unwrap();
        let cfg = ExactTestConfig::new(500, 2);
        let tau = ht_estimator(&data).unwrap();
        let grid: Vec<f64> = (-40..=40).map(|i| tau + i as f64 * 0.5).collect();
        let ci = exact_ci(&data, &cfg, 0.9, &grid).unwrap();
        assert!(ci.contains(tau));
        let wide: Vec<f64> = (-80..=80).map(|i| tau + i as f64 * 0.5).collect();
        let ci_wide = exact_ci(&data, &cfg, 0.9, &wide).unwrap();
        assert!(ci_wide.lower <= ci.lower && ci_wide.upper >= ci.upper);
        assert!(matches!(exact_ci(&data, &cfg, 0.9, &[]), Err(Error::EmptyGrid)));
        assert!(matches!(exact_ci(&data, &cfg, 0.9, &[1.0, 0.0]), Err(Error::UnsortedGrid)));
        let constant = constant_data(24, 2, 3);
        let ci = exact_ci(&constant, &cfg, 0.95, &[-1.0, 0.0, 1.0]).unwrap();
        assert!(ci.contains(0.0));
    }

    #[test]
    fn analysis_report_fields() {
        let data = constant_data(24, 2, 9);
        let report = analyze(&data, &ExactTestConfig::new(200, 1), 0.95).unwrap();
        assert!(report.sigma2_u1.is_some() && report.sigma2_u2.is_some());
        let json = serde_json::to_value(&report).unwrap();
        for key in ["tau_hat", "sigma2_u1", "sigma2_u2", "p_exact", "p_asymptotic"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let s = ExperimentSummary::from_data(&data).unwrap();
        assert_eq!(s.p, 2);
        assert_eq!(s.n, 12);
    }

    #[test]
    fn test_result_json() {
        let r = exact_test(&constant_data(24, 2, 2), &ExactTestConfig::new(50, 8)).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"], "exact");
        assert_eq!(v["resamples"], 50);
        assert_eq!(v["seed"], 8);
    }
}
