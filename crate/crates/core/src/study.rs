//! Simulation studies: worst-case and model-based risk, randomization
//! distributions under a correct or misspecified order, single-instance
//! inference, rejection-rate curves and a normality check.
//!
//! Replicate `i` of every study draws its path from stream `i` of the study
//! seed, and every row shares one noise realization, so output is
//! byte-identical across runs and thread counts.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::estimation::{format_sig, variance_estimates, variance_pairwise, ExperimentData, HtKernel};
use crate::inference::{asymptotic_test, exact_test, ExactTestConfig};
use crate::optimal::{optimal_design, worst_case_risk_closed_form};
use crate::outcomes::{
    lag_p_estimand, misspecified_estimand, realize_observed, worst_case_outcomes, LinearCarryoverModel,
    PotentialOutcomeOracle, Sign,
};
use crate::rng::{derive_seed, stream_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Table2,
    Table3,
    Table4,
    Table5,
    RejectionCurve,
}

/// The three designs compared throughout: the optimal one, a fresh coin
/// every period, and epochs of length `m + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Optimal,
    H1,
    H2,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::Optimal, Benchmark::H1, Benchmark::H2];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Optimal => "optimal",
            Benchmark::H1 => "h1",
            Benchmark::H2 => "h2",
        }
    }

    pub fn design(self, horizon: usize, m: usize) -> Result<Design> {
        match self {
            Benchmark::Optimal => optimal_design(horizon, m),
            Benchmark::H1 => Design::every_period(horizon),
            Benchmark::H2 => Design::fixed_epochs(horizon, m + 1),
        }
    }
}

/// How the analyst's order `p` relates to the true order `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specification {
    Correct,
    Over,
    Under,
}

impl Specification {
    pub const ALL: [Specification; 3] = [Specification::Correct, Specification::Over, Specification::Under];

    pub fn name(self) -> &'static str {
        match self {
            Specification::Correct => "correct",
            Specification::Over => "over",
            Specification::Under => "under",
        }
    }

    pub fn order(self, m: usize) -> Result<usize> {
        match self {
            Specification::Correct => Ok(m),
            Specification::Over => Ok(m + 1),
            Specification::Under => m
                .checked_sub(1)
                .ok_or_else(|| Error::ConfigInvalid("cannot underestimate a zero order".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: StudyKind,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// True carryover order `m`.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seed of the outcome noise; defaults to `seed`.
    #[serde(default)]
    pub noise_seed: Option<u64>,
    /// Lag coefficient rows; each study has its own default grid.
    #[serde(default)]
    pub deltas: Option<Vec<Vec<f64>>>,
    /// Horizons for the rejection curve.
    #[serde(default)]
    pub horizons: Option<Vec<usize>>,
    /// Resamples per exact test.
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Outcome bound for the worst-case study.
    #[serde(default = "default_bound")]
    pub bound: f64,
}

fn default_horizon() -> usize {
    120
}
fn default_order() -> usize {
    2
}
fn default_replications() -> usize {
    100_000
}
fn default_resamples() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.1
}
fn default_bound() -> f64 {
    10.0
}

impl StudyConfig {
    pub fn new(study: StudyKind) -> Self {
        StudyConfig {
            study,
            horizon: default_horizon(),
            order: default_order(),
            replications: default_replications(),
            seed: 0,
            noise_seed: None,
            deltas: None,
            horizons: None,
            resamples: default_resamples(),
            alpha: default_alpha(),
            bound: default_bound(),
        }
    }

    fn noise_seed(&self) -> u64 {
        self.noise_seed.unwrap_or(self.seed)
    }

    fn model(&self, deltas: &[f64]) -> LinearCarryoverModel {
        LinearCarryoverModel::standard(deltas.to_vec(), self.noise_seed())
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if self.resamples == 0 {
            return fail("resamples must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.bound > 0.0) {
            return fail(format!("bound must be positive, got {}", self.bound));
        }
        let m = self.order;
        let (orders, horizons) = match self.study {
            StudyKind::Table2 | StudyKind::Table3 => (vec![m], vec![self.horizon]),
            StudyKind::Table4 | StudyKind::Table5 => (
                Specification::ALL.iter().map(|s| s.order(m)).collect::<Result<Vec<_>>>()?,
                vec![self.horizon],
            ),
            StudyKind::RejectionCurve => (vec![m], self.curve_horizons()),
        };
        for &h in &horizons {
            for &p in &orders {
                if h < 2 * p + 2 {
                    return fail(format!("horizon {h} is too short for order {p}"));
                }
                // variance-bound estimates need T = n p with n >= 4
                let needs_blocks = !matches!(self.study, StudyKind::Table2 | StudyKind::Table3);
                if needs_blocks && (p == 0 || h % p != 0 || h / p < 4) {
                    return fail(format!("horizon {h} must be a multiple of {p} with at least 4 blocks"));
                }
            }
        }
        if let Some(rows) = &self.deltas {
            if rows.is_empty() || rows.iter().any(|r| r.is_empty()) {
                return fail("deltas must be non-empty rows".into());
            }
        }
        Ok(())
    }

    fn delta_rows(&self, default: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        self.deltas.clone().unwrap_or(default)
    }

    fn scalar_delta_rows(&self) -> Vec<Vec<f64>> {
        let m = self.order;
        self.delta_rows((1..=3).map(|d| vec![d as f64; m + 1]).collect())
    }

    fn curve_horizons(&self) -> Vec<usize> {
        self.horizons.clone().unwrap_or_else(|| (1..=10).map(|i| 60 * i).collect())
    }
}

/// A rendered study: named columns, formatted rows and the seed for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub study: StudyKind,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl StudyResult {
    fn new(study: StudyKind, seed: u64, columns: &[&str]) -> Self {
        StudyResult { study, seed, columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row.into_iter().map(Cell::render).collect());
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.columns)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Column values of one named column.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Missing,
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Num(x) => format_sig(x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s,
            Cell::Missing => String::new(),
        }
    }
}

fn opt(x: Option<f64>) -> Cell {
    x.map_or(Cell::Missing, Cell::Num)
}

fn deltas_label(deltas: &[f64]) -> String {
    deltas.iter().map(|d| format_sig(*d)).collect::<Vec<_>>().join(" ")
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Monte Carlo mean estimate and risk, plus the exact risk, for one design.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignRisk {
    pub design: Benchmark,
    pub mean_estimate: f64,
    pub risk: f64,
    pub risk_se: f64,
    pub risk_exact: f64,
}

fn design_risk(
    benchmark: Benchmark,
    oracle: &PotentialOutcomeOracle,
    cfg: &StudyConfig,
    m: usize,
) -> Result<DesignRisk> {
    let design = benchmark.design(oracle.horizon(), m)?;
    let kernel = HtKernel::new(&design, m)?;
    let horizon = oracle.horizon();
    let arm = |treated: bool| -> Result<Vec<f64>> {
        let mut y = vec![0.0; horizon];
        for t in m + 1..=horizon {
            y[t - 1] = oracle.constant_arm(t, treated)?;
        }
        Ok(kernel.group_sums(&y))
    };
    let (ones, zeros) = (arm(true)?, arm(false)?);
    let estimates: Vec<f64> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| kernel.estimate(&ones, &zeros, &design.sample_coins(&mut stream_rng(cfg.seed, i as u64)).coins))
        .collect();
    let tau = lag_p_estimand(oracle, m)?;
    let losses: Vec<f64> = estimates.iter().map(|e| (e - tau).powi(2)).collect();
    let (risk, loss_var) = mean_and_var(&losses);
    Ok(DesignRisk {
        design: benchmark,
        mean_estimate: mean_and_var(&estimates).0,
        risk,
        risk_se: (loss_var / losses.len() as f64).sqrt(),
        risk_exact: variance_pairwise(&design, oracle, m)? + (kernel.moments(&ones, &zeros).0 - tau).powi(2),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table2Row {
    pub risk: DesignRisk,
    /// Worst-case closed form, when the design is persistent.
    pub closed_form: Option<f64>,
    pub published_risk: f64,
}

const TABLE2_PUBLISHED: [f64; 3] = [26.78, 33.67, 27.85];

/// Worst-case risk: constant outcomes `+B` with no noise.
pub fn table2(cfg: &StudyConfig) -> Result<Vec<Table2Row>> {
    cfg.validate()?;
    let m = cfg.order;
    let oracle = worst_case_outcomes(cfg.horizon, m, cfg.bound, Sign::Plus)?;
    Benchmark::ALL
        .iter()
        .zip(TABLE2_PUBLISHED)
        .map(|(&b, published_risk)| {
            let design = b.design(cfg.horizon, m)?;
            Ok(Table2Row {
                risk: design_risk(b, &oracle, cfg, m)?,
                closed_form: worst_case_risk_closed_form(&design, m, cfg.bound).ok().map(|r| r.risk),
                published_risk,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table3Row {
    pub deltas: Vec<f64>,
    pub tau: f64,
    pub risks: Vec<DesignRisk>,
    pub published_risks: Option<[f64; 3]>,
}

/// Default lag grid: every `(d1, d2, d3)` in `{1, 2}^3`, ordered by sum.
pub fn table3_deltas() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0, 2.0],
        vec![1.0, 2.0, 1.0],
        vec![2.0, 1.0, 1.0],
        vec![1.0, 2.0, 2.0],
        vec![2.0, 1.0, 2.0],
        vec![2.0, 2.0, 1.0],
        vec![2.0, 2.0, 2.0],
    ]
}

/// Published risks for the default grid, keyed by the lag sum.
pub fn table3_published_risks(deltas: &[f64]) -> Option<[f64; 3]> {
    if deltas.len() != 3 || deltas.iter().any(|&d| d != 1.0 && d != 2.0) {
        return None;
    }
    match deltas.iter().sum::<f64>() as u32 {
        3 => Some([7.96, 10.22, 8.11]),
        4 => Some([9.57, 12.39, 9.74]),
        5 => Some([11.34, 14.81, 11.52]),
        6 => Some([13.28, 17.48, 13.47]),
        _ => None,
    }
}

/// Model-based risk of the three designs over a grid of lag coefficients.
pub fn table3(cfg: &StudyConfig) -> Result<Vec<Table3Row>> {
    cfg.validate()?;
    let m = cfg.order;
    cfg.delta_rows(table3_deltas())
        .into_iter()
        .map(|deltas| {
            let oracle = cfg.model(&deltas).oracle(cfg.horizon)?;
            if oracle.order() > m {
                return Err(Error::ConfigInvalid(format!("lags {deltas:?} exceed order {m}")));
            }
            let risks = Benchmark::ALL.iter().map(|&b| design_risk(b, &oracle, cfg, m)).collect::<Result<Vec<_>>>()?;
            Ok(Table3Row {
                tau: lag_p_estimand(&oracle, m)?,
                published_risks: if cfg.horizon == 120 && m == 2 { table3_published_risks(&deltas) } else { None },
                deltas,
                risks,
            })
        })
        .collect()
}

/// Sampling distribution of the estimator and of the variance-bound
/// estimates for one specification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table4Row {
    pub spec: Specification,
    pub deltas: Vec<f64>,
    pub p: usize,
    pub tau: Option<f64>,
    /// Mean over replicates of the path-dependent misspecified estimand.
    pub tau_misspecified: Option<f64>,
    pub mean_estimate: f64,
    pub var_estimate: f64,
    /// Exact variance when the true order is covered by `p`.
    pub var_exact: Option<f64>,
    pub mean_sigma2_u1: f64,
    pub mean_sigma2_u2: f64,
    pub published: Option<[f64; 5]>,
}

/// Published `[tau, E tau_hat, Var, E sigma2_U1, E sigma2_U2]` for each
/// specification and common lag.
pub fn table4_published(spec: Specification, delta: f64) -> Option<[f64; 5]> {
    let row = match (spec, delta as u32) {
        (Specification::Correct, 1) => [3.0, 3.016, 7.96, 8.50, 8.48],
        (Specification::Correct, 2) => [6.0, 6.022, 13.28, 15.24, 15.16],
        (Specification::Correct, 3) => [9.0, 9.028, 20.10, 24.40, 24.25],
        (Specification::Over, 1) => [3.0, 3.006, 11.92, 12.77, 12.67],
        (Specification::Over, 2) => [6.0, 6.009, 19.89, 22.91, 22.70],
        (Specification::Over, 3) => [9.0, 9.012, 30.10, 36.69, 36.32],
        (Specification::Under, 1) => [2.0, 2.016, 4.00, 4.13, 4.13],
        (Specification::Under, 2) => [4.0, 4.026, 6.69, 7.09, 7.06],
        (Specification::Under, 3) => [6.0, 6.037, 10.14, 11.01, 10.92],
        _ => return None,
    };
    (delta.fract() == 0.0).then_some(row)
}

fn common_delta(deltas: &[f64]) -> Option<f64> {
    deltas.iter().all(|&d| d == deltas[0]).then_some(deltas[0])
}

struct Replicate {
    estimate: f64,
    target: f64,
    sigma2: Option<(f64, f64)>,
}

fn replicates(
    design: &Design,
    oracle: &PotentialOutcomeOracle,
    p: usize,
    reps: usize,
    seed: u64,
    bounds: bool,
) -> Result<Vec<Replicate>> {
    let kernel = HtKernel::new(design, p)?;
    let fixed = if oracle.order() <= p { Some(lag_p_estimand(oracle, p)?) } else { None };
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let coins = design.sample_coins(&mut stream_rng(seed, i as u64));
            let path = design.expand(&coins)?;
            let observed = realize_observed(oracle, &path)?;
            let sums = kernel.group_sums(&observed);
            let estimate = kernel.estimate(&sums, &sums, &coins.coins);
            let target = match fixed {
                Some(tau) => tau,
                None => misspecified_estimand(oracle, p, &path)?,
            };
            let sigma2 = if bounds {
                Some(variance_estimates(&ExperimentData::new(design.clone(), p, path, observed)?, p)?)
            } else {
                None
            };
            Ok(Replicate { estimate, target, sigma2 })
        })
        .collect()
}

/// Randomization distribution under correct, over- and underestimated
/// orders, each analyzed with the optimal design for its own `p`.
pub fn table4(cfg: &StudyConfig) -> Result<Vec<Table4Row>> {
    cfg.validate()?;
    let m = cfg.order;
    let mut rows = Vec::new();
    for spec in Specification::ALL {
        let p = spec.order(m)?;
        let design = optimal_design(cfg.horizon, p)?;
        for deltas in cfg.scalar_delta_rows() {
            let oracle = cfg.model(&deltas).oracle(cfg.horizon)?;
            let reps = replicates(&design, &oracle, p, cfg.replications, cfg.seed, true)?;
            let (mean_estimate, var_estimate) = mean_and_var(&reps.iter().map(|r| r.estimate).collect::<Vec<_>>());
            let n = reps.len() as f64;
            let covered = oracle.order() <= p;
            rows.push(Table4Row {
                spec,
                p,
                tau: covered.then(|| reps[0].target),
                tau_misspecified: (!covered).then(|| reps.iter().map(|r| r.target).sum::<f64>() / n),
                mean_estimate,
                var_estimate,
                var_exact: if covered { Some(variance_pairwise(&design, &oracle, p)?) } else { None },
                mean_sigma2_u1: reps.iter().map(|r| r.sigma2.map_or(0.0, |s| s.0)).sum::<f64>() / n,
                mean_sigma2_u2: reps.iter().map(|r| r.sigma2.map_or(0.0, |s| s.1)).sum::<f64>() / n,
                published: if cfg.horizon == 120 && m == 2 && deltas.len() == 3 {
                    common_delta(&deltas).and_then(|d| table4_published(spec, d))
                } else {
                    None
                },
                deltas,
            });
        }
    }
    Ok(rows)
}

/// One simulated experiment per specification and lag, with both tests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table5Row {
    pub spec: Specification,
    pub deltas: Vec<f64>,
    pub p: usize,
    pub tau: Option<f64>,
    pub tau_misspecified: Option<f64>,
    pub estimate: f64,
    pub sigma2_u2: f64,
    pub p_exact: f64,
    pub p_asymptotic: f64,
}

pub fn table5(cfg: &StudyConfig) -> Result<Vec<Table5Row>> {
    cfg.validate()?;
    let m = cfg.order;
    let mut rows = Vec::new();
    for spec in Specification::ALL {
        let p = spec.order(m)?;
        let design = optimal_design(cfg.horizon, p)?;
        let path = design.sample_path_with(&mut stream_rng(derive_seed(cfg.seed, p as u64), 0));
        for deltas in cfg.scalar_delta_rows() {
            let oracle = cfg.model(&deltas).oracle(cfg.horizon)?;
            let data = ExperimentData::simulate(design.clone(), p, &oracle, path.clone())?;
            let estimate = crate::estimation::ht_estimator(&data)?;
            let (_, sigma2_u2) = variance_estimates(&data, p)?;
            let exact = exact_test(&data, &ExactTestConfig::new(cfg.resamples, derive_seed(cfg.seed, 1000 + p as u64)))?;
            let covered = oracle.order() <= p;
            rows.push(Table5Row {
                spec,
                p,
                tau: if covered { Some(lag_p_estimand(&oracle, p)?) } else { None },
                tau_misspecified: if covered { None } else { Some(misspecified_estimand(&oracle, p, &path)?) },
                estimate,
                sigma2_u2,
                p_exact: exact.p_value,
                p_asymptotic: asymptotic_test(estimate, sigma2_u2)?.p_value,
                deltas,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RejectionRow {
    pub deltas: Vec<f64>,
    pub horizon: usize,
    pub rate_exact: f64,
    pub rate_asymptotic: f64,
}

/// Rejection rates of the exact and asymptotic tests (the latter with the
/// second bound estimate) under the optimal design for `p = m`. Rates at
/// different horizons and lags share replicate seeds and nested noise.
pub fn rejection_curve(cfg: &StudyConfig) -> Result<Vec<RejectionRow>> {
    cfg.validate()?;
    let m = cfg.order;
    let mut rows = Vec::new();
    for deltas in cfg.scalar_delta_rows() {
        for horizon in cfg.curve_horizons() {
            let oracle = cfg.model(&deltas).oracle(horizon)?;
            let design = optimal_design(horizon, m)?;
            let outcomes: Vec<(bool, bool)> = (0..cfg.replications)
                .into_par_iter()
                .map(|i| {
                    let path = design.sample_path_with(&mut stream_rng(cfg.seed, i as u64));
                    let data = ExperimentData::simulate(design.clone(), m, &oracle, path)?;
                    let estimate = crate::estimation::ht_estimator(&data)?;
                    let (_, u2) = variance_estimates(&data, m)?;
                    let exact = exact_test(&data, &ExactTestConfig::new(cfg.resamples, derive_seed(cfg.seed, i as u64)))?;
                    let asymptotic = u2 > 0.0 && asymptotic_test(estimate, u2)?.rejects(cfg.alpha);
                    Ok((exact.rejects(cfg.alpha), asymptotic))
                })
                .collect::<Result<_>>()?;
            let n = outcomes.len() as f64;
            rows.push(RejectionRow {
                deltas: deltas.clone(),
                horizon,
                rate_exact: outcomes.iter().filter(|o| o.0).count() as f64 / n,
                rate_asymptotic: outcomes.iter().filter(|o| o.1).count() as f64 / n,
            });
        }
    }
    Ok(rows)
}

/// Kolmogorov-Smirnov distance between the standardized estimates and the
/// standard normal.
pub fn ks_distance_to_normal(samples: &[f64]) -> f64 {
    let (mean, var) = mean_and_var(samples);
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Estimates from `reps` replicates of one specification, for normality checks.
pub fn sampled_estimates(cfg: &StudyConfig, spec: Specification, deltas: &[f64]) -> Result<Vec<f64>> {
    let p = spec.order(cfg.order)?;
    let design = optimal_design(cfg.horizon, p)?;
    let oracle = cfg.model(deltas).oracle(cfg.horizon)?;
    Ok(replicates(&design, &oracle, p, cfg.replications, cfg.seed, false)?.into_iter().map(|r| r.estimate).collect())
}

/// Runs a study and renders it as a table.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let m = cfg.order;
    match cfg.study {
        StudyKind::Table2 => {
            let mut out = StudyResult::new(
                cfg.study,
                cfg.seed,
                &["design", "tau", "mean_estimate", "mean_estimate_total", "risk", "risk_se", "risk_exact", "closed_form", "risk_total", "closed_form_total", "published_risk"],
            );
            let scale = ((cfg.horizon - m) as f64).powi(2);
            for row in table2(cfg)? {
                let r = &row.risk;
                out.push(vec![
                    Cell::Text(r.design.name().into()),
                    Cell::Num(0.0),
                    Cell::Num(r.mean_estimate),
                    Cell::Num(r.mean_estimate * (cfg.horizon - m) as f64),
                    Cell::Num(r.risk),
                    Cell::Num(r.risk_se),
                    Cell::Num(r.risk_exact),
                    opt(row.closed_form),
                    Cell::Num(r.risk * scale),
                    opt(row.closed_form.map(|c| c * scale)),
                    Cell::Num(row.published_risk),
                ]);
            }
            Ok(out)
        }
        StudyKind::Table3 => {
            let mut out = StudyResult::new(
                cfg.study,
                cfg.seed,
                &["deltas", "tau", "tau_total", "design", "mean_estimate", "risk", "risk_se", "risk_exact", "risk_total", "published_risk"],
            );
            for row in table3(cfg)? {
                for (i, r) in row.risks.iter().enumerate() {
                    out.push(vec![
                        Cell::Text(deltas_label(&row.deltas)),
                        Cell::Num(row.tau),
                        Cell::Num(row.tau * (cfg.horizon - m) as f64),
                        Cell::Text(r.design.name().into()),
                        Cell::Num(r.mean_estimate),
                        Cell::Num(r.risk),
                        Cell::Num(r.risk_se),
                        Cell::Num(r.risk_exact),
                        Cell::Num(r.risk * ((cfg.horizon - m) as f64).powi(2)),
                        opt(row.published_risks.map(|p| p[i])),
                    ]);
                }
            }
            Ok(out)
        }
        StudyKind::Table4 => {
            let mut out = StudyResult::new(
                cfg.study,
                cfg.seed,
                &["specification", "deltas", "p", "tau", "tau_misspecified", "mean_estimate", "var_estimate", "var_exact", "mean_sigma2_u1", "mean_sigma2_u2", "published_tau", "published_mean_estimate", "published_var", "published_sigma2_u1", "published_sigma2_u2"],
            );
            for row in table4(cfg)? {
                let published = |i: usize| opt(row.published.map(|p| p[i]));
                out.push(vec![
                    Cell::Text(row.spec.name().into()),
                    Cell::Text(deltas_label(&row.deltas)),
                    Cell::Int(row.p),
                    opt(row.tau),
                    opt(row.tau_misspecified),
                    Cell::Num(row.mean_estimate),
                    Cell::Num(row.var_estimate),
                    opt(row.var_exact),
                    Cell::Num(row.mean_sigma2_u1),
                    Cell::Num(row.mean_sigma2_u2),
                    published(0),
                    published(1),
                    published(2),
                    published(3),
                    published(4),
                ]);
            }
            Ok(out)
        }
        StudyKind::Table5 => {
            let mut out = StudyResult::new(
                cfg.study,
                cfg.seed,
                &["specification", "deltas", "p", "tau", "tau_misspecified", "estimate", "sigma2_u2", "p_exact", "p_asymptotic"],
            );
            for row in table5(cfg)? {
                out.push(vec![
                    Cell::Text(row.spec.name().into()),
                    Cell::Text(deltas_label(&row.deltas)),
                    Cell::Int(row.p),
                    opt(row.tau),
                    opt(row.tau_misspecified),
                    Cell::Num(row.estimate),
                    Cell::Num(row.sigma2_u2),
                    Cell::Num(row.p_exact),
                    Cell::Num(row.p_asymptotic),
                ]);
            }
            Ok(out)
        }
        StudyKind::RejectionCurve => {
            let mut out = StudyResult::new(cfg.study, cfg.seed, &["deltas", "horizon", "epochs", "rate_exact", "rate_asymptotic"]);
            for row in rejection_curve(cfg)? {
                out.push(vec![
                    Cell::Text(deltas_label(&row.deltas)),
                    Cell::Int(row.horizon),
                    Cell::Int(row.horizon / m.max(1)),
                    Cell::Num(row.rate_exact),
                    Cell::Num(row.rate_asymptotic),
                ]);
            }
            Ok(out)
        }
    }
}
