//! Potential outcomes, simulation models and causal estimands.
//!
//! An oracle stores `Y_t(w)` for every period `t` and every assignment window
//! `w = w_{max(1, t-m)..=t}`. Anything earlier than `m` periods back cannot
//! move the outcome, so lookups take any history that ends at `t` and read
//! only its trailing `min(t, m + 1)` entries.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{AssignmentPath, Design};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, MAIN_STREAM};

#[derive(Clone, Debug)]
enum Repr {
    /// `values[t - 1][bits]`, where bit `j` of `bits` is `w_{t-j}`.
    Table(Vec<Vec<Option<f64>>>),
    /// `Y_t = base[t - 1] + sum_j lags[t - 1][j] * w_{t-j}`.
    Linear { base: Vec<f64>, lags: Vec<Vec<f64>> },
}

/// Fixed potential outcomes `Y_t(w_{t-m..=t})` over a horizon.
#[derive(Clone, Debug)]
pub struct PotentialOutcomeOracle {
    horizon: usize,
    order: usize,
    bound: Option<f64>,
    repr: Repr,
}

fn window_bits(window: &[bool]) -> usize {
    window.iter().rev().enumerate().fold(0, |acc, (j, &w)| acc | (usize::from(w) << j))
}

fn window_string(window: &[bool]) -> String {
    window.iter().map(|&w| if w { '1' } else { '0' }).collect()
}

impl PotentialOutcomeOracle {
    /// Tabulates `f(t, window)` for every period and window.
    pub fn from_fn(horizon: usize, order: usize, mut f: impl FnMut(usize, &[bool]) -> f64) -> Self {
        let mut values = Vec::with_capacity(horizon);
        let mut window = Vec::new();
        for t in 1..=horizon {
            let len = t.min(order + 1);
            let mut row = Vec::with_capacity(1 << len);
            for bits in 0..1usize << len {
                window.clear();
                window.extend((0..len).rev().map(|j| (bits >> j) & 1 == 1));
                row.push(Some(f(t, &window)));
            }
            values.push(row);
        }
        PotentialOutcomeOracle { horizon, order, bound: None, repr: Repr::Table(values) }
    }

    /// Builds an oracle from explicit `(t, window)` entries. Windows must have
    /// length `min(t, order + 1)`; entries not supplied stay missing and
    /// surface as [`Error::MissingEntry`] on lookup.
    pub fn from_entries(
        horizon: usize,
        order: usize,
        entries: impl IntoIterator<Item = ((usize, Vec<bool>), f64)>,
    ) -> Result<Self> {
        let mut values: Vec<Vec<Option<f64>>> =
            (1..=horizon).map(|t| vec![None; 1 << t.min(order + 1)]).collect();
        for ((t, window), value) in entries {
            if t == 0 || t > horizon {
                return Err(Error::PeriodOutOfRange { t, horizon });
            }
            if window.len() != t.min(order + 1) {
                return Err(Error::MissingEntry { t, window: window_string(&window) });
            }
            values[t - 1][window_bits(&window)] = Some(value);
        }
        Ok(PotentialOutcomeOracle { horizon, order, bound: None, repr: Repr::Table(values) })
    }

    /// Outcomes linear in the assignments. `lags[t - 1][j]` multiplies
    /// `w_{t-j}`; the declared `order` must cover every nonzero coefficient.
    pub fn linear(order: usize, base: Vec<f64>, lags: Vec<Vec<f64>>) -> Result<Self> {
        if base.len() != lags.len() {
            return Err(Error::ModelConfig(format!(
                "{} intercepts but {} lag rows",
                base.len(),
                lags.len()
            )));
        }
        for (i, row) in lags.iter().enumerate() {
            let t = i + 1;
            if let Some(j) = row.iter().rposition(|&c| c != 0.0) {
                if j > order || j >= t {
                    return Err(Error::ModelConfig(format!(
                        "period {t} has a nonzero coefficient at lag {j} beyond order {order}"
                    )));
                }
            }
        }
        Ok(PotentialOutcomeOracle { horizon: base.len(), order, bound: None, repr: Repr::Linear { base, lags } })
    }

    /// Declares `|Y_t(w)| <= bound` and checks it.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::NonpositiveBound(bound));
        }
        for t in 1..=self.horizon {
            let (lo, hi) = self.range_at(t);
            for value in [lo, hi] {
                if value.abs() > bound * (1.0 + 1e-12) {
                    return Err(Error::BoundViolated { t, value, bound });
                }
            }
        }
        self.bound = Some(bound);
        Ok(self)
    }

    fn range_at(&self, t: usize) -> (f64, f64) {
        match &self.repr {
            Repr::Table(values) => values[t - 1].iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
            Repr::Linear { base, lags } => {
                let b = base[t - 1];
                let neg: f64 = lags[t - 1].iter().filter(|&&c| c < 0.0).sum();
                let pos: f64 = lags[t - 1].iter().filter(|&&c| c > 0.0).sum();
                (b + neg, b + pos)
            }
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// True carryover order `m`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    /// Number of trailing assignments that determine `Y_t`.
    pub fn window_len(&self, t: usize) -> usize {
        t.min(self.order + 1)
    }

    /// `Y_t` given any assignment history `w_{s..=t}` ending at `t`.
    pub fn outcome(&self, t: usize, history: &[bool]) -> Result<f64> {
        if t == 0 || t > self.horizon {
            return Err(Error::PeriodOutOfRange { t, horizon: self.horizon });
        }
        let len = self.window_len(t);
        if history.len() < len {
            return Err(Error::MissingEntry { t, window: window_string(history) });
        }
        let window = &history[history.len() - len..];
        match &self.repr {
            Repr::Table(values) => values[t - 1][window_bits(window)]
                .ok_or_else(|| Error::MissingEntry { t, window: window_string(window) }),
            Repr::Linear { base, lags } => {
                let row = &lags[t - 1];
                let carry: f64 = row
                    .iter()
                    .zip(window.iter().rev())
                    .filter(|(_, &w)| w)
                    .map(|(c, _)| c)
                    .sum();
                Ok(base[t - 1] + carry)
            }
        }
    }

    /// `Y_t` along a full path.
    pub fn outcome_on_path(&self, t: usize, path: &AssignmentPath) -> Result<f64> {
        self.outcome(t, &path.as_slice()[..t])
    }

    /// `Y_t(1_{m+1})` when `treated`, else `Y_t(0_{m+1})` (shorter windows for `t <= m`).
    pub fn constant_arm(&self, t: usize, treated: bool) -> Result<f64> {
        let window = vec![treated; self.window_len(t)];
        self.outcome(t, &window)
    }
}

/// Observed outcomes `Y^obs_t = Y_t(w^obs)` for every period.
pub fn realize_observed(oracle: &PotentialOutcomeOracle, path: &AssignmentPath) -> Result<Vec<f64>> {
    if path.len() != oracle.horizon() {
        return Err(Error::LengthMismatch { expected: oracle.horizon(), got: path.len() });
    }
    (1..=oracle.horizon()).map(|t| oracle.outcome_on_path(t, path)).collect()
}

fn check_order(oracle: &PotentialOutcomeOracle, p: usize) -> Result<()> {
    if p >= oracle.horizon() {
        return Err(Error::OrderTooLarge { p, horizon: oracle.horizon() });
    }
    Ok(())
}

/// Average lag-`p` effect `(1/(T-p)) sum_{t>p} [Y_t(1_{p+1}) - Y_t(0_{p+1})]`.
pub fn lag_p_estimand(oracle: &PotentialOutcomeOracle, p: usize) -> Result<f64> {
    check_order(oracle, p)?;
    if p < oracle.order() {
        return Err(Error::OrderTooSmall { p, m: oracle.order() });
    }
    let horizon = oracle.horizon();
    let mut sum = 0.0;
    for t in p + 1..=horizon {
        sum += oracle.constant_arm(t, true)? - oracle.constant_arm(t, false)?;
    }
    Ok(sum / (horizon - p) as f64)
}

/// Converts an average effect into the total effect over `t = p+1..=T`.
pub fn total_effect(average: f64, horizon: usize, p: usize) -> f64 {
    average * (horizon - p) as f64
}

fn padded_contrast(
    oracle: &PotentialOutcomeOracle,
    path: &AssignmentPath,
    t: usize,
    fill_from: usize,
    buf: &mut Vec<bool>,
) -> Result<f64> {
    let len = oracle.window_len(t);
    let start = t - len;
    let w = path.as_slice();
    let mut arm = |value: bool| -> Result<f64> {
        buf.clear();
        buf.extend_from_slice(&w[start..t]);
        for (i, slot) in buf.iter_mut().enumerate() {
            if start + i + 1 >= fill_from {
                *slot = value;
            }
        }
        oracle.outcome(t, buf)
    };
    Ok(arm(true)? - arm(false)?)
}

/// The `m`-misspecified lag-`p` effect: every window is padded with the
/// observed assignments before `t - p` and forced to `1_{p+1}` / `0_{p+1}`
/// from `t - p` on. Equals [`lag_p_estimand`] at `p = m`.
pub fn misspecified_estimand(oracle: &PotentialOutcomeOracle, p: usize, path: &AssignmentPath) -> Result<f64> {
    check_order(oracle, p)?;
    if p > oracle.order() {
        return Err(Error::OrderNotUnderestimated { p, m: oracle.order() });
    }
    if path.len() != oracle.horizon() {
        return Err(Error::LengthMismatch { expected: oracle.horizon(), got: path.len() });
    }
    let horizon = oracle.horizon();
    let mut buf = Vec::new();
    let mut sum = 0.0;
    for t in p + 1..=horizon {
        sum += padded_contrast(oracle, path, t, t - p, &mut buf)?;
    }
    Ok(sum / (horizon - p) as f64)
}

/// Design-aligned variant of [`misspecified_estimand`]: the forced block
/// starts at the determining point `f(t - p)` rather than at `t - p`, which is
/// the quantity the Horvitz-Thompson estimator is conditionally unbiased for.
/// Averaged over the design it equals the estimator's expectation for any
/// `p`, and for `p >= m` it reduces to [`lag_p_estimand`].
pub fn design_conditional_estimand(
    oracle: &PotentialOutcomeOracle,
    p: usize,
    path: &AssignmentPath,
    design: &Design,
) -> Result<f64> {
    check_order(oracle, p)?;
    if design.horizon() != oracle.horizon() {
        return Err(Error::HorizonMismatch { design: design.horizon(), oracle: oracle.horizon() });
    }
    design.check_length(path)?;
    let horizon = oracle.horizon();
    let mut buf = Vec::new();
    let mut sum = 0.0;
    for t in p + 1..=horizon {
        let f = design.determining_point(t - p)?;
        sum += padded_contrast(oracle, path, t, f, &mut buf)?;
    }
    Ok(sum / (horizon - p) as f64)
}

/// Sign of the worst-case constant outcome table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

/// The adversarial table `Y_t(w) = +B` (or `-B`) everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseOutcomes {
    #[serde(rename = "B")]
    pub bound: f64,
    pub sign: Sign,
}

impl WorstCaseOutcomes {
    pub fn oracle(&self, horizon: usize, order: usize) -> Result<PotentialOutcomeOracle> {
        worst_case_outcomes(horizon, order, self.bound, self.sign)
    }
}

pub fn worst_case_outcomes(horizon: usize, order: usize, bound: f64, sign: Sign) -> Result<PotentialOutcomeOracle> {
    if !(bound > 0.0) {
        return Err(Error::NonpositiveBound(bound));
    }
    let value = match sign {
        Sign::Plus => bound,
        Sign::Minus => -bound,
    };
    PotentialOutcomeOracle::linear(order, vec![value; horizon], vec![Vec::new(); horizon])?.with_bound(bound)
}

/// Per-period fixed effect `alpha_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    /// `alpha_t = ln t`.
    Named(AlphaKind),
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaKind {
    Log,
    Zero,
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::Named(AlphaKind::Log)
    }
}

impl Alpha {
    fn at(&self, t: usize) -> Result<f64> {
        match self {
            Alpha::Named(AlphaKind::Log) => Ok((t as f64).ln()),
            Alpha::Named(AlphaKind::Zero) => Ok(0.0),
            Alpha::Values(values) => values
                .get(t - 1)
                .copied()
                .ok_or_else(|| Error::ModelConfig(format!("alpha has no value for period {t}"))),
        }
    }
}

fn standard_normal_noise(horizon: usize, sd: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sd >= 0.0) {
        return Err(Error::ModelConfig(format!("noise_sd must be non-negative, got {sd}")));
    }
    if sd == 0.0 {
        return Ok(vec![0.0; horizon]);
    }
    let mut rng = stream_rng(seed, MAIN_STREAM);
    Ok((0..horizon).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z }).collect())
}

/// `Y_t(w) = mu + alpha_t + delta_1 w_t + delta_2 w_{t-1} + ... + eps_t`.
///
/// The noise `eps_t` is drawn once per period from the `seed` stream and is
/// shared by every window at that period. Noise for a longer horizon extends
/// the noise of a shorter one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCarryoverModel {
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub alpha: Alpha,
    pub deltas: Vec<f64>,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default, rename = "seed")]
    pub noise_seed: u64,
}

fn one() -> f64 {
    1.0
}

impl LinearCarryoverModel {
    /// The simulation model with `mu = 0`, `alpha_t = ln t` and unit noise.
    pub fn standard(deltas: Vec<f64>, noise_seed: u64) -> Self {
        LinearCarryoverModel { mu: 0.0, alpha: Alpha::default(), deltas, noise_sd: 1.0, noise_seed }
    }

    /// Highest lag carrying a nonzero coefficient.
    pub fn order(&self) -> usize {
        self.deltas.iter().rposition(|&d| d != 0.0).unwrap_or(0)
    }

    pub fn oracle(&self, horizon: usize) -> Result<PotentialOutcomeOracle> {
        let order = self.order();
        let noise = standard_normal_noise(horizon, self.noise_sd, self.noise_seed)?;
        let mut base = Vec::with_capacity(horizon);
        let mut lags = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            base.push(self.mu + self.alpha.at(t)? + noise[t - 1]);
            lags.push(self.deltas.iter().take(t.min(order + 1)).copied().collect());
        }
        PotentialOutcomeOracle::linear(order, base, lags)
    }
}

/// `Y_t = sum_j phi_j Y_{t-j} + sum_j delta_j w_{t-j} + eps_t`, with
/// `phi[j - 1]` the coefficient on `Y_{t-j}` and `delta[j]` the one on
/// `w_{t-j}`.
///
/// The recursion is unrolled into a linear function of the assignments before
/// tabulation. `truncation` drops carryover beyond that lag; `None` keeps the
/// full unroll.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoregressiveModel {
    pub phi: Vec<f64>,
    pub delta: Vec<f64>,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default, rename = "seed")]
    pub noise_seed: u64,
    #[serde(default)]
    pub truncation: Option<usize>,
}

impl AutoregressiveModel {
    pub fn oracle(&self, horizon: usize) -> Result<PotentialOutcomeOracle> {
        let noise = standard_normal_noise(horizon, self.noise_sd, self.noise_seed)?;
        let max_lag = self.truncation.unwrap_or(usize::MAX);
        let mut base = vec![0.0; horizon];
        // coef[t-1][j] multiplies w_{t-j}
        let mut coef: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let mut c = noise[t - 1];
            let mut row: Vec<f64> = (0..t).map(|j| self.delta.get(j).copied().unwrap_or(0.0)).collect();
            for (i, &phi) in self.phi.iter().enumerate() {
                let back = i + 1;
                if back >= t || phi == 0.0 {
                    continue;
                }
                let prev = t - back;
                c += phi * base[prev - 1];
                for (j, &a) in coef[prev - 1].iter().enumerate() {
                    row[j + back] += phi * a;
                }
            }
            base[t - 1] = c;
            coef.push(row);
        }
        let mut order = 0;
        let lags: Vec<Vec<f64>> = coef
            .into_iter()
            .map(|mut row| {
                row.truncate(max_lag.saturating_add(1).min(row.len()));
                if let Some(j) = row.iter().rposition(|&c| c != 0.0) {
                    order = order.max(j);
                }
                row
            })
            .collect();
        PotentialOutcomeOracle::linear(order, base, lags)
    }
}

/// JSON model configuration, tagged by `"model"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    Linear(LinearCarryoverModel),
    Ar(AutoregressiveModel),
    WorstCase {
        #[serde(rename = "B")]
        bound: f64,
        sign: Sign,
        #[serde(default)]
        order: usize,
    },
}

impl ModelConfig {
    pub fn oracle(&self, horizon: usize) -> Result<PotentialOutcomeOracle> {
        match self {
            ModelConfig::Linear(model) => model.oracle(horizon),
            ModelConfig::Ar(model) => model.oracle(horizon),
            ModelConfig::WorstCase { bound, sign, order } => worst_case_outcomes(horizon, *order, *bound, *sign),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn path(s: &str) -> AssignmentPath {
        s.parse().unwrap()
    }

    fn random_oracle(horizon: usize, order: usize, seed: u64) -> PotentialOutcomeOracle {
        let mut rng = stream_rng(seed, 0);
        PotentialOutcomeOracle::from_fn(horizon, order, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn worst_case_table_is_constant() {
        let oracle = worst_case_outcomes(4, 1, 10.0, Sign::Plus).unwrap();
        for s in ["0000", "1010", "1111"] {
            assert_eq!(realize_observed(&oracle, &path(s)).unwrap(), vec![10.0; 4]);
        }
        assert_eq!(lag_p_estimand(&oracle, 1).unwrap(), 0.0);
        assert!(matches!(worst_case_outcomes(4, 1, 0.0, Sign::Plus), Err(Error::NonpositiveBound(_))));
        let minus = worst_case_outcomes(3, 0, 2.0, Sign::Minus).unwrap();
        assert_eq!(minus.constant_arm(2, true).unwrap(), -2.0);
    }

    #[test]
    fn observed_values_follow_windows() {
        // Y_t(window) encodes the window so lookups can be read back.
        let oracle = PotentialOutcomeOracle::from_fn(4, 1, |t, w| {
            (t * 100) as f64 + w.iter().fold(0.0, |acc, &b| acc * 10.0 + f64::from(u8::from(b)))
        });
        let obs = realize_observed(&oracle, &path("1100")).unwrap();
        assert_eq!(obs[1], oracle.outcome(2, &[true, true]).unwrap());
        assert_eq!(obs[3], oracle.outcome(4, &[false, false]).unwrap());
        assert_eq!(obs, vec![101.0, 211.0, 310.0, 400.0]);
    }

    #[test]
    fn missing_entries_are_reported() {
        let oracle = PotentialOutcomeOracle::from_entries(2, 1, [((1, vec![true]), 1.0), ((2, vec![true, true]), 2.0)]).unwrap();
        assert_eq!(realize_observed(&oracle, &path("11")).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(realize_observed(&oracle, &path("10")), Err(Error::MissingEntry { t: 2, .. })));
    }

    #[test]
    fn linear_model_substitution() {
        let model = LinearCarryoverModel { noise_sd: 0.0, ..LinearCarryoverModel::standard(vec![1.0, 1.0, 1.0], 0) };
        let oracle = model.oracle(8).unwrap();
        assert_eq!(oracle.order(), 2);
        let obs = realize_observed(&oracle, &path("11111111")).unwrap();
        for (i, y) in obs.iter().enumerate() {
            let t = i + 1;
            assert!((y - ((t as f64).ln() + t.min(3) as f64)).abs() < 1e-12);
        }
        assert!((total_effect(lag_p_estimand(&oracle, 2).unwrap(), 8, 2) - 18.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_linear_model_effect_matches_lag_sum() {
        let oracle = LinearCarryoverModel::standard(vec![1.0, 1.0, 1.0], 11).oracle(120).unwrap();
        assert!((lag_p_estimand(&oracle, 2).unwrap() - 3.0).abs() < 1e-12);
        assert!((lag_p_estimand(&oracle, 3).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(lag_p_estimand(&oracle, 1), Err(Error::OrderTooSmall { p: 1, m: 2 })));
        // noise is shared across horizons
        let short = LinearCarryoverModel::standard(vec![1.0, 1.0, 1.0], 11).oracle(60).unwrap();
        for t in 1..=60 {
            assert_eq!(short.constant_arm(t, false).unwrap(), oracle.constant_arm(t, false).unwrap());
        }
    }

    #[test]
    fn misspecified_example() {
        // T = 4, m = 2, p = 1: the t = 4 term pads with w_2.
        let oracle = random_oracle(4, 2, 5);
        let y = |w: [bool; 3]| oracle.outcome(4, &w).unwrap();
        let design = Design::new(4, vec![1, 3]).unwrap();
        let mut avg_t4 = 0.0;
        for (w, prob) in design.enumerate_paths().unwrap() {
            let mut buf = Vec::new();
            avg_t4 += prob * padded_contrast(&oracle, &w, 4, 3, &mut buf).unwrap();
        }
        let expected = 0.5 * (y([true, true, true]) + y([false, true, true]) - y([false, false, false]) - y([true, false, false]));
        assert!((avg_t4 - expected).abs() < 1e-12);
        assert!(matches!(misspecified_estimand(&oracle, 3, &path("1111")), Err(Error::OrderNotUnderestimated { .. }) | Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn misspecified_linear_model_keeps_short_lags() {
        let oracle = LinearCarryoverModel::standard(vec![1.0, 1.0, 1.0], 3).oracle(120).unwrap();
        let design = Design::every_period(120).unwrap();
        let w = design.sample_path(9);
        let tau = misspecified_estimand(&oracle, 1, &w).unwrap();
        // the observed w_{t-2} enters both arms and cancels
        assert!((tau - 2.0).abs() < 1e-9);
    }

    #[test]
    fn autoregressive_unroll_matches_recursion() {
        let model = AutoregressiveModel { phi: vec![0.5, -0.2], delta: vec![1.0, 0.3], noise_sd: 1.0, noise_seed: 4, truncation: None };
        let horizon = 9;
        let oracle = model.oracle(horizon).unwrap();
        let noise = standard_normal_noise(horizon, 1.0, 4).unwrap();
        let w = path("101100111");
        let mut y = vec![0.0; horizon + 1];
        for t in 1..=horizon {
            let mut v = noise[t - 1];
            for (j, &phi) in model.phi.iter().enumerate() {
                if t > j + 1 {
                    v += phi * y[t - j - 1];
                }
            }
            for (j, &d) in model.delta.iter().enumerate() {
                if t > j && w.get(t - j) {
                    v += d;
                }
            }
            y[t] = v;
            assert!((oracle.outcome_on_path(t, &w).unwrap() - v).abs() < 1e-12);
        }
        assert_eq!(oracle.order(), horizon - 1);
        let truncated = AutoregressiveModel { truncation: Some(2), ..model }.oracle(horizon).unwrap();
        assert_eq!(truncated.order(), 2);
    }

    #[test]
    fn model_config_json() {
        let cfg: ModelConfig = serde_json::from_str(
            r#"{"model":"linear","mu":0,"alpha":"log","deltas":[1,1,1],"noise_sd":1,"seed":7}"#,
        )
        .unwrap();
        assert_eq!(cfg.oracle(10).unwrap().order(), 2);
        let cfg: ModelConfig = serde_json::from_str(r#"{"model":"worst_case","B":10,"sign":"-","order":2}"#).unwrap();
        assert_eq!(cfg.oracle(5).unwrap().constant_arm(5, true).unwrap(), -10.0);
        let cfg: ModelConfig = serde_json::from_str(r#"{"model":"linear","alpha":[1,2,3],"deltas":[2],"noise_sd":0}"#).unwrap();
        assert_eq!(cfg.oracle(3).unwrap().constant_arm(3, true).unwrap(), 5.0);
        assert!(cfg.oracle(4).is_err());
        assert!(serde_json::from_str::<ModelConfig>(r#"{"model":"ar","phi":[0.5],"delta":[1]}"#).is_ok());
    }

    #[test]
    fn bound_is_checked() {
        let oracle = LinearCarryoverModel { noise_sd: 0.0, alpha: Alpha::Named(AlphaKind::Zero), ..LinearCarryoverModel::standard(vec![1.0, 1.0], 0) };
        assert!(oracle.oracle(5).unwrap().with_bound(2.0).is_ok());
        assert!(matches!(oracle.oracle(5).unwrap().with_bound(1.5), Err(Error::BoundViolated { .. })));
    }

    proptest! {
        #[test]
        fn lookups_ignore_history_beyond_the_window(seed in any::<u64>(), order in 0usize..3, bits_a in any::<u16>(), bits_b in any::<u16>()) {
            let horizon = 8;
            let oracle = random_oracle(horizon, order, seed);
            let a: Vec<bool> = (0..horizon).map(|i| (bits_a >> i) & 1 == 1).collect();
            let mut b: Vec<bool> = (0..horizon).map(|i| (bits_b >> i) & 1 == 1).collect();
            for t in 1..=horizon {
                let len = t.min(order + 1);
                b[t - len..t].copy_from_slice(&a[t - len..t]);
                prop_assert_eq!(oracle.outcome(t, &a[..t]).unwrap(), oracle.outcome(t, &b[..t]).unwrap());
            }
        }

        #[test]
        fn misspecified_at_true_order_is_the_lag_effect(seed in any::<u64>(), order in 0usize..3, bits in any::<u16>()) {
            let horizon = 7;
            let oracle = random_oracle(horizon, order, seed);
            let w = AssignmentPath::new((0..horizon).map(|i| (bits >> i) & 1 == 1).collect());
            let a = misspecified_estimand(&oracle, order, &w).unwrap();
            let b = lag_p_estimand(&oracle, order).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn linear_effect_is_independent_of_alpha(alpha in proptest::collection::vec(-5.0f64..5.0, 12), d in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let model = LinearCarryoverModel { mu: 1.0, alpha: Alpha::Values(alpha), deltas: d.clone(), noise_sd: 0.0, noise_seed: 0 };
            let oracle = model.oracle(12).unwrap();
            let p = oracle.order();
            let expected: f64 = d.iter().take(p + 1).sum();
            prop_assert!((lag_p_estimand(&oracle, p).unwrap() - expected).abs() < 1e-9);
        }
    }
}
