//! Horvitz-Thompson estimation of lag-p effects and its variance.

use std::io;

use serde::{Deserialize, Serialize};

use crate::design::{AssignmentPath, Design, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::outcomes::{realize_observed, PotentialOutcomeOracle};

/// One realized experiment: the design, the assumed order `p`, the path and
/// the observed outcomes for every period.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    design: Design,
    p: usize,
    path: AssignmentPath,
    observed: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    period: usize,
    assignment: u8,
    outcome: f64,
}

/// Formats with 12 significant digits, then prints the shortest decimal that
/// round-trips the rounded value.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

impl ExperimentData {
    pub fn new(design: Design, p: usize, path: AssignmentPath, observed: Vec<f64>) -> Result<Self> {
        design.check_length(&path)?;
        if observed.len() != design.horizon() {
            return Err(Error::LengthMismatch { expected: design.horizon(), got: observed.len() });
        }
        if p >= design.horizon() {
            return Err(Error::OrderTooLarge { p, horizon: design.horizon() });
        }
        if design.coins_of(&path)?.is_none() {
            return Err(Error::InvalidPath);
        }
        Ok(ExperimentData { design, p, path, observed })
    }

    /// Runs the experiment on `path` against a potential-outcome oracle.
    pub fn simulate(design: Design, p: usize, oracle: &PotentialOutcomeOracle, path: AssignmentPath) -> Result<Self> {
        if oracle.horizon() != design.horizon() {
            return Err(Error::HorizonMismatch { design: design.horizon(), oracle: oracle.horizon() });
        }
        let observed = realize_observed(oracle, &path)?;
        Self::new(design, p, path, observed)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn path(&self) -> &AssignmentPath {
        &self.path
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    /// Reads `period,assignment,outcome` rows. Periods must run 1..=T in order.
    pub fn read_csv<R: io::Read>(reader: R, design: Design, p: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["period", "assignment", "outcome"] {
            return Err(Error::PreconditionViolated(format!(
                "expected header period,assignment,outcome, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut path = Vec::new();
        let mut observed = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            if row.period != path.len() + 1 {
                return Err(Error::PreconditionViolated(format!(
                    "expected period {} but found {}",
                    path.len() + 1,
                    row.period
                )));
            }
            path.push(match row.assignment {
                0 => false,
                1 => true,
                other => return Err(Error::BadPathChar(char::from(b'0'.saturating_add(other)))),
            });
            observed.push(row.outcome);
        }
        Self::new(design, p, AssignmentPath::new(path), observed)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["period", "assignment", "outcome"])?;
        for (i, (&w, &y)) in self.path.as_slice().iter().zip(&self.observed).enumerate() {
            wtr.write_record([(i + 1).to_string(), u8::from(w).to_string(), format_sig(y)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Which constant window a propensity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arm {
    Ones,
    Zeros,
}

/// `Pr(W_{t-p..=t} = 1_{p+1})`, equal for both arms: one half per distinct
/// coin in the window.
pub fn propensity(design: &Design, t: usize, p: usize, _arm: Arm) -> Result<f64> {
    let (lo, hi) = design.window_coins(t, p)?;
    Ok(0.5f64.powi((hi - lo + 1) as i32))
}

#[derive(Clone, Debug)]
struct Group {
    first: usize,
    last: usize,
    lo: usize,
    hi: usize,
    weight: f64,
}

/// Periods `p+1..=T` grouped by the coins their window spans. Every period in
/// a group shares its inverse propensity and its all-ones/all-zeros
/// indicators, so an estimate only needs per-group outcome sums and the coin
/// values. This is what makes resampling cheap.
#[derive(Clone, Debug)]
pub struct HtKernel {
    horizon: usize,
    p: usize,
    coins: usize,
    groups: Vec<Group>,
}

impl HtKernel {
    pub fn new(design: &Design, p: usize) -> Result<Self> {
        let horizon = design.horizon();
        if p >= horizon {
            return Err(Error::OrderTooLarge { p, horizon });
        }
        let mut groups: Vec<Group> = Vec::new();
        for t in p + 1..=horizon {
            let (lo, hi) = design.window_coins(t, p)?;
            match groups.last_mut() {
                Some(g) if g.lo == lo && g.hi == hi => g.last = t,
                _ => groups.push(Group { first: t, last: t, lo, hi, weight: 2f64.powi((hi - lo + 1) as i32) }),
            }
        }
        Ok(HtKernel { horizon, p, coins: design.num_coins(), groups })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Per-group sums of a full-length outcome vector.
    pub fn group_sums(&self, outcomes: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|g| outcomes[g.first - 1..g.last].iter().sum()).collect()
    }

    /// Number of periods in each group.
    pub fn group_sizes(&self) -> Vec<f64> {
        self.groups.iter().map(|g| (g.last - g.first + 1) as f64).collect()
    }

    /// Average-scale estimate when windows that come up all ones contribute
    /// `ones[g]` and windows that come up all zeros contribute `zeros[g]`.
    pub fn estimate(&self, ones: &[f64], zeros: &[f64], coins: &[bool]) -> f64 {
        debug_assert_eq!(coins.len(), self.coins);
        let mut total = 0.0;
        for (i, g) in self.groups.iter().enumerate() {
            let first = coins[g.lo];
            if coins[g.lo + 1..=g.hi].iter().all(|&c| c == first) {
                total += g.weight * if first { ones[i] } else { -zeros[i] };
            }
        }
        total / (self.horizon - self.p) as f64
    }

    /// For each group, `Some(true)` if its window came up all ones,
    /// `Some(false)` if all zeros and `None` if mixed.
    pub fn window_arms(&self, coins: &[bool]) -> Vec<Option<bool>> {
        self.groups
            .iter()
            .map(|g| {
                let first = coins[g.lo];
                coins[g.lo + 1..=g.hi].iter().all(|&c| c == first).then_some(first)
            })
            .collect()
    }

    /// Exact mean and variance of the estimate over the design when the
    /// group contributions do not depend on the path (true order at most
    /// `p`). Runs in time quadratic in the number of groups.
    pub fn moments(&self, ones: &[f64], zeros: &[f64]) -> (f64, f64) {
        let scale = (self.horizon - self.p) as f64;
        let mean: f64 = ones.iter().zip(zeros).map(|(a, b)| a - b).sum::<f64>() / scale;
        let mut var = 0.0;
        for (i, g) in self.groups.iter().enumerate() {
            for (j, h) in self.groups.iter().enumerate() {
                let overlap_len = (g.hi.min(h.hi) + 1).saturating_sub(g.lo.max(h.lo));
                let overlap = overlap_len > 0;
                let distinct = ((g.hi - g.lo + 1) + (h.hi - h.lo + 1) - overlap_len) as i32;
                let p_same = 0.5f64.powi(distinct);
                let p_mixed = if overlap { 0.0 } else { p_same };
                let e = g.weight
                    * h.weight
                    * (ones[i] * ones[j] * p_same + zeros[i] * zeros[j] * p_same
                        - ones[i] * zeros[j] * p_mixed
                        - zeros[i] * ones[j] * p_mixed);
                var += e - (ones[i] - zeros[i]) * (ones[j] - zeros[j]);
            }
        }
        (mean, var.max(0.0) / (scale * scale))
    }
}

/// Average-scale estimate straight from a path and its outcomes.
fn estimate_on_path(design: &Design, p: usize, path: &AssignmentPath, observed: &[f64]) -> Result<f64> {
    let horizon = design.horizon();
    let w = path.as_slice();
    let mut total = 0.0;
    for t in p + 1..=horizon {
        let window = &w[t - p - 1..t];
        let ones = window.iter().all(|&x| x);
        let zeros = window.iter().all(|&x| !x);
        if ones || zeros {
            let pi = propensity(design, t, p, if ones { Arm::Ones } else { Arm::Zeros })?;
            total += if ones { observed[t - 1] } else { -observed[t - 1] } / pi;
        }
    }
    Ok(total / (horizon - p) as f64)
}

/// Horvitz-Thompson estimate of the average lag-`p` effect.
pub fn ht_estimator(data: &ExperimentData) -> Result<f64> {
    estimate_on_path(&data.design, data.p, &data.path, &data.observed)
}

/// Horvitz-Thompson estimate on the total-effect scale.
pub fn ht_estimator_total(data: &ExperimentData) -> Result<f64> {
    Ok(ht_estimator(data)? * (data.design.horizon() - data.p) as f64)
}

/// Every path of the design with its probability and the estimate it yields.
/// Works for any oracle, including ones whose true order exceeds `p`.
pub fn enumerate_estimates(
    design: &Design,
    oracle: &PotentialOutcomeOracle,
    p: usize,
    cap: usize,
) -> Result<Vec<(AssignmentPath, f64, f64)>> {
    if oracle.horizon() != design.horizon() {
        return Err(Error::HorizonMismatch { design: design.horizon(), oracle: oracle.horizon() });
    }
    if p >= design.horizon() {
        return Err(Error::OrderTooLarge { p, horizon: design.horizon() });
    }
    let prob = 0.5f64.powi(design.num_coins() as i32);
    design
        .outcomes(cap)?
        .map(|outcome| {
            let path = design.expand(&outcome)?;
            let observed = realize_observed(oracle, &path)?;
            let estimate = estimate_on_path(design, p, &path, &observed)?;
            Ok((path, prob, estimate))
        })
        .collect()
}

/// Mean and variance of the estimate by enumerating every path.
pub fn enumeration_moments(design: &Design, oracle: &PotentialOutcomeOracle, p: usize, cap: usize) -> Result<(f64, f64)> {
    let rows = enumerate_estimates(design, oracle, p, cap)?;
    let mean: f64 = rows.iter().map(|(_, pr, x)| pr * x).sum();
    let var: f64 = rows.iter().map(|(_, pr, x)| pr * (x - mean).powi(2)).sum();
    Ok((mean, var))
}

fn arm_sums(kernel: &HtKernel, oracle: &PotentialOutcomeOracle) -> Result<(Vec<f64>, Vec<f64>)> {
    let horizon = oracle.horizon();
    let mut ones = vec![0.0; horizon];
    let mut zeros = vec![0.0; horizon];
    for t in kernel.p + 1..=horizon {
        ones[t - 1] = oracle.constant_arm(t, true)?;
        zeros[t - 1] = oracle.constant_arm(t, false)?;
    }
    Ok((kernel.group_sums(&ones), kernel.group_sums(&zeros)))
}

/// Exact variance of the estimator for any design, from pairwise window
/// covariances. Needs the oracle's true order to be at most `p`.
pub fn variance_pairwise(design: &Design, oracle: &PotentialOutcomeOracle, p: usize) -> Result<f64> {
    if oracle.order() > p {
        return Err(Error::OrderMismatch { p, m: oracle.order() });
    }
    if oracle.horizon() != design.horizon() {
        return Err(Error::HorizonMismatch { design: design.horizon(), oracle: oracle.horizon() });
    }
    let kernel = HtKernel::new(design, p)?;
    let (ones, zeros) = arm_sums(&kernel, oracle)?;
    Ok(kernel.moments(&ones, &zeros).1)
}

/// The `n`-replica structure: `T = n m` with `n >= 4` and the optimal design
/// `{1, 2m+1, 3m+1, ..., (n-2)m+1}`. Returns `n`.
pub fn replica_count(design: &Design, m: usize) -> Result<usize> {
    let horizon = design.horizon();
    if m == 0 || horizon % m != 0 || horizon / m < 4 {
        return Err(Error::PreconditionViolated(format!(
            "horizon {horizon} is not n * m with n >= 4 for m = {m}"
        )));
    }
    let n = horizon / m;
    let expected: Vec<usize> = std::iter::once(1).chain((2..=n - 2).map(|j| j * m + 1)).collect();
    if design.points() != expected.as_slice() {
        return Err(Error::PreconditionViolated(format!("design is not the optimal design for T = {horizon}, m = {m}")));
    }
    Ok(n)
}

/// Sums over the blocks `[(k+1)m+1, (k+2)m]` for `k = 0..=n-2`.
fn block_sums(values: impl Fn(usize) -> Result<f64>, n: usize, m: usize) -> Result<Vec<f64>> {
    (0..n - 1)
        .map(|k| ((k + 1) * m + 1..=(k + 2) * m).map(&values).sum::<Result<f64>>())
        .collect()
}

fn oracle_blocks(oracle: &PotentialOutcomeOracle, n: usize, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        block_sums(|t| oracle.constant_arm(t, true), n, m)?,
        block_sums(|t| oracle.constant_arm(t, false), n, m)?,
    ))
}

fn closed_form_variance(a: &[f64], b: &[f64]) -> f64 {
    let last = a.len() - 1;
    let mut v = 0.0;
    for k in 0..=last {
        let edge = k == 0 || k == last;
        let sq = if edge { 1.0 } else { 3.0 };
        v += sq * (a[k] * a[k] + b[k] * b[k]) + 2.0 * a[k] * b[k];
        if k < last {
            v += 2.0 * (a[k] + b[k]) * (a[k + 1] + b[k + 1]);
        }
    }
    v
}

/// Exact variance of the average-scale estimator with `p = m`. Uses the
/// closed form under the `n`-replica structure and otherwise falls back to
/// the pairwise computation, or to enumeration when the oracle's order
/// exceeds `m`.
pub fn variance_exact(design: &Design, oracle: &PotentialOutcomeOracle, m: usize) -> Result<f64> {
    if oracle.horizon() != design.horizon() {
        return Err(Error::HorizonMismatch { design: design.horizon(), oracle: oracle.horizon() });
    }
    if oracle.order() <= m {
        if let Ok(n) = replica_count(design, m) {
            let (a, b) = oracle_blocks(oracle, n, m)?;
            let scale = (design.horizon() - m) as f64;
            return Ok(closed_form_variance(&a, &b) / (scale * scale));
        }
        return variance_pairwise(design, oracle, m);
    }
    if design.num_coins() <= DEFAULT_ENUMERATION_CAP {
        return Ok(enumeration_moments(design, oracle, m, DEFAULT_ENUMERATION_CAP)?.1);
    }
    Err(Error::PreconditionViolated(format!(
        "no exact variance for true order {} above m = {m} with {} coins",
        oracle.order(),
        design.num_coins()
    )))
}

/// The two conservative variance bounds `(U1, U2)` on the average scale.
pub fn variance_bounds(design: &Design, oracle: &PotentialOutcomeOracle, m: usize) -> Result<(f64, f64)> {
    let n = replica_count(design, m)?;
    if oracle.order() > m {
        return Err(Error::OrderMismatch { p: m, m: oracle.order() });
    }
    let (a, b) = oracle_blocks(oracle, n, m)?;
    let last = a.len() - 1;
    let (mut u1, mut u2) = (0.0, 0.0);
    for k in 0..=last {
        let edge = k == 0 || k == last;
        let sq = a[k] * a[k] + b[k] * b[k];
        u1 += if edge { 3.0 } else { 6.0 } * sq;
        u2 += if edge { 4.0 } else { 8.0 } * sq;
        if k < last {
            u1 += 2.0 * (a[k] * a[k + 1] + b[k] * b[k + 1]);
        }
    }
    let scale = ((design.horizon() - m) as f64).powi(2);
    Ok((u1 / scale, u2 / scale))
}

/// Unbiased estimates `(sigma2_U1, sigma2_U2)` of the two variance bounds.
///
/// Interior block `k` is only informative when the coins at `km+1` and
/// `(k+1)m+1` agree; each product is reweighted by the inverse probability
/// that every coin it touches agrees.
pub fn variance_estimates(data: &ExperimentData, m: usize) -> Result<(f64, f64)> {
    if data.p != m {
        return Err(Error::PreconditionViolated(format!("data were analyzed with p = {} but m = {m}", data.p)));
    }
    let n = replica_count(&data.design, m)?;
    let y = block_sums(|t| Ok(data.observed[t - 1]), n, m)?;
    let w = &data.path;
    let last = y.len() - 1;
    // a period inside each epoch whose coin block k reads
    let touched = |k: usize| -> Vec<usize> {
        if k == 0 {
            vec![1]
        } else if k == last {
            vec![k * m + 1]
        } else {
            vec![k * m + 1, (k + 1) * m + 1]
        }
    };
    let equal = |ts: &[usize]| ts.iter().all(|&t| w.get(t) == w.get(ts[0]));
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 0..=last {
        let ts = touched(k);
        if k == 0 || k == last {
            s1 += 6.0 * y[k] * y[k];
            s2 += 8.0 * y[k] * y[k];
        } else if equal(&ts) {
            s1 += 24.0 * y[k] * y[k];
            s2 += 32.0 * y[k] * y[k];
        }
        if k < last {
            let mut union: Vec<usize> = touched(k).into_iter().chain(touched(k + 1)).collect();
            union.iter_mut().for_each(|t| *t = data.design.determining_point(*t).unwrap_or(*t));
            union.sort_unstable();
            union.dedup();
            if equal(&union) {
                s1 += 2f64.powi(union.len() as i32 + 1) * y[k] * y[k + 1];
            }
        }
    }
    let scale = ((data.design.horizon() - m) as f64).powi(2);
    Ok((s1 / scale, s2 / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcomes::{lag_p_estimand, worst_case_outcomes, LinearCarryoverModel, Sign};
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn d(horizon: usize, points: &[usize]) -> Design {
        Design::new(horizon, points.to_vec()).unwrap()
    }

    fn random_oracle(horizon: usize, order: usize, seed: u64) -> PotentialOutcomeOracle {
        let mut rng = stream_rng(seed, 1);
        PotentialOutcomeOracle::from_fn(horizon, order, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn propensities() {
        assert_eq!(propensity(&d(4, &[1, 3]), 2, 1, Arm::Ones).unwrap(), 0.5);
        assert_eq!(propensity(&d(4, &[1, 3]), 3, 1, Arm::Ones).unwrap(), 0.25);
        assert_eq!(propensity(&d(4, &[1, 2, 3, 4]), 2, 1, Arm::Zeros).unwrap(), 0.25);
        assert!(matches!(propensity(&d(4, &[1, 3]), 1, 1, Arm::Ones), Err(Error::WindowUnderflow { .. })));
    }

    #[test]
    fn worked_estimates() {
        let y = vec![0.3, 1.7, -0.4, 2.9];
        let path: AssignmentPath = "1100".parse().unwrap();
        let every = ExperimentData::new(d(4, &[1, 2, 3, 4]), 1, path.clone(), y.clone()).unwrap();
        assert!((ht_estimator(&every).unwrap() - (4.0 * 1.7 - 4.0 * 2.9) / 3.0).abs() < 1e-12);
        let coarse = ExperimentData::new(d(4, &[1, 3]), 1, path, y).unwrap();
        assert!((ht_estimator(&coarse).unwrap() - (2.0 * 1.7 - 2.0 * 2.9) / 3.0).abs() < 1e-12);
        assert!((ht_estimator_total(&coarse).unwrap() - (2.0 * 1.7 - 2.0 * 2.9)).abs() < 1e-12);
        let zero = ExperimentData::new(d(4, &[1, 3]), 1, "0011".parse().unwrap(), vec![0.0; 4]).unwrap();
        assert_eq!(ht_estimator(&zero).unwrap(), 0.0);
    }

    #[test]
    fn invalid_paths_are_rejected() {
        let err = ExperimentData::new(d(4, &[1, 3]), 1, "1000".parse().unwrap(), vec![0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::InvalidPath));
        let err = ExperimentData::new(d(4, &[1, 3]), 1, "1100".parse().unwrap(), vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let data = ExperimentData::new(d(4, &[1, 3]), 1, "1100".parse().unwrap(), vec![0.1, 1.0 / 3.0, -2.0, 1e6]).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("period,assignment,outcome\n1,1,0.1\n2,1,0.333333333333\n"));
        let back = ExperimentData::read_csv(buf.as_slice(), d(4, &[1, 3]), 1).unwrap();
        assert_eq!(back.path(), data.path());
        assert!((back.observed()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(ExperimentData::read_csv("a,b,c\n".as_bytes(), d(4, &[1, 3]), 1).is_err());
    }

    #[test]
    fn kernel_matches_direct_estimate() {
        let design = d(12, &[1, 3, 4, 8, 11]);
        let oracle = random_oracle(12, 2, 3);
        for p in 0..4 {
            let kernel = HtKernel::new(&design, p).unwrap();
            for outcome in design.outcomes(64).unwrap() {
                let path = design.expand(&outcome).unwrap();
                let y = realize_observed(&oracle, &path).unwrap();
                let sums = kernel.group_sums(&y);
                let fast = kernel.estimate(&sums, &sums, &outcome.coins);
                let slow = estimate_on_path(&design, p, &path, &y).unwrap();
                assert!((fast - slow).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unbiased_when_order_is_covered() {
        for seed in 0..20 {
            let oracle = random_oracle(10, 2, seed);
            let design = d(10, &[1, 2, 5, 6, 9]);
            for p in 2..4 {
                let (mean, var) = enumeration_moments(&design, &oracle, p, 64).unwrap();
                assert!((mean - lag_p_estimand(&oracle, p).unwrap()).abs() < 1e-12);
                assert!((var - variance_pairwise(&design, &oracle, p).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_variance_matches_enumeration() {
        for seed in 0..50 {
            let oracle = random_oracle(8, 2, seed);
            let design = d(8, &[1, 5]);
            let exact = variance_exact(&design, &oracle, 2).unwrap();
            let (_, enumerated) = enumeration_moments(&design, &oracle, 2, 64).unwrap();
            assert!((exact - enumerated).abs() < 1e-12);
        }
        let oracle = random_oracle(15, 3, 7);
        let design = d(15, &[1, 7, 10]);
        let exact = variance_exact(&design, &oracle, 3).unwrap();
        assert!((exact - enumeration_moments(&design, &oracle, 3, 64).unwrap().1).abs() < 1e-12);
        let worst = worst_case_outcomes(8, 2, 1.0, Sign::Plus).unwrap();
        assert!((variance_exact(&d(8, &[1, 5]), &worst, 2).unwrap() - 128.0 / 36.0).abs() < 1e-12);
    }

    #[test]
    fn variance_bounds_order_and_estimator_unbiasedness() {
        for (horizon, m, points) in [(8usize, 2usize, vec![1usize, 5]), (10, 2, vec![1, 5, 7]), (12, 3, vec![1, 7]), (12, 2, vec![1, 5, 7, 9])] {
            let design = Design::new(horizon, points).unwrap();
            for seed in 0..40 {
                let oracle = random_oracle(horizon, m, seed);
                let var = variance_exact(&design, &oracle, m).unwrap();
                let (u1, u2) = variance_bounds(&design, &oracle, m).unwrap();
                assert!(var <= u1 + 1e-12 && u1 <= u2 + 1e-12);
                let (mut e1, mut e2) = (0.0, 0.0);
                for (path, prob) in design.enumerate_paths().unwrap() {
                    let data = ExperimentData::simulate(design.clone(), m, &oracle, path).unwrap();
                    let (s1, s2) = variance_estimates(&data, m).unwrap();
                    e1 += prob * s1;
                    e2 += prob * s2;
                }
                assert!((e1 - u1).abs() < 1e-12, "U1 {e1} vs {u1}");
                assert!((e2 - u2).abs() < 1e-12, "U2 {e2} vs {u2}");
            }
        }
    }

    #[test]
    fn replica_preconditions() {
        assert_eq!(replica_count(&d(12, &[1, 5, 7, 9]), 2).unwrap(), 6);
        assert!(replica_count(&d(12, &[1, 5, 7]), 2).is_err());
        assert!(replica_count(&d(6, &[1, 5]), 2).is_err());
        // fallback path for non-replica designs
        let oracle = random_oracle(9, 1, 2);
        let design = d(9, &[1, 3, 4, 6, 8]);
        assert!((variance_exact(&design, &oracle, 1).unwrap() - enumeration_moments(&design, &oracle, 1, 64).unwrap().1).abs() < 1e-12);
    }

    #[test]
    fn zero_outcomes_have_zero_variance() {
        let oracle = PotentialOutcomeOracle::from_fn(8, 2, |_, _| 0.0);
        let design = d(8, &[1, 5]);
        assert_eq!(variance_exact(&design, &oracle, 2).unwrap(), 0.0);
        assert_eq!(variance_bounds(&design, &oracle, 2).unwrap(), (0.0, 0.0));
        let data = ExperimentData::simulate(design, 2, &oracle, "11110000".parse().unwrap()).unwrap();
        assert_eq!(variance_estimates(&data, 2).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn pairwise_variance_handles_long_designs() {
        let oracle = LinearCarryoverModel::standard(vec![1.0, 1.0, 1.0], 5).oracle(120).unwrap();
        let design = Design::fixed_epochs(120, 3).unwrap();
        let v = variance_pairwise(&design, &oracle, 2).unwrap();
        assert!(v > 0.0 && v.is_finite());
    }

    proptest! {
        #[test]
        fn format_sig_keeps_twelve_digits(x in -1e9f64..1e9) {
            let back: f64 = format_sig(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-11 * x.abs().max(1e-300));
        }
    }
}
