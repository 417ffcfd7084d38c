//! Risk of a design and the minimax-optimal design.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Design, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::estimation::{enumerate_estimates, HtKernel};
use crate::outcomes::{lag_p_estimand, misspecified_estimand, realize_observed, PotentialOutcomeOracle};
use crate::rng::stream_rng;

/// Brute-force search visits `2^(T-1)` subsets.
pub const BRUTE_FORCE_MAX_HORIZON: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    ClosedForm,
    Enumeration,
    MonteCarlo,
}

/// Expected squared error of the average-scale estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub design: Design,
    pub method: RiskMethod,
    pub p: usize,
    pub risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RiskReport {
    fn exact(design: &Design, method: RiskMethod, p: usize, risk: f64) -> Self {
        RiskReport { design: design.clone(), method, p, risk, std_error: None, replications: None, seed: None }
    }

    /// Risk of the total-effect estimator, `risk * (T - p)^2`.
    pub fn total_risk(&self) -> f64 {
        self.risk * ((self.design.horizon() - self.p) as f64).powi(2)
    }
}

/// A design described by its gaps: `a1 = t_1 - t_0`, `a2 = t_{K+1} - t_K`
/// and the interior gaps `t_{k+1} - t_k` for `k = 1..K-1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GapProfile {
    pub a1: usize,
    pub a2: usize,
    pub interior: Vec<usize>,
}

impl GapProfile {
    /// Gaps of a design with `K >= 1`; `None` for the single-coin design.
    pub fn of(design: &Design) -> Option<Self> {
        let k = design.k();
        if k == 0 {
            return None;
        }
        let pts = design.points();
        Some(GapProfile {
            a1: pts[1] - pts[0],
            a2: design.horizon() + 1 - pts[k],
            interior: pts[1..].windows(2).map(|w| w[1] - w[0]).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.interior.len() + 1
    }

    pub fn horizon(&self) -> usize {
        self.a1 + self.a2 + self.interior.iter().sum::<usize>()
    }

    pub fn to_design(&self) -> Result<Design> {
        let mut points = vec![1, 1 + self.a1];
        for g in &self.interior {
            points.push(points.last().unwrap() + g);
        }
        Design::new(self.horizon(), points)
    }
}

/// The minimax objective: `4 sum g^2 + 8m(t_K - t_1) + 4m^2 K - 4m^2 +
/// 4 sum_interior [(m - g)^+]^2` over all gaps `g` (boundary ones included in
/// the first sum). Exact in integer arithmetic.
pub fn subset_selection_objective(design: &Design, m: usize) -> f64 {
    let m = m as i128;
    let horizon = design.horizon() as i128;
    let Some(gaps) = GapProfile::of(design) else {
        return (4 * horizon * horizon - 4 * m * m) as f64;
    };
    let k = gaps.k() as i128;
    let sq = |g: usize| (g as i128) * (g as i128);
    let span: i128 = gaps.interior.iter().map(|&g| g as i128).sum();
    let short: i128 = gaps.interior.iter().map(|&g| (m - g as i128).max(0).pow(2)).sum();
    let total = 4 * (sq(gaps.a1) + sq(gaps.a2) + gaps.interior.iter().map(|&g| sq(g)).sum::<i128>())
        + 8 * m * span
        + 4 * m * m * k
        - 4 * m * m
        + 4 * short;
    total as f64
}

/// Worst-case risk `objective * B^2 / (T - m)^2` of a persistent design.
pub fn worst_case_risk_closed_form(design: &Design, m: usize, bound: f64) -> Result<RiskReport> {
    if !(bound > 0.0) {
        return Err(Error::NonpositiveBound(bound));
    }
    if !design.is_persistent(m) {
        return Err(Error::NotPersistent { m });
    }
    let scale = ((design.horizon() - m) as f64).powi(2);
    let risk = subset_selection_objective(design, m) * bound * bound / scale;
    Ok(RiskReport::exact(design, RiskMethod::ClosedForm, m, risk))
}

/// Exact risk by enumerating all `2^(K+1)` paths.
pub fn risk_enumeration(design: &Design, oracle: &PotentialOutcomeOracle, p: usize) -> Result<RiskReport> {
    risk_enumeration_capped(design, oracle, p, DEFAULT_ENUMERATION_CAP)
}

pub fn risk_enumeration_capped(
    design: &Design,
    oracle: &PotentialOutcomeOracle,
    p: usize,
    cap: usize,
) -> Result<RiskReport> {
    if oracle.order() > p {
        return Err(Error::OrderMismatch { p, m: oracle.order() });
    }
    let tau = lag_p_estimand(oracle, p)?;
    let risk = enumerate_estimates(design, oracle, p, cap)?
        .iter()
        .map(|(_, prob, est)| prob * (est - tau).powi(2))
        .sum();
    Ok(RiskReport::exact(design, RiskMethod::Enumeration, p, risk))
}

/// Squared error of each replicate: replicate `i` draws its path from
/// stream `i` of `seed`. When the oracle's order exceeds `p` the loss is
/// taken against the misspecified estimand of that replicate's path.
pub fn squared_losses(
    design: &Design,
    oracle: &PotentialOutcomeOracle,
    p: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if oracle.horizon() != design.horizon() {
        return Err(Error::HorizonMismatch { design: design.horizon(), oracle: oracle.horizon() });
    }
    let kernel = HtKernel::new(design, p)?;
    if oracle.order() <= p {
        let tau = lag_p_estimand(oracle, p)?;
        let horizon = design.horizon();
        let arm = |treated: bool| -> Result<Vec<f64>> {
            let mut y = vec![0.0; horizon];
            for t in p + 1..=horizon {
                y[t - 1] = oracle.constant_arm(t, treated)?;
            }
            Ok(kernel.group_sums(&y))
        };
        let (ones, zeros) = (arm(true)?, arm(false)?);
        Ok((0..reps)
            .into_par_iter()
            .map(|i| {
                let coins = design.sample_coins(&mut stream_rng(seed, i as u64));
                (kernel.estimate(&ones, &zeros, &coins.coins) - tau).powi(2)
            })
            .collect())
    } else {
        (0..reps)
            .into_par_iter()
            .map(|i| {
                let coins = design.sample_coins(&mut stream_rng(seed, i as u64));
                let path = design.expand(&coins)?;
                let sums = kernel.group_sums(&realize_observed(oracle, &path)?);
                let tau = misspecified_estimand(oracle, p, &path)?;
                Ok((kernel.estimate(&sums, &sums, &coins.coins) - tau).powi(2))
            })
            .collect()
    }
}

/// Monte Carlo risk with its standard error. Reproducible for a fixed seed
/// regardless of thread count.
pub fn risk_monte_carlo(
    design: &Design,
    oracle: &PotentialOutcomeOracle,
    p: usize,
    reps: usize,
    seed: u64,
) -> Result<RiskReport> {
    if reps == 0 {
        return Err(Error::ZeroReplications);
    }
    let losses = squared_losses(design, oracle, p, reps, seed)?;
    let n = reps as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = if reps > 1 { losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(RiskReport {
        design: design.clone(),
        method: RiskMethod::MonteCarlo,
        p,
        risk: mean,
        std_error: Some((var / n).sqrt()),
        replications: Some(reps),
        seed: Some(seed),
    })
}

fn check_horizon(horizon: usize, m: usize) -> Result<()> {
    let min = 2 * m + 2;
    if horizon < min {
        return Err(Error::HorizonTooShort { horizon, m, min });
    }
    Ok(())
}

fn better(candidate: (f64, &[usize]), best: &Option<(f64, Design)>) -> bool {
    match best {
        None => true,
        Some((obj, design)) => match candidate.0.partial_cmp(obj) {
            Some(Ordering::Less) => true,
            Some(Ordering::Equal) => candidate.1 < design.points(),
            _ => false,
        },
    }
}

/// Lexicographically smallest feasible order of `small` gaps of size `b` and
/// `large` gaps of size `b + 1`. Smaller gaps go first unless two of them
/// would sit next to each other with `2b < m`.
fn arrange_interior(b: usize, small: usize, large: usize, m: usize) -> Vec<usize> {
    if 2 * b >= m {
        return std::iter::repeat_n(b, small).chain(std::iter::repeat_n(b + 1, large)).collect();
    }
    // at most this many small gaps fit in `len` slots without touching
    let room = |len: usize, after_small: bool| if after_small { len / 2 } else { len.div_ceil(2) };
    let (mut small, mut large) = (small, large);
    let mut out = Vec::with_capacity(small + large);
    let mut prev_small = false;
    while small + large > 0 {
        let left = small + large - 1;
        if small > 0 && !prev_small && small - 1 <= room(left, true) {
            out.push(b);
            small -= 1;
            prev_small = true;
        } else {
            out.push(b + 1);
            large = large.saturating_sub(1);
            prev_small = false;
        }
    }
    out
}

/// Minimizer of the objective over persistent designs, by scanning the
/// number of points and the boundary gap sum with balanced gaps.
pub fn optimal_design(horizon: usize, m: usize) -> Result<Design> {
    check_horizon(horizon, m)?;
    let m_i = m as i128;
    let mut best: Option<(f64, Design)> = None;
    for k in 1..horizon {
        for boundary in 2 * (m + 1)..=horizon {
            let a1 = boundary / 2;
            let a2 = boundary - a1;
            let rest = horizon - boundary;
            let slots = k - 1;
            let (b, large) = match slots {
                0 if rest == 0 => (0, 0),
                0 => continue,
                _ if rest < slots => continue,
                _ => (rest / slots, rest % slots),
            };
            let small = slots - large;
            if slots >= 2 {
                let ok = if 2 * b >= m {
                    true
                } else if 2 * b + 1 >= m {
                    small <= large + 1
                } else {
                    false
                };
                if !ok {
                    continue;
                }
            }
            let sq = |g: usize| (g as i128) * (g as i128);
            let short = |g: usize| (m_i - g as i128).max(0).pow(2);
            let objective = 4 * (sq(a1) + sq(a2) + small as i128 * sq(b) + large as i128 * sq(b + 1))
                + 8 * m_i * rest as i128
                + 4 * m_i * m_i * k as i128
                - 4 * m_i * m_i
                + 4 * (small as i128 * short(b) + large as i128 * short(b + 1));
            let objective = objective as f64;
            if let Some((obj, _)) = &best {
                if objective > *obj {
                    continue;
                }
            }
            let interior = if slots == 0 { Vec::new() } else { arrange_interior(b, small, large, m) };
            let design = GapProfile { a1, a2, interior }.to_design()?;
            if !design.is_persistent(m) {
                continue;
            }
            debug_assert_eq!(objective, subset_selection_objective(&design, m));
            if better((objective, design.points()), &best) {
                best = Some((objective, design));
            }
        }
    }
    best.map(|(_, d)| d).ok_or(Error::HorizonTooShort { horizon, m, min: 2 * m + 2 })
}

/// Exhaustive minimizer over every persistent design, for `T <= 14`.
pub fn optimal_design_bruteforce(horizon: usize, m: usize) -> Result<Design> {
    if horizon > BRUTE_FORCE_MAX_HORIZON {
        return Err(Error::HorizonTooLarge { horizon, max: BRUTE_FORCE_MAX_HORIZON });
    }
    check_horizon(horizon, m)?;
    let mut best: Option<(f64, Design)> = None;
    for mask in 0u32..1 << (horizon - 1) {
        let points: Vec<usize> =
            std::iter::once(1).chain((0..horizon - 1).filter(|i| mask >> i & 1 == 1).map(|i| i + 2)).collect();
        let design = Design::new(horizon, points)?;
        if !design.is_persistent(m) {
            continue;
        }
        let objective = subset_selection_objective(&design, m);
        if better((objective, design.points()), &best) {
            best = Some((objective, design));
        }
    }
    best.map(|(_, d)| d).ok_or(Error::HorizonTooShort { horizon, m, min: 2 * m + 2 })
}
