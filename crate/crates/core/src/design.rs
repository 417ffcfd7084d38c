//! Regular switchback designs and the assignment paths they induce.
//!
//! A design is a horizon `T` plus a strictly increasing set of randomization
//! points `t_0 = 1 < t_1 < ... < t_K <= T`. A fair coin is flipped at each
//! point and its value is held until the next point, so the design induces a
//! uniform distribution over `2^(K+1)` epoch-constant assignment paths.
//!
//! Periods are 1-indexed everywhere in this crate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, MAIN_STREAM};

/// Default limit on the number of coins an exhaustive enumeration may flip.
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DesignRepr", into = "DesignRepr")]
pub struct Design {
    horizon: usize,
    points: Vec<usize>,
    /// Coin index governing each period, `epoch_of[t - 1]`.
    epoch_of: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DesignRepr {
    horizon: usize,
    points: Vec<usize>,
}

impl TryFrom<DesignRepr> for Design {
    type Error = Error;

    fn try_from(repr: DesignRepr) -> Result<Self> {
        Design::new(repr.horizon, repr.points)
    }
}

impl From<Design> for DesignRepr {
    fn from(design: Design) -> Self {
        DesignRepr { horizon: design.horizon, points: design.points }
    }
}

/// Validates a horizon and point set and builds the design.
pub fn validate_design(horizon: usize, points: &[usize]) -> Result<Design> {
    Design::new(horizon, points.to_vec())
}

impl Design {
    pub fn new(horizon: usize, points: Vec<usize>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::ZeroHorizon);
        }
        let first = *points.first().ok_or(Error::EmptyPoints)?;
        if first != 1 {
            return Err(Error::FirstPointNotOne(first));
        }
        for pair in points.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::NotStrictlyIncreasing { prev: pair[0], next: pair[1] });
            }
        }
        if let Some(&point) = points.iter().find(|&&p| p > horizon) {
            return Err(Error::OutOfRange { point, horizon });
        }

        let mut epoch_of = Vec::with_capacity(horizon);
        let mut k = 0;
        for t in 1..=horizon {
            if k + 1 < points.len() && points[k + 1] == t {
                k += 1;
            }
            epoch_of.push(k);
        }
        Ok(Design { horizon, points, epoch_of })
    }

    /// `{1, 2, ..., T}`: a fresh coin every period.
    pub fn every_period(horizon: usize) -> Result<Self> {
        Design::new(horizon, (1..=horizon).collect())
    }

    /// Epochs of equal length `len` starting at period 1.
    pub fn fixed_epochs(horizon: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::PreconditionViolated("epoch length must be positive".into()));
        }
        Design::new(horizon, (1..=horizon).step_by(len).collect())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Number of coins flipped, `K + 1`.
    pub fn num_coins(&self) -> usize {
        self.points.len()
    }

    /// `K`, the index of the last randomization point.
    pub fn k(&self) -> usize {
        self.points.len() - 1
    }

    /// Point `t_k` for `k` in `0..=K+1`, with `t_{K+1} = T + 1`.
    pub fn point(&self, k: usize) -> usize {
        if k == self.points.len() {
            self.horizon + 1
        } else {
            self.points[k]
        }
    }

    fn check_period(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::PeriodOutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Index of the coin that fixes the assignment at period `t`.
    pub fn coin_index(&self, t: usize) -> Result<usize> {
        self.check_period(t)?;
        Ok(self.epoch_of[t - 1])
    }

    /// Latest randomization point at or before `t`.
    pub fn determining_point(&self, t: usize) -> Result<usize> {
        Ok(self.points[self.coin_index(t)?])
    }

    /// Inclusive range of coin indices that determine `w_{t-p..=t}`.
    ///
    /// Windows always cover a contiguous run of epochs.
    pub fn window_coins(&self, t: usize, p: usize) -> Result<(usize, usize)> {
        self.check_period(t)?;
        if p >= t {
            return Err(Error::WindowUnderflow { t, p });
        }
        Ok((self.epoch_of[t - p - 1], self.epoch_of[t - 1]))
    }

    /// Determining randomization points of the periods `t-p..=t`, ascending.
    pub fn determining_window(&self, t: usize, p: usize) -> Result<Vec<usize>> {
        let (lo, hi) = self.window_coins(t, p)?;
        Ok(self.points[lo..=hi].to_vec())
    }

    /// Randomization points shared by the windows ending at `t` and `t2`.
    pub fn overlap_points(&self, t: usize, t2: usize, p: usize) -> Result<Vec<usize>> {
        let (a_lo, a_hi) = self.window_coins(t, p)?;
        let (b_lo, b_hi) = self.window_coins(t2, p)?;
        let lo = a_lo.max(b_lo);
        let hi = a_hi.min(b_hi);
        if lo > hi {
            return Ok(Vec::new());
        }
        Ok(self.points[lo..=hi].to_vec())
    }

    /// Checks `t_1 >= m + 2`, `t_K <= T - m` and `t_{k+1} - t_{k-1} >= m`
    /// for `k = 1..=K` (with `t_{K+1} = T + 1`).
    ///
    /// Single-coin designs have no `t_1` and are never persistent.
    pub fn is_persistent(&self, m: usize) -> bool {
        let k = self.k();
        if k == 0 {
            return false;
        }
        if self.points[1] < m + 2 || self.points[k] + m > self.horizon {
            return false;
        }
        (1..=k).all(|j| self.point(j + 1) - self.point(j - 1) >= m)
    }

    /// Expands one coin per randomization point into the full path.
    pub fn expand(&self, outcome: &RandomizationOutcome) -> Result<AssignmentPath> {
        if outcome.coins.len() != self.num_coins() {
            return Err(Error::LengthMismatch { expected: self.num_coins(), got: outcome.coins.len() });
        }
        Ok(self.expand_coins(&outcome.coins))
    }

    pub(crate) fn expand_coins(&self, coins: &[bool]) -> AssignmentPath {
        AssignmentPath(self.epoch_of.iter().map(|&k| coins[k]).collect())
    }

    /// Recovers the coin values behind a path, or `None` when the path is not
    /// constant on every epoch.
    pub fn coins_of(&self, path: &AssignmentPath) -> Result<Option<RandomizationOutcome>> {
        self.check_length(path)?;
        let w = path.as_slice();
        let coins: Vec<bool> = self.points.iter().map(|&p| w[p - 1]).collect();
        let constant = w.iter().zip(&self.epoch_of).all(|(&wt, &k)| wt == coins[k]);
        Ok(constant.then_some(RandomizationOutcome { coins }))
    }

    pub fn check_length(&self, path: &AssignmentPath) -> Result<()> {
        if path.len() != self.horizon {
            return Err(Error::LengthMismatch { expected: self.horizon, got: path.len() });
        }
        Ok(())
    }

    /// Probability of `path` under the design: `2^-(K+1)` or 0.
    pub fn path_probability(&self, path: &AssignmentPath) -> Result<f64> {
        Ok(match self.coins_of(path)? {
            Some(_) => 0.5f64.powi(self.num_coins() as i32),
            None => 0.0,
        })
    }

    /// Every coin outcome in lexicographic order (coin 0 most significant).
    pub fn outcomes(&self, cap: usize) -> Result<impl Iterator<Item = RandomizationOutcome>> {
        let n = self.num_coins();
        if n > cap || n >= 64 {
            return Err(Error::TooManyCoins { coins: n, cap });
        }
        Ok((0u64..1u64 << n).map(move |bits| RandomizationOutcome {
            coins: (0..n).map(|i| (bits >> (n - 1 - i)) & 1 == 1).collect(),
        }))
    }

    /// All positive-probability paths with their probabilities.
    pub fn enumerate_paths(&self) -> Result<Vec<(AssignmentPath, f64)>> {
        self.enumerate_paths_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn enumerate_paths_capped(&self, cap: usize) -> Result<Vec<(AssignmentPath, f64)>> {
        let prob = 0.5f64.powi(self.num_coins() as i32);
        Ok(self.outcomes(cap)?.map(|o| (self.expand_coins(&o.coins), prob)).collect())
    }

    pub fn sample_coins<R: Rng + ?Sized>(&self, rng: &mut R) -> RandomizationOutcome {
        RandomizationOutcome { coins: (0..self.num_coins()).map(|_| rng.random()).collect() }
    }

    pub fn sample_path_with<R: Rng + ?Sized>(&self, rng: &mut R) -> AssignmentPath {
        let outcome = self.sample_coins(rng);
        self.expand_coins(&outcome.coins)
    }

    /// Deterministic draw keyed by `seed`.
    pub fn sample_path(&self, seed: u64) -> AssignmentPath {
        self.sample_path_with(&mut stream_rng(seed, MAIN_STREAM))
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T={} {{", self.horizon)?;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}

/// A realized binary assignment vector `w_1..w_T`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AssignmentPath(Vec<bool>);

impl AssignmentPath {
    pub fn new(assignments: Vec<bool>) -> Self {
        AssignmentPath(assignments)
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        AssignmentPath(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// `w_t` for 1-indexed `t`.
    pub fn get(&self, t: usize) -> bool {
        self.0[t - 1]
    }

    /// `w_{t-p..=t}`.
    pub fn window(&self, t: usize, p: usize) -> &[bool] {
        &self.0[t - 1 - p..t]
    }
}

impl fmt::Display for AssignmentPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&w| if w { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl FromStr for AssignmentPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::BadPathChar(other)),
            })
            .collect::<Result<Vec<_>>>()
            .map(AssignmentPath)
    }
}

impl TryFrom<String> for AssignmentPath {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AssignmentPath> for String {
    fn from(path: AssignmentPath) -> Self {
        path.to_string()
    }
}

/// One coin value per randomization point.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RandomizationOutcome {
    pub coins: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(horizon: usize, points: &[usize]) -> Design {
        validate_design(horizon, points).unwrap()
    }

    fn path(s: &str) -> AssignmentPath {
        s.parse().unwrap()
    }

    #[test]
    fn validation() {
        assert_eq!(d(4, &[1, 3]).k(), 1);
        assert_eq!(d(12, &[1, 5, 7, 9]).k(), 3);
        assert!(matches!(validate_design(4, &[2, 3]), Err(Error::FirstPointNotOne(2))));
        assert!(matches!(validate_design(4, &[]), Err(Error::EmptyPoints)));
        assert!(matches!(validate_design(4, &[1, 5]), Err(Error::OutOfRange { point: 5, .. })));
        assert!(matches!(validate_design(4, &[1, 3, 3]), Err(Error::NotStrictlyIncreasing { .. })));
        assert!(matches!(validate_design(0, &[1]), Err(Error::ZeroHorizon)));
    }

    #[test]
    fn path_probabilities() {
        let two = d(4, &[1, 3]);
        assert_eq!(two.path_probability(&path("1100")).unwrap(), 0.25);
        assert_eq!(two.path_probability(&path("1000")).unwrap(), 0.0);
        let dense = Design::every_period(4).unwrap();
        assert_eq!(dense.path_probability(&path("1100")).unwrap(), 1.0 / 16.0);
        assert!(matches!(two.path_probability(&path("110")), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn enumeration() {
        let paths: Vec<String> =
            d(4, &[1, 3]).enumerate_paths().unwrap().iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(paths, ["0000", "0011", "1100", "1111"]);
        let single: Vec<String> =
            d(3, &[1]).enumerate_paths().unwrap().iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(single, ["000", "111"]);
        assert_eq!(Design::every_period(4).unwrap().enumerate_paths().unwrap().len(), 16);
        let big = Design::every_period(30).unwrap();
        assert!(matches!(big.enumerate_paths(), Err(Error::TooManyCoins { coins: 30, cap: 24 })));
        assert_eq!(d(4, &[1, 3]).enumerate_paths_capped(2).unwrap().len(), 4);
    }

    #[test]
    fn sampling_is_deterministic() {
        let design = d(12, &[1, 5, 7, 9]);
        assert_eq!(design.sample_path(42), design.sample_path(42));
        let single = d(5, &[1]);
        for seed in 0..20 {
            let w = single.sample_path(seed);
            assert!(w.as_slice().iter().all(|&x| x == w.get(1)));
        }
    }

    #[test]
    fn sample_frequencies_match_probabilities() {
        let design = d(4, &[1, 3]);
        let mut rng = stream_rng(2024, 0);
        let n = 100_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(design.sample_path_with(&mut rng).to_string()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 4);
        for (path, prob) in design.enumerate_paths().unwrap() {
            let freq = counts[&path.to_string()] as f64 / n as f64;
            assert!((freq - prob).abs() < 0.01, "{path}: {freq}");
            let se = (prob * (1.0 - prob) / n as f64).sqrt();
            assert!((freq - prob).abs() < 3.0 * se + 1e-12, "{path}: {freq}");
        }
    }

    #[test]
    fn determining_points() {
        let design = d(4, &[1, 3]);
        let f: Vec<usize> = (1..=4).map(|t| design.determining_point(t).unwrap()).collect();
        assert_eq!(f, [1, 1, 3, 3]);
        assert_eq!(d(1, &[1]).determining_point(1).unwrap(), 1);
        assert!(matches!(design.determining_point(5), Err(Error::PeriodOutOfRange { .. })));
    }

    #[test]
    fn windows_and_overlaps() {
        let design = d(4, &[1, 3]);
        assert_eq!(design.determining_window(4, 1).unwrap(), [3]);
        assert_eq!(design.determining_window(3, 1).unwrap(), [1, 3]);
        assert_eq!(d(3, &[1]).determining_window(3, 2).unwrap(), [1]);
        assert!(matches!(design.determining_window(1, 1), Err(Error::WindowUnderflow { .. })));
        assert_eq!(design.overlap_points(3, 4, 1).unwrap(), [3]);
        let dense = Design::every_period(10).unwrap();
        assert!(dense.overlap_points(3, 9, 1).unwrap().is_empty());
        assert_eq!(dense.overlap_points(6, 6, 2).unwrap(), dense.determining_window(6, 2).unwrap());
    }

    #[test]
    fn persistence() {
        assert!(d(12, &[1, 5, 7, 9]).is_persistent(2));
        let dense = Design::every_period(12).unwrap();
        assert!(!dense.is_persistent(2));
        assert!(dense.is_persistent(0));
        assert!(!d(12, &[1]).is_persistent(0));
        // t_K too late
        assert!(!d(12, &[1, 5, 7, 11]).is_persistent(2));
    }

    #[test]
    fn serialization() {
        let design = d(12, &[1, 5, 7, 9]);
        let json = serde_json::to_string(&design).unwrap();
        assert_eq!(json, r#"{"horizon":12,"points":[1,5,7,9]}"#);
        assert_eq!(serde_json::from_str::<Design>(&json).unwrap(), design);
        assert!(serde_json::from_str::<Design>(r#"{"horizon":4,"points":[2]}"#).is_err());
        let w = path("0110");
        assert_eq!(serde_json::to_string(&w).unwrap(), "\"0110\"");
        assert!("01a".parse::<AssignmentPath>().is_err());
    }

    fn arb_design() -> impl Strategy<Value = Design> {
        (1usize..=14).prop_flat_map(|horizon| {
            proptest::collection::vec(any::<bool>(), horizon - 1).prop_map(move |mask| {
                let mut points = vec![1];
                points.extend(mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i + 2));
                Design::new(horizon, points).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn enumeration_is_a_distribution(design in arb_design()) {
            let paths = design.enumerate_paths().unwrap();
            prop_assert_eq!(paths.len(), 1usize << design.num_coins());
            let total: f64 = paths.iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (w, p) in &paths {
                prop_assert_eq!(design.path_probability(w).unwrap(), *p);
            }
        }

        #[test]
        fn expansion_follows_determining_point(design in arb_design(), seed in any::<u64>()) {
            let mut rng = stream_rng(seed, 0);
            let outcome = design.sample_coins(&mut rng);
            let w = design.expand(&outcome).unwrap();
            for t in 1..=design.horizon() {
                let f = design.determining_point(t).unwrap();
                let k = design.points().iter().position(|&p| p == f).unwrap();
                prop_assert_eq!(w.get(t), outcome.coins[k]);
            }
        }

        #[test]
        fn windows_are_set_algebra(design in arb_design(), p in 0usize..4, a in 1usize..15, b in 1usize..15) {
            let horizon = design.horizon();
            prop_assume!(a <= horizon && b <= horizon && a > p && b > p);
            let wa = design.determining_window(a, p).unwrap();
            let mut expected: Vec<usize> =
                (a - p..=a).map(|i| design.determining_point(i).unwrap()).collect();
            expected.dedup();
            prop_assert_eq!(&wa, &expected);
            let wb = design.determining_window(b, p).unwrap();
            let inter: Vec<usize> = wa.iter().copied().filter(|x| wb.contains(x)).collect();
            prop_assert_eq!(design.overlap_points(a, b, p).unwrap(), inter);
        }
    }
}
