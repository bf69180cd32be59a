//! Joint demand models for the two trading periods.
//!
//! Everything downstream sees demand as a bivariate distribution of
//! `(D1, D2)`, net demand in MW for periods 1 and 2. Two families are
//! supported: a bivariate normal given by its moments, and an empirical
//! distribution backed by observed pairs. The real-time settlement happens
//! after `D1` is known, so both families expose the conditional moments of
//! `D2` given `D1 = d1`; that conditional structure is what couples the two
//! settlement stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// First and second moments of the joint demand distribution.
///
/// `rho` is the Pearson correlation of `(D1, D2)`. `rho_s` is the
/// *sequential* correlation: the share of period-2 dispersion that is
/// resolved by observing period 1, defined through
/// `Var(E[D2 | D1]) = rho_s^2 * sigma2^2` and
/// `E[Var(D2 | D1)] = (1 - rho_s^2) * sigma2^2`.
///
/// `rho_s` is nonnegative by construction; for a bivariate normal it equals
/// `|rho|`. Any realizable distribution satisfies `|rho| <= rho_s`
/// (Cauchy-Schwarz), but moments *estimated* from data with binned
/// conditioning can violate that slightly — construction does not reject the
/// combination, and downstream consumers guard against it instead.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandMoments {
    /// Mean of period-1 demand (MW).
    pub mu1: f64,
    /// Mean of period-2 demand (MW).
    pub mu2: f64,
    /// Standard deviation of period-1 demand (MW).
    pub sigma1: f64,
    /// Standard deviation of period-2 demand (MW).
    pub sigma2: f64,
    /// Pearson correlation of (D1, D2), in [-1, 1].
    pub rho: f64,
    /// Sequential correlation, in [0, 1].
    pub rho_s: f64,
}

impl DemandMoments {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64, rho_s: f64) -> Result<Self> {
        for (name, v) in [
            ("mu1", mu1),
            ("mu2", mu2),
            ("sigma1", sigma1),
            ("sigma2", sigma2),
            ("rho", rho),
            ("rho_s", rho_s),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if sigma1 < 0.0 || sigma2 < 0.0 {
            return Err(Error::invalid(format!(
                "standard deviations must be nonnegative, got sigma1={sigma1}, sigma2={sigma2}"
            )));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!(
                "rho must lie in [-1, 1], got {rho}"
            )));
        }
        if !(0.0..=1.0).contains(&rho_s) {
            return Err(Error::invalid(format!(
                "rho_s must lie in [0, 1], got {rho_s}"
            )));
        }
        // Degenerate convention: a constant marginal carries no correlation.
        if (sigma1 == 0.0 || sigma2 == 0.0) && (rho != 0.0 || rho_s != 0.0) {
            return Err(Error::invalid(format!(
                "degenerate marginal (sigma1={sigma1}, sigma2={sigma2}) requires rho = rho_s = 0"
            )));
        }
        Ok(DemandMoments {
            mu1,
            mu2,
            sigma1,
            sigma2,
            rho,
            rho_s,
        })
    }

    /// Moments of a bivariate normal: `rho_s` is forced to `|rho|`.
    pub fn normal(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        let rho = if sigma1 == 0.0 || sigma2 == 0.0 {
            0.0
        } else {
            rho
        };
        Self::new(mu1, mu2, sigma1, sigma2, rho, rho.abs())
    }

    /// Mean gap `mu1 - mu2`, the quantity the battery arbitrages day-ahead.
    pub fn mean_gap(&self) -> f64 {
        self.mu1 - self.mu2
    }
}

/// Conditional mean and variance of `D2` given a period-1 realization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalMoments {
    pub mean: f64,
    pub var: f64,
}

/// Conditional-mean map `d1 -> E[D2 | D1 = d1]` in a form that is cheap to
/// evaluate and can be embedded inside a dispatch policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CondMean {
    /// `D2` carries no information from `D1`: the map is constant `mu2`.
    Constant { mu2: f64 },
    /// Linear regression map of the bivariate normal.
    Linear { mu1: f64, mu2: f64, slope: f64 },
    /// Step function over period-1 quantile bins (empirical conditioning).
    /// `boundaries[i]` separates bin `i` from bin `i + 1`.
    Binned {
        boundaries: Vec<f64>,
        means: Vec<f64>,
    },
}

impl CondMean {
    pub fn eval(&self, d1: f64) -> f64 {
        match self {
            CondMean::Constant { mu2 } => *mu2,
            CondMean::Linear { mu1, mu2, slope } => mu2 + slope * (d1 - mu1),
            CondMean::Binned { boundaries, means } => {
                let idx = boundaries.partition_point(|&b| b < d1);
                means[idx]
            }
        }
    }
}

/// Bivariate normal demand.
#[derive(Clone, Debug)]
pub struct NormalJointDemand {
    moments: DemandMoments,
}

impl NormalJointDemand {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        Ok(NormalJointDemand {
            moments: DemandMoments::normal(mu1, mu2, sigma1, sigma2, rho)?,
        })
    }

    pub fn moments(&self) -> DemandMoments {
        self.moments
    }

    /// Regression slope `rho * sigma2 / sigma1`, zero when period 1 is
    /// degenerate. Shared by `conditional_moments` and `cond_mean` so the two
    /// agree bit-for-bit.
    fn cond_slope(&self) -> f64 {
        let m = &self.moments;
        if m.sigma1 == 0.0 {
            0.0
        } else {
            m.rho * m.sigma2 / m.sigma1
        }
    }

    pub fn conditional_moments(&self, d1: f64) -> ConditionalMoments {
        let m = &self.moments;
        if m.sigma1 == 0.0 {
            // Conditioning on a constant tells us nothing: conditional equals
            // the marginal.
            return ConditionalMoments {
                mean: m.mu2,
                var: m.sigma2 * m.sigma2,
            };
        }
        ConditionalMoments {
            mean: m.mu2 + self.cond_slope() * (d1 - m.mu1),
            var: (1.0 - m.rho * m.rho) * m.sigma2 * m.sigma2,
        }
    }

    pub fn cond_mean(&self) -> CondMean {
        let m = &self.moments;
        if m.sigma1 == 0.0 || m.rho == 0.0 {
            CondMean::Constant { mu2: m.mu2 }
        } else {
            CondMean::Linear {
                mu1: m.mu1,
                mu2: m.mu2,
                slope: self.cond_slope(),
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let m = &self.moments;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ortho = (1.0 - m.rho * m.rho).max(0.0).sqrt();
        (0..n)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let d1 = m.mu1 + m.sigma1 * z1;
                let d2 = m.mu2 + m.sigma2 * (m.rho * z1 + ortho * z2);
                (d1, d2)
            })
            .collect()
    }
}

/// One period-1 quantile bin of an empirical joint distribution.
#[derive(Clone, Debug)]
struct Bin {
    d1_min: f64,
    d1_max: f64,
    count: usize,
    mean_d2: f64,
    var_d2: f64,
}

/// Empirical joint demand over observed `(d1, d2)` pairs, each with
/// probability `1/n`.
///
/// Conditioning on `d1` uses equal-mass quantile bins of the period-1
/// marginal: the conditional moments at `d1` are the within-bin mean and
/// variance of `d2` for the bin containing `d1` (queries outside the observed
/// range map to the nearest bin). Ties in `d1` never straddle a bin edge, so
/// the bin is a function of the value alone. When `bin_count` equals the
/// number of distinct `d1` values this reduces to exact conditioning on
/// `D1 = d1`.
#[derive(Clone, Debug)]
pub struct EmpiricalJointDemand {
    pairs: Vec<(f64, f64)>,
    bin_count: usize,
    bins: Vec<Bin>,
    /// Midpoints between adjacent bins' d1 ranges; length `bins.len() - 1`.
    boundaries: Vec<f64>,
    moments: DemandMoments,
}

/// Default number of quantile bins, capped at the number of distinct `d1`
/// values in the sample.
pub const DEFAULT_BIN_COUNT: usize = 10;

impl EmpiricalJointDemand {
    /// Builds the distribution with an explicit bin count.
    ///
    /// Requires at least two observations, finite values, and
    /// `1 <= bin_count <=` number of distinct `d1` values.
    pub fn new(pairs: Vec<(f64, f64)>, bin_count: usize) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::invalid(format!(
                "empirical demand needs at least two observations, got {}",
                pairs.len()
            )));
        }
        for (i, &(d1, d2)) in pairs.iter().enumerate() {
            if !d1.is_finite() || !d2.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite demand pair ({d1}, {d2}) at index {i}"
                )));
            }
        }

        let mut sorted = pairs.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Group identical d1 values; bins are unions of consecutive groups.
        let mut groups: Vec<&[(f64, f64)]> = Vec::new();
        let mut start = 0;
        for i in 1..=sorted.len() {
            if i == sorted.len() || sorted[i].0 != sorted[start].0 {
                groups.push(&sorted[start..i]);
                start = i;
            }
        }

        if bin_count == 0 || bin_count > groups.len() {
            return Err(Error::invalid(format!(
                "bin_count must lie in [1, {}] (distinct d1 values), got {}",
                groups.len(),
                bin_count
            )));
        }

        let n = sorted.len();
        let mut bins = Vec::with_capacity(bin_count);
        let mut g = 0; // next unconsumed group
        let mut consumed = 0usize;
        for b in 0..bin_count {
            let remaining_bins = bin_count - b;
            // Leave at least one group for each later bin.
            let last_allowed = groups.len() - remaining_bins;
            let target = ((b + 1) * n) as f64 / bin_count as f64;
            let first = g;
            let mut members: Vec<(f64, f64)> = Vec::new();
            loop {
                members.extend_from_slice(groups[g]);
                consumed += groups[g].len();
                g += 1;
                if g > last_allowed {
                    break;
                }
                // Close the bin at the group edge nearest the running
                // equal-mass target; always take at least one group.
                let next_len = groups[g].len();
                let before = (consumed as f64 - target).abs();
                let after = (consumed as f64 + next_len as f64 - target).abs();
                if before <= after {
                    break;
                }
            }
            debug_assert!(g > first);
            let count = members.len();
            let mean_d2 = members.iter().map(|p| p.1).sum::<f64>() / count as f64;
            let var_d2 =
                members.iter().map(|p| (p.1 - mean_d2).powi(2)).sum::<f64>() / count as f64;
            bins.push(Bin {
                d1_min: members[0].0,
                d1_max: members[count - 1].0,
                count,
                mean_d2,
                var_d2,
            });
        }
        debug_assert_eq!(consumed, n);

        let boundaries: Vec<f64> = bins
            .windows(2)
            .map(|w| 0.5 * (w[0].d1_max + w[1].d1_min))
            .collect();

        let moments = Self::compute_moments(&pairs, &bins);
        Ok(EmpiricalJointDemand {
            pairs,
            bin_count,
            bins,
            boundaries,
            moments,
        })
    }

    /// Builds the distribution with the default bin count (capped at the
    /// number of distinct `d1` values).
    pub fn from_pairs(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let mut d1s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        d1s.sort_by(f64::total_cmp);
        d1s.dedup();
        let k = DEFAULT_BIN_COUNT.min(d1s.len()).max(1);
        Self::new(pairs, k)
    }

    fn compute_moments(pairs: &[(f64, f64)], bins: &[Bin]) -> DemandMoments {
        let n = pairs.len() as f64;
        let mu1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mu2 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        // Population (1/n) second moments.
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        let mut cov = 0.0;
        for &(d1, d2) in pairs {
            v1 += (d1 - mu1) * (d1 - mu1);
            v2 += (d2 - mu2) * (d2 - mu2);
            cov += (d1 - mu1) * (d2 - mu2);
        }
        v1 /= n;
        v2 /= n;
        cov /= n;
        let sigma1 = v1.sqrt();
        let sigma2 = v2.sqrt();
        let rho = if sigma1 == 0.0 || sigma2 == 0.0 {
            0.0
        } else {
            (cov / (sigma1 * sigma2)).clamp(-1.0, 1.0)
        };
        // Between-bin variance of the conditional means, relative to the
        // period-2 variance. The law of total variance caps the ratio at 1;
        // the clamp only absorbs floating-point drift.
        let rho_s = if sigma2 == 0.0 {
            0.0
        } else {
            let between: f64 = bins
                .iter()
                .map(|b| (b.count as f64 / n) * (b.mean_d2 - mu2) * (b.mean_d2 - mu2))
                .sum();
            (between / v2).clamp(0.0, 1.0).sqrt()
        };
        DemandMoments {
            mu1,
            mu2,
            sigma1,
            sigma2,
            rho,
            rho_s,
        }
    }

    pub fn moments(&self) -> DemandMoments {
        self.moments
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    fn bin_index(&self, d1: f64) -> usize {
        self.boundaries.partition_point(|&b| b < d1)
    }

    pub fn conditional_moments(&self, d1: f64) -> ConditionalMoments {
        let bin = &self.bins[self.bin_index(d1)];
        ConditionalMoments {
            mean: bin.mean_d2,
            var: bin.var_d2,
        }
    }

    pub fn cond_mean(&self) -> CondMean {
        CondMean::Binned {
            boundaries: self.boundaries.clone(),
            means: self.bins.iter().map(|b| b.mean_d2).collect(),
        }
    }

    /// Per-bin `(probability, mean d2)` rows, mostly useful for reporting.
    pub fn bin_summary(&self) -> Vec<(f64, f64)> {
        let n = self.pairs.len() as f64;
        self.bins
            .iter()
            .map(|b| (b.count as f64 / n, b.mean_d2))
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = Uniform::new(0, self.pairs.len()).expect("nonempty support");
        (0..n).map(|_| self.pairs[idx.sample(&mut rng)]).collect()
    }
}

/// Either family of joint demand behind one interface.
#[derive(Clone, Debug)]
pub enum JointDemand {
    Normal(NormalJointDemand),
    Empirical(EmpiricalJointDemand),
}

impl JointDemand {
    pub fn normal(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        Ok(JointDemand::Normal(NormalJointDemand::new(
            mu1, mu2, sigma1, sigma2, rho,
        )?))
    }

    pub fn empirical(pairs: Vec<(f64, f64)>, bin_count: usize) -> Result<Self> {
        Ok(JointDemand::Empirical(EmpiricalJointDemand::new(
            pairs, bin_count,
        )?))
    }

    pub fn moments(&self) -> DemandMoments {
        match self {
            JointDemand::Normal(d) => d.moments(),
            JointDemand::Empirical(d) => d.moments(),
        }
    }

    pub fn conditional_moments(&self, d1: f64) -> ConditionalMoments {
        match self {
            JointDemand::Normal(d) => d.conditional_moments(d1),
            JointDemand::Empirical(d) => d.conditional_moments(d1),
        }
    }

    /// Sequential correlation `rho_s` in [0, 1].
    pub fn sequential_correlation(&self) -> f64 {
        self.moments().rho_s
    }

    pub fn cond_mean(&self) -> CondMean {
        match self {
            JointDemand::Normal(d) => d.cond_mean(),
            JointDemand::Empirical(d) => d.cond_mean(),
        }
    }

    /// Draws `n` iid pairs; identical `(seed, n)` always yields identical
    /// output, independent of platform.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        match self {
            JointDemand::Normal(d) => d.sample(n, seed),
            JointDemand::Empirical(d) => d.sample(n, seed),
        }
    }
}
