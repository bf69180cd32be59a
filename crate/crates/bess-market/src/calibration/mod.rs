//! Calibrating the market model to metered data.
//!
//! The pipeline runs: hourly net-demand/price series in, per-quarter demand
//! moments and a fitted supply curve out, then the closed-form regime
//! machinery turns those into costs, distortions, and a price of anarchy per
//! quarter. A fuel-mix share table pins down the fast fleet share.
//!
//! The mapping from hours to the two model periods is deliberately crude:
//! one representative peak hour and one off-peak hour per day, either given
//! or detected from the average daily profile. Each calendar day then
//! contributes one `(peak, offpeak)` demand pair.

mod lad;
mod series;
mod synth;

pub use lad::{SupplyFit, lad_fit};
pub use series::{DEMAND_COLUMN, HourlyRecord, HourlySeries, PRICE_COLUMN, TIMESTAMP_COLUMN};
pub use synth::{SynthConfig, generate_synthetic};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};

use crate::demand::{DemandMoments, EmpiricalJointDemand};
use crate::market::SupplyCurve;
use crate::regimes::{RegimeReport, regime_report};
use crate::{Error, Result};

/// Generation shares by fuel, with the set of fuels fast enough to move in
/// real time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuelMix {
    /// Share of generation by fuel name. Any consistent unit works
    /// (percent, MWh, fraction); only ratios matter.
    pub shares: BTreeMap<String, f64>,
    /// Fuels counted toward the fast fleet.
    pub fast_fuels: BTreeSet<String>,
}

impl FuelMix {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Ingest {
            path: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

/// Fast fleet share implied by a fuel mix: fast generation over total
/// generation.
pub fn estimate_kf(mix: &FuelMix) -> Result<f64> {
    let mut total = 0.0;
    let mut fast = 0.0;
    for (fuel, &share) in &mix.shares {
        if !share.is_finite() || share < 0.0 {
            return Err(Error::invalid(format!(
                "fuel {fuel:?} has invalid share {share}"
            )));
        }
        total += share;
        if mix.fast_fuels.contains(fuel) {
            fast += share;
        }
    }
    if total <= 0.0 {
        return Err(Error::invalid("fuel mix has zero total generation"));
    }
    if fast <= 0.0 {
        return Err(Error::invalid(
            "fuel mix has no fast generation; the model needs a real-time fleet",
        ));
    }
    Ok(fast / total)
}

/// Which hours feed the supply-curve fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceFitHours {
    /// Every priced hour.
    #[default]
    AllHours,
    /// Only the peak and off-peak hours that define the model periods.
    PeakOffpeakOnly,
}

/// Knobs for the calibration pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Hour of day (0-23, local to each record's offset) treated as the
    /// first model period. Detected from the data when absent.
    pub peak_hour: Option<u32>,
    /// Hour treated as the second period. Detected when absent.
    pub offpeak_hour: Option<u32>,
    /// Bins for the empirical conditional decomposition (capped at the
    /// number of distinct peak demands in a quarter).
    pub bin_count: usize,
    pub price_fit_hours: PriceFitHours,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            peak_hour: None,
            offpeak_hour: None,
            bin_count: crate::demand::DEFAULT_BIN_COUNT,
            price_fit_hours: PriceFitHours::AllHours,
        }
    }
}

/// Mean net demand by hour of day, `profile[h] = (hour, mean)`, over the
/// hours present in the series.
pub fn mean_profile(series: &HourlySeries) -> Vec<(u32, f64)> {
    let mut sums: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
    for r in series.records() {
        let entry = sums.entry(r.timestamp.hour()).or_insert((0.0, 0));
        entry.0 += r.net_demand_mw;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(h, (sum, n))| (h, sum / n as f64))
        .collect()
}

/// Picks the peak and off-peak hours from the average daily profile: the
/// hours of maximum and minimum mean demand, earlier hour winning ties.
pub fn detect_peak_hours(series: &HourlySeries) -> Result<(u32, u32)> {
    let profile = mean_profile(series);
    if profile.is_empty() {
        return Err(Error::invalid(
            "cannot detect peak hours of an empty series",
        ));
    }
    let mut peak = profile[0];
    let mut offpeak = profile[0];
    for &(h, mean) in &profile[1..] {
        if mean > peak.1 {
            peak = (h, mean);
        }
        if mean < offpeak.1 {
            offpeak = (h, mean);
        }
    }
    if peak.1 == offpeak.1 {
        return Err(Error::degenerate(
            "demand profile is flat; peak and off-peak hours are indistinguishable",
        ));
    }
    Ok((peak.0, offpeak.0))
}

/// Calendar-quarter key: `(year, quarter)` with quarter in `1..=4`.
pub type QuarterKey = (i32, u32);

/// Groups the series into per-quarter day pairs `(peak demand, offpeak
/// demand)`. Days missing either hour are dropped; the second return value
/// counts them.
pub fn quarterly_day_pairs(
    series: &HourlySeries,
    peak_hour: u32,
    offpeak_hour: u32,
) -> (BTreeMap<QuarterKey, Vec<(f64, f64)>>, usize) {
    // (date -> (peak, offpeak)) first, then regroup by quarter.
    let mut days: BTreeMap<chrono::NaiveDate, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in series.records() {
        let hour = r.timestamp.hour();
        if hour != peak_hour && hour != offpeak_hour {
            continue;
        }
        let slot = days.entry(r.timestamp.date_naive()).or_default();
        if hour == peak_hour {
            slot.0 = Some(r.net_demand_mw);
        }
        // A single hour can serve as both ends only of a flat profile;
        // peak == offpeak is rejected upstream.
        if hour == offpeak_hour {
            slot.1 = Some(r.net_demand_mw);
        }
    }
    let mut quarters: BTreeMap<QuarterKey, Vec<(f64, f64)>> = BTreeMap::new();
    let mut incomplete = 0;
    for (date, slots) in days {
        match slots {
            (Some(peak), Some(offpeak)) => {
                let key = (date.year(), (date.month0() / 3) + 1);
                quarters.entry(key).or_default().push((peak, offpeak));
            }
            _ => incomplete += 1,
        }
    }
    (quarters, incomplete)
}

/// Sample moments of day pairs under the normal-family assumption
/// (sequential information share equals |correlation|).
pub fn estimate_moments(pairs: &[(f64, f64)]) -> Result<DemandMoments> {
    if pairs.len() < 2 {
        return Err(Error::invalid(format!(
            "moment estimation needs at least two day pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mu1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mu2 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
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
    let s1 = v1.sqrt();
    let s2 = v2.sqrt();
    let rho = if s1 > 0.0 && s2 > 0.0 {
        (cov / (s1 * s2)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    DemandMoments::normal(mu1, mu2, s1, s2, rho)
}

/// Fits the supply curve to the priced hours of the series.
pub fn fit_supply_curve(series: &HourlySeries, config: &CalibrationConfig) -> Result<SupplyFit> {
    let restrict = match config.price_fit_hours {
        PriceFitHours::AllHours => None,
        PriceFitHours::PeakOffpeakOnly => {
            let (peak, offpeak) = match (config.peak_hour, config.offpeak_hour) {
                (Some(p), Some(o)) => (p, o),
                _ => detect_peak_hours(series)?,
            };
            Some((peak, offpeak))
        }
    };
    let points: Vec<(f64, f64)> = series
        .records()
        .iter()
        .filter(|r| match restrict {
            Some((p, o)) => {
                let h = r.timestamp.hour();
                h == p || h == o
            }
            None => true,
        })
        .filter_map(|r| r.da_price_usd_per_mwh.map(|p| (r.net_demand_mw, p)))
        .collect();
    lad_fit(&points)
}

/// One quarter's calibrated moments and regime economics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarterReport {
    pub year: i32,
    pub quarter: u32,
    /// Day pairs the estimates rest on.
    pub days: usize,
    pub moments: DemandMoments,
    pub regimes: RegimeReport,
}

/// Full calibration output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub k_f: f64,
    pub alpha: f64,
    pub beta: f64,
    pub peak_hour: u32,
    pub offpeak_hour: u32,
    pub quarters: Vec<QuarterReport>,
    /// Mean of the defined quarterly price-of-anarchy values; absent when
    /// no quarter defines one.
    pub annual_average_poa: Option<f64>,
    pub warnings: Vec<String>,
}

/// Runs the whole calibration: fast share from the fuel mix, supply curve
/// from priced hours (unless overridden), then per-quarter moments and
/// regime reports.
pub fn quarterly_report(
    series: &HourlySeries,
    mix: &FuelMix,
    config: &CalibrationConfig,
    supply_override: Option<(f64, f64)>,
) -> Result<CalibrationReport> {
    let mut warnings = Vec::new();
    let k_f = estimate_kf(mix)?;

    let (peak_hour, offpeak_hour) = match (config.peak_hour, config.offpeak_hour) {
        (Some(p), Some(o)) => {
            if p == o {
                return Err(Error::invalid(
                    "peak and off-peak hours must differ to define two periods",
                ));
            }
            (p, o)
        }
        _ => detect_peak_hours(series)?,
    };

    let (mut alpha, beta) = match supply_override {
        Some((a, b)) => (a, b),
        None => {
            let fit = fit_supply_curve(series, config)?;
            if !fit.converged {
                warnings.push(format!(
                    "supply-curve fit did not converge in {} iterations",
                    fit.iterations
                ));
            }
            (fit.alpha, fit.beta)
        }
    };
    if beta <= 0.0 {
        return Err(Error::invalid(format!(
            "fitted price slope {beta} is not positive; prices do not respond to demand"
        )));
    }
    if alpha < 0.0 {
        warnings.push(format!(
            "fitted price intercept {alpha:.4} is negative; clamping to zero"
        ));
        alpha = 0.0;
    }
    let curve = SupplyCurve::new(alpha, beta, k_f)?;

    let (by_quarter, incomplete) = quarterly_day_pairs(series, peak_hour, offpeak_hour);
    if incomplete > 0 {
        warnings.push(format!(
            "{incomplete} day(s) lacked a peak or off-peak reading and were dropped"
        ));
    }
    if by_quarter.is_empty() {
        return Err(Error::invalid(
            "no complete days: every day lacked a peak or off-peak reading",
        ));
    }

    let mut quarters = Vec::new();
    for ((year, quarter), pairs) in by_quarter {
        if pairs.len() < 2 {
            warnings.push(format!(
                "quarter {year}-Q{quarter} has only {} complete day(s); skipped",
                pairs.len()
            ));
            continue;
        }
        let moments = estimate_moments(&pairs)?;
        quarters.push(QuarterReport {
            year,
            quarter,
            days: pairs.len(),
            moments,
            regimes: regime_report(&curve, &moments),
        });
    }
    if quarters.is_empty() {
        return Err(Error::invalid("no quarter had enough complete days"));
    }

    let defined: Vec<f64> = quarters
        .iter()
        .filter_map(|q| q.regimes.price_of_anarchy)
        .collect();
    let annual_average_poa = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };

    Ok(CalibrationReport {
        k_f,
        alpha,
        beta,
        peak_hour,
        offpeak_hour,
        quarters,
        annual_average_poa,
        warnings,
    })
}

/// Empirical joint distribution of one quarter's day pairs, for callers who
/// want binned conditioning rather than the normal assumption.
pub fn empirical_from_pairs(
    pairs: Vec<(f64, f64)>,
    bin_count: usize,
) -> Result<EmpiricalJointDemand> {
    let distinct = {
        let mut d1s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        d1s.sort_by(f64::total_cmp);
        d1s.dedup();
        d1s.len()
    };
    EmpiricalJointDemand::new(pairs, bin_count.min(distinct.max(1)))
}
