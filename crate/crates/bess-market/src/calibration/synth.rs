//! Synthetic hourly series with known ground truth.
//!
//! Each day draws one correlated `(peak, offpeak)` demand level pair; the
//! 24 hours are filled in with a smooth two-sided cosine bridge that equals
//! the off-peak level exactly at the off-peak hour and the peak level
//! exactly at the peak hour. Prices sit on a known line over demand plus
//! heavy-tailed (Laplace) noise. Feeding the output back through the
//! calibration pipeline must therefore recover the configured moments and
//! supply curve, which is exactly how the generator is tested.

use chrono::{Days, FixedOffset, NaiveDate, TimeZone};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::series::{HourlyRecord, HourlySeries};
use crate::{Error, Result};

/// Ground truth for the generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub start_date: NaiveDate,
    pub days: u32,
    /// Hour of the daily demand maximum (0-23).
    pub peak_hour: u32,
    /// Hour of the daily demand minimum (0-23).
    pub offpeak_hour: u32,
    pub mu_peak: f64,
    pub mu_offpeak: f64,
    pub sigma_peak: f64,
    pub sigma_offpeak: f64,
    /// Correlation between the daily peak and off-peak levels.
    pub rho: f64,
    /// Price intercept, $/MWh.
    pub alpha: f64,
    /// Price slope, $/MWh per MW.
    pub beta: f64,
    /// Laplace scale of the price noise, $/MWh.
    pub price_noise: f64,
    /// Fixed UTC offset of the timestamps, in hours.
    pub utc_offset_hours: i32,
}

impl Default for SynthConfig {
    /// A solar-heavy system: midday off-peak trough, evening peak, and a
    /// peak/off-peak gap that dwarfs the day-to-day dispersion.
    fn default() -> Self {
        SynthConfig {
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            days: 365,
            peak_hour: 19,
            offpeak_hour: 13,
            mu_peak: 24_000.0,
            mu_offpeak: 10_000.0,
            sigma_peak: 1_500.0,
            sigma_offpeak: 1_200.0,
            rho: 0.6,
            alpha: 5.0,
            beta: 0.01,
            // Laplace scale of the price noise. The intercept of a fitted
            // supply curve is an extrapolation thousands of MW outside the
            // observed demand range, so its sampling error is roughly
            // mean-demand / sd-demand ~ 3x the slope's; the default keeps a
            // year of data informative about both parameters.
            price_noise: 1.0,
            utc_offset_hours: -8,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::invalid("synthetic series needs at least one day"));
        }
        if self.peak_hour > 23 || self.offpeak_hour > 23 {
            return Err(Error::invalid("hours must lie in 0..=23"));
        }
        if self.peak_hour == self.offpeak_hour {
            return Err(Error::invalid("peak and off-peak hours must differ"));
        }
        for (name, v) in [
            ("mu_peak", self.mu_peak),
            ("mu_offpeak", self.mu_offpeak),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("sigma_peak", self.sigma_peak),
            ("sigma_offpeak", self.sigma_offpeak),
            ("price_noise", self.price_noise),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        if self.utc_offset_hours.abs() > 14 {
            return Err(Error::invalid("UTC offset beyond +-14 hours"));
        }
        Ok(())
    }

    /// Interpolation weight for hour `h`: exactly 0 at the off-peak hour,
    /// exactly 1 at the peak hour, raised-cosine in between (one shape
    /// rising toward the peak, another falling back around the clock).
    fn bridge(&self, h: u32) -> f64 {
        let up = (self.peak_hour as i64 - self.offpeak_hour as i64).rem_euclid(24) as f64;
        let u = (h as i64 - self.offpeak_hour as i64).rem_euclid(24) as f64;
        let theta = if u <= up {
            std::f64::consts::PI * u / up
        } else {
            std::f64::consts::PI * (24.0 - u) / (24.0 - up)
        };
        (1.0 - theta.cos()) / 2.0
    }
}

/// Generates the series; the same `(config, seed)` always produces the same
/// bytes.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<HourlySeries> {
    config.validate()?;
    let offset = FixedOffset::east_opt(config.utc_offset_hours * 3600)
        .ok_or_else(|| Error::invalid("invalid UTC offset"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cross = (1.0 - config.rho * config.rho).sqrt();

    let mut records = Vec::with_capacity(config.days as usize * 24);
    for day in 0..config.days {
        let date = config
            .start_date
            .checked_add_days(Days::new(day as u64))
            .ok_or_else(|| Error::invalid("date range overflows the calendar"))?;
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let peak_level = config.mu_peak + config.sigma_peak * z1;
        let off_level = config.mu_offpeak + config.sigma_offpeak * (config.rho * z1 + cross * z2);

        for h in 0..24u32 {
            let demand = off_level + (peak_level - off_level) * config.bridge(h);
            let price = config.alpha + config.beta * demand + laplace(&mut rng, config.price_noise);
            let timestamp = offset
                .with_ymd_and_hms(
                    chrono::Datelike::year(&date),
                    chrono::Datelike::month(&date),
                    chrono::Datelike::day(&date),
                    h,
                    0,
                    0,
                )
                .single()
                .ok_or_else(|| Error::invalid("timestamp construction failed"))?;
            records.push(HourlyRecord {
                timestamp,
                net_demand_mw: demand,
                da_price_usd_per_mwh: Some(price),
            });
        }
    }
    HourlySeries::new(records)
}

/// Zero-mean Laplace draw by inverse CDF.
fn laplace(rng: &mut impl Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.random_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}
