//! Closed-form evaluation of the three dispatch regimes.
//!
//! For any demand distribution with moments `(mu1, mu2, sigma1, sigma2, rho,
//! rho_s)` the expected generation cost of each regime has a closed form, as
//! do the optimal schedules:
//!
//! * **no battery**: the zero schedule;
//! * **centralized**: cost-minimizing; equalizes day-ahead quantities across
//!   periods and, in real time, splits each demand surprise (net of the
//!   conditional-mean update) evenly between periods;
//! * **decentralized**: profit-maximizing; withholds part of the day-ahead
//!   arbitrage, shifts some of it into real time to exploit the steeper
//!   real-time price impact, and halves the responsiveness to surprises.
//!
//! The inefficiency of decentralized operation is summarized by the price of
//! anarchy: the ratio of cost savings a centralized battery achieves to the
//! savings a profit-maximizing one achieves.

use serde::{Deserialize, Serialize};

use crate::demand::{DemandMoments, JointDemand};
use crate::market::{DispatchSchedule, RtPolicy, SupplyCurve};
use crate::{Error, Result};

/// Which optimizer ran the battery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NoBattery,
    Centralized,
    Decentralized,
}

/// Expected generation cost with no battery.
pub fn cost_no_battery(curve: &SupplyCurve, m: &DemandMoments) -> f64 {
    let k = curve.k_f;
    curve.alpha * (m.mu1 + m.mu2)
        + curve.beta
            * ((m.mu1 * m.mu1 + m.mu2 * m.mu2) / 2.0
                + (m.sigma1 * m.sigma1 + m.sigma2 * m.sigma2) / (2.0 * k))
}

/// Expected generation cost under the centralized (cost-minimizing) battery.
pub fn cost_centralized(curve: &SupplyCurve, m: &DemandMoments) -> f64 {
    let k = curve.k_f;
    let s1 = m.sigma1;
    let s2 = m.sigma2;
    let sum = m.mu1 + m.mu2;
    curve.alpha * sum
        + curve.beta / 4.0 * sum * sum
        + curve.beta / (4.0 * k)
            * (s1 * s1 + (2.0 - m.rho_s * m.rho_s) * s2 * s2 + 2.0 * m.rho * s1 * s2)
}

/// Expected generation cost under the decentralized (profit-maximizing)
/// battery.
pub fn cost_decentralized(curve: &SupplyCurve, m: &DemandMoments) -> f64 {
    let k = curve.k_f;
    let s1 = m.sigma1;
    let s2 = m.sigma2;
    let sq = m.mu1 * m.mu1 + m.mu2 * m.mu2;
    let cross = m.mu1 * m.mu2;
    curve.alpha * (m.mu1 + m.mu2)
        + curve.beta
            * ((20.0 - 11.0 * k + k * k) / (4.0 * (4.0 - k) * (4.0 - k)) * sq
                + (12.0 - 5.0 * k + k * k) / (2.0 * (4.0 - k) * (4.0 - k)) * cross
                + (5.0 * s1 * s1
                    + (8.0 - 3.0 * m.rho_s * m.rho_s) * s2 * s2
                    + 6.0 * m.rho * s1 * s2)
                    / (16.0 * k))
}

/// The centralized battery's optimal schedule: arbitrage the full mean gap
/// day-ahead, then split every surprise evenly between the periods.
pub fn centralized_schedule(dist: &JointDemand) -> DispatchSchedule {
    let m = dist.moments();
    DispatchSchedule {
        z1_da: m.mean_gap() / 2.0,
        rt: RtPolicy {
            base: 0.0,
            demand_gain: 0.5,
            cond_gain: -0.5,
            mu1: m.mu1,
            mu2: m.mu2,
            cond_mean: dist.cond_mean(),
        },
    }
}

/// Day-ahead discharge of the decentralized optimum,
/// `(2 - k_f) / (2 (4 - k_f)) * (mu1 - mu2)`.
///
/// Pure coefficient evaluation: `k_f = 0` is allowed here as the analytic
/// limit even though a market with `k_f = 0` cannot be constructed.
pub fn decentralized_da_discharge(k_f: f64, mean_gap: f64) -> f64 {
    (2.0 - k_f) * mean_gap / (2.0 * (4.0 - k_f))
}

/// Expected real-time discharge of the decentralized optimum,
/// `k_f / (2 (4 - k_f)) * (mu1 - mu2)`. Accepts `k_f = 0` as the analytic
/// limit.
pub fn decentralized_rt_mean_discharge(k_f: f64, mean_gap: f64) -> f64 {
    k_f * mean_gap / (2.0 * (4.0 - k_f))
}

/// The profit-maximizing battery's schedule.
pub fn decentralized_schedule(curve: &SupplyCurve, dist: &JointDemand) -> DispatchSchedule {
    let m = dist.moments();
    let k = curve.k_f;
    DispatchSchedule {
        z1_da: decentralized_da_discharge(k, m.mean_gap()),
        rt: RtPolicy {
            base: decentralized_rt_mean_discharge(k, m.mean_gap()),
            demand_gain: 0.25,
            cond_gain: -0.25,
            mu1: m.mu1,
            mu2: m.mu2,
            cond_mean: dist.cond_mean(),
        },
    }
}

/// The three strategic distortions of the decentralized battery, as
/// fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionMetrics {
    /// Fraction of the total arbitrage quantity withheld relative to the
    /// centralized battery: `(2 - k_f) / (4 - k_f)`.
    pub quantity_withholding: f64,
    /// Fraction of the (reduced) total shifted from day-ahead into real
    /// time: `k_f / 2`.
    pub shift_da_to_rt: f64,
    /// Reduction in responsiveness to real-time demand surprises: `1/2`.
    pub rt_responsiveness_reduction: f64,
}

impl DistortionMetrics {
    /// Whole-percent presentation (rounded half away from zero).
    pub fn as_whole_percent(&self) -> (i64, i64, i64) {
        let pct = |f: f64| (f * 100.0).round() as i64;
        (
            pct(self.quantity_withholding),
            pct(self.shift_da_to_rt),
            pct(self.rt_responsiveness_reduction),
        )
    }
}

/// Distortion metrics as a function of the fast share. `k_f = 0` is allowed
/// as the analytic limit.
pub fn distortion_metrics(k_f: f64) -> Result<DistortionMetrics> {
    if !k_f.is_finite() || !(0.0..=1.0).contains(&k_f) {
        return Err(Error::invalid(format!(
            "k_f must lie in [0, 1] for distortion metrics, got {k_f}"
        )));
    }
    Ok(DistortionMetrics {
        quantity_withholding: (2.0 - k_f) / (4.0 - k_f),
        shift_da_to_rt: k_f / 2.0,
        rt_responsiveness_reduction: 0.5,
    })
}

/// Cost savings of each battery regime relative to no battery.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostGaps {
    /// `cost_no_battery - cost_centralized`.
    pub centralized: f64,
    /// `cost_no_battery - cost_decentralized`.
    pub decentralized: f64,
}

/// Mean-gap and dispersion components the gaps decompose into. Algebraically
/// identical to subtracting the cost formulas, but free of the catastrophic
/// cancellation that subtraction suffers when the gaps are small relative to
/// the costs.
fn gap_components(m: &DemandMoments) -> (f64, f64) {
    let gap2 = m.mean_gap() * m.mean_gap();
    // sigma1^2 + rho_s^2 sigma2^2 - 2 rho sigma1 sigma2; equals
    // (sigma1 - rho sigma2)^2 when rho_s = |rho| (normality).
    let disp = m.sigma1 * m.sigma1 + m.rho_s * m.rho_s * m.sigma2 * m.sigma2
        - 2.0 * m.rho * m.sigma1 * m.sigma2;
    (gap2, disp)
}

fn gap_centralized(curve: &SupplyCurve, gap2: f64, disp: f64) -> f64 {
    curve.beta * (gap2 / 4.0 + disp / (4.0 * curve.k_f))
}

fn gap_decentralized(curve: &SupplyCurve, gap2: f64, disp: f64) -> f64 {
    let k = curve.k_f;
    let mean_coeff = (12.0 - 5.0 * k + k * k) / (4.0 * (4.0 - k) * (4.0 - k));
    curve.beta * (mean_coeff * gap2 + 3.0 * disp / (16.0 * k))
}

/// Closed-form cost gaps for a *normal* demand distribution.
///
/// Rejects moments with `rho_s != |rho|`: for non-normal (e.g. empirical)
/// moments the decomposition below is still available through
/// [`regime_report`], but the `(sigma1 - rho sigma2)^2` reading of the
/// dispersion term is a normality fact, so this entry point insists on it.
pub fn cost_gaps(curve: &SupplyCurve, m: &DemandMoments) -> Result<CostGaps> {
    if (m.rho_s - m.rho.abs()).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "cost_gaps requires normal moments (rho_s = |rho|), got rho = {}, rho_s = {}",
            m.rho, m.rho_s
        )));
    }
    let (gap2, disp) = gap_components(m);
    Ok(CostGaps {
        centralized: gap_centralized(curve, gap2, disp),
        decentralized: gap_decentralized(curve, gap2, disp),
    })
}

/// Price of anarchy: `(cost_nb - cost_cn) / (cost_nb - cost_dcn)`.
///
/// `None` when the denominator vanishes — the battery is useless (mu1 = mu2
/// and sigma1 = rho sigma2) and both gaps are zero — or when the moments are
/// so close to that point that the ratio cannot be resolved in floating
/// point.
pub fn price_of_anarchy(curve: &SupplyCurve, m: &DemandMoments) -> Option<f64> {
    let (gap2, disp) = gap_components(m);
    let num = gap_centralized(curve, gap2, disp);
    let den = gap_decentralized(curve, gap2, disp);
    // Resolution floor: the gap components are computed from the moments by
    // subtraction, so anything this far below the natural scale is noise.
    let scale =
        curve.beta * (gap2 / 4.0 + (m.sigma1 * m.sigma1 + m.sigma2 * m.sigma2) / (4.0 * curve.k_f));
    if den <= 0.0 || den <= 1e-12 * scale {
        None
    } else {
        Some(num / den)
    }
}

/// Price of anarchy when the mean gap dominates dispersion entirely:
/// `(4 - k_f)^2 / (12 - 5 k_f + k_f^2)`. Accepts `k_f = 0` as the analytic
/// limit (value 4/3); equals 9/8 at `k_f = 1`.
pub fn mean_dominated_poa(k_f: f64) -> f64 {
    (4.0 - k_f) * (4.0 - k_f) / (12.0 - 5.0 * k_f + k_f * k_f)
}

/// Everything the model has to say about one `(supply, moments)` instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub cost_no_battery: f64,
    pub cost_centralized: f64,
    pub cost_decentralized: f64,
    /// Savings of the centralized battery over no battery.
    pub gap_centralized: f64,
    /// Savings of the decentralized battery over no battery.
    pub gap_decentralized: f64,
    /// `None` renders as "n/a": the battery changes nothing here.
    pub price_of_anarchy: Option<f64>,
    pub quantity_withholding: f64,
    pub shift_da_to_rt: f64,
    pub rt_responsiveness_reduction: f64,
}

impl RegimeReport {
    pub fn distortions(&self) -> DistortionMetrics {
        DistortionMetrics {
            quantity_withholding: self.quantity_withholding,
            shift_da_to_rt: self.shift_da_to_rt,
            rt_responsiveness_reduction: self.rt_responsiveness_reduction,
        }
    }
}

/// Evaluates costs, gaps, PoA, and distortions in one pass.
pub fn regime_report(curve: &SupplyCurve, m: &DemandMoments) -> RegimeReport {
    let (gap2, disp) = gap_components(m);
    let dist = distortion_metrics(curve.k_f).expect("curve k_f is validated");
    RegimeReport {
        cost_no_battery: cost_no_battery(curve, m),
        cost_centralized: cost_centralized(curve, m),
        cost_decentralized: cost_decentralized(curve, m),
        gap_centralized: gap_centralized(curve, gap2, disp),
        gap_decentralized: gap_decentralized(curve, gap2, disp),
        price_of_anarchy: price_of_anarchy(curve, m),
        quantity_withholding: dist.quantity_withholding,
        shift_da_to_rt: dist.shift_da_to_rt,
        rt_responsiveness_reduction: dist.rt_responsiveness_reduction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{DispatchSchedule, battery_profit, generation_cost};
    use approx::assert_abs_diff_eq;

    #[test]
    fn no_battery_deterministic_example() {
        // alpha=0, beta=1, mu=(2,0), sigma=0 -> cost 2.
        let curve = SupplyCurve::new(0.0, 1.0, 0.5).unwrap();
        let m = DemandMoments::normal(2.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(cost_no_battery(&curve, &m), 2.0);
    }

    #[test]
    fn no_battery_stochastic_example() {
        let curve = SupplyCurve::new(1.0, 2.0, 0.5).unwrap();
        let m = DemandMoments::normal(3.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(cost_no_battery(&curve, &m), 18.0);
    }

    #[test]
    fn centralized_cost_example() {
        // alpha=0, beta=1, k_f=1, mu=(4,0), sigma=(1,1), rho=0:
        // (mu1+mu2)^2/4 + [1 + 2 + 0]/4 = 4 + 0.75 = 4.75.
        let curve = SupplyCurve::new(0.0, 1.0, 1.0).unwrap();
        let m = DemandMoments::normal(4.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(cost_centralized(&curve, &m), 4.75, epsilon = 1e-15);
    }

    #[test]
    fn decentralized_cost_example() {
        // alpha=0, beta=1, k_f=1, mu=(4,0), deterministic:
        // (20-11+1)/(4*9)*16 + (12-5+1)/(2*9)*0 = 10/36*16 = 40/9.
        let curve = SupplyCurve::new(0.0, 1.0, 1.0).unwrap();
        let m = DemandMoments::normal(4.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(cost_decentralized(&curve, &m), 40.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn centralized_schedule_splits_mean_gap() {
        let dist = JointDemand::normal(6.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let s = centralized_schedule(&dist);
        assert_eq!(s.z1_da, 3.0);
        assert_eq!(s.rt_discharge(6.0), 0.0);
        // Day-ahead quantities equalize: mu1 - z = mu2 + z.
        assert_eq!(6.0 - s.z1_da, 0.0 + s.z1_da);
    }

    #[test]
    fn decentralized_schedule_table_rows() {
        // Fast fleet only (k_f = 1), mean gap 6: z_da = 1, E[z_rt] = 1.
        let dist = JointDemand::normal(6.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let curve = SupplyCurve::new(0.0, 1.0, 1.0).unwrap();
        let s = decentralized_schedule(&curve, &dist);
        assert_abs_diff_eq!(s.z1_da, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.rt_discharge(6.0), 1.0, epsilon = 1e-15);

        // Analytic k_f -> 0 limit: everything day-ahead, a quarter of the gap.
        assert_eq!(decentralized_da_discharge(0.0, 4.0), 1.0);
        assert_eq!(decentralized_rt_mean_discharge(0.0, 4.0), 0.0);
    }

    #[test]
    fn decentralized_totals_follow_mean_gap_over_4_minus_k() {
        for &k in &[0.05, 0.3, 0.66, 0.93, 1.0] {
            let gap = 7.3;
            let total =
                decentralized_da_discharge(k, gap) + decentralized_rt_mean_discharge(k, gap);
            assert_abs_diff_eq!(total, gap / (4.0 - k), epsilon = 1e-13);
        }
    }

    #[test]
    fn distortion_metric_endpoints() {
        let slow = distortion_metrics(0.0).unwrap();
        assert_eq!(slow.quantity_withholding, 0.5);
        assert_eq!(slow.shift_da_to_rt, 0.0);
        assert_eq!(slow.rt_responsiveness_reduction, 0.5);

        let fast = distortion_metrics(1.0).unwrap();
        assert_eq!(fast.quantity_withholding, 1.0 / 3.0);
        assert_eq!(fast.shift_da_to_rt, 0.5);
        assert_eq!(fast.rt_responsiveness_reduction, 0.5);

        assert!(distortion_metrics(1.2).is_err());
        assert!(distortion_metrics(-0.1).is_err());
    }

    #[test]
    fn distortion_percent_presentation() {
        let la = distortion_metrics(0.93).unwrap().as_whole_percent();
        assert_eq!(la, (35, 47, 50));
        let houston = distortion_metrics(0.66).unwrap().as_whole_percent();
        assert_eq!(houston, (40, 33, 50));
    }

    #[test]
    fn cost_gap_examples() {
        // Useless battery: mu1 = mu2, sigma1 = rho sigma2 -> both gaps zero.
        let curve = SupplyCurve::new(0.0, 1.0, 0.5).unwrap();
        let m = DemandMoments::normal(2.0, 2.0, 1.0, 2.0, 0.5).unwrap();
        let gaps = cost_gaps(&curve, &m).unwrap();
        assert_eq!(gaps.centralized, 0.0);
        assert_eq!(gaps.decentralized, 0.0);
        assert_eq!(price_of_anarchy(&curve, &m), None);

        // Variance-only instance at k_f = 1: gap ratio is exactly 4/3.
        let m = DemandMoments::normal(0.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        let curve1 = SupplyCurve::new(0.0, 1.0, 1.0).unwrap();
        let gaps = cost_gaps(&curve1, &m).unwrap();
        assert_abs_diff_eq!(
            gaps.centralized / gaps.decentralized,
            4.0 / 3.0,
            epsilon = 1e-14
        );

        // Non-normal moments are rejected.
        let emp_m = DemandMoments::new(1.0, 0.0, 1.0, 1.0, 0.3, 0.6).unwrap();
        assert!(cost_gaps(&curve, &emp_m).is_err());
    }

    #[test]
    fn gaps_match_direct_cost_subtraction() {
        let curve = SupplyCurve::new(3.0, 1.7, 0.62).unwrap();
        let m = DemandMoments::normal(11.0, 6.5, 2.2, 1.8, 0.35).unwrap();
        let gaps = cost_gaps(&curve, &m).unwrap();
        let nb = cost_no_battery(&curve, &m);
        let cn = cost_centralized(&curve, &m);
        let dcn = cost_decentralized(&curve, &m);
        assert_abs_diff_eq!(gaps.centralized, nb - cn, epsilon = 1e-10 * nb);
        assert_abs_diff_eq!(gaps.decentralized, nb - dcn, epsilon = 1e-10 * nb);
    }

    #[test]
    fn poa_endpoints() {
        // Mean-dominated at k_f = 1: exactly 9/8.
        let curve = SupplyCurve::new(0.0, 1.0, 1.0).unwrap();
        let m = DemandMoments::normal(4.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let poa = price_of_anarchy(&curve, &m).unwrap();
        assert_abs_diff_eq!(poa, 9.0 / 8.0, epsilon = 1e-14);

        // Variance-dominated: exactly 4/3 at any k_f.
        let m = DemandMoments::normal(0.0, 0.0, 1.5, 0.0, 0.0).unwrap();
        let curve = SupplyCurve::new(0.0, 1.0, 0.37).unwrap();
        let poa = price_of_anarchy(&curve, &m).unwrap();
        assert_abs_diff_eq!(poa, 4.0 / 3.0, epsilon = 1e-14);

        // Calibrated fast share: mean-dominated PoA ~ 1.147.
        assert_abs_diff_eq!(mean_dominated_poa(0.93), 9.4249 / 8.2149, epsilon = 1e-12);
        assert!((mean_dominated_poa(0.93) - 1.147).abs() < 1e-3);
        // k_f -> 0 recovers 4/3.
        assert_abs_diff_eq!(mean_dominated_poa(0.0), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_forms_match_market_expectations_normal() {
        // cost_* formulas vs. the market module's independent expectation
        // bookkeeping, on a battery of normal fixtures including negative rho.
        let cases = [
            (0.0, 1.0, 1.0, 4.0, 0.0, 1.0, 1.0, 0.0),
            (1.0, 2.0, 0.5, 3.0, 1.0, 1.0, 1.0, 0.0),
            (2.5, 0.8, 0.37, 9.0, 4.0, 2.0, 3.0, 0.6),
            (2.5, 0.8, 0.93, 9.0, 14.0, 2.0, 3.0, -0.7),
            (0.0, 3.0, 0.66, 25.0, 10.0, 5.0, 0.5, 0.25),
        ];
        for &(alpha, beta, k, mu1, mu2, s1, s2, rho) in &cases {
            let curve = SupplyCurve::new(alpha, beta, k).unwrap();
            let dist = JointDemand::normal(mu1, mu2, s1, s2, rho).unwrap();
            let m = dist.moments();

            let nb = generation_cost(&curve, &DispatchSchedule::zero(mu1, mu2), &dist).unwrap();
            assert_abs_diff_eq!(nb, cost_no_battery(&curve, &m), epsilon = 1e-10 * nb);

            let cn = generation_cost(&curve, &centralized_schedule(&dist), &dist).unwrap();
            assert_abs_diff_eq!(cn, cost_centralized(&curve, &m), epsilon = 1e-9 * cn.abs());

            let dcn =
                generation_cost(&curve, &decentralized_schedule(&curve, &dist), &dist).unwrap();
            assert_abs_diff_eq!(
                dcn,
                cost_decentralized(&curve, &m),
                epsilon = 1e-9 * dcn.abs()
            );

            // The centralized battery breaks even.
            let profit = battery_profit(&curve, &centralized_schedule(&dist), &dist).unwrap();
            assert_abs_diff_eq!(profit, 0.0, epsilon = 1e-9 * cn.abs().max(1.0));
        }
    }

    #[test]
    fn closed_forms_match_market_expectations_empirical() {
        // Discrete-support empirical data with one bin per distinct d1 value:
        // binned conditioning is exact conditioning, so the closed forms must
        // agree with exact pair sums to float precision.
        let pairs = vec![
            (10.0, 6.0),
            (10.0, 8.0),
            (12.0, 9.0),
            (14.0, 7.0),
            (14.0, 11.0),
            (16.0, 12.0),
        ];
        let dist = JointDemand::empirical(pairs, 4).unwrap();
        let m = dist.moments();
        let curve = SupplyCurve::new(1.5, 0.9, 0.71).unwrap();

        let nb = generation_cost(&curve, &DispatchSchedule::zero(m.mu1, m.mu2), &dist).unwrap();
        assert_abs_diff_eq!(nb, cost_no_battery(&curve, &m), epsilon = 1e-9 * nb);

        let cn = generation_cost(&curve, &centralized_schedule(&dist), &dist).unwrap();
        assert_abs_diff_eq!(cn, cost_centralized(&curve, &m), epsilon = 1e-9 * cn);

        let dcn = generation_cost(&curve, &decentralized_schedule(&curve, &dist), &dist).unwrap();
        assert_abs_diff_eq!(dcn, cost_decentralized(&curve, &m), epsilon = 1e-9 * dcn);

        let profit = battery_profit(&curve, &centralized_schedule(&dist), &dist).unwrap();
        assert_abs_diff_eq!(profit, 0.0, epsilon = 1e-9 * cn);
    }

    #[test]
    fn report_assembles_consistently() {
        let curve = SupplyCurve::new(5.0, 0.01, 0.93).unwrap();
        let m = DemandMoments::normal(24_000.0, 10_000.0, 1500.0, 1200.0, 0.6).unwrap();
        let r = regime_report(&curve, &m);
        assert!(r.cost_no_battery >= r.cost_decentralized);
        assert!(r.cost_decentralized >= r.cost_centralized);
        let poa = r.price_of_anarchy.unwrap();
        assert!((1.125..=4.0 / 3.0 + 1e-12).contains(&poa));
        // Mean-dominated instance sits near the coefficient ratio.
        assert!((poa - mean_dominated_poa(0.93)).abs() < 2e-3, "poa = {poa}");
        assert_eq!(r.distortions().as_whole_percent(), (35, 47, 50));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_curve() -> impl Strategy<Value = SupplyCurve> {
            (0.0f64..50.0, 0.001f64..5.0, 0.01f64..1.0)
                .prop_map(|(a, b, k)| SupplyCurve::new(a, b, k).unwrap())
        }

        fn arb_normal_moments() -> impl Strategy<Value = DemandMoments> {
            (
                0.0f64..50_000.0,
                0.0f64..50_000.0,
                0.0f64..5_000.0,
                0.0f64..5_000.0,
                -0.95f64..0.95,
            )
                .prop_map(|(mu1, mu2, s1, s2, rho)| {
                    DemandMoments::normal(mu1, mu2, s1, s2, rho).unwrap()
                })
        }

        proptest! {
            /// Cost ordering: no battery >= decentralized >= centralized.
            #[test]
            fn cost_ordering(curve in arb_curve(), m in arb_normal_moments()) {
                let nb = cost_no_battery(&curve, &m);
                let dcn = cost_decentralized(&curve, &m);
                let cn = cost_centralized(&curve, &m);
                let scale = nb.abs().max(1.0);
                prop_assert!(nb - dcn >= -1e-9 * scale);
                prop_assert!(dcn - cn >= -1e-9 * scale);
            }

            /// PoA bounds for normal moments whenever it is defined.
            #[test]
            fn poa_bounds(curve in arb_curve(), m in arb_normal_moments()) {
                if let Some(poa) = price_of_anarchy(&curve, &m) {
                    prop_assert!(poa >= 9.0 / 8.0 - 1e-9, "poa = {poa}");
                    prop_assert!(poa <= 4.0 / 3.0 + 1e-9, "poa = {poa}");
                }
            }

            /// Gap decomposition equals direct cost subtraction within float
            /// tolerance.
            #[test]
            fn gaps_equal_subtraction(curve in arb_curve(), m in arb_normal_moments()) {
                let gaps = cost_gaps(&curve, &m).unwrap();
                let nb = cost_no_battery(&curve, &m);
                let scale = nb.abs().max(1.0);
                prop_assert!((gaps.centralized - (nb - cost_centralized(&curve, &m))).abs()
                    <= 1e-8 * scale);
                prop_assert!((gaps.decentralized - (nb - cost_decentralized(&curve, &m))).abs()
                    <= 1e-8 * scale);
            }

            /// The decentralized battery trades less in total and less
            /// day-ahead than the centralized one (for a positive mean gap).
            #[test]
            fn withholding_is_real(k in 0.0f64..1.0, gap in 0.001f64..1000.0) {
                let z_da = decentralized_da_discharge(k, gap);
                let z_rt = decentralized_rt_mean_discharge(k, gap);
                let total = z_da + z_rt;
                let central_total = gap / 2.0;
                prop_assert!(total < central_total);
                // Withholding metric matches 1 - total/central exactly.
                let metrics = distortion_metrics(k).unwrap();
                let implied = 1.0 - total / central_total;
                prop_assert!((implied - metrics.quantity_withholding).abs() < 1e-12);
                // Shift metric matches the RT share of the total.
                prop_assert!((z_rt / total - metrics.shift_da_to_rt).abs() < 1e-12);
            }
        }
    }
}
