//! Two-settlement market clearing, generation cost, and battery profit.
//!
//! The day-ahead stage clears both periods at the demand forecast
//! `(mu1, mu2)` net of the battery's day-ahead position `z1_da`: period 1
//! sells `z1_da` (reducing cleared demand), period 2 buys it back. After `D1`
//! is realized the real-time stage clears the increment, adjusted by the
//! real-time discharge `z1_rt(d1)`. Only the fast fleet (share `k_f` of
//! capacity) participates in real time, so the price impact of a real-time
//! quantity is `1/k_f` times as steep.
//!
//! With an affine marginal-cost curve `c'(q) = alpha + beta q`, expected
//! generation cost separates period by period into a day-ahead term priced at
//! the cleared forecast and a real-time term priced at the *modified* demand
//! `d_da + d_rt / k_f` — the per-unit-share quantity the fast fleet actually
//! follows.

use serde::{Deserialize, Serialize};

use crate::demand::{CondMean, DemandMoments, JointDemand};
use crate::{Error, Result};

/// Affine aggregate supply: marginal cost `alpha + beta q`, with a share
/// `k_f` of capacity flexible enough to trade in real time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyCurve {
    /// Marginal-cost intercept ($/MWh).
    pub alpha: f64,
    /// Marginal-cost slope ($/MWh per MW).
    pub beta: f64,
    /// Fast (real-time capable) share of generation, in (0, 1].
    pub k_f: f64,
}

impl SupplyCurve {
    /// Validates `alpha >= 0`, `beta >= 0`, `k_f in (0, 1]`.
    ///
    /// `k_f = 0` (no real-time market at all) is rejected here; the limiting
    /// behavior is only available through the closed-form expressions in
    /// [`crate::regimes`].
    pub fn new(alpha: f64, beta: f64, k_f: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::invalid(format!(
                "alpha must be finite and nonnegative, got {alpha}"
            )));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::invalid(format!(
                "beta must be finite and nonnegative, got {beta}"
            )));
        }
        if !k_f.is_finite() || k_f <= 0.0 || k_f > 1.0 {
            return Err(Error::invalid(format!("k_f must lie in (0, 1], got {k_f}")));
        }
        Ok(SupplyCurve { alpha, beta, k_f })
    }

    /// Slow share `1 - k_f`.
    pub fn k_s(&self) -> f64 {
        1.0 - self.k_f
    }

    pub fn da_price(&self, d_da: f64) -> f64 {
        self.alpha + self.beta * d_da
    }

    pub fn rt_price(&self, d_da: f64, d_rt: f64) -> f64 {
        self.alpha + self.beta * (d_da + d_rt / self.k_f)
    }

    /// Energy cost of producing `q` at marginal cost `alpha + beta q`.
    pub(crate) fn production_cost(&self, q: f64) -> f64 {
        self.alpha * q + 0.5 * self.beta * q * q
    }
}

/// Real-time discharge policy: affine in the realized demand surprise and in
/// the conditional-mean update it implies,
///
/// ```text
/// z1_rt(d1) = base + demand_gain * (d1 - mu1) + cond_gain * (m(d1) - mu2)
/// ```
///
/// where `m(d1) = E[D2 | D1 = d1]` is the embedded conditional-mean map. The
/// family covers every optimal policy that arises in this model; arbitrary
/// nonlinear policies are only supported through the sampling paths in
/// [`crate::oracle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtPolicy {
    pub base: f64,
    pub demand_gain: f64,
    pub cond_gain: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub cond_mean: CondMean,
}

impl RtPolicy {
    /// Policy that never reacts: `z1_rt == 0`.
    pub fn zero(mu1: f64, mu2: f64) -> Self {
        RtPolicy {
            base: 0.0,
            demand_gain: 0.0,
            cond_gain: 0.0,
            mu1,
            mu2,
            cond_mean: CondMean::Constant { mu2 },
        }
    }

    /// Real-time discharge at the realized period-1 demand.
    pub fn discharge(&self, d1: f64) -> f64 {
        self.base
            + self.demand_gain * (d1 - self.mu1)
            + self.cond_gain * (self.cond_mean.eval(d1) - self.mu2)
    }
}

/// A battery bid: day-ahead discharge plus the real-time policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchSchedule {
    /// Day-ahead discharge `z1_da` (MW): sold in period 1, bought back in
    /// period 2.
    pub z1_da: f64,
    pub rt: RtPolicy,
}

impl DispatchSchedule {
    /// The do-nothing schedule (used for the no-battery benchmark).
    pub fn zero(mu1: f64, mu2: f64) -> Self {
        DispatchSchedule {
            z1_da: 0.0,
            rt: RtPolicy::zero(mu1, mu2),
        }
    }

    pub fn rt_discharge(&self, d1: f64) -> f64 {
        self.rt.discharge(d1)
    }
}

/// Cleared quantities, prices, and battery actions for one realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    /// Day-ahead cleared net demand, period 1 (MW).
    pub d1_da: f64,
    /// Day-ahead cleared net demand, period 2 (MW).
    pub d2_da: f64,
    /// Real-time incremental demand, period 1 (MW).
    pub d1_rt: f64,
    /// Real-time incremental demand, period 2 (MW).
    pub d2_rt: f64,
    /// Day-ahead prices ($/MWh).
    pub lambda1_da: f64,
    pub lambda2_da: f64,
    /// Real-time prices ($/MWh).
    pub lambda1_rt: f64,
    pub lambda2_rt: f64,
    /// Battery discharge: day-ahead position and realized real-time action.
    pub z1_da: f64,
    pub z1_rt: f64,
}

impl MarketOutcome {
    /// Modified real-time demand for period `t`: the day-ahead quantity plus
    /// the real-time increment scaled onto the fast fleet.
    pub fn modified_rt_demand(&self, period: u8, k_f: f64) -> f64 {
        match period {
            1 => self.d1_da + self.d1_rt / k_f,
            2 => self.d2_da + self.d2_rt / k_f,
            _ => panic!("period must be 1 or 2"),
        }
    }
}

/// Clears both settlements for one realization `(d1, d2)` of demand, given
/// the day-ahead forecast `(mu1, mu2)` and the battery schedule.
pub fn outcome(
    curve: &SupplyCurve,
    schedule: &DispatchSchedule,
    mu1: f64,
    mu2: f64,
    d1: f64,
    d2: f64,
) -> MarketOutcome {
    outcome_with(
        curve,
        schedule.z1_da,
        schedule.rt.discharge(d1),
        mu1,
        mu2,
        d1,
        d2,
    )
}

/// Same clearing bookkeeping with the discharges given directly, for
/// policies that are not affine in the demand surprise.
pub fn outcome_with(
    curve: &SupplyCurve,
    z_da: f64,
    z_rt: f64,
    mu1: f64,
    mu2: f64,
    d1: f64,
    d2: f64,
) -> MarketOutcome {
    let d1_da = mu1 - z_da;
    let d2_da = mu2 + z_da;
    let d1_rt = d1 - mu1 - z_rt;
    let d2_rt = d2 - mu2 + z_rt;
    MarketOutcome {
        d1_da,
        d2_da,
        d1_rt,
        d2_rt,
        lambda1_da: curve.da_price(d1_da),
        lambda2_da: curve.da_price(d2_da),
        lambda1_rt: curve.rt_price(d1_da, d1_rt),
        lambda2_rt: curve.rt_price(d2_da, d2_rt),
        z1_da: z_da,
        z1_rt: z_rt,
    }
}

/// Generation cost of a single realization: slow fleet at the day-ahead
/// quantities, fast fleet at the modified real-time quantities.
pub fn realized_generation_cost(curve: &SupplyCurve, out: &MarketOutcome) -> f64 {
    let k_f = curve.k_f;
    let k_s = curve.k_s();
    let da = curve.production_cost(out.d1_da) + curve.production_cost(out.d2_da);
    let rt = curve.production_cost(out.modified_rt_demand(1, k_f))
        + curve.production_cost(out.modified_rt_demand(2, k_f));
    k_s * da + k_f * rt
}

/// Battery revenue of a single realization: sell `z1_da` at the day-ahead
/// spread, sell `z1_rt` at the real-time spread.
pub fn realized_battery_profit(out: &MarketOutcome) -> f64 {
    (out.lambda1_da - out.lambda2_da) * out.z1_da + (out.lambda1_rt - out.lambda2_rt) * out.z1_rt
}

/// Second moments of the basis `(X, Y, M) = (D1 - mu1, D2 - mu2,
/// E[D2|D1] - mu2)` implied by a set of demand moments under exact
/// conditioning. These are the only expectations a quadratic objective of an
/// affine policy ever needs.
struct CrossMoments {
    sxx: f64,
    syy: f64,
    smm: f64,
    sxy: f64,
    sxm: f64,
    sym: f64,
}

impl CrossMoments {
    fn from_moments(m: &DemandMoments) -> Self {
        let sxy = m.rho * m.sigma1 * m.sigma2;
        let smm = m.rho_s * m.rho_s * m.sigma2 * m.sigma2;
        CrossMoments {
            sxx: m.sigma1 * m.sigma1,
            syy: m.sigma2 * m.sigma2,
            smm,
            // E[X M] = E[X Y] and E[Y M] = E[M^2] under exact conditioning.
            sxy,
            sxm: sxy,
            sym: smm,
        }
    }
}

/// An affine policy re-anchored to a distribution's own `(mu1, mu2)`: the
/// same map expressed as `a + b X + c M` with `X`, `M` centered at the
/// distribution's means.
fn reanchored(policy: &RtPolicy, m: &DemandMoments) -> (f64, f64, f64) {
    let a = policy.base
        + policy.demand_gain * (m.mu1 - policy.mu1)
        + policy.cond_gain * (m.mu2 - policy.mu2);
    (a, policy.demand_gain, policy.cond_gain)
}

/// Checks that the closed-form expectation path may be used for `policy`
/// against a normal distribution: the embedded conditional-mean map must be
/// the distribution's own (or the policy must not use it at all).
fn check_normal_policy(policy: &RtPolicy, dist: &JointDemand) -> Result<()> {
    if policy.cond_gain == 0.0 {
        return Ok(());
    }
    let expected = dist.cond_mean();
    if policy.cond_mean == expected {
        return Ok(());
    }
    Err(Error::NotClosedForm(
        "policy embeds a conditional-mean map that is not the distribution's own; \
         evaluate it with oracle::monte_carlo_cost instead"
            .into(),
    ))
}

/// Expected generation cost of `schedule` under `dist`.
///
/// Normal distributions are integrated in closed form through the
/// cross-moment identities of the conditional mean; empirical distributions
/// are exact sums over the sample pairs (probability `1/n` each).
pub fn generation_cost(
    curve: &SupplyCurve,
    schedule: &DispatchSchedule,
    dist: &JointDemand,
) -> Result<f64> {
    match dist {
        JointDemand::Empirical(emp) => {
            let m = emp.moments();
            let n = emp.pairs().len() as f64;
            let total: f64 = emp
                .pairs()
                .iter()
                .map(|&(d1, d2)| {
                    let out = outcome(curve, schedule, m.mu1, m.mu2, d1, d2);
                    realized_generation_cost(curve, &out)
                })
                .sum();
            Ok(total / n)
        }
        JointDemand::Normal(_) => {
            check_normal_policy(&schedule.rt, dist)?;
            let m = dist.moments();
            let s = CrossMoments::from_moments(&m);
            let (a, b, c) = reanchored(&schedule.rt, &m);
            let k = curve.k_f;
            let z = schedule.z1_da;

            // Day-ahead quantities are deterministic.
            let d1_da = m.mu1 - z;
            let d2_da = m.mu2 + z;

            // Modified real-time demands:
            //   q1 = d1_da + ((1-b) X - c M - a) / k
            //   q2 = d2_da + (Y + b X + c M + a) / k
            let mean_q1 = d1_da - a / k;
            let mean_q2 = d2_da + a / k;
            let var_q1 = ((1.0 - b) * (1.0 - b) * s.sxx + c * c * s.smm
                - 2.0 * (1.0 - b) * c * s.sxm)
                / (k * k);
            let var_q2 = (s.syy
                + b * b * s.sxx
                + c * c * s.smm
                + 2.0 * b * s.sxy
                + 2.0 * c * s.sym
                + 2.0 * b * c * s.sxm)
                / (k * k);

            let expected_cost = |mean: f64, var: f64| -> f64 {
                curve.alpha * mean + 0.5 * curve.beta * (mean * mean + var)
            };

            let da = curve.production_cost(d1_da) + curve.production_cost(d2_da);
            let rt = expected_cost(mean_q1, var_q1) + expected_cost(mean_q2, var_q2);
            Ok(curve.k_s() * da + k * rt)
        }
    }
}

/// Expected battery profit of `schedule` under `dist`. Same evaluation split
/// as [`generation_cost`].
pub fn battery_profit(
    curve: &SupplyCurve,
    schedule: &DispatchSchedule,
    dist: &JointDemand,
) -> Result<f64> {
    match dist {
        JointDemand::Empirical(emp) => {
            let m = emp.moments();
            let n = emp.pairs().len() as f64;
            let total: f64 = emp
                .pairs()
                .iter()
                .map(|&(d1, d2)| {
                    let out = outcome(curve, schedule, m.mu1, m.mu2, d1, d2);
                    realized_battery_profit(&out)
                })
                .sum();
            Ok(total / n)
        }
        JointDemand::Normal(_) => {
            check_normal_policy(&schedule.rt, dist)?;
            let m = dist.moments();
            let s = CrossMoments::from_moments(&m);
            let (a, b, c) = reanchored(&schedule.rt, &m);
            let k = curve.k_f;
            let z = schedule.z1_da;
            let gap = m.mean_gap();

            // Profit = beta (gap - 2z) z
            //        + E[ beta ((gap - 2z) + (X - Y - 2 g)/k) g ],  g = a+bX+cM.
            let e_xg = b * s.sxx + c * s.sxm;
            let e_yg = b * s.sxy + c * s.sym;
            let e_gg = a * a + b * b * s.sxx + c * c * s.smm + 2.0 * b * c * s.sxm;
            Ok(curve.beta * ((gap - 2.0 * z) * (z + a) + (e_xg - e_yg - 2.0 * e_gg) / k))
        }
    }
}
