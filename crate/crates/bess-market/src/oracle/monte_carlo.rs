//! Monte Carlo estimators: brute-force checks of costs, profits, and the
//! conditional-moment identities the closed forms lean on.

use crate::demand::JointDemand;
use crate::market::{
    DispatchSchedule, SupplyCurve, outcome, outcome_with, realized_battery_profit,
    realized_generation_cost,
};
use crate::{Error, Result};

/// Streaming mean/variance accumulator (Welford's update).
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn estimate(&self) -> MonteCarloEstimate {
        let stderr = if self.n > 1 {
            (self.m2 / ((self.n - 1) as f64 * self.n as f64)).sqrt()
        } else {
            f64::INFINITY
        };
        MonteCarloEstimate {
            mean: self.mean,
            stderr,
            n: self.n,
        }
    }
}

/// A sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(n)`. Exactly zero for a
    /// degenerate (deterministic) integrand.
    pub stderr: f64,
    pub n: u64,
}

impl MonteCarloEstimate {
    /// Whether `target` lies within `width` standard errors of the mean
    /// (with a tiny absolute floor so exact-match cases are not failed on
    /// rounding noise).
    pub fn covers(&self, target: f64, width: f64) -> bool {
        let slack = width * self.stderr + 1e-12 * (1.0 + target.abs());
        (self.mean - target).abs() <= slack
    }
}

fn sample_average(
    dist: &JointDemand,
    n: u64,
    seed: u64,
    mut f: impl FnMut(f64, f64) -> f64,
) -> Result<MonteCarloEstimate> {
    if n == 0 {
        return Err(Error::invalid(
            "Monte Carlo estimate needs at least one draw",
        ));
    }
    let draws = usize::try_from(n)
        .map_err(|_| Error::invalid(format!("draw count {n} does not fit this platform")))?;
    let mut acc = Welford::default();
    for (d1, d2) in dist.sample(draws, seed) {
        acc.push(f(d1, d2));
    }
    Ok(acc.estimate())
}

/// Sample-average generation cost of a dispatch schedule.
pub fn monte_carlo_cost(
    curve: &SupplyCurve,
    schedule: &DispatchSchedule,
    dist: &JointDemand,
    n: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let m = dist.moments();
    sample_average(dist, n, seed, |d1, d2| {
        realized_generation_cost(curve, &outcome(curve, schedule, m.mu1, m.mu2, d1, d2))
    })
}

/// Sample-average battery profit of a dispatch schedule.
pub fn monte_carlo_profit(
    curve: &SupplyCurve,
    schedule: &DispatchSchedule,
    dist: &JointDemand,
    n: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let m = dist.moments();
    sample_average(dist, n, seed, |d1, d2| {
        realized_battery_profit(&outcome(curve, schedule, m.mu1, m.mu2, d1, d2))
    })
}

/// Sample-average generation cost for an arbitrary real-time rule
/// `z_rt(d1)`.
pub fn monte_carlo_cost_fn(
    curve: &SupplyCurve,
    dist: &JointDemand,
    z_da: f64,
    mut z_rt: impl FnMut(f64) -> f64,
    n: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let m = dist.moments();
    sample_average(dist, n, seed, |d1, d2| {
        realized_generation_cost(
            curve,
            &outcome_with(curve, z_da, z_rt(d1), m.mu1, m.mu2, d1, d2),
        )
    })
}

/// Sample-average battery profit for an arbitrary real-time rule.
pub fn monte_carlo_profit_fn(
    curve: &SupplyCurve,
    dist: &JointDemand,
    z_da: f64,
    mut z_rt: impl FnMut(f64) -> f64,
    n: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let m = dist.moments();
    sample_average(dist, n, seed, |d1, d2| {
        realized_battery_profit(&outcome_with(curve, z_da, z_rt(d1), m.mu1, m.mu2, d1, d2))
    })
}

/// One conditional-moment identity check: a sampled estimate against its
/// closed-form target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub estimate: f64,
    pub target: f64,
    pub stderr: f64,
}

impl IdentityCheck {
    /// Whether the target lies within `width` standard errors.
    pub fn passes(&self, width: f64) -> bool {
        let slack = width * self.stderr + 1e-12 * (1.0 + self.target.abs());
        (self.estimate - self.target).abs() <= slack
    }
}

/// Samples the seven second-moment identities that tie the conditional-mean
/// map `m(d1)` to the distribution's stated moments. Each one is an exact
/// consequence of `m` being the conditional mean and of the definitions of
/// `rho` and `rho_s`, so failures point at a broken conditional
/// decomposition rather than sampling noise.
pub fn check_conditional_identities(
    dist: &JointDemand,
    n: u64,
    seed: u64,
) -> Result<Vec<IdentityCheck>> {
    if n == 0 {
        return Err(Error::invalid("identity check needs at least one draw"));
    }
    let draws = usize::try_from(n)
        .map_err(|_| Error::invalid(format!("draw count {n} does not fit this platform")))?;
    let m = dist.moments();
    let cm = dist.cond_mean();
    let s2sq = m.sigma2 * m.sigma2;
    let rssq = m.rho_s * m.rho_s;

    let mut acc = [Welford::default(); 7];
    for (d1, d2) in dist.sample(draws, seed) {
        let cond = dist.conditional_moments(d1);
        let mm = cm.eval(d1) - m.mu2;
        let x = d1 - m.mu1;
        let y = d2 - m.mu2;
        let resid = y - mm;
        acc[0].push(mm * mm);
        acc[1].push(cond.var);
        acc[2].push(resid);
        acc[3].push(resid * x);
        acc[4].push(resid * y);
        acc[5].push(x * mm);
        acc[6].push(y * mm);
    }

    let targets = [
        ("E[(m - mu2)^2]", rssq * s2sq),
        ("E[Var(D2 | D1)]", (1.0 - rssq) * s2sq),
        ("E[D2 - m]", 0.0),
        ("E[(D2 - m)(D1 - mu1)]", 0.0),
        ("E[(D2 - m)(D2 - mu2)]", (1.0 - rssq) * s2sq),
        ("E[(D1 - mu1)(m - mu2)]", m.rho * m.sigma1 * m.sigma2),
        ("E[(D2 - mu2)(m - mu2)]", rssq * s2sq),
    ];
    Ok(targets
        .iter()
        .zip(&acc)
        .map(|(&(name, target), w)| {
            let est = w.estimate();
            IdentityCheck {
                name,
                estimate: est.mean,
                target,
                stderr: est.stderr,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::RtPolicy;
    use crate::regimes::{centralized_schedule, cost_centralized, cost_no_battery};
    use approx::assert_abs_diff_eq;

    #[test]
    fn deterministic_cost_has_zero_stderr() {
        let curve = SupplyCurve::new(0.0, 1.0, 0.5).unwrap();
        let dist = JointDemand::normal(2.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let schedule = DispatchSchedule::zero(2.0, 0.0);
        let est = monte_carlo_cost(&curve, &schedule, &dist, 1000, 3).unwrap();
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.mean, 2.0);
        assert!(est.covers(2.0, 4.0));
    }

    #[test]
    fn zero_schedule_cost_matches_no_battery_closed_form() {
        let curve = SupplyCurve::new(1.0, 2.0, 0.5).unwrap();
        let dist = JointDemand::normal(3.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let schedule = DispatchSchedule::zero(3.0, 1.0);
        let est = monte_carlo_cost(&curve, &schedule, &dist, 200_000, 11).unwrap();
        let want = cost_no_battery(&curve, &dist.moments());
        assert_eq!(want, 18.0);
        assert!(est.covers(want, 4.0), "mean {} +- {}", est.mean, est.stderr);
        assert!(est.stderr < 0.05);
    }

    #[test]
    fn centralized_schedule_breaks_even_and_hits_its_cost() {
        let curve = SupplyCurve::new(1.0, 2.0, 0.5).unwrap();
        let dist = JointDemand::normal(3.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let schedule = centralized_schedule(&dist);
        let cost = monte_carlo_cost(&curve, &schedule, &dist, 200_000, 5).unwrap();
        assert!(cost.covers(cost_centralized(&curve, &dist.moments()), 4.0));
        let profit = monte_carlo_profit(&curve, &schedule, &dist, 200_000, 5).unwrap();
        assert!(
            profit.covers(0.0, 4.0),
            "profit {} +- {}",
            profit.mean,
            profit.stderr
        );
    }

    #[test]
    fn fn_variant_agrees_with_schedule_variant() {
        let curve = SupplyCurve::new(1.0, 2.0, 0.5).unwrap();
        let dist = JointDemand::normal(3.0, 1.0, 1.0, 1.0, 0.3).unwrap();
        let schedule = DispatchSchedule {
            z1_da: 0.7,
            rt: RtPolicy {
                base: 0.2,
                demand_gain: 0.4,
                cond_gain: -0.1,
                mu1: 3.0,
                mu2: 1.0,
                cond_mean: dist.cond_mean(),
            },
        };
        let a = monte_carlo_cost(&curve, &schedule, &dist, 20_000, 9).unwrap();
        let b = monte_carlo_cost_fn(
            &curve,
            &dist,
            schedule.z1_da,
            |d1| schedule.rt_discharge(d1),
            20_000,
            9,
        )
        .unwrap();
        assert_eq!(a, b);
        let p = monte_carlo_profit(&curve, &schedule, &dist, 20_000, 9).unwrap();
        let q = monte_carlo_profit_fn(
            &curve,
            &dist,
            schedule.z1_da,
            |d1| schedule.rt_discharge(d1),
            20_000,
            9,
        )
        .unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn stderr_shrinks_like_inverse_square_root() {
        let curve = SupplyCurve::new(1.0, 2.0, 0.5).unwrap();
        let dist = JointDemand::normal(3.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let schedule = DispatchSchedule::zero(3.0, 1.0);
        let small = monte_carlo_cost(&curve, &schedule, &dist, 50_000, 21).unwrap();
        let large = monte_carlo_cost(&curve, &schedule, &dist, 200_000, 22).unwrap();
        let ratio = small.stderr / large.stderr;
        assert!((ratio - 2.0).abs() < 2.0 * 0.2, "ratio {ratio}");
    }

    #[test]
    fn identities_hold_for_normal_distributions() {
        for &rho in &[-0.5, 0.0, 0.8] {
            let dist = JointDemand::normal(3.0, 1.0, 1.0, 2.0, rho).unwrap();
            let checks = check_conditional_identities(&dist, 100_000, 17).unwrap();
            assert_eq!(checks.len(), 7);
            for c in &checks {
                assert!(
                    c.passes(4.0),
                    "{} estimated {} target {} stderr {} (rho {rho})",
                    c.name,
                    c.estimate,
                    c.target,
                    c.stderr
                );
            }
        }
    }

    #[test]
    fn identities_hold_for_empirical_distributions() {
        // Exact-support bins: conditioning is exact, so the identities hold
        // for the sampled empirical measure too.
        let pairs = vec![
            (10.0, 6.0),
            (10.0, 8.0),
            (12.0, 9.0),
            (14.0, 7.0),
            (14.0, 11.0),
            (16.0, 12.0),
        ];
        let dist = JointDemand::empirical(pairs, 4).unwrap();
        let checks = check_conditional_identities(&dist, 100_000, 29).unwrap();
        for c in &checks {
            assert!(
                c.passes(4.0),
                "{} estimated {} target {} stderr {}",
                c.name,
                c.estimate,
                c.target,
                c.stderr
            );
        }
    }

    #[test]
    fn zero_draws_is_an_error() {
        let curve = SupplyCurve::new(1.0, 2.0, 0.5).unwrap();
        let dist = JointDemand::normal(3.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let schedule = DispatchSchedule::zero(3.0, 1.0);
        assert!(monte_carlo_cost(&curve, &schedule, &dist, 0, 1).is_err());
        assert!(check_conditional_identities(&dist, 0, 1).is_err());
    }

    #[test]
    fn deterministic_profit_of_da_only_schedule() {
        // gap = 4, z_da = 1: the day-ahead spread after the discharge is
        // beta * (gap - 2 z) = 2, so the battery books 2 * 1 = 2.
        let curve = SupplyCurve::new(0.0, 1.0, 0.5).unwrap();
        let dist = JointDemand::normal(4.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let schedule = DispatchSchedule {
            z1_da: 1.0,
            rt: RtPolicy::zero(4.0, 0.0),
        };
        let est = monte_carlo_profit(&curve, &schedule, &dist, 100, 1).unwrap();
        assert_abs_diff_eq!(est.mean, 2.0, epsilon = 1e-12);
        assert_eq!(est.stderr, 0.0);
    }
}
