//! Independent numerical machinery: scenario trees, first-order-condition
//! solvers, Monte Carlo estimators, and quadrature.
//!
//! Everything in this module deliberately avoids the closed-form results in
//! [`crate::regimes`]. The solvers discretize the demand distribution into a
//! two-stage scenario tree, assemble the stationarity conditions of the
//! relevant quadratic program by evaluating its analytic gradient on a basis,
//! and solve the resulting linear system. That makes them a genuinely
//! independent check on the closed forms (and the closed forms a check on
//! them).

pub mod quadrature;

mod monte_carlo;

pub use monte_carlo::{
    IdentityCheck, MonteCarloEstimate, check_conditional_identities, monte_carlo_cost,
    monte_carlo_cost_fn, monte_carlo_profit, monte_carlo_profit_fn,
};
pub use quadrature::{GaussHermite, gauss_hermite};

use nalgebra::{DMatrix, DVector};

use crate::demand::{EmpiricalJointDemand, NormalJointDemand};
use crate::market::{DispatchSchedule, SupplyCurve};
use crate::regimes::Regime;
use crate::{Error, Result};

/// One second-period demand realization hanging off a first-period node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct D2Branch {
    pub d2: f64,
    /// Probability conditional on the parent node.
    pub prob: f64,
}

/// One first-period demand realization together with its conditional
/// second-period distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct D1Node {
    pub d1: f64,
    pub prob: f64,
    /// Conditional mean of second-period demand at this node. Cached at
    /// construction so that policies and optimality conditions see exactly
    /// the same number (the real-time stage trades against this mean).
    pub cond_mean: f64,
    pub branches: Vec<D2Branch>,
}

/// A two-stage discretization of the joint demand distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    /// First-period forecast the day-ahead market clears against.
    pub mu1: f64,
    /// Second-period forecast.
    pub mu2: f64,
    /// Nodes in strictly increasing `d1` order.
    pub nodes: Vec<D1Node>,
}

/// Summary moments implied by a tree, for checking discretization quality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeMoments {
    pub mean_d1: f64,
    pub mean_d2: f64,
    pub var_d1: f64,
    pub var_d2: f64,
    pub cov: f64,
}

impl ScenarioTree {
    /// Discretizes a bivariate normal with `n1` first-period points and `n2`
    /// branches per node. Gauss–Hermite rules are exact for quadratic
    /// payoffs whenever `n1, n2 >= 2`, so sizes beyond the default 16 buy
    /// nothing but resolution of the policy grid.
    pub fn from_normal(nd: &NormalJointDemand, n1: usize, n2: usize) -> Result<Self> {
        let m = nd.moments();
        let cm = nd.cond_mean();

        let outer = if m.sigma1 == 0.0 {
            GaussHermite {
                nodes: vec![0.0],
                probs: vec![1.0],
            }
        } else {
            gauss_hermite(n1)?
        };

        let mut nodes = Vec::with_capacity(outer.nodes.len());
        for (&z, &p) in outer.nodes.iter().zip(&outer.probs) {
            let d1 = m.mu1 + m.sigma1 * z;
            let cond = nd.conditional_moments(d1);
            let mean = cm.eval(d1);
            let sd = cond.var.sqrt();
            let branches = if sd == 0.0 {
                vec![D2Branch {
                    d2: mean,
                    prob: 1.0,
                }]
            } else {
                let inner = gauss_hermite(n2)?;
                inner
                    .nodes
                    .iter()
                    .zip(&inner.probs)
                    .map(|(&w, &q)| D2Branch {
                        d2: mean + sd * w,
                        prob: q,
                    })
                    .collect()
            };
            nodes.push(D1Node {
                d1,
                prob: p,
                cond_mean: mean,
                branches,
            });
        }
        let tree = ScenarioTree {
            mu1: m.mu1,
            mu2: m.mu2,
            nodes,
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Exact tree over an empirical sample: one node per distinct `d1`
    /// value, whose branches are the second-period values observed with it.
    ///
    /// Note the conditioning here is exact — by observed `d1` — not the
    /// binned conditioning the empirical distribution itself uses, so on
    /// data where bins hold several distinct `d1` values the tree's optimum
    /// can be (weakly) better than any binned policy.
    pub fn from_empirical(emp: &EmpiricalJointDemand) -> Self {
        let m = emp.moments();
        let mut sorted = emp.pairs().to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len() as f64;

        let mut nodes = Vec::new();
        let mut start = 0;
        for i in 1..=sorted.len() {
            if i == sorted.len() || sorted[i].0 != sorted[start].0 {
                let run = &sorted[start..i];
                let count = run.len();
                let mean = run.iter().map(|p| p.1).sum::<f64>() / count as f64;
                let branches = run
                    .iter()
                    .map(|p| D2Branch {
                        d2: p.1,
                        prob: 1.0 / count as f64,
                    })
                    .collect();
                nodes.push(D1Node {
                    d1: run[0].0,
                    prob: count as f64 / n,
                    cond_mean: mean,
                    branches,
                });
                start = i;
            }
        }
        ScenarioTree {
            mu1: m.mu1,
            mu2: m.mu2,
            nodes,
        }
    }

    /// Structural checks: finite values, positive probabilities summing to
    /// one, strictly increasing nodes.
    pub fn validate(&self) -> Result<()> {
        if !self.mu1.is_finite() || !self.mu2.is_finite() {
            return Err(Error::invalid("tree forecasts must be finite"));
        }
        if self.nodes.is_empty() {
            return Err(Error::invalid("scenario tree has no nodes"));
        }
        let mut total = 0.0;
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.d1.is_finite() || !node.cond_mean.is_finite() {
                return Err(Error::invalid(format!("non-finite values at node {i}")));
            }
            if i > 0 && node.d1 <= self.nodes[i - 1].d1 {
                return Err(Error::invalid(format!(
                    "node d1 values must strictly increase, broken at index {i}"
                )));
            }
            let prob_ok = node.prob.is_finite() && node.prob > 0.0;
            if !prob_ok {
                return Err(Error::invalid(format!(
                    "node {i} has non-positive probability {}",
                    node.prob
                )));
            }
            total += node.prob;
            if node.branches.is_empty() {
                return Err(Error::invalid(format!("node {i} has no branches")));
            }
            let mut branch_total = 0.0;
            for br in &node.branches {
                let branch_ok = br.d2.is_finite() && br.prob.is_finite() && br.prob > 0.0;
                if !branch_ok {
                    return Err(Error::invalid(format!("bad branch under node {i}")));
                }
                branch_total += br.prob;
            }
            if (branch_total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "branch probabilities under node {i} sum to {branch_total}"
                )));
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("node probabilities sum to {total}")));
        }
        Ok(())
    }

    pub fn mean_d1(&self) -> f64 {
        self.nodes.iter().map(|n| n.prob * n.d1).sum()
    }

    pub fn mean_d2(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.prob * n.branches.iter().map(|b| b.prob * b.d2).sum::<f64>())
            .sum()
    }

    pub fn moments(&self) -> TreeMoments {
        let m1 = self.mean_d1();
        let m2 = self.mean_d2();
        let mut var1 = 0.0;
        let mut var2 = 0.0;
        let mut cov = 0.0;
        for node in &self.nodes {
            var1 += node.prob * (node.d1 - m1) * (node.d1 - m1);
            for br in &node.branches {
                let w = node.prob * br.prob;
                var2 += w * (br.d2 - m2) * (br.d2 - m2);
                cov += w * (node.d1 - m1) * (br.d2 - m2);
            }
        }
        TreeMoments {
            mean_d1: m1,
            mean_d2: m2,
            var_d1: var1,
            var_d2: var2,
            cov,
        }
    }
}

/// Result of a first-order-condition solve on a scenario tree.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericSolution {
    /// Day-ahead discharge.
    pub z1_da: f64,
    /// Real-time discharge at each tree node, in node order.
    pub z1_rt: Vec<f64>,
    /// Probability-weighted mean of `z1_rt`.
    pub expected_rt: f64,
    /// Expected generation cost (centralized solve) or expected battery
    /// profit (decentralized solve) at the solution.
    pub objective: f64,
    /// Largest first-order-condition residual in absolute value.
    pub foc_residual_max: f64,
    /// True when the stationarity system did not pin the solution down
    /// uniquely (flat supply curve, or an all-fast fleet making day-ahead
    /// and real-time trades interchangeable). The returned point is still a
    /// valid optimum — the minimum-norm one.
    pub degenerate: bool,
}

/// Expected generation cost on the tree for an arbitrary node-indexed
/// dispatch `(z_da, z_rt)`.
pub fn expected_cost(curve: &SupplyCurve, tree: &ScenarioTree, z_da: f64, z_rt: &[f64]) -> f64 {
    let k = curve.k_f;
    let d1_da = tree.mu1 - z_da;
    let d2_da = tree.mu2 + z_da;
    let da = curve.k_s() * (curve.production_cost(d1_da) + curve.production_cost(d2_da));
    let mut rt = 0.0;
    for (node, &z) in tree.nodes.iter().zip(z_rt) {
        let q1 = d1_da + (node.d1 - tree.mu1 - z) / k;
        let mut expected_second = 0.0;
        for br in &node.branches {
            let q2 = d2_da + (br.d2 - tree.mu2 + z) / k;
            expected_second += br.prob * curve.production_cost(q2);
        }
        rt += node.prob * (curve.production_cost(q1) + expected_second);
    }
    da + k * rt
}

/// Expected battery profit on the tree for an arbitrary node-indexed
/// dispatch.
pub fn expected_profit(curve: &SupplyCurve, tree: &ScenarioTree, z_da: f64, z_rt: &[f64]) -> f64 {
    let k = curve.k_f;
    let gap = tree.mu1 - tree.mu2;
    let d1_da = tree.mu1 - z_da;
    let d2_da = tree.mu2 + z_da;
    let da = (gap - 2.0 * z_da) * z_da;
    let mut rt = 0.0;
    for (node, &z) in tree.nodes.iter().zip(z_rt) {
        let q1 = d1_da + (node.d1 - tree.mu1 - z) / k;
        for br in &node.branches {
            let q2 = d2_da + (br.d2 - tree.mu2 + z) / k;
            rt += node.prob * br.prob * (q1 - q2) * z;
        }
    }
    curve.beta * (da + rt)
}

/// First-order-condition residuals for a node-indexed dispatch.
///
/// Entry `0` is the day-ahead condition, entry `i + 1` the real-time
/// condition at node `i`. All conditions are normalized to the scale of the
/// demand quantities themselves (the price-impact slope and node
/// probabilities are divided out), so a residual is comparable to a demand
/// error in MW.
pub fn foc_residuals(
    curve: &SupplyCurve,
    tree: &ScenarioTree,
    regime: Regime,
    z_da: f64,
    z_rt: &[f64],
) -> Result<Vec<f64>> {
    if z_rt.len() != tree.nodes.len() {
        return Err(Error::invalid(format!(
            "dispatch has {} real-time values for {} nodes",
            z_rt.len(),
            tree.nodes.len()
        )));
    }
    let k = curve.k_f;
    let gap = tree.mu1 - tree.mu2;
    let mut res = vec![0.0; tree.nodes.len() + 1];
    let mut mean_rt = 0.0;
    match regime {
        Regime::Centralized => {
            for (i, (node, &z)) in tree.nodes.iter().zip(z_rt).enumerate() {
                let a = node.d1 - tree.mu1;
                let b = node.cond_mean - tree.mu2;
                // Marginal real-time costs equalize across the periods.
                res[i + 1] = k * (2.0 * z_da - gap) + (2.0 * z - (a - b));
                mean_rt += node.prob * z;
            }
            // Day-ahead quantities equalize once expected real-time
            // dispatch is accounted for.
            res[0] = (2.0 * z_da - gap) + 2.0 * mean_rt;
        }
        Regime::Decentralized => {
            for (i, (node, &z)) in tree.nodes.iter().zip(z_rt).enumerate() {
                let a = node.d1 - tree.mu1;
                let b = node.cond_mean - tree.mu2;
                // Marginal real-time revenue of the monopolist battery
                // vanishes: the price spread equals the per-unit impact of
                // its own trade.
                res[i + 1] = k * (gap - 2.0 * z_da) + ((a - b) - 4.0 * z);
                mean_rt += node.prob * z;
            }
            res[0] = (gap - 4.0 * z_da) - 2.0 * mean_rt;
        }
        Regime::NoBattery => {
            return Err(Error::invalid(
                "no-battery regime has no dispatch to check conditions for",
            ));
        }
    }
    Ok(res)
}

/// First-order-condition residuals of a dispatch *policy*, evaluated on the
/// tree's nodes.
pub fn schedule_foc_residuals(
    curve: &SupplyCurve,
    tree: &ScenarioTree,
    regime: Regime,
    schedule: &DispatchSchedule,
) -> Result<Vec<f64>> {
    let z_rt: Vec<f64> = tree
        .nodes
        .iter()
        .map(|n| schedule.rt_discharge(n.d1))
        .collect();
    foc_residuals(curve, tree, regime, schedule.z1_da, &z_rt)
}

/// Gradient of expected generation cost with respect to
/// `[z_da, z_1, ..., z_n]`, with the price-impact slope divided out and node
/// entries divided by their probabilities. Affine in the dispatch.
fn centralized_gradient(curve: &SupplyCurve, tree: &ScenarioTree, x: &[f64]) -> Vec<f64> {
    let k = curve.k_f;
    let z_da = x[0];
    let d1_da = tree.mu1 - z_da;
    let d2_da = tree.mu2 + z_da;
    let mut g = vec![0.0; tree.nodes.len() + 1];
    let mut avg = 0.0;
    for (i, node) in tree.nodes.iter().enumerate() {
        let z = x[i + 1];
        let q1 = d1_da + (node.d1 - tree.mu1 - z) / k;
        let e2 = d2_da + (node.cond_mean - tree.mu2 + z) / k;
        let diff = e2 - q1;
        g[i + 1] = diff;
        avg += node.prob * diff;
    }
    g[0] = curve.k_s() * (d2_da - d1_da) + k * avg;
    g
}

/// Gradient of expected battery profit, same scaling conventions (node rows
/// additionally carry the factor `k_f` so their terms stay on the demand
/// scale for small fast shares).
fn decentralized_gradient(curve: &SupplyCurve, tree: &ScenarioTree, x: &[f64]) -> Vec<f64> {
    let k = curve.k_f;
    let gap = tree.mu1 - tree.mu2;
    let z_da = x[0];
    let mut g = vec![0.0; tree.nodes.len() + 1];
    let mut mean_rt = 0.0;
    for (i, node) in tree.nodes.iter().enumerate() {
        let z = x[i + 1];
        g[i + 1] =
            k * (gap - 2.0 * z_da) + (node.d1 - tree.mu1) - (node.cond_mean - tree.mu2) - 4.0 * z;
        mean_rt += node.prob * z;
    }
    g[0] = (gap - 4.0 * z_da) - 2.0 * mean_rt;
    g
}

/// Solves the centralized (cost-minimizing) dispatch on the tree.
pub fn solve_centralized(curve: &SupplyCurve, tree: &ScenarioTree) -> Result<NumericSolution> {
    solve_stationary(curve, tree, Regime::Centralized)
}

/// Solves the decentralized (profit-maximizing) dispatch on the tree.
pub fn solve_decentralized(curve: &SupplyCurve, tree: &ScenarioTree) -> Result<NumericSolution> {
    solve_stationary(curve, tree, Regime::Decentralized)
}

fn solve_stationary(
    curve: &SupplyCurve,
    tree: &ScenarioTree,
    regime: Regime,
) -> Result<NumericSolution> {
    tree.validate()?;
    let n = tree.nodes.len();
    let dim = n + 1;

    // A flat supply curve makes every dispatch cost- and profit-neutral;
    // report the null schedule rather than dividing by zero.
    if curve.beta == 0.0 {
        let z_rt = vec![0.0; n];
        let objective = match regime {
            Regime::Centralized => expected_cost(curve, tree, 0.0, &z_rt),
            Regime::Decentralized => expected_profit(curve, tree, 0.0, &z_rt),
            Regime::NoBattery => unreachable!("solve entry points fix the regime"),
        };
        return Ok(NumericSolution {
            z1_da: 0.0,
            z1_rt: z_rt,
            expected_rt: 0.0,
            objective,
            foc_residual_max: 0.0,
            degenerate: true,
        });
    }

    let grad = |x: &[f64]| -> Vec<f64> {
        match regime {
            Regime::Centralized => centralized_gradient(curve, tree, x),
            Regime::Decentralized => decentralized_gradient(curve, tree, x),
            Regime::NoBattery => unreachable!("solve entry points fix the regime"),
        }
    };

    // The gradient is affine, so evaluating it on the standard basis
    // recovers the stationarity system A x = b exactly.
    let g0 = grad(&vec![0.0; dim]);
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        let gj = grad(&e);
        e[j] = 0.0;
        for i in 0..dim {
            a[(i, j)] = gj[i] - g0[i];
        }
    }
    let b = DVector::from_iterator(dim, g0.iter().map(|v| -v));

    // Rank-deficiency means a whole affine set of optima (the all-fast
    // centralized case: only z_da + z_rt matters). Fall back to the
    // minimum-norm least-squares solution and flag it.
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s));
    let well_conditioned = s_min.is_finite() && s_min > 1e-10 * s_max;
    let degenerate = !well_conditioned;

    let lu = a.clone().lu();
    let resolve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
        if degenerate {
            svd.solve(rhs, 1e-12 * s_max).ok()
        } else {
            lu.solve(rhs)
        }
    };

    let mut x =
        resolve(&b).ok_or_else(|| Error::degenerate("stationarity system could not be solved"))?;

    // Iterative refinement against the true gradient squeezes the last few
    // bits out of the solve; the system is tiny so this is essentially free.
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let gx = grad(x.as_slice());
        let rmax = gx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rmax >= best {
            break;
        }
        best = rmax;
        let r = DVector::from_iterator(dim, gx.iter().map(|v| -v));
        match resolve(&r) {
            Some(delta) => x += delta,
            None => break,
        }
    }

    let z1_da = x[0];
    let z1_rt: Vec<f64> = x.as_slice()[1..].to_vec();
    let expected_rt = tree
        .nodes
        .iter()
        .zip(&z1_rt)
        .map(|(node, &z)| node.prob * z)
        .sum();
    let objective = match regime {
        Regime::Centralized => expected_cost(curve, tree, z1_da, &z1_rt),
        Regime::Decentralized => expected_profit(curve, tree, z1_da, &z1_rt),
        Regime::NoBattery => unreachable!("solve entry points fix the regime"),
    };
    let res = foc_residuals(curve, tree, regime, z1_da, &z1_rt)?;
    let foc_residual_max = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    Ok(NumericSolution {
        z1_da,
        z1_rt,
        expected_rt,
        objective,
        foc_residual_max,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::JointDemand;
    use crate::regimes::{
        centralized_schedule, cost_centralized, cost_decentralized, decentralized_da_discharge,
        decentralized_rt_mean_discharge, decentralized_schedule,
    };
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn normal_tree(
        mu1: f64,
        mu2: f64,
        s1: f64,
        s2: f64,
        rho: f64,
        n: usize,
    ) -> (JointDemand, ScenarioTree) {
        let dist = JointDemand::normal(mu1, mu2, s1, s2, rho).unwrap();
        let nd = match &dist {
            JointDemand::Normal(nd) => nd.clone(),
            _ => unreachable!(),
        };
        let tree = ScenarioTree::from_normal(&nd, n, n).unwrap();
        (dist, tree)
    }

    #[test]
    fn normal_tree_reproduces_moments_exactly() {
        let (_, tree) = normal_tree(9.0, 4.0, 2.0, 3.0, 0.6, 16);
        let tm = tree.moments();
        assert_abs_diff_eq!(tm.mean_d1, 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.mean_d2, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.var_d1, 4.0, epsilon = 1e-11);
        assert_abs_diff_eq!(tm.var_d2, 9.0, epsilon = 1e-11);
        assert_abs_diff_eq!(tm.cov, 0.6 * 2.0 * 3.0, epsilon = 1e-11);
        tree.validate().unwrap();
    }

    #[test]
    fn empirical_tree_matches_sample_statistics() {
        let pairs = vec![(1.0, 2.0), (1.0, 4.0), (3.0, 5.0), (5.0, 8.0)];
        let emp = EmpiricalJointDemand::new(pairs, 3).unwrap();
        let tree = ScenarioTree::from_empirical(&emp);
        assert_eq!(tree.nodes.len(), 3);
        assert_abs_diff_eq!(tree.nodes[0].prob, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tree.nodes[0].cond_mean, 3.0, epsilon = 1e-15);
        assert_eq!(tree.nodes[0].branches.len(), 2);
        let tm = tree.moments();
        let m = emp.moments();
        assert_abs_diff_eq!(tm.mean_d1, m.mu1, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.mean_d2, m.mu2, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.var_d1, m.sigma1 * m.sigma1, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.var_d2, m.sigma2 * m.sigma2, epsilon = 1e-12);
        tree.validate().unwrap();
    }

    #[test]
    fn validate_rejects_malformed_trees() {
        let (_, good) = normal_tree(1.0, 0.0, 1.0, 1.0, 0.0, 4);

        let mut no_nodes = good.clone();
        no_nodes.nodes.clear();
        assert!(no_nodes.validate().is_err());

        let mut bad_prob = good.clone();
        bad_prob.nodes[0].prob = -0.1;
        assert!(bad_prob.validate().is_err());

        let mut leaky = good.clone();
        leaky.nodes[0].branches[0].prob *= 0.5;
        assert!(leaky.validate().is_err());

        let mut unsorted = good.clone();
        unsorted.nodes.swap(0, 1);
        assert!(unsorted.validate().is_err());
    }

    #[test]
    fn deterministic_solves_match_hand_values() {
        // No uncertainty: one node, one branch. The centralized battery
        // moves half the gap day-ahead and is idle in real time.
        let (_, tree) = normal_tree(4.0, 0.0, 0.0, 0.0, 0.0, 16);
        assert_eq!(tree.nodes.len(), 1);
        let curve = SupplyCurve::new(0.0, 1.0, 0.5).unwrap();

        let cn = solve_centralized(&curve, &tree).unwrap();
        assert_abs_diff_eq!(cn.z1_da, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cn.z1_rt[0], 0.0, epsilon = 1e-12);
        assert!(!cn.degenerate);
        assert!(cn.foc_residual_max < 1e-12);

        // Profit maximizer withholds: z_da = (2-k) gap / (2 (4-k)) with
        // k = 0.5 gives 1.5 * 4 / 7 = 6/7, and shifts k gap / (2 (4-k))
        // = 2/7 into real time.
        let dcn = solve_decentralized(&curve, &tree).unwrap();
        assert_abs_diff_eq!(dcn.z1_da, 6.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dcn.z1_rt[0], 2.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dcn.expected_rt, 2.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn slow_fleet_limit_pins_day_ahead_discharge() {
        // Nearly all-slow fleet, gap of 4: day-ahead discharge approaches
        // the quarter-gap limit from below.
        let (_, tree) = normal_tree(4.0, 0.0, 0.0, 0.0, 0.0, 8);
        let curve = SupplyCurve::new(0.0, 1.0, 0.01).unwrap();
        let dcn = solve_decentralized(&curve, &tree).unwrap();
        assert_abs_diff_eq!(dcn.z1_da, 0.997494, epsilon = 1e-6);
        assert_abs_diff_eq!(dcn.expected_rt, 0.005013, epsilon = 1e-6);
        assert_abs_diff_eq!(
            dcn.z1_da,
            decentralized_da_discharge(0.01, 4.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn numeric_solutions_match_closed_form_policies() {
        let cases = [
            (1.0, 2.0, 0.5, 3.0, 1.0, 1.0, 1.0, 0.0),
            (2.5, 0.8, 0.37, 9.0, 4.0, 2.0, 3.0, 0.6),
            (2.5, 0.8, 0.93, 9.0, 14.0, 2.0, 3.0, -0.7),
            (0.0, 3.0, 0.66, 25.0, 10.0, 5.0, 0.5, 0.25),
        ];
        for &(alpha, beta, k, mu1, mu2, s1, s2, rho) in &cases {
            let curve = SupplyCurve::new(alpha, beta, k).unwrap();
            let (dist, tree) = normal_tree(mu1, mu2, s1, s2, rho, 16);
            let m = dist.moments();

            let cn = solve_centralized(&curve, &tree).unwrap();
            let cn_schedule = centralized_schedule(&dist);
            assert_abs_diff_eq!(cn.z1_da, cn_schedule.z1_da, epsilon = 1e-9);
            for (node, &z) in tree.nodes.iter().zip(&cn.z1_rt) {
                assert_abs_diff_eq!(z, cn_schedule.rt_discharge(node.d1), epsilon = 1e-9);
            }
            let cn_cost = cost_centralized(&curve, &m);
            assert_abs_diff_eq!(cn.objective, cn_cost, epsilon = 1e-10 * cn_cost.abs());
            assert!(
                cn.foc_residual_max < 1e-10,
                "residual {}",
                cn.foc_residual_max
            );
            assert!(!cn.degenerate);

            let dcn = solve_decentralized(&curve, &tree).unwrap();
            let dcn_schedule = decentralized_schedule(&curve, &dist);
            assert_abs_diff_eq!(dcn.z1_da, dcn_schedule.z1_da, epsilon = 1e-9);
            for (node, &z) in tree.nodes.iter().zip(&dcn.z1_rt) {
                assert_abs_diff_eq!(z, dcn_schedule.rt_discharge(node.d1), epsilon = 1e-9);
            }
            assert_abs_diff_eq!(
                dcn.expected_rt,
                decentralized_rt_mean_discharge(k, m.mean_gap()),
                epsilon = 1e-9
            );
            // Generation cost at the profit maximizer's dispatch matches
            // its closed form.
            let dcn_cost = expected_cost(&curve, &tree, dcn.z1_da, &dcn.z1_rt);
            let expected = cost_decentralized(&curve, &m);
            assert_abs_diff_eq!(dcn_cost, expected, epsilon = 1e-10 * expected.abs());
            assert!(dcn.foc_residual_max < 1e-10);
        }
    }

    #[test]
    fn closed_form_schedules_have_tiny_residuals_on_trees() {
        let curve = SupplyCurve::new(2.0, 1.3, 0.41).unwrap();
        let (dist, tree) = normal_tree(30_000.0, 21_000.0, 4_000.0, 3_500.0, 0.55, 16);

        let cn = centralized_schedule(&dist);
        let res = schedule_foc_residuals(&curve, &tree, Regime::Centralized, &cn).unwrap();
        let max = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-10, "centralized residual {max}");

        let dcn = decentralized_schedule(&curve, &dist);
        let res = schedule_foc_residuals(&curve, &tree, Regime::Decentralized, &dcn).unwrap();
        let max = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-10, "decentralized residual {max}");
    }

    #[test]
    fn wrong_policies_fail_the_conditions() {
        let curve = SupplyCurve::new(1.0, 2.0, 0.5).unwrap();
        let (dist, tree) = normal_tree(3.0, 1.0, 1.0, 1.0, 0.0, 8);
        // Swap the schedules between regimes: residuals must be material.
        let res = schedule_foc_residuals(
            &curve,
            &tree,
            Regime::Centralized,
            &decentralized_schedule(&curve, &dist),
        )
        .unwrap();
        assert!(res.iter().any(|r| r.abs() > 1e-3));
        let res = schedule_foc_residuals(
            &curve,
            &tree,
            Regime::Decentralized,
            &centralized_schedule(&dist),
        )
        .unwrap();
        assert!(res.iter().any(|r| r.abs() > 1e-3));
    }

    #[test]
    fn solutions_are_local_optima_of_the_tree_objectives() {
        let curve = SupplyCurve::new(1.0, 0.8, 0.44).unwrap();
        let (_, tree) = normal_tree(12.0, 5.0, 2.0, 1.5, 0.3, 8);
        let n = tree.nodes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(41);

        let cn = solve_centralized(&curve, &tree).unwrap();
        let base_cost = expected_cost(&curve, &tree, cn.z1_da, &cn.z1_rt);
        let dcn = solve_decentralized(&curve, &tree).unwrap();
        let base_profit = expected_profit(&curve, &tree, dcn.z1_da, &dcn.z1_rt);

        for _ in 0..50 {
            let scale = 10.0f64.powf(rng.random_range(-3.0..1.0));
            let dir: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();

            let z_da = cn.z1_da + scale * dir[0];
            let z: Vec<f64> = cn
                .z1_rt
                .iter()
                .zip(&dir[1..])
                .map(|(a, b)| a + scale * b)
                .collect();
            assert!(expected_cost(&curve, &tree, z_da, &z) >= base_cost - 1e-9 * base_cost.abs());

            let z_da = dcn.z1_da + scale * dir[0];
            let z: Vec<f64> = dcn
                .z1_rt
                .iter()
                .zip(&dir[1..])
                .map(|(a, b)| a + scale * b)
                .collect();
            assert!(
                expected_profit(&curve, &tree, z_da, &z)
                    <= base_profit + 1e-9 * base_profit.abs().max(1.0)
            );
        }
    }

    #[test]
    fn all_fast_centralized_solve_is_degenerate_but_valid() {
        // With every generator fast, only z_da + z_rt matters to cost, so
        // the stationarity system is rank-deficient. The minimum-norm
        // solution still satisfies the conditions and the total discharge
        // is pinned down.
        let (_, tree) = normal_tree(4.0, 0.0, 0.0, 0.0, 0.0, 4);
        let curve = SupplyCurve::new(0.0, 1.0, 1.0).unwrap();
        let cn = solve_centralized(&curve, &tree).unwrap();
        assert!(cn.degenerate);
        assert!(cn.foc_residual_max < 1e-10);
        assert_abs_diff_eq!(cn.z1_da + cn.z1_rt[0], 2.0, epsilon = 1e-10);
        // Cost at the degenerate optimum still matches the closed form.
        let m = DemandMoments::normal(4.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(cn.objective, cost_centralized(&curve, &m), epsilon = 1e-12);
    }

    #[test]
    fn flat_supply_curve_is_degenerate() {
        let (_, tree) = normal_tree(4.0, 1.0, 1.0, 1.0, 0.0, 4);
        let curve = SupplyCurve::new(3.0, 0.0, 0.5).unwrap();
        let sol = solve_centralized(&curve, &tree).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.z1_da, 0.0);
        assert_eq!(sol.foc_residual_max, 0.0);
        // alpha * (mu1 + mu2) is all that is left of the cost.
        assert_abs_diff_eq!(sol.objective, 15.0, epsilon = 1e-12);
    }

    #[test]
    fn empirical_tree_solve_agrees_with_closed_forms_on_exact_support() {
        // One bin per distinct d1 value makes binned and exact conditioning
        // identical, so the tree optimum must match the closed-form policy.
        let pairs = vec![
            (10.0, 6.0),
            (10.0, 8.0),
            (12.0, 9.0),
            (14.0, 7.0),
            (14.0, 11.0),
            (16.0, 12.0),
        ];
        let dist = JointDemand::empirical(pairs, 4).unwrap();
        let emp = match &dist {
            JointDemand::Empirical(e) => e.clone(),
            _ => unreachable!(),
        };
        let tree = ScenarioTree::from_empirical(&emp);
        let curve = SupplyCurve::new(1.5, 0.9, 0.71).unwrap();
        let m = dist.moments();

        let cn = solve_centralized(&curve, &tree).unwrap();
        let schedule = centralized_schedule(&dist);
        assert_abs_diff_eq!(cn.z1_da, schedule.z1_da, epsilon = 1e-10);
        for (node, &z) in tree.nodes.iter().zip(&cn.z1_rt) {
            assert_abs_diff_eq!(z, schedule.rt_discharge(node.d1), epsilon = 1e-10);
        }
        let want = cost_centralized(&curve, &m);
        assert_abs_diff_eq!(cn.objective, want, epsilon = 1e-9 * want);

        let dcn = solve_decentralized(&curve, &tree).unwrap();
        let dcn_cost = expected_cost(&curve, &tree, dcn.z1_da, &dcn.z1_rt);
        let want = cost_decentralized(&curve, &m);
        assert_abs_diff_eq!(dcn_cost, want, epsilon = 1e-9 * want);
    }

    use crate::demand::DemandMoments;

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(proptest::test_runner::Config::with_cases(64))]

            /// On random normal instances the numeric optima agree with the
            /// closed-form policies.
            #[test]
            fn solver_matches_theory(
                alpha in 0.0f64..10.0,
                beta in 0.01f64..5.0,
                k in 0.05f64..0.999,
                mu1 in 0.0f64..100.0,
                mu2 in 0.0f64..100.0,
                s1 in 0.0f64..10.0,
                s2 in 0.0f64..10.0,
                rho in -0.9f64..0.9,
            ) {
                let curve = SupplyCurve::new(alpha, beta, k).unwrap();
                let (dist, tree) = normal_tree(mu1, mu2, s1, s2, rho, 8);
                let cn = solve_centralized(&curve, &tree).unwrap();
                let schedule = centralized_schedule(&dist);
                prop_assert!((cn.z1_da - schedule.z1_da).abs() < 1e-8 * (1.0 + mu1 + mu2));
                prop_assert!(cn.foc_residual_max < 1e-9 * (1.0 + mu1 + mu2));

                let dcn = solve_decentralized(&curve, &tree).unwrap();
                let schedule = decentralized_schedule(&curve, &dist);
                prop_assert!((dcn.z1_da - schedule.z1_da).abs() < 1e-8 * (1.0 + mu1 + mu2));
                prop_assert!(dcn.foc_residual_max < 1e-9 * (1.0 + mu1 + mu2));
            }
        }
    }
}
