//! Robust line fitting for the supply curve.
//!
//! Day-ahead price scrapes are full of spikes — scarcity hours, data
//! glitches — that wreck an ordinary least-squares fit of the price/demand
//! relation. A least-absolute-deviations fit shrugs them off. The classic
//! iteratively-reweighted-least-squares scheme converges fast here because
//! the model is a two-parameter line.

use crate::{Error, Result};

/// A fitted `price = alpha + beta * demand` line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupplyFit {
    pub alpha: f64,
    pub beta: f64,
    /// Reweighting iterations actually used.
    pub iterations: u32,
    /// False when the iteration cap was hit before the parameters settled.
    pub converged: bool,
    pub observations: usize,
}

const MAX_ITERATIONS: u32 = 200;

/// Fits the line minimizing the sum of absolute residuals over
/// `(demand, price)` points.
pub fn lad_fit(points: &[(f64, f64)]) -> Result<SupplyFit> {
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "supply-curve fit needs at least two priced observations, got {}",
            points.len()
        )));
    }
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("supply-curve fit requires finite points"));
        }
    }

    // Residual floor and convergence tolerance scale with the data: without
    // this the reweighting blows up when some residual crosses zero.
    let price_scale = points.iter().map(|p| p.1.abs()).sum::<f64>() / points.len() as f64;
    let demand_scale = points.iter().map(|p| p.0.abs()).sum::<f64>() / points.len() as f64;
    let floor = 1e-6 * price_scale.max(1e-12);
    let tol = 1e-10 * price_scale.max(1.0);

    let (mut alpha, mut beta) = weighted_line(points, |_| 1.0)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (a, b) = weighted_line(points, |&(x, y)| {
            1.0 / (y - alpha - beta * x).abs().max(floor)
        })?;
        let step = (a - alpha).abs() + (b - beta).abs() * demand_scale.max(1.0);
        alpha = a;
        beta = b;
        if step <= tol {
            converged = true;
            break;
        }
    }

    Ok(SupplyFit {
        alpha,
        beta,
        iterations,
        converged,
        observations: points.len(),
    })
}

/// Closed-form weighted least squares for a line.
fn weighted_line(points: &[(f64, f64)], weight: impl Fn(&(f64, f64)) -> f64) -> Result<(f64, f64)> {
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let w = weight(p);
        sw += w;
        swx += w * p.0;
        swy += w * p.1;
        swxx += w * p.0 * p.0;
        swxy += w * p.0 * p.1;
    }
    let det = sw * swxx - swx * swx;
    // The determinant is sw^2 * weighted variance of demand; an essentially
    // flat demand column cannot identify a slope.
    let identified = det.is_finite() && det > 1e-12 * sw * swxx.max(1.0);
    if !identified {
        return Err(Error::degenerate(
            "demand does not vary enough to identify a price slope",
        ));
    }
    let beta = (sw * swxy - swx * swy) / det;
    let alpha = (swy - beta * swx) / sw;
    Ok((alpha, beta))
}
