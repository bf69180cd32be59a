//! Gauss–Hermite quadrature against the standard normal density.
//!
//! Nodes and probabilities are produced by the Golub–Welsch algorithm: the
//! quadrature points are the eigenvalues of the Jacobi matrix of the Hermite
//! recurrence and the weights fall out of the first eigenvector components.
//! An `n`-point rule integrates polynomials up to degree `2n - 1` exactly,
//! which is more than enough for the quadratic payoffs this crate works
//! with — any rule with `n >= 2` already reproduces means and variances to
//! float precision.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// A discretization of the standard normal: `sum(probs) = 1`,
/// `sum(probs * nodes) = 0`, `sum(probs * nodes^2) = 1` (up to rounding).
#[derive(Clone, Debug)]
pub struct GaussHermite {
    /// Quadrature points in standard-normal units, ascending, symmetric
    /// about zero.
    pub nodes: Vec<f64>,
    /// Strictly positive probabilities, symmetric, summing to one.
    pub probs: Vec<f64>,
}

/// Maximum rule size. Eigen-decomposition cost grows cubically and nothing
/// in this model benefits from more points than this.
pub const MAX_POINTS: usize = 512;

/// Builds the `n`-point rule.
pub fn gauss_hermite(n: usize) -> Result<GaussHermite> {
    if n == 0 {
        return Err(Error::invalid("quadrature rule needs at least one point"));
    }
    if n > MAX_POINTS {
        return Err(Error::invalid(format!(
            "quadrature rule of {n} points exceeds the maximum of {MAX_POINTS}"
        )));
    }
    if n == 1 {
        return Ok(GaussHermite {
            nodes: vec![0.0],
            probs: vec![1.0],
        });
    }

    // Jacobi matrix of the (physicists') Hermite recurrence: zero diagonal,
    // off-diagonal sqrt(i/2).
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eigen = SymmetricEigen::new(jacobi);

    // Nodes are eigenvalues rescaled from the e^{-x^2} weight to the
    // standard normal; each probability is the squared first component of
    // the corresponding (unit) eigenvector.
    let mut points: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let x = eigen.eigenvalues[j];
            let v0 = eigen.eigenvectors[(0, j)];
            (std::f64::consts::SQRT_2 * x, v0 * v0)
        })
        .collect();
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("eigenvalues are finite"));

    // The rule is symmetric in exact arithmetic; enforce that exactly so
    // that odd moments vanish by construction rather than by luck.
    let mut nodes = vec![0.0; n];
    let mut probs = vec![0.0; n];
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let z = (points[j].0 - points[i].0) / 2.0;
        let p = (points[i].1 + points[j].1) / 2.0;
        nodes[i] = -z;
        nodes[j] = z;
        probs[i] = p;
        probs[j] = p;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        probs[n / 2] = points[n / 2].1;
    }

    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(GaussHermite { nodes, probs })
}
