//! Support functions of the standard test bodies.

use std::sync::Arc;

use crate::sphere::{ScalarField, SphericalGrid};

/// The centred ball of radius `r`.
pub fn ball(grid: &Arc<SphericalGrid>, r: f64) -> ScalarField {
    ScalarField::constant(grid, r)
}

/// The centred ellipse (S¹) or spheroid (S², third semi-axis `b`) with
/// semi-axes `a` along e₁ and `b` otherwise.
pub fn ellipse(grid: &Arc<SphericalGrid>, a: f64, b: f64) -> ScalarField {
    ellipsoid(grid, [a, b, b])
}

/// Support function `√(Σ aᵢ² xᵢ²)` of an axis-aligned ellipsoid.
pub fn ellipsoid(grid: &Arc<SphericalGrid>, axes: [f64; 3]) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        (axes[0].powi(2) * x[0] * x[0] + axes[1].powi(2) * x[1] * x[1] + axes[2].powi(2) * x[2] * x[2]).sqrt()
    })
}

/// `r + eps·cos(kθ)`, with θ the angle from e₁ on S¹ and the polar angle
/// on S². Uniformly convex on S¹ iff `|eps|(k²−1) < r`.
pub fn perturbed_ball(grid: &Arc<SphericalGrid>, r: f64, eps: f64, k: u32) -> ScalarField {
    let axis = if grid.dim() == 1 { 0 } else { 2 };
    ScalarField::from_fn(grid, |x| r + eps * chebyshev(k, x[axis]))
}

fn chebyshev(k: u32, c: f64) -> f64 {
    let (mut t0, mut t1) = (1.0, c);
    match k {
        0 => 1.0,
        _ => {
            for _ in 1..k {
                (t0, t1) = (t1, 2.0 * c * t1 - t0);
            }
            t1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbed_ball_is_a_cosine_mode() {
        let g = SphericalGrid::circle(64).unwrap();
        let h = perturbed_ball(&g, 1.0, 0.1, 3);
        for (k, v) in h.values().iter().enumerate() {
            let t = g.theta()[k];
            assert!((v - (1.0 + 0.1 * (3.0 * t).cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn ellipse_extremes() {
        let g = SphericalGrid::circle(64).unwrap();
        let h = ellipse(&g, 2.0, 1.0);
        assert!((h.values()[0] - 2.0).abs() < 1e-15);
        assert!((h.values()[16] - 1.0).abs() < 1e-15);
    }
}
