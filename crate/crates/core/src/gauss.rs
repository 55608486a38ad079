//! Gaussian volume, L_p Gaussian surface measures and the flow functionals.
//!
//! For a body given by its support function the Gaussian volume is taken in
//! polar coordinates and transported to the support grid through the Gauss
//! map, `dξ = h det(b) / r^{n+1} dx`:
//!
//! `γ = (2π)^{-(n+1)/2} Σ_k w_k G_n(r_k) h_k det(b_k) / r_k^{n+1}`,
//!
//! with `G_n(r) = ∫_0^r e^{-s²/2} sⁿ ds`. No resampling onto a direction grid
//! is involved, and the exact gradient of this sum with respect to the nodal
//! support values is available through the transposed stencils.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{derive_geometry, BodyGeometry};
use crate::polytope::Polytope;
use crate::quad::{gauss_norm, radial_mass};
use crate::sphere::{dot, ScalarField, Vec3};

/// Default Monte Carlo seed.
pub const DEFAULT_SEED: u64 = 20240801;

const MC_SHARDS: u64 = 64;

/// The Gaussian weight of γ_{n+1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussDensityContext {
    pub dim: usize,
    pub norm: f64,
}

impl GaussDensityContext {
    pub fn new(dim: usize) -> Self {
        GaussDensityContext { dim, norm: gauss_norm(dim) }
    }

    /// `(2π)^{(n+1)/2}`, the constant θ of the unnormalized flow.
    pub fn inverse_norm(&self) -> f64 {
        1.0 / self.norm
    }
}

/// Gaussian volume of a smooth body.
pub fn gaussian_volume(g: &BodyGeometry) -> f64 {
    let dim = g.dim();
    let c = gauss_norm(dim);
    let np1 = dim as i32 + 1;
    let vals: Vec<f64> = (0..g.h().values().len())
        .map(|k| {
            let r = g.radial_r().values()[k];
            c * radial_mass(dim, r) * g.h().values()[k] * g.det_b()[k] / r.powi(np1)
        })
        .collect();
    crate::sphere::integrate_values(g.h().grid(), &vals)
}

/// Gradient of [`gaussian_volume`] with respect to the nodal support values.
///
/// Dividing by the quadrature weights gives a density that approximates
/// `(2π)^{-(n+1)/2} e^{-r²/2} det(b)`, the first variation of γ.
pub fn gaussian_volume_gradient(g: &BodyGeometry) -> Vec<f64> {
    let dim = g.dim();
    let c = gauss_norm(dim);
    let grid = g.h().grid();
    let w = grid.weights();
    let n = w.len();
    let np1 = dim as i32 + 1;
    let mut out = vec![0.0; n];
    let mut wg = vec![vec![0.0; n]; dim];
    let mut wh = vec![vec![0.0; n]; if dim == 1 { 1 } else { 3 }];
    for k in 0..n {
        let h = g.h().values()[k];
        let r = g.radial_r().values()[k];
        let d = g.det_b()[k];
        let b = g.b()[k];
        let gm = radial_mass(dim, r);
        let rp = r.powi(np1);
        let d_r = c * h * d * ((-0.5 * r * r).exp() * r.powi(dim as i32) / rp - (np1 as f64) * gm / (rp * r));
        let tr_cof = if dim == 1 { 1.0 } else { b.xx + b.yy };
        let base = c * gm * h / rp;
        out[k] = w[k] * (c * gm * d / rp + d_r * h / r + base * tr_cof);
        let gr = g.grad_h()[k];
        for a in 0..dim {
            wg[a][k] = w[k] * d_r * gr[a] / r;
        }
        if dim == 1 {
            wh[0][k] = w[k] * base;
        } else {
            wh[0][k] = w[k] * base * b.yy;
            wh[1][k] = w[k] * base * (-2.0 * b.xy);
            wh[2][k] = w[k] * base * b.xx;
        }
    }
    let st = grid.stencils();
    for (op, x) in st.grad.iter().zip(&wg) {
        op.apply_transpose_add(x, &mut out);
    }
    for (op, x) in st.hess.iter().zip(&wh) {
        op.apply_transpose_add(x, &mut out);
    }
    out
}

/// Monte Carlo estimate of γ_{n+1} of `{x : inside(x)}` with its binomial
/// standard error. Samples are split over fixed ChaCha8 substreams, so the
/// result depends only on `seed` and `samples`.
pub fn gaussian_volume_mc<F>(dim: usize, inside: F, samples: u64, seed: u64) -> (f64, f64)
where
    F: Fn(&Vec3) -> bool + Sync,
{
    let per = samples / MC_SHARDS;
    let extra = samples % MC_SHARDS;
    let hits: u64 = (0..MC_SHARDS)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let count = per + u64::from(s < extra);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut x = [0.0; 3];
                for xi in x.iter_mut().take(dim + 1) {
                    *xi = StandardNormal.sample(&mut rng);
                }
                hits += u64::from(inside(&x));
            }
            hits
        })
        .sum();
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Membership in the Wulff shape of a sampled support function, i.e.
/// `x·v ≤ h(v)` for every grid direction `v`.
pub fn support_membership(h: &ScalarField) -> impl Fn(&Vec3) -> bool + Sync + '_ {
    move |x| h.grid().nodes().iter().zip(h.values()).all(|(v, &hv)| dot(x, v) <= hv)
}

/// Monte Carlo γ of the body with support data `h`.
pub fn gaussian_volume_mc_support(h: &ScalarField, samples: u64, seed: u64) -> (f64, f64) {
    gaussian_volume_mc(h.dim(), support_membership(h), samples, seed)
}

/// Monte Carlo γ of a polytope, using its exact membership test.
pub fn gaussian_volume_mc_polytope(q: &Polytope, samples: u64, seed: u64) -> (f64, f64) {
    gaussian_volume_mc(q.dim(), |x| q.contains(x), samples, seed)
}

/// Density of `S_{p,γ_{n+1},K}` with respect to the spherical measure.
#[derive(Debug, Clone)]
pub struct MeasureField {
    pub density: ScalarField,
    pub p: f64,
}

impl MeasureField {
    pub fn total_mass(&self) -> f64 {
        self.density.integrate()
    }
}

/// `(2π)^{-(n+1)/2} e^{-(h²+|∇h|²)/2} h^{1-p} det(∇²h + hI)`.
pub fn lp_surface_density(g: &BodyGeometry, p: f64) -> Result<MeasureField> {
    let c = gauss_norm(g.dim());
    let h = g.h().values();
    if p != 1.0 {
        if let Some(node) = h.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidBody { node, reason: "h must be positive when p ≠ 1".into() });
        }
    }
    let vals = (0..h.len())
        .map(|k| {
            let r = g.radial_r().values()[k];
            c * (-0.5 * r * r).exp() * h[k].powf(1.0 - p) * g.det_b()[k]
        })
        .collect();
    Ok(MeasureField { density: ScalarField::new(g.h().grid().clone(), vals)?, p })
}

/// Functionals and residuals of a body against data `f` at exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    #[serde(with = "crate::io::f17")]
    pub psi: f64,
    /// `Ψ − γ`; not defined at `p = 0`, where it is NaN.
    #[serde(with = "crate::io::f17")]
    pub phi: f64,
    #[serde(with = "crate::io::f17")]
    pub gamma: f64,
    #[serde(with = "crate::io::f17")]
    pub theta: f64,
    #[serde(with = "crate::io::f17")]
    pub residual_stationary: f64,
    #[serde(with = "crate::io::f17")]
    pub residual_normalized: f64,
    #[serde(with = "crate::io::f17")]
    pub c_estimate: f64,
}

/// Ψ: `(1/p)∫ f hᵖ`, or `∫ f log h` at `p = 0`.
pub fn psi_functional(h: &ScalarField, f: &ScalarField, p: f64) -> Result<f64> {
    h.same_grid(f)?;
    let vals: Vec<f64> = if p == 0.0 {
        h.values().iter().zip(f.values()).map(|(h, f)| f * h.ln()).collect()
    } else {
        h.values().iter().zip(f.values()).map(|(h, f)| f * h.powf(p) / p).collect()
    };
    Ok(crate::sphere::integrate_values(h.grid(), &vals))
}

/// Φ: `(1/p)∫ f hᵖ − γ`, defined for `p ≠ 0` only.
pub fn phi_functional(g: &BodyGeometry, f: &ScalarField, p: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::InvalidInput("Φ is not defined at p = 0".into()));
    }
    Ok(psi_functional(g.h(), f, p)? - gaussian_volume(g))
}

/// `θ = ∫ e^{-r²/2} r^{n+1} dξ / ∫ hᵖ f dx`, both integrals on the support
/// grid.
pub fn theta_formula(g: &BodyGeometry, f: &ScalarField, p: f64) -> Result<f64> {
    g.h().same_grid(f)?;
    let h = g.h().values();
    let num: Vec<f64> = (0..h.len())
        .map(|k| {
            let r = g.radial_r().values()[k];
            (-0.5 * r * r).exp() * h[k] * g.det_b()[k]
        })
        .collect();
    let den: Vec<f64> = h.iter().zip(f.values()).map(|(h, f)| h.powf(p) * f).collect();
    let grid = g.h().grid();
    Ok(crate::sphere::integrate_values(grid, &num) / crate::sphere::integrate_values(grid, &den))
}

pub fn functionals(g: &BodyGeometry, f: &ScalarField, p: f64) -> Result<FunctionalRecord> {
    g.h().same_grid(f)?;
    let gamma = gaussian_volume(g);
    let psi = psi_functional(g.h(), f, p)?;
    let phi = if p == 0.0 { f64::NAN } else { psi - gamma };
    let theta = theta_formula(g, f, p)?;
    let dens = lp_surface_density(g, p)?;
    let fmax = f.max();
    let inv_norm = 1.0 / gauss_norm(g.dim());
    let mut rs: f64 = 0.0;
    let mut rn: f64 = 0.0;
    for (d, fv) in dens.density.values().iter().zip(f.values()) {
        rs = rs.max((d - fv).abs());
        rn = rn.max((inv_norm * d / theta - fv).abs());
    }
    Ok(FunctionalRecord {
        psi,
        phi,
        gamma,
        theta,
        residual_stationary: rs / fmax,
        residual_normalized: rn / fmax,
        c_estimate: 1.0 / theta,
    })
}

/// A finite-difference check of the first variation of γ at p = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
}

impl VariationalCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let scale = rhs.abs().max(f64::MIN_POSITIVE);
        VariationalCheck { lhs, rhs, rel_error: (lhs - rhs).abs() / scale }
    }
}

/// Default step of [`variational_check`].
pub const DEFAULT_VARIATION_STEP: f64 = 1e-4;

/// Compares `(γ([h e^{tg}]) − γ([h e^{−tg}]))/(2t)` with `∫ g dS_{0,γ,Q}`
/// for a smooth body.
pub fn variational_check(q: &BodyGeometry, g: &ScalarField, step: f64) -> Result<VariationalCheck> {
    q.h().same_grid(g)?;
    let perturbed = |s: f64| -> Result<f64> {
        let ht = q.h().zip_map(g, |h, gv| h * (s * gv).exp())?;
        let geo = derive_geometry(&ht)?;
        if crate::geometry::check_uniform_convexity(&geo, 0.0).uniformly_convex {
            Ok(gaussian_volume(&geo))
        } else {
            let wulff = crate::geometry::wulff_polytope(&ht)?;
            Ok(wulff.gaussian_volume())
        }
    };
    let lhs = (perturbed(step)? - perturbed(-step)?) / (2.0 * step);
    let dens = lp_surface_density(q, 0.0)?;
    let rhs = dens.density.zip_map(g, |d, gv| d * gv)?.integrate();
    Ok(VariationalCheck::new(lhs, rhs))
}

/// The same check for a polytope, with `g` given per half-space.
pub fn variational_check_polytope(q: &Polytope, g: &[f64], step: f64) -> Result<VariationalCheck> {
    if g.len() != q.halfspaces().len() {
        return Err(Error::InvalidInput("one value of g per half-space is required".into()));
    }
    let perturbed = |s: f64| -> Result<f64> {
        let hs = q
            .halfspaces()
            .iter()
            .zip(g)
            .map(|(h, gv)| crate::polytope::HalfSpace { normal: h.normal, offset: h.offset * (s * gv).exp() })
            .collect();
        Ok(Polytope::from_halfspaces(q.dim(), hs)?.gaussian_volume())
    };
    let lhs = (perturbed(step)? - perturbed(-step)?) / (2.0 * step);
    let rhs = (0..g.len()).map(|i| g[i] * q.facet_cone_measure(i)).sum();
    Ok(VariationalCheck::new(lhs, rhs))
}
