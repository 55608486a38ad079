//! Geometry derived from a sampled support function: boundary points,
//! principal radii, Gauss curvature, the radial function and polar duality.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::polytope::Polytope;
use crate::sphere::{dot, grad_values, hessian_values, norm, GridKind, ScalarField, Sym2, Vec3};

/// Default threshold for uniform convexity of `b`.
pub const DEFAULT_EPS_CONVEX: f64 = 1e-8;

/// Fields derived from `h` at every node of its grid.
#[derive(Debug, Clone)]
pub struct BodyGeometry {
    h: ScalarField,
    grad_h: Vec<[f64; 2]>,
    hess_h: Vec<Sym2>,
    b: Vec<Sym2>,
    det_b: Vec<f64>,
    gauss_k: ScalarField,
    radial_r: ScalarField,
    boundary: Vec<Vec3>,
    min_eig_b: ScalarField,
    max_eig_b: Vec<f64>,
}

/// Builds [`BodyGeometry`] from `h`, which must be positive.
pub fn derive_geometry(h: &ScalarField) -> Result<BodyGeometry> {
    if let Some(node) = h.values().iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidBody { node, reason: format!("support value {} is not positive", h.values()[node]) });
    }
    let grid = h.grid();
    let dim = grid.dim();
    let hv = h.values();
    let grad_h = grad_values(grid, hv);
    let hess_h = hessian_values(grid, hv);
    let n = hv.len();
    let mut b = Vec::with_capacity(n);
    let mut det_b = Vec::with_capacity(n);
    let mut k = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut emin = Vec::with_capacity(n);
    let mut emax = Vec::with_capacity(n);
    for i in 0..n {
        let bi = hess_h[i].shifted(dim, hv[i]);
        let d = bi.det(dim);
        let (lo, hi) = bi.eigenvalues(dim);
        let g = grad_h[i];
        let x = grid.node(i);
        let [e1, e2] = grid.frame(i);
        let yi = [
            hv[i] * x[0] + g[0] * e1[0] + g[1] * e2[0],
            hv[i] * x[1] + g[0] * e1[1] + g[1] * e2[1],
            hv[i] * x[2] + g[0] * e1[2] + g[1] * e2[2],
        ];
        b.push(bi);
        det_b.push(d);
        k.push(1.0 / d);
        r.push((hv[i] * hv[i] + g[0] * g[0] + g[1] * g[1]).sqrt());
        y.push(yi);
        emin.push(lo);
        emax.push(hi);
    }
    Ok(BodyGeometry {
        h: h.clone(),
        grad_h,
        hess_h,
        b,
        det_b,
        gauss_k: ScalarField::new(grid.clone(), k)?,
        radial_r: ScalarField::new(grid.clone(), r)?,
        boundary: y,
        min_eig_b: ScalarField::new(grid.clone(), emin)?,
        max_eig_b: emax,
    })
}

impl BodyGeometry {
    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn h(&self) -> &ScalarField {
        &self.h
    }

    /// `∇h` in the tangent frame.
    pub fn grad_h(&self) -> &[[f64; 2]] {
        &self.grad_h
    }

    pub fn hess_h(&self) -> &[Sym2] {
        &self.hess_h
    }

    /// Principal-radii matrix `∇²h + h I`.
    pub fn b(&self) -> &[Sym2] {
        &self.b
    }

    pub fn det_b(&self) -> &[f64] {
        &self.det_b
    }

    pub fn gauss_k(&self) -> &ScalarField {
        &self.gauss_k
    }

    /// `|y| = √(h² + |∇h|²)` at the support node, i.e. the radial function at
    /// the image direction `y/|y|`.
    pub fn radial_r(&self) -> &ScalarField {
        &self.radial_r
    }

    /// Boundary point `y = h x + ∇h` with outer normal `x`.
    pub fn boundary(&self) -> &[Vec3] {
        &self.boundary
    }

    pub fn min_eig_b(&self) -> &ScalarField {
        &self.min_eig_b
    }

    pub fn max_eig_b(&self) -> &[f64] {
        &self.max_eig_b
    }

    /// `v = r/h`.
    pub fn v_factor(&self) -> Vec<f64> {
        self.radial_r.values().iter().zip(self.h.values()).map(|(r, h)| r / h).collect()
    }

    /// Direction `ξ = y/|y|` of the boundary point with normal at node `k`.
    pub fn image_direction(&self, k: usize) -> Vec3 {
        let y = self.boundary[k];
        let r = self.radial_r.values()[k];
        [y[0] / r, y[1] / r, y[2] / r]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport {
    pub uniformly_convex: bool,
    pub min_eig: f64,
    pub node: usize,
}

/// Whether the smallest principal radius exceeds `eps` at every node.
pub fn check_uniform_convexity(g: &BodyGeometry, eps: f64) -> ConvexityReport {
    let (node, &min_eig) =
        g.min_eig_b.values().iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("grids are nonempty");
    ConvexityReport { uniformly_convex: min_eig > eps, min_eig, node }
}

/// Radial function of a body sampled on its direction grid.
#[derive(Debug, Clone)]
pub struct RadialBody {
    r: ScalarField,
    grad_r: Vec<[f64; 2]>,
    v_factor: ScalarField,
}

impl RadialBody {
    pub fn from_radial(r: ScalarField) -> Result<Self> {
        if let Some(node) = r.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidBody { node, reason: "radial value is not positive".into() });
        }
        let grad_r = r.grad();
        let v: Vec<f64> = r
            .values()
            .iter()
            .zip(&grad_r)
            .map(|(&r, g)| (1.0 + (g[0] * g[0] + g[1] * g[1]) / (r * r)).sqrt())
            .collect();
        let v_factor = ScalarField::new(r.grid().clone(), v)?;
        Ok(RadialBody { r, grad_r, v_factor })
    }

    pub fn r(&self) -> &ScalarField {
        &self.r
    }

    pub fn grad_r(&self) -> &[[f64; 2]] {
        &self.grad_r
    }

    /// `v = √(1 + |∇ log r|²)`.
    pub fn v_factor(&self) -> &ScalarField {
        &self.v_factor
    }

    /// Gauss curvature at the boundary point `r(ξ)ξ`, from the radial
    /// function alone: `v^{-n-2} r^{-3n} det(r² I + 2 ∇r ∇rᵀ − r ∇²r)`.
    pub fn gauss_curvature(&self) -> ScalarField {
        let dim = self.r.dim();
        let hess = self.r.covariant_hessian();
        let vals = (0..self.r.values().len())
            .map(|k| {
                let r = self.r.values()[k];
                let g = self.grad_r[k];
                let h = hess[k];
                let a = Sym2 {
                    xx: r * r + 2.0 * g[0] * g[0] - r * h.xx,
                    xy: 2.0 * g[0] * g[1] - r * h.xy,
                    yy: r * r + 2.0 * g[1] * g[1] - r * h.yy,
                };
                let v = self.v_factor.values()[k];
                v.powi(-(dim as i32) - 2) * r.powi(-3 * dim as i32) * a.det(dim)
            })
            .collect();
        ScalarField::new(self.r.grid().clone(), vals).expect("same grid")
    }
}

/// Resamples the radial function `|y(x)|` from the image directions
/// `y(x)/|y(x)|` onto the grid's own nodes.
///
/// On S¹ this is quintic interpolation in the image angle through the six
/// nearest image nodes, accurate enough that second differences of the
/// result keep the order of the grid stencils. On S² each target direction
/// is located by Newton iteration on the chart and `r(ξ) = h(x)/(ξ·x)` is
/// evaluated there.
pub fn support_to_radial(g: &BodyGeometry) -> Result<RadialBody> {
    let report = check_uniform_convexity(g, 0.0);
    if !report.uniformly_convex {
        return Err(Error::InvalidBody {
            node: report.node,
            reason: format!("principal radius {:e} is not positive; the Gauss map is not invertible", report.min_eig),
        });
    }
    let r = match g.h.grid().kind() {
        GridKind::Circle { .. } => radial_circle(g)?,
        GridKind::LatLon { .. } => radial_sphere(g)?,
    };
    RadialBody::from_radial(r)
}

fn radial_circle(g: &BodyGeometry) -> Result<ScalarField> {
    let grid = g.h.grid();
    let n = grid.len();
    let hv = g.h.values();
    let rv = g.radial_r.values();
    let psi: Vec<f64> = (0..n).map(|k| grid.theta()[k] + (g.grad_h[k][0] / hv[k]).atan()).collect();
    for k in 0..n {
        let next = if k + 1 < n { psi[k + 1] } else { psi[0] + 2.0 * PI };
        if !(next > psi[k]) {
            return Err(Error::InvalidBody { node: k, reason: "image angles are not increasing".into() });
        }
    }
    // three periods of image angles so every target in [0, 2π) is bracketed
    let ext = |i: usize| psi[i % n] + 2.0 * PI * ((i / n) as f64 - 1.0);
    let ext_psi: Vec<f64> = (0..3 * n).map(ext).collect();
    let out = (0..n)
        .map(|j| {
            let t = grid.theta()[j];
            let i = ext_psi.partition_point(|&p| p <= t) - 1;
            // quintic through the six image nodes around t
            let idx = [i - 2, i - 1, i, i + 1, i + 2, i + 3];
            let mut v = 0.0;
            for (a, &ia) in idx.iter().enumerate() {
                let mut w = 1.0;
                for (c, &ic) in idx.iter().enumerate() {
                    if c != a {
                        w *= (t - ext_psi[ic]) / (ext_psi[ia] - ext_psi[ic]);
                    }
                }
                v += w * rv[ia % n];
            }
            v
        })
        .collect();
    ScalarField::new(grid.clone(), out)
}

fn radial_sphere(g: &BodyGeometry) -> Result<ScalarField> {
    let grid = g.h.grid();
    let n = grid.len();
    let hv = g.h.values();
    let comp: Vec<Vec<f64>> = (0..3).map(|c| g.boundary.iter().map(|y| y[c]).collect()).collect();
    let bxx: Vec<f64> = g.b.iter().map(|b| b.xx).collect();
    let bxy: Vec<f64> = g.b.iter().map(|b| b.xy).collect();
    let byy: Vec<f64> = g.b.iter().map(|b| b.yy).collect();

    let y_at = |x: &Vec3| [0, 1, 2].map(|c| grid.interpolate(&comp[c], x));

    let solve = |xi: &Vec3, start: Vec3| -> Option<Vec3> {
        let mut x = start;
        for _ in 0..40 {
            let y = y_at(&x);
            let s = dot(&y, xi);
            let res = [y[0] - s * xi[0], y[1] - s * xi[1], y[2] - s * xi[2]];
            if norm(&res) <= 1e-13 * norm(&y) {
                return (s > 0.0).then_some(x);
            }
            let (e1, e2) = chart_frame(&x);
            let b =
                Sym2 { xx: grid.interpolate(&bxx, &x), xy: grid.interpolate(&bxy, &x), yy: grid.interpolate(&byy, &x) };
            let proj = |v: Vec3| {
                let s = dot(&v, xi);
                [v[0] - s * xi[0], v[1] - s * xi[1], v[2] - s * xi[2]]
            };
            let c1 = proj(add2(&e1, b.xx, &e2, b.xy));
            let c2 = proj(add2(&e1, b.xy, &e2, b.yy));
            let (m11, m12, m22) = (dot(&c1, &c1), dot(&c1, &c2), dot(&c2, &c2));
            let (r1, r2) = (-dot(&c1, &res), -dot(&c2, &res));
            let det = m11 * m22 - m12 * m12;
            if det.abs() < 1e-300 {
                return None;
            }
            let d1 = (m22 * r1 - m12 * r2) / det;
            let d2 = (m11 * r2 - m12 * r1) / det;
            let step = add2(&e1, d1, &e2, d2);
            let moved = [x[0] + step[0], x[1] + step[1], x[2] + step[2]];
            let len = norm(&moved);
            x = [moved[0] / len, moved[1] / len, moved[2] / len];
        }
        None
    };

    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let xi = grid.node(j);
        let x = match solve(&xi, xi) {
            Some(x) => x,
            None => {
                // start from the node minimizing h(x)/(ξ·x)
                let k = (0..n)
                    .filter(|&k| dot(&grid.node(k), &xi) > 0.0)
                    .min_by(|&a, &b| {
                        let qa = hv[a] / dot(&grid.node(a), &xi);
                        let qb = hv[b] / dot(&grid.node(b), &xi);
                        qa.total_cmp(&qb)
                    })
                    .expect("some node faces every direction");
                solve(&xi, grid.node(k)).ok_or_else(|| Error::InvalidBody {
                    node: j,
                    reason: "no boundary point found in this direction".into(),
                })?
            }
        };
        out.push(grid.interpolate(hv, &x) / dot(&xi, &x));
    }
    ScalarField::new(grid.clone(), out)
}

fn chart_frame(x: &Vec3) -> (Vec3, Vec3) {
    let t = x[2].clamp(-1.0, 1.0).acos();
    let p = x[1].atan2(x[0]);
    ([t.cos() * p.cos(), t.cos() * p.sin(), -t.sin()], [-p.sin(), p.cos(), 0.0])
}

fn add2(a: &Vec3, s: f64, b: &Vec3, t: f64) -> Vec3 {
    [s * a[0] + t * b[0], s * a[1] + t * b[1], s * a[2] + t * b[2]]
}

/// Support function of the polar body, `h*(ξ) = 1/r(ξ)`, on the grid of `g`.
pub fn polar_dual(g: &BodyGeometry) -> Result<ScalarField> {
    let rad = support_to_radial(g)?;
    Ok(rad.r.map(|r| 1.0 / r))
}

/// `max |h^{n+2} (h*)^{n+2} / (K K*) − 1|` over the support nodes, pairing
/// the boundary point `y` with normal `x` to the dual boundary point with
/// normal `ξ = y/|y|`, where `h*(ξ) = 1/|y|`.
pub fn dual_identity_residual(g: &BodyGeometry) -> Result<f64> {
    let dual = derive_geometry(&polar_dual(g)?)?;
    let np2 = g.dim() as i32 + 2;
    let kd = dual.gauss_k();
    let mut worst: f64 = 0.0;
    for k in 0..g.h.values().len() {
        let h = g.h.values()[k];
        let r = g.radial_r.values()[k];
        let k_star = kd.sample(&g.image_direction(k));
        let q = (h / r).powi(np2) / (g.gauss_k.values()[k] * k_star);
        worst = worst.max((q - 1.0).abs());
    }
    Ok(worst)
}

/// The Wulff shape `{x : x·v ≤ z(v)}` over the grid directions.
pub fn wulff_polytope(z: &ScalarField) -> Result<Polytope> {
    if let Some(node) = z.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidBody { node, reason: "Wulff data must be positive".into() });
    }
    Polytope::wulff(z.dim(), z.grid().nodes(), z.values())
}

/// Support function of the Wulff shape of `z`, evaluated at the grid nodes.
/// It never exceeds `z`.
pub fn wulff_support(z: &ScalarField) -> Result<ScalarField> {
    let poly = wulff_polytope(z)?;
    let vals = poly.support_at(z.grid().nodes());
    // a touching half-space reproduces its own offset exactly
    let vals = vals.iter().zip(z.values()).map(|(&s, &zv)| s.min(zv)).collect();
    ScalarField::new(z.grid().clone(), vals)
}
