//! Grids on S¹ and S², finite-difference differential operators and quadrature.
//!
//! Two grids ship: `N` equally spaced angles on the circle, and a staggered
//! latitude–longitude grid on the sphere whose latitudes `(j + 1/2)π/N_lat`
//! never hit a pole. Derivatives are centred second-order stencils. On S² the
//! stencil rows adjacent to a pole reach across it by pairing longitude `φ`
//! with `φ + π`, which is why `N_lon` must be even.
//!
//! Tangent vectors and covariant Hessians are expressed in the orthonormal
//! frame `(e_θ, e_φ)` on S² and in `e_θ` on S¹.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::fmt_f64;

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Circle { n: usize },
    LatLon { n_lat: usize, n_lon: usize },
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridKind::Circle { n } => write!(f, "circle(N={n})"),
            GridKind::LatLon { n_lat, n_lon } => write!(f, "latlon({n_lat}x{n_lon})"),
        }
    }
}

/// Compressed sparse rows. Every stencil is stored this way so that the
/// transpose is available for discrete adjoints.
#[derive(Debug, Clone, Default)]
pub struct SparseOp {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOp {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut op = SparseOp { row_ptr: Vec::with_capacity(rows.len() + 1), ..Default::default() };
        op.row_ptr.push(0);
        for row in rows {
            // merge duplicate columns so transposes stay exact
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.iter_mut().find(|(mc, _)| *mc == c) {
                    Some(e) => e.1 += v,
                    None => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                op.cols.push(c);
                op.vals.push(v);
            }
            op.row_ptr.push(op.cols.len());
        }
        op
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *o = s;
        }
    }

    /// `out += Aᵀ x`
    pub fn apply_transpose_add(&self, x: &[f64], out: &mut [f64]) {
        for (r, &xr) in x.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.cols[k]] += self.vals[k] * xr;
            }
        }
    }
}

/// Linear stencils producing tangent-frame components.
#[derive(Debug, Clone)]
pub(crate) struct Stencils {
    /// gradient components: `[e_θ]` on S¹, `[e_θ, e_φ]` on S²
    pub grad: Vec<SparseOp>,
    /// Hessian components `[θθ]` on S¹, `[θθ, θφ, φφ]` on S²
    pub hess: Vec<SparseOp>,
}

#[derive(Debug, Clone)]
pub struct SphericalGrid {
    kind: GridKind,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    d_theta: f64,
    d_phi: f64,
    stencils: Stencils,
}

impl SphericalGrid {
    /// `N` equally spaced nodes `θ_k = 2πk/N` on S¹.
    pub fn circle(n: usize) -> Result<Arc<Self>> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("circle grid needs an even N >= 8, got {n}")));
        }
        let d = 2.0 * PI / n as f64;
        let theta: Vec<f64> = (0..n).map(|k| k as f64 * d).collect();
        let nodes = theta.iter().map(|t| [t.cos(), t.sin(), 0.0]).collect();
        let weights = vec![d; n];

        let idx = |k: isize| k.rem_euclid(n as isize) as usize;
        let mut g = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for k in 0..n as isize {
            g.push(vec![(idx(k + 1), 0.5 / d), (idx(k - 1), -0.5 / d)]);
            h.push(vec![(idx(k + 1), 1.0 / (d * d)), (idx(k), -2.0 / (d * d)), (idx(k - 1), 1.0 / (d * d))]);
        }
        Ok(Arc::new(SphericalGrid {
            kind: GridKind::Circle { n },
            nodes,
            weights,
            phi: vec![0.0; n],
            theta,
            d_theta: d,
            d_phi: 0.0,
            stencils: Stencils { grad: vec![SparseOp::from_rows(g)], hess: vec![SparseOp::from_rows(h)] },
        }))
    }

    /// Staggered latitude–longitude grid on S².
    ///
    /// Weights are exact cell areas `Δφ (cos θ_j⁻ − cos θ_j⁺)`, i.e.
    /// `Δθ Δφ sin θ_j` up to the factor `sinc(Δθ/2)`, so they sum to 4π.
    pub fn latlon(n_lat: usize, n_lon: usize) -> Result<Arc<Self>> {
        if n_lat < 8 || n_lon < 16 || !n_lon.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "lat-lon grid needs N_lat >= 8 and an even N_lon >= 16, got {n_lat}x{n_lon}"
            )));
        }
        let dt = PI / n_lat as f64;
        let dp = 2.0 * PI / n_lon as f64;
        let count = n_lat * n_lon;
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut theta = Vec::with_capacity(count);
        let mut phi = Vec::with_capacity(count);
        for j in 0..n_lat {
            let t = (j as f64 + 0.5) * dt;
            let w = dp * ((t - 0.5 * dt).cos() - (t + 0.5 * dt).cos());
            for i in 0..n_lon {
                let p = i as f64 * dp;
                nodes.push([t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]);
                weights.push(w);
                theta.push(t);
                phi.push(p);
            }
        }

        let nb = |j: isize, i: isize| latlon_neighbor(n_lat, n_lon, j, i);
        let mut g_t = Vec::with_capacity(count);
        let mut g_p = Vec::with_capacity(count);
        let mut h_tt = Vec::with_capacity(count);
        let mut h_tp = Vec::with_capacity(count);
        let mut h_pp = Vec::with_capacity(count);
        for j in 0..n_lat as isize {
            let t = (j as f64 + 0.5) * dt;
            let (s, c) = t.sin_cos();
            let cot = c / s;
            for i in 0..n_lon as isize {
                let dth = [(nb(j + 1, i), 0.5 / dt), (nb(j - 1, i), -0.5 / dt)];
                let dph = [(nb(j, i + 1), 0.5 / dp), (nb(j, i - 1), -0.5 / dp)];
                g_t.push(dth.to_vec());
                g_p.push(dph.iter().map(|&(k, v)| (k, v / s)).collect());
                h_tt.push(vec![
                    (nb(j + 1, i), 1.0 / (dt * dt)),
                    (nb(j, i), -2.0 / (dt * dt)),
                    (nb(j - 1, i), 1.0 / (dt * dt)),
                ]);
                let q = 1.0 / (4.0 * dt * dp);
                let mut tp: Vec<(usize, f64)> =
                    vec![(nb(j + 1, i + 1), q), (nb(j + 1, i - 1), -q), (nb(j - 1, i + 1), -q), (nb(j - 1, i - 1), q)];
                tp.extend(dph.iter().map(|&(k, v)| (k, -cot * v)));
                h_tp.push(tp.into_iter().map(|(k, v)| (k, v / s)).collect());
                let mut pp: Vec<(usize, f64)> = vec![
                    (nb(j, i + 1), 1.0 / (dp * dp * s * s)),
                    (nb(j, i), -2.0 / (dp * dp * s * s)),
                    (nb(j, i - 1), 1.0 / (dp * dp * s * s)),
                ];
                pp.extend(dth.iter().map(|&(k, v)| (k, cot * v)));
                h_pp.push(pp);
            }
        }
        Ok(Arc::new(SphericalGrid {
            kind: GridKind::LatLon { n_lat, n_lon },
            nodes,
            weights,
            theta,
            phi,
            d_theta: dt,
            d_phi: dp,
            stencils: Stencils {
                grad: vec![SparseOp::from_rows(g_t), SparseOp::from_rows(g_p)],
                hess: vec![SparseOp::from_rows(h_tt), SparseOp::from_rows(h_tp), SparseOp::from_rows(h_pp)],
            },
        }))
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// The `n` of Sⁿ.
    pub fn dim(&self) -> usize {
        match self.kind {
            GridKind::Circle { .. } => 1,
            GridKind::LatLon { .. } => 2,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> Vec3 {
        self.nodes[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polar angle per node (the circle angle on S¹, colatitude on S²).
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Longitude per node (zero on S¹).
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn d_theta(&self) -> f64 {
        self.d_theta
    }

    pub fn d_phi(&self) -> f64 {
        self.d_phi
    }

    /// Smallest geodesic node spacing; on S² this is the longitude spacing
    /// along the latitude row nearest a pole.
    pub fn min_spacing(&self) -> f64 {
        match self.kind {
            GridKind::Circle { .. } => self.d_theta,
            GridKind::LatLon { .. } => self.d_theta.min((0.5 * self.d_theta).sin() * self.d_phi),
        }
    }

    /// Surface area of Sⁿ.
    pub fn area(&self) -> f64 {
        match self.kind {
            GridKind::Circle { .. } => 2.0 * PI,
            GridKind::LatLon { .. } => 4.0 * PI,
        }
    }

    /// Orthonormal tangent frame at node `k`; the second vector is zero on S¹.
    pub fn frame(&self, k: usize) -> [Vec3; 2] {
        let t = self.theta[k];
        match self.kind {
            GridKind::Circle { .. } => [[-t.sin(), t.cos(), 0.0], [0.0; 3]],
            GridKind::LatLon { .. } => {
                let p = self.phi[k];
                [[t.cos() * p.cos(), t.cos() * p.sin(), -t.sin()], [-p.sin(), p.cos(), 0.0]]
            }
        }
    }

    /// Index of the node at `-x`.
    pub fn antipode(&self, k: usize) -> usize {
        match self.kind {
            GridKind::Circle { n } => (k + n / 2) % n,
            GridKind::LatLon { n_lat, n_lon } => {
                let (j, i) = (k / n_lon, k % n_lon);
                (n_lat - 1 - j) * n_lon + (i + n_lon / 2) % n_lon
            }
        }
    }

    pub(crate) fn stencils(&self) -> &Stencils {
        &self.stencils
    }

    /// Interpolates nodal values at an arbitrary unit direction: periodic
    /// 4-point Lagrange on S¹, bilinear on the (θ, φ) chart with pole
    /// closure on S².
    pub fn interpolate(&self, values: &[f64], dir: &Vec3) -> f64 {
        match self.kind {
            GridKind::Circle { n } => {
                let a = dir[1].atan2(dir[0]).rem_euclid(2.0 * PI);
                let s = a / self.d_theta;
                let k0 = s.floor();
                let u = s - k0;
                let k0 = k0 as isize;
                let at = |k: isize| values[k.rem_euclid(n as isize) as usize];
                let (pm, p0, p1, p2) = (at(k0 - 1), at(k0), at(k0 + 1), at(k0 + 2));
                // cubic through u = -1, 0, 1, 2
                -pm * u * (u - 1.0) * (u - 2.0) / 6.0 + p0 * (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0
                    - p1 * (u + 1.0) * u * (u - 2.0) / 2.0
                    + p2 * (u + 1.0) * u * (u - 1.0) / 6.0
            }
            GridKind::LatLon { n_lat, n_lon } => {
                let t = dir[2].clamp(-1.0, 1.0).acos();
                let p = dir[1].atan2(dir[0]).rem_euclid(2.0 * PI);
                let s = t / self.d_theta - 0.5;
                let j0 = s.floor();
                let u = s - j0;
                let q = p / self.d_phi;
                let i0 = q.floor();
                let v = q - i0;
                let (j0, i0) = (j0 as isize, i0 as isize);
                let at = |j: isize, i: isize| values[latlon_neighbor(n_lat, n_lon, j, i)];
                (1.0 - u) * ((1.0 - v) * at(j0, i0) + v * at(j0, i0 + 1))
                    + u * ((1.0 - v) * at(j0 + 1, i0) + v * at(j0 + 1, i0 + 1))
            }
        }
    }
}

/// Node index for an extended (latitude, longitude) index pair; rows past a
/// pole map to the mirrored row at longitude `φ + π`.
pub(crate) fn latlon_neighbor(n_lat: usize, n_lon: usize, j: isize, i: isize) -> usize {
    let (nl, no) = (n_lat as isize, n_lon as isize);
    let (j, i) = if j < 0 {
        (-1 - j, i + no / 2)
    } else if j >= nl {
        (2 * nl - 1 - j, i + no / 2)
    } else {
        (j, i)
    };
    (j * no + i.rem_euclid(no)) as usize
}

/// Symmetric 2×2 matrix in the tangent frame; on S¹ only `xx` is used.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn det(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx
        } else {
            self.xx * self.yy - self.xy * self.xy
        }
    }

    /// Eigenvalues in ascending order (equal on S¹).
    pub fn eigenvalues(&self, dim: usize) -> (f64, f64) {
        if dim == 1 {
            return (self.xx, self.xx);
        }
        let m = 0.5 * (self.xx + self.yy);
        let d = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (m - d, m + d)
    }

    pub fn shifted(&self, dim: usize, s: f64) -> Sym2 {
        if dim == 1 {
            Sym2 { xx: self.xx + s, ..*self }
        } else {
            Sym2 { xx: self.xx + s, xy: self.xy, yy: self.yy + s }
        }
    }
}

/// A real value per grid node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<SphericalGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SphericalGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: &Arc<SphericalGrid>, f: impl Fn(&Vec3) -> f64) -> Self {
        let values = grid.nodes().iter().map(f).collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn constant(grid: &Arc<SphericalGrid>, c: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.kind() == other.grid.kind() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// `Σ values · weights`.
    pub fn integrate(&self) -> f64 {
        integrate_values(&self.grid, &self.values)
    }

    pub fn grad(&self) -> Vec<[f64; 2]> {
        grad_values(&self.grid, &self.values)
    }

    pub fn covariant_hessian(&self) -> Vec<Sym2> {
        hessian_values(&self.grid, &self.values)
    }

    pub fn sample(&self, dir: &Vec3) -> f64 {
        self.grid.interpolate(&self.values, dir)
    }

    /// Largest violation of `h(-x) = h(x)` over the nodes.
    pub fn evenness_defect(&self) -> f64 {
        (0..self.values.len()).map(|k| (self.values[k] - self.values[self.grid.antipode(k)]).abs()).fold(0.0, f64::max)
    }

    /// Replaces every value by the mean of itself and its antipode.
    pub fn symmetrize(&mut self) {
        let old = self.values.clone();
        for (k, v) in self.values.iter_mut().enumerate() {
            *v = 0.5 * (old[k] + old[self.grid.antipode(k)]);
        }
    }

    /// Writes `theta[,phi],value` CSV in grid order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let two = self.dim() == 2;
        if two {
            wr.write_record(["theta", "phi", "value"])?;
        } else {
            wr.write_record(["theta", "value"])?;
        }
        for k in 0..self.values.len() {
            let t = fmt_f64(self.grid.theta[k]);
            let v = fmt_f64(self.values[k]);
            if two {
                wr.write_record([t, fmt_f64(self.grid.phi[k]), v])?;
            } else {
                wr.write_record([t, v])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads CSV written by [`ScalarField::write_csv`], checking that the
    /// angles match `grid` node by node.
    pub fn read_csv<R: Read>(grid: &Arc<SphericalGrid>, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let two = grid.dim() == 2;
        let expected: &[&str] = if two { &["theta", "phi", "value"] } else { &["theta", "value"] };
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::InvalidInput(format!(
                "expected CSV header {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number {s:?}: {e}")))
        };
        let mut values = Vec::with_capacity(grid.len());
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            if k >= grid.len() {
                return Err(Error::InvalidInput("more rows than grid nodes".into()));
            }
            let t = parse(&rec[0])?;
            let bad_angle = (t - grid.theta[k]).abs() > 1e-9 || (two && (parse(&rec[1])? - grid.phi[k]).abs() > 1e-9);
            if bad_angle {
                return Err(Error::InvalidInput(format!("row {k} does not match grid node angles")));
            }
            values.push(parse(&rec[if two { 2 } else { 1 }])?);
        }
        ScalarField::new(grid.clone(), values)
    }
}

pub(crate) fn integrate_values(grid: &SphericalGrid, values: &[f64]) -> f64 {
    values.iter().zip(grid.weights()).map(|(v, w)| v * w).sum()
}

pub(crate) fn grad_values(grid: &SphericalGrid, values: &[f64]) -> Vec<[f64; 2]> {
    let st = grid.stencils();
    let n = values.len();
    let mut out = vec![[0.0; 2]; n];
    let mut buf = vec![0.0; n];
    for (c, op) in st.grad.iter().enumerate() {
        op.apply(values, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            o[c] = *b;
        }
    }
    out
}

pub(crate) fn hessian_values(grid: &SphericalGrid, values: &[f64]) -> Vec<Sym2> {
    let st = grid.stencils();
    let n = values.len();
    let mut out = vec![Sym2::default(); n];
    let mut buf = vec![0.0; n];
    for (c, op) in st.hess.iter().enumerate() {
        op.apply(values, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            match c {
                0 => o.xx = *b,
                1 => o.xy = *b,
                _ => o.yy = *b,
            }
        }
    }
    out
}
