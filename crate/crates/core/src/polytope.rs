//! Exact convex polytopes given as intersections of half-spaces
//! `{x : x·v ≤ h}` with `h > 0`.
//!
//! In the plane the polygon is built by an angular sweep: the half-planes
//! are sorted by normal angle and a Graham scan runs over the dual points
//! `v/h`, whose convex hull is the polar of the polygon. In space the
//! polyhedron is built by clipping a large box with every half-space in turn.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{gauss_norm, integrate, radial_mass};
use crate::sphere::{dot, norm, Vec3};

const EDGE_QUAD_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
}

/// A facet of the boundary. Vertices run counter-clockwise around the outward
/// normal; in the plane a facet is the edge `[start, end]`.
#[derive(Debug, Clone)]
pub struct Facet {
    pub tag: usize,
    pub vertices: Vec<Vec3>,
}

#[derive(Debug, Clone)]
pub struct Polytope {
    dim: usize,
    halfspaces: Vec<HalfSpace>,
    facets: Vec<Facet>,
    vertices: Vec<Vec3>,
}

impl Polytope {
    /// `dim` is the n of Sⁿ, so the polytope lives in R^{n+1}.
    pub fn from_halfspaces(dim: usize, halfspaces: Vec<HalfSpace>) -> Result<Self> {
        for (i, hs) in halfspaces.iter().enumerate() {
            if !(hs.offset > 0.0) || !hs.offset.is_finite() {
                return Err(Error::InvalidBody {
                    node: i,
                    reason: format!("half-space offset {} must be positive", hs.offset),
                });
            }
            if (norm(&hs.normal) - 1.0).abs() > 1e-9 || (dim == 1 && hs.normal[2] != 0.0) {
                return Err(Error::InvalidInput(format!("half-space {i} normal is not a unit vector")));
            }
        }
        let (facets, vertices) = match dim {
            1 => sweep_polygon(&halfspaces)?,
            2 => clip_polyhedron(&halfspaces)?,
            _ => return Err(Error::InvalidInput(format!("unsupported dimension {dim}"))),
        };
        Ok(Polytope { dim, halfspaces, facets, vertices })
    }

    /// Wulff shape of sampled support data: the half-spaces `x·v_k ≤ z_k`.
    pub fn wulff(dim: usize, directions: &[Vec3], values: &[f64]) -> Result<Self> {
        let hs = directions.iter().zip(values).map(|(&normal, &offset)| HalfSpace { normal, offset }).collect();
        Self::from_halfspaces(dim, hs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[HalfSpace] {
        &self.halfspaces
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn facet(&self, tag: usize) -> Option<&Facet> {
        self.facets.iter().find(|f| f.tag == tag)
    }

    pub fn support(&self, u: &Vec3) -> f64 {
        self.vertices.iter().map(|v| dot(u, v)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.halfspaces.iter().all(|hs| dot(x, &hs.normal) <= hs.offset)
    }

    /// Whether some vertex lies on the bounding hyperplane of half-space
    /// `tag`, to `1e-12` relative.
    pub fn touches(&self, tag: usize) -> bool {
        let hs = &self.halfspaces[tag];
        self.vertices.iter().any(|v| (dot(v, &hs.normal) - hs.offset).abs() <= 1e-12 * hs.offset)
    }

    /// `γ_{n+1}` of the polytope, summed over the cones from the origin to
    /// each facet.
    pub fn gaussian_volume(&self) -> f64 {
        let c = gauss_norm(self.dim);
        match self.dim {
            1 => {
                let total: f64 = self
                    .facets
                    .iter()
                    .map(|f| {
                        let (a, b) = (f.vertices[0], f.vertices[1]);
                        let cross = a[0] * b[1] - a[1] * b[0];
                        let d = [b[0] - a[0], b[1] - a[1]];
                        let g = |t: f64| {
                            let x = [a[0] + t * d[0], a[1] + t * d[1]];
                            let q = x[0] * x[0] + x[1] * x[1];
                            -(-0.5 * q).exp_m1() / q
                        };
                        cross * integrate(g, 0.0, 1.0, EDGE_QUAD_TOL)
                    })
                    .sum();
                c * total
            }
            _ => {
                let total: f64 = self
                    .facets
                    .iter()
                    .map(|f| {
                        let hs = self.halfspaces[f.tag];
                        hs.offset * facet_cone_volume_integral(&hs, &f.vertices)
                    })
                    .sum();
                c * total
            }
        }
    }

    /// `(2π)^{-(n+1)/2} ∫_F e^{-|x|²/2} dHⁿ` over facet `tag`; zero when the
    /// half-space does not contribute a facet.
    pub fn facet_gaussian_area(&self, tag: usize) -> f64 {
        let Some(f) = self.facet(tag) else { return 0.0 };
        let hs = self.halfspaces[tag];
        let c = gauss_norm(self.dim);
        let h = hs.offset;
        match self.dim {
            1 => {
                let tangent = [-hs.normal[1], hs.normal[0], 0.0];
                let (ta, tb) = (dot(&f.vertices[0], &tangent), dot(&f.vertices[1], &tangent));
                c * (-0.5 * h * h).exp()
                    * (2.0 * PI).sqrt()
                    * (crate::quad::normal_cdf(tb) - crate::quad::normal_cdf(ta))
            }
            _ => {
                let foot = scale(&hs.normal, h);
                let mut total = 0.0;
                for (a, b) in cyclic_pairs(&f.vertices) {
                    let (a, b) = (sub(a, &foot), sub(b, &foot));
                    let cr = dot(&cross3(&a, &b), &hs.normal);
                    let d = sub(&b, &a);
                    let g = |t: f64| {
                        let s = add(&a, &scale(&d, t));
                        let q = dot(&s, &s);
                        if q < 1e-300 {
                            0.5
                        } else {
                            -(-0.5 * q).exp_m1() / q
                        }
                    };
                    total += cr * integrate(g, 0.0, 1.0, EDGE_QUAD_TOL);
                }
                c * (-0.5 * h * h).exp() * total
            }
        }
    }

    /// The p = 0 Gaussian surface measure of facet `tag`:
    /// `(2π)^{-(n+1)/2} h ∫_F e^{-|x|²/2} dHⁿ`, since `x·ν = h` on the facet.
    pub fn facet_cone_measure(&self, tag: usize) -> f64 {
        self.halfspaces[tag].offset * self.facet_gaussian_area(tag)
    }

    /// Support values of the polytope at the given directions.
    pub fn support_at(&self, directions: &[Vec3]) -> Vec<f64> {
        directions.iter().map(|u| self.support(u)).collect()
    }
}

/// `∫_F G₂(|x|)/|x|³ dA` for a planar facet at distance `h`; the radial
/// integral in the plane's polar coordinates is closed-form.
fn facet_cone_volume_integral(hs: &HalfSpace, verts: &[Vec3]) -> f64 {
    let h = hs.offset;
    // antiderivative of G₂(u)/u²
    let big_h = |u: f64| -radial_mass(2, u) / u - (-0.5 * u * u).exp();
    let h0 = big_h(h);
    let limit = radial_mass(2, h) / (2.0 * h * h * h);
    let foot = scale(&hs.normal, h);
    let mut total = 0.0;
    for (a, b) in cyclic_pairs(verts) {
        let (a, b) = (sub(a, &foot), sub(b, &foot));
        let cr = dot(&cross3(&a, &b), &hs.normal);
        if cr == 0.0 {
            continue;
        }
        let d = sub(&b, &a);
        let g = |t: f64| {
            let s = add(&a, &scale(&d, t));
            let q = dot(&s, &s);
            if q < 1e-10 * h * h {
                limit
            } else {
                (big_h((h * h + q).sqrt()) - h0) / q
            }
        };
        total += cr * integrate(g, 0.0, 1.0, EDGE_QUAD_TOL);
    }
    total
}

fn cyclic_pairs(v: &[Vec3]) -> impl Iterator<Item = (&Vec3, &Vec3)> {
    v.iter().zip(v.iter().cycle().skip(1)).take(v.len())
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn sweep_polygon(hs: &[HalfSpace]) -> Result<(Vec<Facet>, Vec<Vec3>)> {
    if hs.len() < 3 {
        return Err(Error::DegenerateBody(format!("{} half-planes cannot bound a polygon", hs.len())));
    }
    let mut order: Vec<(f64, usize)> =
        hs.iter().enumerate().map(|(i, h)| (h.normal[1].atan2(h.normal[0]).rem_euclid(2.0 * PI), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(hs[a.1].offset.total_cmp(&hs[b.1].offset)));
    // same direction: the tighter half-plane wins
    order.dedup_by(|later, earlier| (later.0 - earlier.0).abs() < 1e-14);

    let m = order.len();
    let max_gap = (0..m)
        .map(|k| {
            let next = if k + 1 < m { order[k + 1].0 } else { order[0].0 + 2.0 * PI };
            next - order[k].0
        })
        .fold(0.0, f64::max);
    if max_gap >= PI - 1e-12 {
        return Err(Error::DegenerateBody(
            "half-plane normals leave a gap of at least π; the intersection is unbounded".into(),
        ));
    }

    let dual = |i: usize| [hs[i].normal[0] / hs[i].offset, hs[i].normal[1] / hs[i].offset];
    let turn = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    // the farthest dual point is always a hull vertex
    let start = (0..m)
        .max_by(|&a, &b| {
            let (pa, pb) = (dual(order[a].1), dual(order[b].1));
            (pa[0].hypot(pa[1])).total_cmp(&pb[0].hypot(pb[1]))
        })
        .unwrap();
    let mut stack: Vec<usize> = Vec::with_capacity(m);
    for step in 0..=m {
        let idx = order[(start + step) % m].1;
        let p = dual(idx);
        while stack.len() >= 2 {
            let (a, b) = (dual(stack[stack.len() - 2]), dual(stack[stack.len() - 1]));
            if turn(a, b, p) <= 0.0 {
                stack.pop();
            } else {
                break;
            }
        }
        if step < m {
            stack.push(idx);
        }
    }
    if stack.len() < 3 {
        return Err(Error::DegenerateBody("polygon has empty interior".into()));
    }

    let vertex = |i: usize, j: usize| -> Vec3 {
        let (a, b) = (&hs[i], &hs[j]);
        let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
        [
            (a.offset * b.normal[1] - b.offset * a.normal[1]) / det,
            (a.normal[0] * b.offset - b.normal[0] * a.offset) / det,
            0.0,
        ]
    };
    let k = stack.len();
    let verts: Vec<Vec3> = (0..k).map(|i| vertex(stack[i], stack[(i + 1) % k])).collect();
    let facets = (0..k).map(|i| Facet { tag: stack[i], vertices: vec![verts[(i + k - 1) % k], verts[i]] }).collect();
    Ok((facets, verts))
}

#[derive(Debug, Clone)]
struct Face {
    tag: Option<usize>,
    normal: Vec3,
    verts: Vec<Vec3>,
}

fn clip_polyhedron(hs: &[HalfSpace]) -> Result<(Vec<Facet>, Vec<Vec3>)> {
    let scale_h = hs.iter().map(|h| h.offset).fold(0.0, f64::max);
    let l = 1e4 * scale_h;
    let eps = 1e-11 * scale_h;
    let mut faces = box_faces(l);

    for (tag, h) in hs.iter().enumerate() {
        let n = h.normal;
        let d = h.offset;
        let max_s = faces.iter().flat_map(|f| f.verts.iter()).map(|v| dot(v, &n) - d).fold(f64::NEG_INFINITY, f64::max);
        if max_s <= eps {
            continue;
        }
        let mut cap: Vec<Vec3> = Vec::new();
        let mut kept = Vec::with_capacity(faces.len() + 1);
        for face in faces.drain(..) {
            let mut out = Vec::with_capacity(face.verts.len() + 1);
            let len = face.verts.len();
            for i in 0..len {
                let p = face.verts[i];
                let q = face.verts[(i + 1) % len];
                let (sp, sq) = (dot(&p, &n) - d, dot(&q, &n) - d);
                if sp <= eps {
                    out.push(p);
                    if sp >= -eps {
                        cap.push(p);
                    }
                }
                if (sp < -eps && sq > eps) || (sp > eps && sq < -eps) {
                    let t = sp / (sp - sq);
                    let x = add(&p, &scale(&sub(&q, &p), t));
                    out.push(x);
                    cap.push(x);
                }
            }
            dedup_cycle(&mut out, eps);
            if out.len() >= 3 {
                kept.push(Face { verts: out, ..face });
            }
        }
        let mut pts: Vec<Vec3> = Vec::with_capacity(cap.len());
        for p in cap {
            if !pts.iter().any(|q| norm(&sub(&p, q)) <= eps) {
                pts.push(p);
            }
        }
        if pts.len() >= 3 {
            order_ccw(&mut pts, &n);
            kept.push(Face { tag: Some(tag), normal: n, verts: pts });
        }
        faces = kept;
    }

    if faces.is_empty() {
        return Err(Error::DegenerateBody("half-spaces have empty intersection".into()));
    }
    if faces.iter().any(|f| f.tag.is_none()) {
        return Err(Error::DegenerateBody("half-space normals do not enclose a bounded polytope".into()));
    }
    let mut verts: Vec<Vec3> = Vec::new();
    for f in &faces {
        for v in &f.verts {
            if !verts.iter().any(|q| norm(&sub(v, q)) <= eps) {
                verts.push(*v);
            }
        }
    }
    let facets = faces
        .into_iter()
        .map(|f| {
            debug_assert!(dot(&f.normal, &f.normal) > 0.0);
            Facet { tag: f.tag.unwrap(), vertices: f.verts }
        })
        .collect();
    Ok((facets, verts))
}

fn dedup_cycle(v: &mut Vec<Vec3>, eps: f64) {
    let mut out: Vec<Vec3> = Vec::with_capacity(v.len());
    for p in v.iter() {
        if out.last().is_none_or(|q| norm(&sub(p, q)) > eps) {
            out.push(*p);
        }
    }
    while out.len() > 1 && norm(&sub(&out[0], out.last().unwrap())) <= eps {
        out.pop();
    }
    *v = out;
}

fn order_ccw(pts: &mut [Vec3], n: &Vec3) {
    let k = pts.len() as f64;
    let c = pts.iter().fold([0.0; 3], |acc, p| add(&acc, &scale(p, 1.0 / k)));
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = cross3(n, &helper);
    let u = scale(&u, 1.0 / norm(&u));
    let w = cross3(n, &u);
    pts.sort_by(|a, b| {
        let (da, db) = (sub(a, &c), sub(b, &c));
        let aa = dot(&da, &w).atan2(dot(&da, &u));
        let ab = dot(&db, &w).atan2(dot(&db, &u));
        aa.total_cmp(&ab)
    });
}

fn box_faces(l: f64) -> Vec<Face> {
    let mut faces = Vec::with_capacity(6);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut n = [0.0; 3];
            n[axis] = sign;
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut verts = Vec::with_capacity(4);
            for (s1, s2) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                let mut v = [0.0; 3];
                v[axis] = sign * l;
                v[a1] = s1 * l;
                v[a2] = s2 * l;
                verts.push(v);
            }
            if sign < 0.0 {
                verts.reverse();
            }
            faces.push(Face { tag: None, normal: n, verts });
        }
    }
    faces
}
