//! The discrete even log-Gaussian Minkowski problem: given antipodal pairs
//! of atoms with masses, find an origin-symmetric polytope `Q` with
//! `γ(Q) = 1/2` whose p = 0 Gaussian surface measure is proportional to the
//! atoms.
//!
//! `Q` is the intersection of the slabs `|x·vᵢ| ≤ hᵢ` and is found by
//! minimizing `Σ mᵢ log hᵢ` on the constraint surface, with the facet cone
//! measures `Sᵢ = ∂γ/∂(log hᵢ)` as constraint gradient.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{HalfSpace, Polytope};
use crate::sphere::{dot, norm, Vec3};

/// An atom `(v, μ)` stands for mass μ at both `v` and `−v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub direction: Vec3,
    pub mass: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomJson {
    direction: Vec<f64>,
    mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    /// Normalizes the directions and validates the atoms. `dim` is the n of
    /// Sⁿ.
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("unsupported dimension {dim}")));
        }
        let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
        for (i, a) in atoms.into_iter().enumerate() {
            let len = norm(&a.direction);
            if !(len > 0.0) || !len.is_finite() || (dim == 1 && a.direction[2] != 0.0) {
                return Err(Error::InvalidInput(format!("atom {i} has an invalid direction")));
            }
            if !(a.mass > 0.0) || !a.mass.is_finite() {
                return Err(Error::InvalidInput(format!("atom {i} has non-positive mass")));
            }
            let v = a.direction.map(|c| c / len);
            if let Some(j) = out.iter().position(|b| dot(&b.direction, &v).abs() > 1.0 - 1e-12) {
                return Err(Error::InvalidInput(format!("atoms {j} and {i} lie on the same line")));
            }
            out.push(Atom { direction: v, mass: a.mass });
        }
        let m = DiscreteMeasure { dim, atoms: out };
        if m.rank(&(0..m.atoms.len()).collect::<Vec<_>>()) < dim + 1 {
            return Err(Error::InvalidInput("atoms do not span the ambient space".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Total mass of the even measure, both points of each pair counted.
    pub fn total_mass(&self) -> f64 {
        2.0 * self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// The same directions with every mass multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let atoms = self.atoms.iter().map(|a| Atom { direction: a.direction, mass: a.mass * lambda }).collect();
        Self::new(self.dim, atoms)
    }

    fn rank(&self, idx: &[usize]) -> usize {
        let vs: Vec<Vec3> = idx.iter().map(|&i| self.atoms[i].direction).collect();
        let Some(a) = vs.first() else { return 0 };
        let mut best_cross = [0.0; 3];
        let mut best = 0.0;
        for b in &vs {
            let c = cross(a, b);
            if norm(&c) > best {
                best = norm(&c);
                best_cross = c;
            }
        }
        if best < 1e-12 {
            return 1;
        }
        let n = best_cross.map(|c| c / best);
        if vs.iter().any(|v| dot(v, &n).abs() > 1e-12) {
            3
        } else {
            2
        }
    }

    /// Reads a JSON list of `{direction, mass}`; the dimension is the
    /// direction length minus one.
    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let raw: Vec<AtomJson> = serde_json::from_reader(r)?;
        let Some(first) = raw.first() else {
            return Err(Error::InvalidInput("empty measure".into()));
        };
        let len = first.direction.len();
        if !(2..=3).contains(&len) || raw.iter().any(|a| a.direction.len() != len) {
            return Err(Error::InvalidInput("directions must all have 2 or all have 3 components".into()));
        }
        let atoms = raw
            .into_iter()
            .map(|a| {
                let mut d = [0.0; 3];
                d[..len].copy_from_slice(&a.direction);
                Atom { direction: d, mass: a.mass }
            })
            .collect();
        Self::new(len - 1, atoms)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let raw: Vec<AtomJson> = self
            .atoms
            .iter()
            .map(|a| AtomJson { direction: a.direction[..self.dim + 1].to_vec(), mass: a.mass })
            .collect();
        serde_json::to_writer_pretty(w, &raw)?;
        Ok(())
    }
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub strict: bool,
    pub passes: bool,
    /// Largest `μ(ξ ∩ Sⁿ) / (μ(Sⁿ) dim ξ/(n+1))` over proper subspaces ξ.
    pub worst_ratio: f64,
    pub witness_dim: usize,
    /// Atoms lying in the witnessing subspace.
    pub witness_atoms: Vec<usize>,
}

/// Tests the subspace concentration inequality on every proper subspace
/// spanned by atom directions.
pub fn subspace_concentration_check(mu: &DiscreteMeasure, strict: bool) -> ConcentrationReport {
    let n1 = mu.dim + 1;
    let total = mu.total_mass();
    let atoms = mu.atoms();
    let mut subspaces: Vec<(usize, Vec<usize>)> = (0..atoms.len()).map(|i| (1, vec![i])).collect();
    if mu.dim == 2 {
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                let c = cross(&atoms[i].direction, &atoms[j].direction);
                let nrm = c.map(|x| x / norm(&c));
                let members: Vec<usize> =
                    (0..atoms.len()).filter(|&k| dot(&atoms[k].direction, &nrm).abs() <= 1e-12).collect();
                if !subspaces.iter().any(|(d, m)| *d == 2 && *m == members) {
                    subspaces.push((2, members));
                }
            }
        }
    }
    let mut report =
        ConcentrationReport { strict, passes: true, worst_ratio: 0.0, witness_dim: 0, witness_atoms: Vec::new() };
    for (d, members) in subspaces {
        let mass: f64 = 2.0 * members.iter().map(|&k| atoms[k].mass).sum::<f64>();
        let ratio = mass / (total * d as f64 / n1 as f64);
        if ratio > report.worst_ratio {
            report.worst_ratio = ratio;
            report.witness_dim = d;
            report.witness_atoms = members;
        }
    }
    report.passes = if strict { report.worst_ratio < 1.0 - 1e-12 } else { report.worst_ratio <= 1.0 + 1e-12 };
    report
}

/// `∩ᵢ {|x·vᵢ| ≤ hᵢ}`. Half-space `2i` is `x·vᵢ ≤ hᵢ`, `2i+1` is `−x·vᵢ ≤ hᵢ`.
#[derive(Debug, Clone)]
pub struct SymmetricSlabBody {
    directions: Vec<Vec3>,
    h: Vec<f64>,
    active: Vec<bool>,
    polytope: Polytope,
}

impl SymmetricSlabBody {
    pub fn new(dim: usize, directions: &[Vec3], h: &[f64]) -> Result<Self> {
        if directions.len() != h.len() {
            return Err(Error::InvalidInput("one support value per direction is required".into()));
        }
        let hs = directions
            .iter()
            .zip(h)
            .flat_map(|(&v, &o)| [HalfSpace { normal: v, offset: o }, HalfSpace { normal: v.map(|c| -c), offset: o }])
            .collect();
        let polytope = Polytope::from_halfspaces(dim, hs)?;
        let active = (0..h.len()).map(|i| polytope.touches(2 * i) && polytope.touches(2 * i + 1)).collect();
        Ok(SymmetricSlabBody { directions: directions.to_vec(), h: h.to_vec(), active, polytope })
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }
}

pub fn slab_gaussian_volume(q: &SymmetricSlabBody) -> f64 {
    q.polytope.gaussian_volume()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetMeasure {
    /// Cone measure of the facet pair `F ∪ −F`.
    pub value: f64,
    pub active: bool,
}

/// Per-atom p = 0 Gaussian surface measure of the facet pairs; inactive
/// pairs report 0.
pub fn facet_gaussian_cone_measure(q: &SymmetricSlabBody) -> Vec<FacetMeasure> {
    (0..q.h.len())
        .map(|i| {
            if q.active[i] {
                let value = q.polytope.facet_cone_measure(2 * i) + q.polytope.facet_cone_measure(2 * i + 1);
                FacetMeasure { value, active: true }
            } else {
                FacetMeasure { value: 0.0, active: false }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
    pub require_strict_concentration: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-7, max_iter: 20_000, max_restarts: 3, require_strict_concentration: true }
    }
}

#[derive(Debug, Clone)]
pub struct LogMinkowskiSolution {
    pub body: SymmetricSlabBody,
    pub c: f64,
    pub kkt_residual: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub restarts: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionJson {
    #[serde(with = "crate::io::f17_vec")]
    pub h: Vec<f64>,
    #[serde(with = "crate::io::f17")]
    pub c: f64,
    #[serde(with = "crate::io::f17")]
    pub kkt_residual: f64,
    #[serde(with = "crate::io::f17")]
    pub gamma: f64,
    pub iterations: usize,
}

impl LogMinkowskiSolution {
    pub fn to_json(&self) -> SolutionJson {
        SolutionJson {
            h: self.body.h.clone(),
            c: self.c,
            kkt_residual: self.kkt_residual,
            gamma: self.gamma,
            iterations: self.iterations,
        }
    }
}

/// `(c, max_i |mᵢ − c Sᵢ|/mᵢ)` with `c = Σm/ΣS` and `mᵢ` the pair masses.
pub fn kkt_residual(mu: &DiscreteMeasure, s: &[FacetMeasure]) -> (f64, f64) {
    let m: Vec<f64> = mu.atoms.iter().map(|a| 2.0 * a.mass).collect();
    let c = m.iter().sum::<f64>() / s.iter().map(|x| x.value).sum::<f64>();
    let r = m.iter().zip(s).map(|(m, s)| (m - c * s.value).abs() / m).fold(0.0, f64::max);
    (c, r)
}

struct Iterate {
    y: Vec<f64>,
    body: SymmetricSlabBody,
    s: Vec<f64>,
}

enum Trial {
    Ok(Iterate),
    Inactive(usize),
    Degenerate,
}

/// Shifts `y` uniformly so that `γ = 1/2`; `dγ/dshift = ΣSᵢ`.
fn retract(dim: usize, dirs: &[Vec3], mut y: Vec<f64>) -> Trial {
    let build = |y: &[f64]| {
        let h: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        SymmetricSlabBody::new(dim, dirs, &h)
    };
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut shift = 0.0;
    for _ in 0..200 {
        let trial: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let Ok(body) = build(&trial) else { return Trial::Degenerate };
        let g = slab_gaussian_volume(&body) - 0.5;
        let fm = facet_gaussian_cone_measure(&body);
        if g.abs() <= 1e-15 {
            if let Some(i) = body.active.iter().position(|a| !a) {
                return Trial::Inactive(i);
            }
            y = trial;
            let s = fm.iter().map(|f| f.value).collect();
            return Trial::Ok(Iterate { y, body, s });
        }
        if g > 0.0 {
            hi = hi.min(shift);
        } else {
            lo = lo.max(shift);
        }
        let dg: f64 = fm.iter().map(|f| f.value).sum();
        let mut next = shift - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                _ => hi - 1.0,
            };
        }
        if next == shift {
            break;
        }
        shift = next;
    }
    let trial: Vec<f64> = y.iter().map(|v| v + shift).collect();
    match build(&trial) {
        Ok(body) => match body.active.iter().position(|a| !a) {
            Some(i) => Trial::Inactive(i),
            None => {
                let s = facet_gaussian_cone_measure(&body).iter().map(|f| f.value).collect();
                Trial::Ok(Iterate { y: trial, body, s })
            }
        },
        Err(_) => Trial::Degenerate,
    }
}

/// Preconditioned projected gradient `dᵢ = −(mᵢ − λSᵢ)/mᵢ` with λ chosen so
/// that `Σ Sᵢ dᵢ = 0`.
fn direction(m: &[f64], s: &[f64]) -> Vec<f64> {
    let lambda = s.iter().sum::<f64>() / s.iter().zip(m).map(|(s, m)| s * s / m).sum::<f64>();
    m.iter().zip(s).map(|(m, s)| -(m - lambda * s) / m).collect()
}

/// Minimizes `Σ mᵢ log hᵢ` over slab bodies with `γ = 1/2` by projected
/// gradient descent in `y = log h` with Barzilai–Borwein steps, Armijo
/// backtracking and retraction by dilation.
pub fn solve_log_minkowski(mu: &DiscreteMeasure, opts: &SolveOptions) -> Result<LogMinkowskiSolution> {
    let rep = subspace_concentration_check(mu, true);
    if opts.require_strict_concentration && !rep.passes {
        return Err(Error::RejectedInput(format!(
            "strict subspace concentration fails: the {}-dimensional span of atoms {:?} carries {} times its bound",
            rep.witness_dim, rep.witness_atoms, rep.worst_ratio
        )));
    }
    let dim = mu.dim;
    let dirs: Vec<Vec3> = mu.atoms.iter().map(|a| a.direction).collect();
    let m: Vec<f64> = mu.atoms.iter().map(|a| 2.0 * a.mass).collect();
    let mut step_cap = 0.5;
    let mut iterations = 0;
    let mut dropped = None;
    for restart in 0..=opts.max_restarts {
        let Trial::Ok(mut it) = retract(dim, &dirs, vec![0.0; dirs.len()]) else {
            return Err(Error::SolverFailure("isotropic starting body is degenerate".into()));
        };
        let mut alpha = 1.0;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        loop {
            let fm: Vec<FacetMeasure> = it.s.iter().map(|&value| FacetMeasure { value, active: true }).collect();
            let (c, res) = kkt_residual(mu, &fm);
            let gamma = slab_gaussian_volume(&it.body);
            if res <= opts.tol && (gamma - 0.5).abs() <= opts.tol {
                return Ok(LogMinkowskiSolution {
                    body: it.body,
                    c,
                    kkt_residual: res,
                    gamma,
                    iterations,
                    restarts: restart,
                });
            }
            if iterations >= opts.max_iter {
                return Err(Error::SolverFailure(format!(
                    "no convergence after {iterations} iterations (KKT residual {res:e})"
                )));
            }
            iterations += 1;
            let d = direction(&m, &it.s);
            if let Some((y0, d0)) = &prev {
                // preconditioned gradient is −d
                let sy: Vec<f64> = it.y.iter().zip(y0).map(|(a, b)| a - b).collect();
                let gy: Vec<f64> = d0.iter().zip(&d).map(|(a, b)| a - b).collect();
                let num: f64 = sy.iter().map(|v| v * v).sum();
                let den: f64 = sy.iter().zip(&gy).map(|(a, b)| a * b).sum();
                alpha = if den > 0.0 && (num / den).is_finite() { num / den } else { 2.0 * alpha };
            }
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            alpha = alpha.min(step_cap / dmax);
            let slope: f64 = m.iter().zip(&d).map(|(m, d)| m * d).sum();
            let mut accepted = None;
            let mut last_inactive = None;
            for _ in 0..60 {
                let y1: Vec<f64> = it.y.iter().zip(&d).map(|(y, d)| y + alpha * d).collect();
                match retract(dim, &dirs, y1) {
                    Trial::Ok(next) => {
                        let dphi: f64 = m.iter().zip(next.y.iter().zip(&it.y)).map(|(m, (a, b))| m * (a - b)).sum();
                        if dphi < 1e-4 * alpha * slope.min(0.0) || (dphi < 0.0 && slope > -1e-300) {
                            accepted = Some(next);
                            break;
                        }
                    }
                    Trial::Inactive(i) => last_inactive = Some(i),
                    Trial::Degenerate => {}
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(next) => {
                    prev = Some((it.y.clone(), d));
                    it = next;
                }
                None if last_inactive.is_some() => {
                    dropped = last_inactive;
                    step_cap *= 0.25;
                    break;
                }
                None => {
                    return Err(Error::SolverFailure(format!("line search stalled at KKT residual {res:e}")));
                }
            }
        }
    }
    Err(Error::SolverFailure(format!(
        "facet {} became inactive after {} restarts",
        dropped.unwrap_or(0),
        opts.max_restarts
    )))
}
