//! Explicit time stepping of the normalized and unnormalized Gauss
//! curvature flows on the support function,
//!
//! `∂h/∂t = −Θ e^{r²/2} K hᵖ f + h`,
//!
//! with `Θ = θ(t)` (normalized) or `Θ = (2π)^{(n+1)/2}` (unnormalized).
//!
//! In the normalized flow θ is taken so that the velocity is orthogonal to
//! the exact gradient of the discrete Gaussian volume, which keeps the
//! discrete γ constant up to the time-stepping error alone.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{functionals, gaussian_volume, gaussian_volume_gradient, psi_functional, FunctionalRecord};
use crate::geometry::{derive_geometry, polar_dual, BodyGeometry, DEFAULT_EPS_CONVEX};
use crate::io::fmt_f64;
use crate::quad::gauss_norm;
use crate::sphere::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    Normalized,
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Heun,
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub p: f64,
    pub f: ScalarField,
    pub mode: FlowMode,
    pub dt_cfl: f64,
    pub dt_max: f64,
    pub eps_convex: f64,
    pub tol_stop: f64,
    pub max_steps: usize,
    pub scheme: Scheme,
    pub record_every: usize,
    /// Stop once flow time reaches this value.
    pub t_max: Option<f64>,
    /// `None` enforces origin symmetry exactly when the theory needs it:
    /// `p ≤ 0` normalized, `0 < p < n+1` unnormalized.
    pub symmetric: Option<bool>,
}

impl FlowConfig {
    pub fn new(p: f64, f: ScalarField, mode: FlowMode) -> Self {
        FlowConfig {
            p,
            f,
            mode,
            dt_cfl: 0.2,
            dt_max: 1e-2,
            eps_convex: DEFAULT_EPS_CONVEX,
            tol_stop: 1e-6,
            max_steps: 1_000_000,
            scheme: Scheme::Euler,
            record_every: 100,
            t_max: None,
            symmetric: None,
        }
    }

    pub fn symmetric_mode(&self) -> bool {
        self.symmetric.unwrap_or_else(|| {
            let n1 = self.f.dim() as f64 + 1.0;
            match self.mode {
                FlowMode::Normalized => self.p <= 0.0,
                FlowMode::Unnormalized => self.p > 0.0 && self.p < n1,
            }
        })
    }

    fn validate(&self) -> Result<()> {
        if let Some(node) = self.f.values().iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("f must be positive (node {node})")));
        }
        if !(self.dt_cfl > 0.0 && self.dt_cfl < 1.0) {
            return Err(Error::InvalidInput("dt_cfl must lie in (0, 1)".into()));
        }
        if !(self.dt_max > 0.0) || !(self.tol_stop > 0.0) || self.record_every == 0 {
            return Err(Error::InvalidInput("dt_max, tol_stop and record_every must be positive".into()));
        }
        if !self.p.is_finite() {
            return Err(Error::InvalidInput("p must be finite".into()));
        }
        Ok(())
    }
}

/// One diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    pub t: f64,
    pub step: usize,
    pub functionals: FunctionalRecord,
    pub min_eig_b: f64,
    /// `max |∇ log r|`, which equals `max |∇h|/h` on the support grid.
    pub max_grad_log_r: f64,
    /// The Θ that drove the step leaving this state.
    pub theta_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub h: ScalarField,
    pub geometry: BodyGeometry,
    pub record: FunctionalRecord,
    pub steps: usize,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct FlowDiagnostics {
    pub records: Vec<FlowRecord>,
    /// `(dt, Θ)` of every accepted step.
    pub steps: Vec<(f64, f64)>,
    pub status: FlowStatus,
}

struct Velocity {
    v: Vec<f64>,
    theta: f64,
    dt_limit: f64,
}

fn velocity(g: &BodyGeometry, cfg: &FlowConfig) -> Velocity {
    let dim = g.dim();
    let grid = g.h().grid();
    let w = grid.weights();
    let theta0 = 1.0 / gauss_norm(dim);
    let grad = gaussian_volume_gradient(g);
    let h = g.h().values();
    let f = cfg.f.values();
    let n = h.len();
    let mut m = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    for k in 0..n {
        let r = g.radial_r().values()[k];
        m.push((0.5 * r * r).exp() * g.gauss_k().values()[k] * h[k]);
        q.push(grad[k] / w[k]);
        a.push(f[k] * h[k].powf(cfg.p - 1.0));
    }
    let theta = match cfg.mode {
        FlowMode::Unnormalized => theta0,
        FlowMode::Normalized => {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..n {
                num += w[k] * q[k] * h[k];
                den += w[k] * q[k] * m[k] * a[k];
            }
            num / den
        }
    };
    let v = (0..n).map(|k| h[k] - theta * m[k] * a[k]).collect();
    let s = grid.min_spacing();
    let mut coef: f64 = 0.0;
    for k in 0..n {
        let r = g.radial_r().values()[k];
        let d = g.det_b()[k];
        let lam = g.max_eig_b()[k].powi(dim as i32 - 1);
        let c = theta * (0.5 * r * r).exp() * f[k] * h[k].powf(cfg.p) * dim as f64 * lam / (d * d);
        coef = coef.max(c);
    }
    Velocity { v, theta, dt_limit: cfg.dt_cfl * s * s / coef }
}

fn max_grad_log_r(g: &BodyGeometry) -> f64 {
    g.grad_h().iter().zip(g.h().values()).map(|(gr, h)| (gr[0] * gr[0] + gr[1] * gr[1]).sqrt() / h).fold(0.0, f64::max)
}

fn stop_residual(rec: &FunctionalRecord, mode: FlowMode) -> f64 {
    match mode {
        FlowMode::Unnormalized => rec.residual_stationary,
        FlowMode::Normalized => rec.residual_normalized,
    }
}

/// Checks that `h` is usable as flow data and builds its state.
pub fn initial_state(h0: &ScalarField, cfg: &FlowConfig) -> Result<FlowState> {
    cfg.validate()?;
    h0.same_grid(&cfg.f)?;
    let geometry = derive_geometry(h0)?;
    let rep = crate::geometry::check_uniform_convexity(&geometry, cfg.eps_convex);
    if !rep.uniformly_convex {
        return Err(Error::InvalidBody {
            node: rep.node,
            reason: format!("initial body is not uniformly convex (min principal radius {:e})", rep.min_eig),
        });
    }
    let record = functionals(&geometry, &cfg.f, cfg.p)?;
    Ok(FlowState { t: 0.0, h: h0.clone(), geometry, record, steps: 0, dt: 0.0 })
}

fn try_advance(
    state: &FlowState,
    cfg: &FlowConfig,
    vel: &Velocity,
    dt: f64,
) -> std::result::Result<(ScalarField, BodyGeometry), (usize, f64)> {
    let h = state.h.values();
    let symmetric = cfg.symmetric_mode();
    let finish = |mut vals: Vec<f64>| -> std::result::Result<(ScalarField, BodyGeometry), (usize, f64)> {
        let mut next = ScalarField::new(state.h.grid().clone(), std::mem::take(&mut vals)).expect("same grid");
        if symmetric {
            next.symmetrize();
        }
        if let Some(k) = next.values().iter().position(|&v| !(v > 0.0)) {
            return Err((k, next.values()[k]));
        }
        let geo = derive_geometry(&next).map_err(|_| (0, f64::NAN))?;
        let rep = crate::geometry::check_uniform_convexity(&geo, cfg.eps_convex);
        if !rep.uniformly_convex || !rep.min_eig.is_finite() {
            return Err((rep.node, rep.min_eig));
        }
        Ok((next, geo))
    };
    let euler: Vec<f64> = h.iter().zip(&vel.v).map(|(h, v)| h + dt * v).collect();
    match cfg.scheme {
        Scheme::Euler => finish(euler),
        Scheme::Heun => {
            let (_, geo1) = finish(euler)?;
            let v1 = velocity(&geo1, cfg);
            let vals = (0..h.len()).map(|k| h[k] + 0.5 * dt * (vel.v[k] + v1.v[k])).collect();
            finish(vals)
        }
    }
}

/// Advances one accepted step, halving `dt` up to 20 times if the stepped
/// body leaves the uniformly convex regime. Returns the new state and the Θ
/// used.
pub fn step(state: &FlowState, cfg: &FlowConfig) -> Result<(FlowState, f64)> {
    let vel = velocity(&state.geometry, cfg);
    let mut dt = vel.dt_limit.min(cfg.dt_max);
    if let Some(t_max) = cfg.t_max {
        dt = dt.min(t_max - state.t);
    }
    let mut last = (0, f64::NAN);
    for _ in 0..=20 {
        match try_advance(state, cfg, &vel, dt) {
            Ok((h, geometry)) => {
                let record = functionals(&geometry, &cfg.f, cfg.p)?;
                let t = if cfg.t_max.is_some_and(|tm| state.t + dt >= tm) { cfg.t_max.unwrap() } else { state.t + dt };
                return Ok((FlowState { t, h, geometry, record, steps: state.steps + 1, dt }, vel.theta));
            }
            Err(e) => {
                last = e;
                dt *= 0.5;
            }
        }
    }
    Err(Error::ConvexityLoss { node: last.0, t: state.t, min_radius: last.1 })
}

/// Runs the flow from `h0` until the stationary residual of the mode drops
/// below `tol_stop`, `max_steps` is reached or `t_max` is hit.
pub fn run(h0: &ScalarField, cfg: &FlowConfig) -> Result<(FlowState, FlowDiagnostics)> {
    let mut state = initial_state(h0, cfg)?;
    if cfg.symmetric_mode() {
        let tol = 1e-12;
        if state.h.evenness_defect() > tol || cfg.f.evenness_defect() > tol {
            return Err(Error::RejectedInput("this (p, mode) requires an origin-symmetric body and even f".into()));
        }
    }
    let n1 = h0.dim() as f64 + 1.0;
    if cfg.mode == FlowMode::Unnormalized && cfg.p > 0.0 && cfg.p < n1 {
        let gamma = gaussian_volume(&state.geometry);
        let rhs = psi_functional(&state.h, &cfg.f, cfg.p)?;
        if !(gamma > rhs) {
            return Err(Error::RejectedInput(format!(
                "admission inequality fails: γ(Ω₀) = {gamma} is not above (1/p)∫f h₀ᵖ = {rhs}"
            )));
        }
    }
    let mut records = Vec::new();
    let mut steps = Vec::new();
    let record = |s: &FlowState, theta_used: f64| FlowRecord {
        t: s.t,
        step: s.steps,
        functionals: s.record,
        min_eig_b: s.geometry.min_eig_b().min(),
        max_grad_log_r: max_grad_log_r(&s.geometry),
        theta_used,
    };
    let status = loop {
        if stop_residual(&state.record, cfg.mode) <= cfg.tol_stop {
            break FlowStatus::Converged;
        }
        if cfg.t_max.is_some_and(|tm| state.t >= tm) {
            break FlowStatus::TimeLimit;
        }
        if state.steps >= cfg.max_steps {
            break FlowStatus::MaxSteps;
        }
        let (next, theta) = step(&state, cfg)?;
        if state.steps % cfg.record_every == 0 {
            records.push(record(&state, theta));
        }
        steps.push((next.dt, theta));
        state = next;
    };
    let theta_final = velocity(&state.geometry, cfg).theta;
    if records.last().is_none_or(|r: &FlowRecord| r.step != state.steps) {
        records.push(record(&state, theta_final));
    }
    Ok((state, FlowDiagnostics { records, steps, status }))
}

/// Largest increase of the monitored functional between consecutive
/// records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    /// Largest positive increment divided by the elapsed time; zero when the
    /// functional never increases.
    pub max_increment_per_time: f64,
    pub max_increment: f64,
    /// Index of the record ending the worst interval.
    pub worst_record: Option<usize>,
    pub flagged: bool,
}

/// Audits Ψ (normalized) or Φ (unnormalized) against `budget`, an allowed
/// increase per unit time.
pub fn monotonicity_audit(diag: &FlowDiagnostics, mode: FlowMode, budget: f64) -> MonotonicityReport {
    let value = |r: &FlowRecord| match mode {
        FlowMode::Normalized => r.functionals.psi,
        FlowMode::Unnormalized => r.functionals.phi,
    };
    let mut rep =
        MonotonicityReport { max_increment_per_time: 0.0, max_increment: 0.0, worst_record: None, flagged: false };
    for (i, w) in diag.records.windows(2).enumerate() {
        let inc = value(&w[1]) - value(&w[0]);
        let dt = w[1].t - w[0].t;
        if inc > 0.0 && dt > 0.0 && inc / dt > rep.max_increment_per_time {
            rep.max_increment_per_time = inc / dt;
            rep.max_increment = inc;
            rep.worst_record = Some(i + 1);
        }
    }
    rep.flagged = rep.max_increment_per_time > budget;
    rep
}

/// Values below this are treated as exact zeros by the decay fit.
pub const DECAY_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayMonitor {
    pub series: Vec<(f64, f64)>,
    /// Fitted `C₀` in `max|∇ log r| ≈ C e^{−C₀ t}`.
    pub rate: f64,
    pub r_squared: f64,
    /// The series never rises above [`DECAY_FLOOR`].
    pub degenerate: bool,
}

/// Least-squares fit of `log max|∇ log r|` against `t` over the second half
/// of the records above [`DECAY_FLOOR`].
pub fn decay_monitor(diag: &FlowDiagnostics) -> Result<DecayMonitor> {
    if diag.records.len() < 10 {
        return Err(Error::InvalidInput(format!("decay fit needs at least 10 records, got {}", diag.records.len())));
    }
    let series: Vec<(f64, f64)> = diag.records.iter().map(|r| (r.t, r.max_grad_log_r)).collect();
    let live: Vec<(f64, f64)> = series.iter().copied().filter(|&(_, g)| g > DECAY_FLOOR).collect();
    if live.len() < 4 {
        return Ok(DecayMonitor { series, rate: 0.0, r_squared: 1.0, degenerate: true });
    }
    let tail = &live[live.len() / 2..];
    let n = tail.len() as f64;
    let (mt, my) = tail.iter().fold((0.0, 0.0), |(a, b), &(t, g)| (a + t / n, b + g.ln() / n));
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, g) in tail {
        let (dt, dy) = (t - mt, g.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    Ok(DecayMonitor { series, rate: -slope, r_squared, degenerate: false })
}

/// Runs the primal flow to time `t_end` and, independently, the polar dual
/// flow `∂h* = ψ det(∇²h* + h*I) − h*` from `polar_dual(h0)`, replaying the
/// primal Θ sequence. Returns `sup |polar_dual(h(T)) − h*(T)|`.
pub fn dual_flow_crosscheck(h0: &ScalarField, cfg: &FlowConfig, t_end: f64) -> Result<f64> {
    if h0.dim() != 1 || cfg.mode != FlowMode::Normalized {
        return Err(Error::InvalidInput("the dual-flow cross-check runs on S¹ in normalized mode".into()));
    }
    let mut primal_cfg = cfg.clone();
    primal_cfg.t_max = Some(t_end);
    primal_cfg.tol_stop = 0.0_f64.max(f64::MIN_POSITIVE);
    primal_cfg.max_steps = usize::MAX;
    let h0_geo = derive_geometry(h0)?;
    let mut hs = polar_dual(&h0_geo)?;
    if t_end <= 0.0 {
        return polar_dual(&h0_geo)?.sup_distance(&hs);
    }
    let (state, diag) = run(h0, &primal_cfg)?;
    let p = cfg.p;
    let dim = 1i32;
    let s = hs.grid().min_spacing();
    let mut t = 0.0;
    for &(dt, theta) in &diag.steps {
        let mut remaining = dt;
        while remaining > 0.0 {
            let geo = derive_geometry(&hs)?;
            let rep = crate::geometry::check_uniform_convexity(&geo, cfg.eps_convex);
            if !rep.uniformly_convex {
                return Err(Error::ConvexityLoss { node: rep.node, t, min_radius: rep.min_eig });
            }
            let n = hs.values().len();
            let mut psi = Vec::with_capacity(n);
            let mut coef: f64 = 0.0;
            for k in 0..n {
                let h = hs.values()[k];
                let r = geo.radial_r().values()[k];
                let nu = geo.image_direction(k);
                let v =
                    theta * cfg.f.sample(&nu) * h.powi(dim + 3) * (0.5 / (h * h)).exp() / r.powf(dim as f64 + p + 1.0);
                psi.push(v);
                coef = coef.max(v);
            }
            let sub = remaining.min(cfg.dt_cfl * s * s / coef);
            let next: Vec<f64> =
                (0..n).map(|k| hs.values()[k] + sub * (psi[k] * geo.det_b()[k] - hs.values()[k])).collect();
            hs = ScalarField::new(hs.grid().clone(), next)?;
            remaining -= sub;
            t += sub;
            if remaining < 1e-15 * dt {
                remaining = 0.0;
            }
        }
    }
    let primal_dual = polar_dual(&state.geometry)?;
    primal_dual.sup_distance(&hs)
}

const CSV_HEADER: [&str; 8] =
    ["t", "gamma", "psi", "phi", "theta", "residual_stationary", "residual_normalized", "min_eig_b"];

/// Writes diagnostics as CSV, one row per record.
pub fn write_records_csv<W: Write>(records: &[FlowRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for r in records {
        let f = &r.functionals;
        wr.write_record(
            [r.t, f.gamma, f.psi, f.phi, f.theta, f.residual_stationary, f.residual_normalized, r.min_eig_b]
                .map(fmt_f64),
        )?;
    }
    wr.flush()?;
    Ok(())
}

/// One parsed row of [`write_records_csv`] output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub gamma: f64,
    pub psi: f64,
    pub phi: f64,
    pub theta: f64,
    pub residual_stationary: f64,
    pub residual_normalized: f64,
    pub min_eig_b: f64,
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<RecordRow>> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidInput("unexpected diagnostics header".into()));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != 8 {
            return Err(Error::InvalidInput("diagnostics rows have 8 columns".into()));
        }
        out.push(RecordRow {
            t: v[0],
            gamma: v[1],
            psi: v[2],
            phi: v[3],
            theta: v[4],
            residual_stationary: v[5],
            residual_normalized: v[6],
            min_eig_b: v[7],
        });
    }
    Ok(out)
}
