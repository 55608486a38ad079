//! Parsing of the textual `f` and initial-body arguments.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use gaussmink::bodies::{ball, ellipse, ellipsoid, perturbed_ball};
use gaussmink::io::BodyDump;
use gaussmink::quad::gauss_norm;
use gaussmink::sphere::{ScalarField, SphericalGrid};

fn nums(parts: &[&str], what: &str) -> Result<Vec<f64>> {
    parts.iter().map(|s| s.parse::<f64>().with_context(|| format!("bad number {s:?} in {what}"))).collect()
}

fn read_field(grid: &Arc<SphericalGrid>, path: &str) -> Result<ScalarField> {
    let file = File::open(path).with_context(|| format!("cannot open {path}"))?;
    let field = if Path::new(path).extension().is_some_and(|e| e == "json") {
        let dump = BodyDump::read(file)?;
        let h = dump.support_field()?;
        if h.grid().kind() != grid.kind() {
            bail!("{path} lives on {:?}, the run uses {:?}", h.grid().kind(), grid.kind());
        }
        ScalarField::new(grid.clone(), h.into_values())?
    } else {
        ScalarField::read_csv(grid, file)?
    };
    Ok(field)
}

/// `const:C`, `ball-density:R` (the Lp density of the ball of radius R,
/// which makes that ball stationary), `cosine:A:EPS:K` (`A(1 + EPS T_K)`) or
/// `file:PATH`.
pub fn parse_f(spec: &str, grid: &Arc<SphericalGrid>, p: f64) -> Result<ScalarField> {
    let parts: Vec<&str> = spec.split(':').collect();
    let f = match parts[0] {
        "const" if parts.len() == 2 => ScalarField::constant(grid, nums(&parts[1..], spec)?[0]),
        "ball-density" if parts.len() == 2 => {
            let r = nums(&parts[1..], spec)?[0];
            let n = grid.dim() as f64;
            ScalarField::constant(grid, gauss_norm(grid.dim()) * (-0.5 * r * r).exp() * r.powf(n + 1.0 - p))
        }
        "cosine" if parts.len() == 4 => {
            let v = nums(&parts[1..], spec)?;
            let k = parse_mode(parts[3])?;
            perturbed_ball(grid, 1.0, v[1], k).map(|x| v[0] * x)
        }
        "file" if parts.len() >= 2 => read_field(grid, &parts[1..].join(":"))?,
        _ => bail!("unrecognized f argument {spec:?}"),
    };
    if f.values().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        bail!("f must be positive everywhere");
    }
    Ok(f)
}

fn parse_mode(s: &str) -> Result<u32> {
    s.parse::<u32>().with_context(|| format!("bad mode number {s:?}"))
}

/// `ball:R`, `ellipse:A:B`, `ellipsoid:A:B:C`,
/// `perturbed-ball:R:EPS:K[:EPS:K...]` or `support-file:PATH` (CSV or body
/// JSON).
pub fn parse_init(spec: &str, grid: &Arc<SphericalGrid>) -> Result<ScalarField> {
    let parts: Vec<&str> = spec.split(':').collect();
    Ok(match parts[0] {
        "ball" if parts.len() == 2 => ball(grid, nums(&parts[1..], spec)?[0]),
        "ellipse" if parts.len() == 3 => {
            let v = nums(&parts[1..], spec)?;
            ellipse(grid, v[0], v[1])
        }
        "ellipsoid" if parts.len() == 4 => {
            let v = nums(&parts[1..], spec)?;
            ellipsoid(grid, [v[0], v[1], v[2]])
        }
        "perturbed-ball" if parts.len() >= 4 && parts.len().is_multiple_of(2) => {
            let r = nums(&parts[1..2], spec)?[0];
            let mut h = ball(grid, r);
            for pair in parts[2..].chunks(2) {
                let eps = nums(&pair[..1], spec)?[0];
                let mode = perturbed_ball(grid, 0.0, eps, parse_mode(pair[1])?);
                h = h.zip_map(&mode, |a, b| a + b)?;
            }
            h
        }
        "support-file" if parts.len() >= 2 => read_field(grid, &parts[1..].join(":"))?,
        _ => bail!("unrecognized initial body {spec:?}"),
    })
}
