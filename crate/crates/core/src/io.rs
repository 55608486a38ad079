//! Serialization helpers: 17-significant-digit floats, body dumps and SVG
//! polylines.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sphere::{GridKind, ScalarField, SphericalGrid};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A JSON number carrying exactly the digits of [`fmt_f64`]. Non-finite
/// values become `null`.
pub fn json_f64(x: f64) -> serde_json::Value {
    if !x.is_finite() {
        return serde_json::Value::Null;
    }
    serde_json::Number::from_str(&fmt_f64(x)).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
}

/// `#[serde(with = "f17")]` for `f64` fields; `null` reads back as NaN.
pub mod f17 {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        json_f64(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        if v.is_null() {
            return Ok(f64::NAN);
        }
        v.as_f64().ok_or_else(|| serde::de::Error::custom("expected a number"))
    }
}

/// `#[serde(with = "f17_vec")]` for `Vec<f64>` fields.
pub mod f17_vec {
    use super::*;

    pub fn serialize<S: Serializer>(x: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        x.iter().map(|&v| json_f64(v)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let v = Vec::<serde_json::Value>::deserialize(d)?;
        v.iter().map(|x| x.as_f64().ok_or_else(|| serde::de::Error::custom("expected a number"))).collect()
    }
}

/// `#[serde(with = "f17_opt_vec")]` for `Option<Vec<f64>>` fields.
pub mod f17_opt_vec {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match x {
            Some(v) => v.iter().map(|&v| json_f64(v)).collect::<Vec<_>>().serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
        let v = Option::<Vec<serde_json::Value>>::deserialize(d)?;
        v.map(|v| v.iter().map(|x| x.as_f64().ok_or_else(|| serde::de::Error::custom("expected a number"))).collect())
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Circle { n: usize },
    Latlon { n_lat: usize, n_lon: usize },
}

impl From<GridKind> for GridSpec {
    fn from(k: GridKind) -> Self {
        match k {
            GridKind::Circle { n } => GridSpec::Circle { n },
            GridKind::LatLon { n_lat, n_lon } => GridSpec::Latlon { n_lat, n_lon },
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<std::sync::Arc<SphericalGrid>> {
        match *self {
            GridSpec::Circle { n } => SphericalGrid::circle(n),
            GridSpec::Latlon { n_lat, n_lon } => SphericalGrid::latlon(n_lat, n_lon),
        }
    }
}

/// JSON dump of a body: its grid, support values and optionally the Gauss
/// curvature per node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyDump {
    pub dim: usize,
    pub grid: GridSpec,
    #[serde(with = "f17_vec")]
    pub h: Vec<f64>,
    #[serde(default, with = "f17_opt_vec", skip_serializing_if = "Option::is_none")]
    pub gauss_k: Option<Vec<f64>>,
}

impl BodyDump {
    pub fn new(h: &ScalarField, gauss_k: Option<&ScalarField>) -> Self {
        BodyDump {
            dim: h.dim(),
            grid: h.grid().kind().into(),
            h: h.values().to_vec(),
            gauss_k: gauss_k.map(|k| k.values().to_vec()),
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    /// Rebuilds the support field on a freshly constructed grid.
    pub fn support_field(&self) -> Result<ScalarField> {
        let grid = self.grid.build()?;
        if grid.dim() != self.dim {
            return Err(Error::InvalidInput("dump dimension does not match its grid".into()));
        }
        ScalarField::new(grid, self.h.clone())
    }
}

/// A polyline for [`write_svg`]; points are in data coordinates.
#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    pub color: &'static str,
}

/// Writes polylines into an SVG canvas. `equal_aspect` keeps x and y on one
/// scale, which is what boundary curves need; time series use independent
/// scales.
pub fn write_svg<W: Write>(mut w: W, lines: &[Polyline], equal_aspect: bool) -> Result<()> {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 20.0;
    let pts = lines.iter().flat_map(|l| l.points.iter()).filter(|p| p[0].is_finite() && p[1].is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let mut sx = (x1 - x0).max(1e-300);
    let mut sy = (y1 - y0).max(1e-300);
    if equal_aspect {
        let s = sx.max(sy);
        x0 -= 0.5 * (s - sx);
        y0 -= 0.5 * (s - sy);
        sx = s;
        sy = s;
    }
    let span = SIZE - 2.0 * PAD;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )?;
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    for l in lines {
        let coords: Vec<String> = l
            .points
            .iter()
            .filter(|p| p[0].is_finite() && p[1].is_finite())
            .map(|p| {
                let x = PAD + (p[0] - x0) / sx * span;
                let y = SIZE - PAD - (p[1] - y0) / sy * span;
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let tag = if l.closed { "polygon" } else { "polyline" };
        writeln!(w, r#"<{tag} points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, coords.join(" "), l.color)?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}
