//! Config file schema and validation.
//!
//! A config is a JSON object:
//!
//! ```json
//! {
//!   "maps": [ { "A": [1.0, 0.5, 0.0, 0.5], "b": [0.0, 0.0], "p": 0.5 } ],
//!   "invariant_hint": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
//!   "bounds": [-0.25, 1.25, -0.25, 1.25]
//! }
//! ```
//!
//! `A` is row-major. Probabilities are all-or-none and must sum to 1 within
//! 1e-9; they are renormalised to an exact unit sum on load.

use ifskit::measure::{GridBounds, DEFAULT_BOUNDS};
use ifskit::polygon::ConvexPolygon;
use ifskit::{AffineMap, IfsSystem, Mat2, Vec2};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config field {field}: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    #[serde(rename = "A")]
    pub a: [f64; 4],
    pub b: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IfsConfig {
    pub maps: Vec<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_hint: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 4]>,
}

impl IfsConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: IfsConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.maps.is_empty() {
            return Err(invalid("maps", "at least one map is required"));
        }
        for (i, m) in self.maps.iter().enumerate() {
            if m.a.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("maps[{i}].A"), "entries must be finite"));
            }
            if m.b.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("maps[{i}].b"), "entries must be finite"));
            }
            if let Some(p) = m.p {
                if !p.is_finite() || p <= 0.0 {
                    return Err(invalid(
                        format!("maps[{i}].p"),
                        "probability must be a positive finite number",
                    ));
                }
            }
        }
        let given = self.maps.iter().filter(|m| m.p.is_some()).count();
        if given != 0 && given != self.maps.len() {
            return Err(invalid(
                "maps[].p",
                "probabilities must be given for all maps or none",
            ));
        }
        if given == self.maps.len() {
            let sum: f64 = self.maps.iter().map(|m| m.p.unwrap()).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(invalid(
                    "maps[].p",
                    format!("probabilities sum to {sum}, expected 1 within 1e-9"),
                ));
            }
        }
        if let Some(hint) = &self.invariant_hint {
            if hint.len() < 3 {
                return Err(invalid(
                    "invariant_hint",
                    "needs at least three vertices",
                ));
            }
            if hint.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid("invariant_hint", "vertices must be finite"));
            }
        }
        if let Some([xmin, xmax, ymin, ymax]) = self.bounds {
            if !(xmin < xmax && ymin < ymax)
                || [xmin, xmax, ymin, ymax].iter().any(|v| !v.is_finite())
            {
                return Err(invalid(
                    "bounds",
                    "expected finite [xmin, xmax, ymin, ymax] with xmin < xmax, ymin < ymax",
                ));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<IfsSystem, ConfigError> {
        let maps: Vec<AffineMap> = self
            .maps
            .iter()
            .map(|m| {
                AffineMap::new(
                    Mat2::new(m.a[0], m.a[1], m.a[2], m.a[3]),
                    Vec2::new(m.b[0], m.b[1]),
                )
            })
            .collect();
        if self.maps[0].p.is_some() {
            let sum: f64 = self.maps.iter().map(|m| m.p.unwrap()).sum();
            let probs = self.maps.iter().map(|m| m.p.unwrap() / sum).collect();
            IfsSystem::with_probs(maps, probs)
                .map_err(|e| invalid("maps[].p", e.to_string()))
        } else {
            IfsSystem::new(maps).map_err(|e| invalid("maps", e.to_string()))
        }
    }

    pub fn hint_polygon(&self) -> Result<Option<ConvexPolygon>, ConfigError> {
        match &self.invariant_hint {
            None => Ok(None),
            Some(vertices) => {
                let pts: Vec<Vec2> = vertices.iter().map(|&[x, y]| Vec2::new(x, y)).collect();
                ConvexPolygon::from_points(&pts)
                    .map(Some)
                    .map_err(|e| invalid("invariant_hint", e.to_string()))
            }
        }
    }

    pub fn grid_bounds(&self) -> GridBounds {
        match self.bounds {
            Some([xmin, xmax, ymin, ymax]) => GridBounds {
                xmin,
                xmax,
                ymin,
                ymax,
            },
            None => DEFAULT_BOUNDS,
        }
    }

    /// Config describing a named built-in system.
    #[cfg(test)]
    pub fn from_system(
        system: &IfsSystem,
        hint: Option<&ConvexPolygon>,
        bounds: Option<GridBounds>,
    ) -> Self {
        let maps = system
            .maps()
            .iter()
            .enumerate()
            .map(|(i, f)| MapConfig {
                a: [f.linear.a11, f.linear.a12, f.linear.a21, f.linear.a22],
                b: [f.offset.x, f.offset.y],
                p: system.probs().map(|p| p[i]),
            })
            .collect();
        IfsConfig {
            maps,
            invariant_hint: hint
                .map(|h| h.vertices().iter().map(|v| [v.x, v.y]).collect()),
            bounds: bounds.map(|b| [b.xmin, b.xmax, b.ymin, b.ymax]),
        }
    }
}
