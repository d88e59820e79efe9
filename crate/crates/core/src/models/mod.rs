//! Concrete sensor-network state-space models.

pub mod gaussian;
pub mod gh;
pub mod poisson;

use crate::error::{Error, Result};
use std::path::Path;

/// Planar sensor locations.
#[derive(Debug, Clone)]
pub struct SensorGrid {
    locations: Vec<[f64; 2]>,
}

impl SensorGrid {
    /// `sqrt(d) x sqrt(d)` sensors at integer coordinates `{1..s} x {1..s}`.
    ///
    /// `d` must be a perfect square; irregular layouts come from
    /// [`SensorGrid::from_csv`].
    pub fn unit_grid(d: usize) -> Result<Self> {
        let side = (d as f64).sqrt().round() as usize;
        if side * side != d || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid mode needs a perfect-square sensor count, got {d}"
            )));
        }
        let mut locations = Vec::with_capacity(d);
        for i in 1..=side {
            for j in 1..=side {
                locations.push([i as f64, j as f64]);
            }
        }
        Ok(Self { locations })
    }

    pub fn from_locations(locations: Vec<[f64; 2]>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidParameter("empty sensor grid".into()));
        }
        for (k, loc) in locations.iter().enumerate() {
            if !loc[0].is_finite() || !loc[1].is_finite() {
                return Err(Error::NonFinite {
                    term: format!("sensor location {k}"),
                    value: if loc[0].is_finite() { loc[1] } else { loc[0] },
                });
            }
        }
        Ok(Self { locations })
    }

    /// Loads a `k,sx,sy` CSV (header required, one row per sensor, ordered
    /// by `k`).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                let header: Vec<&str> = line.split(',').map(str::trim).collect();
                if header != ["k", "sx", "sy"] {
                    return Err(Error::InvalidParameter(format!(
                        "sensor CSV header must be `k,sx,sy`, got `{line}`"
                    )));
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::InvalidParameter(format!(
                    "sensor CSV line {}: expected 3 fields",
                    lineno + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad number `{s}`")))
            };
            rows.push((
                fields[0]
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad index `{}`", fields[0])))?,
                parse(fields[1])?,
                parse(fields[2])?,
            ));
        }
        rows.sort_by_key(|r| r.0);
        Self::from_locations(rows.into_iter().map(|(_, x, y)| [x, y]).collect())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn location(&self, k: usize) -> [f64; 2] {
        self.locations[k]
    }

    /// Squared Euclidean distance between sensors i and j.
    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        let a = self.locations[i];
        let b = self.locations[j];
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
    }
}
