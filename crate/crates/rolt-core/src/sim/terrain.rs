//! Heightfield terrains: flat, slope, stairs, platforms. Every kind is a
//! total, deterministic height function over the arena.

use crate::error::{Result, RoltError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    /// h(x) = grade·x.
    Slope { grade: f64 },
    /// Ascending steps for x ≥ 0: h = floor(x/run)·rise; a flat apron at 0
    /// behind the start.
    Stairs { rise: f64, run: f64 },
    /// Alternating raised blocks of the given height and length for x ≥ 0.
    Platform { height: f64, spacing: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub kind: TerrainKind,
}

impl Terrain {
    pub fn flat() -> Self {
        Terrain { kind: TerrainKind::Flat }
    }

    /// Validated constructor. Parameter ranges: stair rise 0.05–0.15 m,
    /// slope grade 0–0.2, platform height ≤ 0.15 m.
    pub fn make(kind: TerrainKind) -> Result<Terrain> {
        match kind {
            TerrainKind::Flat => {}
            TerrainKind::Slope { grade } => {
                if !(0.0..=0.2).contains(&grade) {
                    return Err(RoltError::Config(format!(
                        "slope grade {grade} outside [0, 0.2]"
                    )));
                }
            }
            TerrainKind::Stairs { rise, run } => {
                if !(0.05..=0.15).contains(&rise) {
                    return Err(RoltError::Config(format!(
                        "stair rise {rise} outside [0.05, 0.15]"
                    )));
                }
                if run < 0.1 {
                    return Err(RoltError::Config(format!("stair run {run} below 0.1 m")));
                }
            }
            TerrainKind::Platform { height, spacing } => {
                if !(0.0..=0.15).contains(&height) {
                    return Err(RoltError::Config(format!(
                        "platform height {height} outside [0, 0.15]"
                    )));
                }
                if spacing < 0.1 {
                    return Err(RoltError::Config(format!(
                        "platform spacing {spacing} below 0.1 m"
                    )));
                }
            }
        }
        Ok(Terrain { kind })
    }

    /// Terrain height at x, meters.
    pub fn height(&self, x: f64) -> f64 {
        match self.kind {
            TerrainKind::Flat => 0.0,
            TerrainKind::Slope { grade } => grade * x,
            TerrainKind::Stairs { rise, run } => {
                if x < 0.0 {
                    0.0
                } else {
                    (x / run).floor() * rise
                }
            }
            TerrainKind::Platform { height, spacing } => {
                if x < 0.0 {
                    0.0
                } else if ((x / spacing).floor() as i64) % 2 == 1 {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            TerrainKind::Flat => "flat".to_string(),
            TerrainKind::Slope { grade } => format!("slope_{grade}"),
            TerrainKind::Stairs { rise, run } => format!("stairs_{rise}x{run}"),
            TerrainKind::Platform { height, spacing } => format!("platform_{height}x{spacing}"),
        }
    }
}
