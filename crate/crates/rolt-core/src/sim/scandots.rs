//! Scandot sampling: a base-centered uniform grid of terrain heights,
//! relative to base height. Planar model: every lateral row replicates the
//! forward-axis profile.

use super::{ScanConfig, Terrain};
use crate::obs::ElevationMap;

/// x-coordinate of scandot column `c`, centered on the base.
pub fn scan_x(base_x: f64, scan: &ScanConfig, c: usize) -> f64 {
    base_x + (c as f64 - (scan.cols as f64 - 1.0) / 2.0) * scan.spacing
}

pub fn sample_scandots(base_x: f64, base_z: f64, terrain: &Terrain, scan: &ScanConfig) -> ElevationMap {
    let mut row = Vec::with_capacity(scan.cols);
    for c in 0..scan.cols {
        row.push(terrain.height(scan_x(base_x, scan, c)) - base_z);
    }
    let mut heights = Vec::with_capacity(scan.rows * scan.cols);
    for _ in 0..scan.rows {
        heights.extend_from_slice(&row);
    }
    ElevationMap::new(scan.rows, scan.cols, scan.spacing, heights)
}
