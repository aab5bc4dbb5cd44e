//! Test-time observation corruption: whole-patch offsets (low-frequency) and
//! per-point Gaussian jitter (high-frequency). Training observations stay
//! clean; these run only in evaluation, as pure functions of their inputs and
//! an rng stream keyed by (seed, step index).

use crate::error::{Result, RoltError};
use crate::obs::ElevationMap;
use crate::rng::{derive, stream};
use crate::sim::{sample_scandots, scan_x, ScanConfig, Terrain};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    None,
    /// A fixed number of whole patches offset vertically by ±offset_scale.
    LowFreq { patch_count: usize, offset_scale: f64 },
    /// Every height point shifted vertically and laterally with independent
    /// Gaussian noise; lateral shift is realized as query-point jitter, so
    /// this replaces scandot sampling rather than post-processing it.
    HighFreq { sigma_v: f64, sigma_lat: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        CorruptionSpec { kind: CorruptionKind::None, seed: 0 }
    }

    pub fn validate(&self, patches: usize) -> Result<()> {
        match self.kind {
            CorruptionKind::None => Ok(()),
            CorruptionKind::LowFreq { patch_count, offset_scale } => {
                if patch_count > patches {
                    return Err(RoltError::Config(format!(
                        "patch_count {patch_count} exceeds {patches} patches"
                    )));
                }
                if offset_scale < 0.0 {
                    return Err(RoltError::Config("offset_scale must be >= 0".into()));
                }
                Ok(())
            }
            CorruptionKind::HighFreq { sigma_v, sigma_lat } => {
                if sigma_v < 0.0 || sigma_lat < 0.0 {
                    return Err(RoltError::Config("sigmas must be >= 0".into()));
                }
                Ok(())
            }
        }
    }
}

/// Offset `patch_count` distinct patches (chosen uniformly without
/// replacement) by ±offset_scale, sign uniform per patch. Heights outside the
/// chosen patches are untouched bitwise.
pub fn low_freq_offset<R: Rng>(
    map: &ElevationMap,
    patch_rows: usize,
    patch_cols: usize,
    patch_count: usize,
    offset_scale: f64,
    rng: &mut R,
) -> Result<ElevationMap> {
    let patches = patch_rows * patch_cols;
    if patch_count > patches {
        return Err(RoltError::Config(format!(
            "patch_count {patch_count} exceeds {patches} patches"
        )));
    }
    if map.rows % patch_rows != 0 || map.cols % patch_cols != 0 {
        return Err(RoltError::Config(format!(
            "map {}x{} not divisible by patch grid {patch_rows}x{patch_cols}",
            map.rows, map.cols
        )));
    }
    // Partial Fisher-Yates for a uniform sample without replacement.
    let mut idx: Vec<usize> = (0..patches).collect();
    for i in 0..patch_count {
        let j = i + rng.gen_range(0..patches - i);
        idx.swap(i, j);
    }
    let chosen = &idx[..patch_count];
    let mut out = map.clone();
    let ph = map.rows / patch_rows;
    let pw = map.cols / patch_cols;
    for &p in chosen {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let offset = sign * offset_scale;
        let pr = p / patch_cols;
        let pc = p % patch_cols;
        for r in 0..ph {
            for c in 0..pw {
                let i = (pr * ph + r) * map.cols + pc * pw + c;
                out.heights[i] += offset;
            }
        }
    }
    Ok(out)
}

/// Scandot sampling with per-point noise: value = h(x + ε_lat) + ε_v − base_z
/// with ε_lat ~ N(0, σ_lat²) and ε_v ~ N(0, σ_v²), independent per point.
pub fn high_freq_gaussian<R: Rng>(
    base_x: f64,
    base_z: f64,
    terrain: &Terrain,
    scan: &ScanConfig,
    sigma_v: f64,
    sigma_lat: f64,
    rng: &mut R,
) -> ElevationMap {
    let mut heights = Vec::with_capacity(scan.rows * scan.cols);
    for _ in 0..scan.rows {
        for c in 0..scan.cols {
            let e_lat: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            let e_v: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            let x = scan_x(base_x, scan, c) + sigma_lat * e_lat;
            heights.push(terrain.height(x) + sigma_v * e_v - base_z);
        }
    }
    ElevationMap::new(scan.rows, scan.cols, scan.spacing, heights)
}

/// Produce the (possibly corrupted) elevation map an evaluation step sees.
/// Deterministic given (spec, episode seed, step index, base pose, terrain).
pub fn corrupted_scandots(
    spec: &CorruptionSpec,
    episode_seed: u64,
    step_index: u64,
    base_x: f64,
    base_z: f64,
    terrain: &Terrain,
    scan: &ScanConfig,
    patch_grid: (usize, usize),
) -> Result<ElevationMap> {
    match spec.kind {
        CorruptionKind::None => Ok(sample_scandots(base_x, base_z, terrain, scan)),
        CorruptionKind::LowFreq { patch_count, offset_scale } => {
            let clean = sample_scandots(base_x, base_z, terrain, scan);
            let mut rng = derive(spec.seed, &[stream::CORRUPTION, episode_seed, step_index]);
            low_freq_offset(&clean, patch_grid.0, patch_grid.1, patch_count, offset_scale, &mut rng)
        }
        CorruptionKind::HighFreq { sigma_v, sigma_lat } => {
            let mut rng = derive(spec.seed, &[stream::CORRUPTION, episode_seed, step_index]);
            Ok(high_freq_gaussian(base_x, base_z, terrain, scan, sigma_v, sigma_lat, &mut rng))
        }
    }
}
