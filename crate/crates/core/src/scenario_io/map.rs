//! Occupancy maps in the common map-server layout: a YAML descriptor next to a
//! PGM image.
//!
//! ```yaml
//! image: warehouse.pgm
//! resolution: 0.1
//! origin: [0.0, 0.0, 0.0]
//! negate: 0
//! occupied_thresh: 0.65
//! free_thresh: 0.196
//! ```
//!
//! A pixel is occupied when its occupancy probability, `(255 − v) / 255`
//! (or `v / 255` with `negate: 1`), exceeds `occupied_thresh`. Unknown pixels
//! count as free.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::world::{OccupancyGrid, Pose2D};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapMeta {
    image: String,
    resolution: f64,
    origin: [f64; 3],
    #[serde(default)]
    negate: u8,
    #[serde(default = "default_occupied")]
    occupied_thresh: f64,
    #[serde(default)]
    #[allow(dead_code)]
    free_thresh: Option<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    mode: Option<String>,
}

fn default_occupied() -> f64 {
    0.65
}

/// Loads a map from its YAML descriptor. The image path is resolved
/// relative to the descriptor.
pub fn load_map(yaml_path: &Path) -> Result<OccupancyGrid, String> {
    let text = std::fs::read_to_string(yaml_path).map_err(|e| format!("{}: {e}", yaml_path.display()))?;
    let meta: MapMeta = serde_yaml::from_str(&text).map_err(|e| format!("{}: {e}", yaml_path.display()))?;
    if meta.origin[2] != 0.0 {
        return Err(format!("{}: rotated map origins are not supported", yaml_path.display()));
    }
    let image_path: PathBuf = yaml_path
        .parent()
        .map(|d| d.join(&meta.image))
        .unwrap_or_else(|| PathBuf::from(&meta.image));
    let img = image::open(&image_path)
        .map_err(|e| format!("{}: {e}", image_path.display()))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut cells = vec![false; w * h];
    for (x, y, px) in img.enumerate_pixels() {
        let v = px.0[0] as f64 / 255.0;
        let p = if meta.negate != 0 { v } else { 1.0 - v };
        // Image row 0 is the top of the map; grid row 0 is the bottom.
        let row = h - 1 - y as usize;
        cells[row * w + x as usize] = p > meta.occupied_thresh;
    }
    OccupancyGrid::new(
        meta.resolution,
        w,
        h,
        Pose2D::new(meta.origin[0], meta.origin[1], 0.0),
        cells,
    )
    .map_err(|e| format!("{}: {e}", yaml_path.display()))
}
