use super::{Pose2D, Vec2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("point ({x}, {y}) is outside map")]
    OutsideMap { x: f64, y: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

const NO_SITE: u32 = u32::MAX;

/// Binary occupancy grid with a precomputed exact Euclidean distance field.
///
/// Cell `(i, j)` covers `[origin.x + i·res, origin.x + (i+1)·res) ×
/// [origin.y + j·res, origin.y + (j+1)·res)`; row `j = 0` is the bottom row.
/// Distances are measured between cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Pose2D,
    cells: Vec<bool>,
    distance_field: Vec<f64>,
    nearest: Vec<u32>,
}

impl OccupancyGrid {
    /// `cells` is row-major with row 0 at the bottom. The origin yaw must be zero.
    pub fn new(
        resolution: f64,
        width: usize,
        height: usize,
        origin: Pose2D,
        cells: Vec<bool>,
    ) -> Result<Self, WorldError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(WorldError::InvalidGrid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(WorldError::InvalidGrid("grid has no cells".into()));
        }
        if cells.len() != width * height {
            return Err(WorldError::InvalidGrid(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if origin.yaw().abs() > 1e-9 {
            return Err(WorldError::InvalidGrid("rotated map origins are not supported".into()));
        }
        let (distance_field, nearest) = exact_edt(&cells, width, height, resolution);
        Ok(Self {
            resolution,
            width,
            height,
            origin,
            cells,
            distance_field,
            nearest,
        })
    }

    /// Obstacle-free grid covering `width_m × height_m` meters.
    pub fn empty(width_m: f64, height_m: f64, resolution: f64, origin: Pose2D) -> Result<Self, WorldError> {
        let w = (width_m / resolution).round() as usize;
        let h = (height_m / resolution).round() as usize;
        Self::new(resolution, w, h, origin, vec![false; w * h])
    }

    /// Parses ASCII rows (`#` occupied, anything else free). The first row is
    /// the top of the map.
    pub fn from_ascii<S: AsRef<str>>(rows: &[S], resolution: f64, origin: Pose2D) -> Result<Self, WorldError> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().chars().count()).unwrap_or(0);
        let mut cells = vec![false; width * height];
        for (k, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(WorldError::InvalidGrid(format!(
                    "row {k} has {} columns, expected {width}",
                    row.chars().count()
                )));
            }
            let j = height - 1 - k;
            for (i, c) in row.chars().enumerate() {
                match c {
                    '#' => cells[j * width + i] = true,
                    '.' | ' ' => {}
                    other => {
                        return Err(WorldError::InvalidGrid(format!(
                            "unexpected character '{other}' in row {k}"
                        )))
                    }
                }
            }
        }
        Self::new(resolution, width, height, origin, cells)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.width + i]
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(k, _)| (k % self.width, k / self.width))
    }

    /// Distance in meters from the center of `(i, j)` to the nearest occupied
    /// cell center, `+∞` when the map has no obstacles.
    pub fn cell_distance(&self, i: usize, j: usize) -> f64 {
        self.distance_field[j * self.width + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.resolution;
        let fy = (p.y - self.origin.y) / self.resolution;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    fn checked_cell(&self, p: Vec2) -> Result<(usize, usize), WorldError> {
        self.cell_of(p).ok_or(WorldError::OutsideMap { x: p.x, y: p.y })
    }

    /// Distance from `p` to the nearest occupied cell center and the unit
    /// vector pointing from that obstacle toward `p`.
    ///
    /// Returns `(+∞, 0)` on an obstacle-free map and `(0, 0)` when `p` lies
    /// inside an occupied cell.
    pub fn distance_to_nearest_obstacle(&self, p: Vec2) -> Result<(f64, Vec2), WorldError> {
        let (i, j) = self.checked_cell(p)?;
        if self.is_occupied(i, j) {
            return Ok((0.0, Vec2::zeros()));
        }
        // Nearest sites of the 3x3 neighbourhood bound the error to well
        // under one cell for off-center query points.
        let mut best: Option<(f64, Vec2)> = None;
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= self.width as i64 || nj >= self.height as i64 {
                    continue;
                }
                let site = self.nearest[nj as usize * self.width + ni as usize];
                if site == NO_SITE {
                    continue;
                }
                let (si, sj) = (site as usize % self.width, site as usize / self.width);
                let c = self.cell_center(si, sj);
                let d = (p - c).norm();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
        Ok(match best {
            None => (f64::INFINITY, Vec2::zeros()),
            Some((d, c)) if d > 0.0 => (d, (p - c) / d),
            Some(_) => (0.0, Vec2::zeros()),
        })
    }

    /// True iff the segment `a → b` crosses no occupied cell (grid DDA).
    /// Symmetric in its arguments.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> Result<bool, WorldError> {
        self.checked_cell(a)?;
        self.checked_cell(b)?;
        // Traverse in a canonical direction so los(a, b) == los(b, a) even on
        // exact corner crossings.
        let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
        let (mut i, mut j) = self.checked_cell(a)?;
        let (ie, je) = self.checked_cell(b)?;
        let d = b - a;
        let res = self.resolution;
        let step_i: i64 = if d.x > 0.0 { 1 } else { -1 };
        let step_j: i64 = if d.y > 0.0 { 1 } else { -1 };
        let boundary = |idx: usize, step: i64, origin: f64| {
            let k = if step > 0 { idx as f64 + 1.0 } else { idx as f64 };
            origin + k * res
        };
        let mut t_max_x = if d.x != 0.0 {
            (boundary(i, step_i, self.origin.x) - a.x) / d.x
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if d.y != 0.0 {
            (boundary(j, step_j, self.origin.y) - a.y) / d.y
        } else {
            f64::INFINITY
        };
        let t_delta_x = if d.x != 0.0 { res / d.x.abs() } else { f64::INFINITY };
        let t_delta_y = if d.y != 0.0 { res / d.y.abs() } else { f64::INFINITY };

        let steps = i.abs_diff(ie) + j.abs_diff(je);
        for _ in 0..steps {
            if self.is_occupied(i, j) {
                return Ok(false);
            }
            let move_x = if i == ie {
                false
            } else if j == je {
                true
            } else {
                t_max_x <= t_max_y
            };
            if move_x {
                i = (i as i64 + step_i) as usize;
                t_max_x += t_delta_x;
            } else {
                j = (j as i64 + step_j) as usize;
                t_max_y += t_delta_y;
            }
        }
        Ok(!self.is_occupied(ie, je))
    }
}

/// Exact squared-distance transform (separable lower-envelope method) that also
/// records the nearest occupied cell of every cell.
fn exact_edt(cells: &[bool], width: usize, height: usize, resolution: f64) -> (Vec<f64>, Vec<u32>) {
    const INF: f64 = f64::INFINITY;
    // Column pass: vertical distance to the nearest occupied cell in the same column.
    let mut col_d2 = vec![INF; width * height];
    let mut col_row = vec![usize::MAX; width * height];
    for i in 0..width {
        let mut last: Option<usize> = None;
        for j in 0..height {
            if cells[j * width + i] {
                last = Some(j);
            }
            if let Some(l) = last {
                col_d2[j * width + i] = ((j - l) * (j - l)) as f64;
                col_row[j * width + i] = l;
            }
        }
        let mut last: Option<usize> = None;
        for j in (0..height).rev() {
            if cells[j * width + i] {
                last = Some(j);
            }
            if let Some(l) = last {
                let d2 = ((l - j) * (l - j)) as f64;
                if d2 < col_d2[j * width + i] {
                    col_d2[j * width + i] = d2;
                    col_row[j * width + i] = l;
                }
            }
        }
    }

    let mut dist = vec![INF; width * height];
    let mut nearest = vec![NO_SITE; width * height];
    let mut v = vec![0usize; width];
    let mut z = vec![0f64; width + 1];
    for j in 0..height {
        let g = |q: usize| col_d2[j * width + q];
        let mut k: isize = -1;
        for q in 0..width {
            let gq = g(q);
            if !gq.is_finite() {
                continue;
            }
            let fq = gq + (q * q) as f64;
            loop {
                if k < 0 {
                    k = 0;
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                let p = v[k as usize];
                let s = (fq - (g(p) + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
                if s <= z[k as usize] {
                    k -= 1;
                    continue;
                }
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                z[k as usize + 1] = INF;
                break;
            }
        }
        if k < 0 {
            continue;
        }
        let mut m = 0usize;
        for i in 0..width {
            while z[m + 1] < i as f64 {
                m += 1;
            }
            let q = v[m];
            let dx = i as f64 - q as f64;
            let d2 = dx * dx + g(q);
            dist[j * width + i] = d2.sqrt() * resolution;
            nearest[j * width + i] = (col_row[j * width + q] * width + q) as u32;
        }
    }
    (dist, nearest)
}
