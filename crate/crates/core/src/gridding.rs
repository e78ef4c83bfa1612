//! Cartesian grid over the enlarged network domain, inverse-distance-weighted
//! parameter rasters and point-source rasterization.
//!
//! Cell `(i, j)` uses full-grid indices including the ghost layer: interior
//! cells are `ghost..ghost + nx` by `ghost..ghost + ny`, row-major with `j`
//! increasing northwards.

use std::fmt::Write as _;

use crate::direction::{Dir, DirMatrix, PerDir};
use crate::error::{Error, Result};
use crate::network::StreetNetwork;
use crate::news_params::NewsParams;
use crate::schedule::IntersectionIo;

/// Decay rate of the interpolation weights, 1/m.
pub const DEFAULT_MU: f64 = 0.02;
pub const DEFAULT_PAD: usize = 3;
pub const DEFAULT_GHOST: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    /// Interior cell counts, pad layers included.
    Cells { nx: usize, ny: usize },
    /// Target cell size in meters (square cells).
    Spacing(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    /// Interior cell counts (pad included, ghosts excluded).
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Lower-left corner of the interior domain.
    pub x0: f64,
    pub y0: f64,
    pub ghost: usize,
    pub pad: usize,
}

impl Grid {
    pub fn new(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        x0: f64,
        y0: f64,
        ghost: usize,
        pad: usize,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(
                "grid needs at least one cell per direction".into(),
            ));
        }
        if !(dx > 0.0 && dy > 0.0) || !dx.is_finite() || !dy.is_finite() {
            return Err(Error::Config(format!(
                "grid spacing ({dx}, {dy}) must be positive"
            )));
        }
        if ghost == 0 {
            return Err(Error::Config("at least one ghost layer is required".into()));
        }
        Ok(Grid {
            nx,
            ny,
            dx,
            dy,
            x0,
            y0,
            ghost,
            pad,
        })
    }

    /// Grid enclosing the network's bounding box with `pad` extra cells on
    /// every side.
    pub fn for_network(
        net: &StreetNetwork,
        spec: GridSpec,
        pad: usize,
        ghost: usize,
    ) -> Result<Self> {
        let bb = net.bounding_box;
        let (w, h) = (bb.width(), bb.height());
        match spec {
            GridSpec::Cells { nx, ny } => {
                if nx <= 2 * pad || ny <= 2 * pad {
                    return Err(Error::Config(format!(
                        "{nx}x{ny} cells leave no room inside a pad of {pad}"
                    )));
                }
                let (mx, my) = ((nx - 2 * pad) as f64, (ny - 2 * pad) as f64);
                let (dx, dy) = match (w > 0.0, h > 0.0) {
                    (true, true) => (w / mx, h / my),
                    (true, false) => (w / mx, w / mx),
                    (false, true) => (h / my, h / my),
                    (false, false) => {
                        return Err(Error::Config(
                            "network has no extent; give a cell spacing instead of cell counts"
                                .into(),
                        ))
                    }
                };
                Grid::new(
                    nx,
                    ny,
                    dx,
                    dy,
                    bb.min_x - pad as f64 * dx,
                    bb.min_y - pad as f64 * dy,
                    ghost,
                    pad,
                )
            }
            GridSpec::Spacing(d) => {
                if !(d > 0.0) {
                    return Err(Error::Config(format!("cell spacing {d} must be positive")));
                }
                let mx = ((w / d).ceil() as usize).max(1);
                let my = ((h / d).ceil() as usize).max(1);
                let extra_x = mx as f64 * d - w;
                let extra_y = my as f64 * d - h;
                Grid::new(
                    mx + 2 * pad,
                    my + 2 * pad,
                    d,
                    d,
                    bb.min_x - pad as f64 * d - extra_x / 2.0,
                    bb.min_y - pad as f64 * d - extra_y / 2.0,
                    ghost,
                    pad,
                )
            }
        }
    }

    /// Full width including ghosts.
    #[inline]
    pub fn width(&self) -> usize {
        self.nx + 2 * self.ghost
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.ny + 2 * self.ghost
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.width() + i
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= self.ghost && i < self.ghost + self.nx && j >= self.ghost && j < self.ghost + self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Barycenter of full-grid cell `(i, j)`; ghosts lie outside the domain.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 - self.ghost as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 - self.ghost as f64 + 0.5) * self.dy,
        )
    }

    /// Interior cell containing `(x, y)` under half-open cells; the domain's
    /// upper edges belong to the last cell.
    pub fn containing_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.x0) / self.dx;
        let fy = (y - self.y0) / self.dy;
        let locate = |f: f64, n: usize| -> Option<usize> {
            if !(f >= 0.0) || f > n as f64 {
                None
            } else {
                Some((f.floor() as usize).min(n - 1))
            }
        };
        Some((
            locate(fx, self.nx)? + self.ghost,
            locate(fy, self.ny)? + self.ghost,
        ))
    }

    /// Interior cell indices in row-major order.
    pub fn interior(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.ghost..self.ghost + self.ny)
            .flat_map(move |j| (self.ghost..self.ghost + self.nx).map(move |i| (i, j)))
    }
}

/// Parameters of one cell, all directions together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub cos_bar: PerDir<f64>,
    pub sin_bar: PerDir<f64>,
    pub v_max: PerDir<f64>,
    pub rho_max: PerDir<f64>,
    pub rho_crit: PerDir<f64>,
    pub length: f64,
    pub alpha: DirMatrix,
    pub beta: DirMatrix,
}

impl CellParams {
    /// Cell with one FD for every direction, no trig and no turning.
    pub fn uniform(v_max: f64, rho_max: f64, gamma: f64, length: f64) -> Self {
        CellParams {
            cos_bar: [0.0; 4],
            sin_bar: [0.0; 4],
            v_max: [v_max; 4],
            rho_max: [rho_max; 4],
            rho_crit: [gamma * rho_max; 4],
            length,
            alpha: [[0.0; 4]; 4],
            beta: [[0.0; 4]; 4],
        }
    }

    fn from_news(p: &NewsParams) -> Self {
        CellParams {
            cos_bar: p.cos_bar,
            sin_bar: p.sin_bar,
            v_max: p.v_max,
            rho_max: p.rho_max,
            rho_crit: p.rho_crit,
            length: p.length,
            alpha: p.alpha,
            beta: p.beta,
        }
    }

    fn scalars(&self) -> impl Iterator<Item = f64> + '_ {
        self.cos_bar
            .iter()
            .chain(&self.sin_bar)
            .chain(&self.v_max)
            .chain(&self.rho_max)
            .chain(&self.rho_crit)
            .chain(std::iter::once(&self.length))
            .chain(self.alpha.iter().flatten())
            .chain(self.beta.iter().flatten())
            .copied()
    }

    fn scalars_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.cos_bar
            .iter_mut()
            .chain(self.sin_bar.iter_mut())
            .chain(self.v_max.iter_mut())
            .chain(self.rho_max.iter_mut())
            .chain(self.rho_crit.iter_mut())
            .chain(std::iter::once(&mut self.length))
            .chain(self.alpha.iter_mut().flatten())
            .chain(self.beta.iter_mut().flatten())
    }

    #[inline]
    pub fn phi_max(&self, d: usize) -> f64 {
        self.v_max[d] * self.rho_crit[d]
    }
}

/// Rasterized parameters plus face-averaged trig terms.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFields {
    pub grid: Grid,
    pub gamma: f64,
    /// One entry per full-grid cell.
    pub cells: Vec<CellParams>,
    /// Cosines at vertical faces `(i + 1/2, j)`, `(width - 1) x height`.
    pub cos_face: Vec<PerDir<f64>>,
    /// Sines at horizontal faces `(i, j + 1/2)`, `width x (height - 1)`.
    pub sin_face: Vec<PerDir<f64>>,
}

impl GridFields {
    pub fn from_cells(grid: Grid, cells: Vec<CellParams>, gamma: f64) -> Self {
        assert_eq!(cells.len(), grid.len(), "one parameter set per cell");
        let mut f = GridFields {
            grid,
            gamma,
            cells,
            cos_face: Vec::new(),
            sin_face: Vec::new(),
        };
        f.recompute_faces();
        f
    }

    pub fn uniform(grid: Grid, cell: CellParams, gamma: f64) -> Self {
        Self::from_cells(grid, vec![cell; grid.len()], gamma)
    }

    /// Arithmetic means of the adjacent cell values: cosines left/right of
    /// vertical faces, sines below/above horizontal faces.
    pub fn recompute_faces(&mut self) {
        let (w, h) = (self.grid.width(), self.grid.height());
        let c = &self.cells;
        self.cos_face = (0..h)
            .flat_map(|j| (0..w - 1).map(move |i| (i, j)))
            .map(|(i, j)| {
                let (a, b) = (&c[j * w + i].cos_bar, &c[j * w + i + 1].cos_bar);
                std::array::from_fn(|d| 0.5 * (a[d] + b[d]))
            })
            .collect();
        self.sin_face = (0..h - 1)
            .flat_map(|j| (0..w).map(move |i| (i, j)))
            .map(|(i, j)| {
                let (a, b) = (&c[j * w + i].sin_bar, &c[(j + 1) * w + i].sin_bar);
                std::array::from_fn(|d| 0.5 * (a[d] + b[d]))
            })
            .collect();
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &CellParams {
        &self.cells[self.grid.idx(i, j)]
    }

    /// Cosines on the face between `(i, j)` and `(i + 1, j)`.
    #[inline]
    pub fn cos_at(&self, i: usize, j: usize) -> &PerDir<f64> {
        &self.cos_face[j * (self.grid.width() - 1) + i]
    }

    /// Sines on the face between `(i, j)` and `(i, j + 1)`.
    #[inline]
    pub fn sin_at(&self, i: usize, j: usize) -> &PerDir<f64> {
        &self.sin_face[j * self.grid.width() + i]
    }

    /// Named cell-centered rasters, used for dumps.
    pub fn named_rasters(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        let mut push = |name: String, get: &dyn Fn(&CellParams) -> f64| {
            out.push((name, self.cells.iter().map(get).collect()));
        };
        for d in Dir::ALL {
            let x = d.index();
            push(format!("cos_{d}"), &|c| c.cos_bar[x]);
            push(format!("sin_{d}"), &|c| c.sin_bar[x]);
            push(format!("vmax_{d}"), &|c| c.v_max[x]);
            push(format!("rhomax_{d}"), &|c| c.rho_max[x]);
            push(format!("rhocrit_{d}"), &|c| c.rho_crit[x]);
        }
        push("L".into(), &|c| c.length);
        for a in Dir::ALL {
            for b in Dir::ALL {
                let (x, y) = (a.index(), b.index());
                push(format!("alpha_{a}{b}"), &|c| c.alpha[x][y]);
                push(format!("beta_{a}{b}"), &|c| c.beta[x][y]);
            }
        }
        out
    }

    /// Delimited-text dump of one full-grid raster (ghosts included):
    /// header `nx ny dx dy x0 y0`, then one row per `j`, south first.
    pub fn dump_raster(&self, values: &[f64]) -> String {
        let g = &self.grid;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            g.width(),
            g.height(),
            g.dx,
            g.dy,
            g.x0 - g.ghost as f64 * g.dx,
            g.y0 - g.ghost as f64 * g.dy
        );
        for j in 0..g.height() {
            let row: Vec<String> = (0..g.width())
                .map(|i| values[g.idx(i, j)].to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Exponentially weighted average of `values` located at `points`.
pub fn idw_interpolate(points: &[(f64, f64)], values: &[f64], x: f64, y: f64, mu: f64) -> f64 {
    let w = idw_weights(points, x, y, mu);
    w.iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Normalized weights. Distances are shifted by the nearest one before
/// exponentiation, which leaves the ratios unchanged and avoids underflow far
/// from the network.
pub fn idw_weights(points: &[(f64, f64)], x: f64, y: f64, mu: f64) -> Vec<f64> {
    let dist: Vec<f64> = points
        .iter()
        .map(|&(px, py)| (x - px).hypot(y - py))
        .collect();
    let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = dist.iter().map(|d| (-mu * (d - nearest)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// Interpolate compiled intersection parameters at every cell barycenter,
/// ghosts included.
pub fn rasterize_parameters(
    net: &StreetNetwork,
    params: &[NewsParams],
    grid: Grid,
    mu: f64,
    gamma: f64,
) -> GridFields {
    assert_eq!(net.intersections.len(), params.len());
    let points: Vec<(f64, f64)> = net.intersections.iter().map(|n| (n.x, n.y)).collect();
    let sources: Vec<CellParams> = params.iter().map(CellParams::from_news).collect();
    let scalars: Vec<Vec<f64>> = sources.iter().map(|c| c.scalars().collect()).collect();
    let template = sources[0];
    let cells = (0..grid.height())
        .flat_map(|j| (0..grid.width()).map(move |i| (i, j)))
        .map(|(i, j)| {
            let (x, y) = grid.center(i, j);
            let w = idw_weights(&points, x, y, mu);
            let mut cell = template;
            for (q, slot) in cell.scalars_mut().enumerate() {
                *slot = w.iter().zip(&scalars).map(|(w, s)| w * s[q]).sum();
            }
            cell
        })
        .collect();
    GridFields::from_cells(grid, cells, gamma)
}

/// Source demand and sink supply of one cell, per direction, as flow
/// densities (veh/(m^2 s)). Infinite sinks mark unbounded outflow.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IoValues {
    pub source: PerDir<f64>,
    pub sink: PerDir<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoCell {
    /// Full-grid cell index.
    pub index: usize,
    pub i: usize,
    pub j: usize,
    /// One entry per schedule minute.
    pub minutes: Vec<IoValues>,
}

/// Sparse per-cell io schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct IoField {
    pub minutes: usize,
    pub cells: Vec<IoCell>,
}

impl IoField {
    pub fn empty() -> Self {
        IoField {
            minutes: 1,
            cells: Vec::new(),
        }
    }

    /// Total scheduled source demand integrated over all minutes, in vehicles.
    pub fn total_source(&self, grid: &Grid) -> f64 {
        self.cells
            .iter()
            .flat_map(|c| c.minutes.iter())
            .map(|m| m.source.iter().sum::<f64>() * grid.cell_area() * 60.0)
            .sum()
    }
}

/// Place every intersection's cardinal io values in the single cell
/// containing it, divided by the cell area.
pub fn rasterize_point_sources(
    net: &StreetNetwork,
    io: &[IntersectionIo],
    minutes: usize,
    grid: &Grid,
) -> Result<IoField> {
    let area = grid.cell_area();
    let mut cells: Vec<IoCell> = Vec::new();
    for entry in io {
        let node = &net.intersections[entry.intersection];
        let (i, j) = grid.containing_cell(node.x, node.y).ok_or_else(|| {
            Error::Config(format!("intersection {} lies outside the grid", node.id))
        })?;
        let index = grid.idx(i, j);
        let pos = match cells.iter().position(|c| c.index == index) {
            Some(p) => p,
            None => {
                cells.push(IoCell {
                    index,
                    i,
                    j,
                    minutes: vec![IoValues::default(); minutes],
                });
                cells.len() - 1
            }
        };
        for (m, v) in entry.minutes.iter().enumerate() {
            let slot = &mut cells[pos].minutes[m];
            for d in 0..4 {
                slot.source[d] += v.source[d] / area;
                slot.sink[d] += v.sink[d] / area;
            }
        }
    }
    cells.sort_by_key(|c| c.index);
    Ok(IoField { minutes, cells })
}
