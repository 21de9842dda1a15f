//! Ellipse pruning and the uniform grid index that serves it.
//!
//! An edge `(x, y)` can only lie on a `u → v` path of cost at most `beta` if
//! `|u x| + cost(x, y) + |y v| <= beta`, because network distance never
//! undercuts straight-line distance. That sum test is the membership
//! predicate; it implies both endpoints sit inside the focal ellipse.

use thiserror::Error;

use crate::model::{Edge, EdgeId, NodeId, RoadNetwork, FEASIBILITY_SLACK};

/// Ellipse with foci at two nodes and major-axis length `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub focus_u: NodeId,
    pub focus_v: NodeId,
    pub beta: f64,
}

impl Ellipse {
    pub fn new(focus_u: NodeId, focus_v: NodeId, beta: f64) -> Self {
        Self {
            focus_u,
            focus_v,
            beta,
        }
    }
}

/// `euclid(u, e.src) + e.cost + euclid(e.dst, v) <= beta` within slack.
#[inline]
pub fn edge_in_ellipse(network: &RoadNetwork, edge: &Edge, ell: &Ellipse) -> bool {
    let detour =
        network.euclid(ell.focus_u, edge.src) + edge.cost + network.euclid(edge.dst, ell.focus_v);
    detour <= ell.beta + FEASIBILITY_SLACK
}

/// Default cell size: bounding-box diagonal / 256, at least 50 m.
pub fn default_cell_size(network: &RoadNetwork) -> f64 {
    let diag = network
        .bounding_box()
        .map(|(x0, y0, x1, y1)| (x1 - x0).hypot(y1 - y0))
        .unwrap_or(0.0);
    (diag / 256.0).max(50.0)
}

const MAX_CELLS: usize = 1 << 24;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("cell size must be finite and positive, got {0}")]
    InvalidCellSize(f64),
    #[error("grid would need {cols}x{rows} cells; use a larger cell size")]
    TooManyCells { cols: usize, rows: usize },
}

/// Uniform grid over edge bounding boxes. Each cell lists, in ascending
/// `EdgeId`, every edge whose segment bounding box overlaps it.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size: f64,
    min_x: f64,
    min_y: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<EdgeId>>,
    edge_count: usize,
}

impl GridIndex {
    pub fn build(network: &RoadNetwork, cell_size: f64) -> Result<Self, GridError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(GridError::InvalidCellSize(cell_size));
        }
        let Some((min_x, min_y, max_x, max_y)) = network.bounding_box() else {
            return Ok(Self {
                cell_size,
                min_x: 0.0,
                min_y: 0.0,
                cols: 0,
                rows: 0,
                cells: Vec::new(),
                edge_count: 0,
            });
        };
        let cols = ((max_x - min_x) / cell_size).floor() as usize + 1;
        let rows = ((max_y - min_y) / cell_size).floor() as usize + 1;
        if cols.saturating_mul(rows) > MAX_CELLS {
            return Err(GridError::TooManyCells { cols, rows });
        }
        let mut grid = Self {
            cell_size,
            min_x,
            min_y,
            cols,
            rows,
            cells: vec![Vec::new(); cols * rows],
            edge_count: network.edge_count(),
        };
        for edge in network.edges() {
            let a = network.node(edge.src);
            let b = network.node(edge.dst);
            let (c0, r0) = grid.cell_of(a.x.min(b.x), a.y.min(b.y));
            let (c1, r1) = grid.cell_of(a.x.max(b.x), a.y.max(b.y));
            for r in r0..=r1 {
                for c in c0..=c1 {
                    grid.cells[r * cols + c].push(edge.id);
                }
            }
        }
        Ok(grid)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    /// Edge list of the cell containing `(x, y)` (clamped to the grid).
    pub fn cell_edges(&self, x: f64, y: f64) -> &[EdgeId] {
        if self.cells.is_empty() {
            return &[];
        }
        let (c, r) = self.cell_of(x, y);
        &self.cells[r * self.cols + c]
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        (
            axis_cell(x, self.min_x, self.cell_size, self.cols),
            axis_cell(y, self.min_y, self.cell_size, self.rows),
        )
    }

    /// Edges passing [`edge_in_ellipse`] (and `score > 0` when
    /// `positive_only`), ascending and deduplicated.
    pub fn candidate_edges(
        &self,
        network: &RoadNetwork,
        ell: &Ellipse,
        positive_only: bool,
    ) -> Vec<EdgeId> {
        if self.cells.is_empty() || ell.beta < 0.0 {
            return Vec::new();
        }
        let keep = |id: &EdgeId| {
            let edge = network.edge(*id);
            (!positive_only || edge.score > 0.0) && edge_in_ellipse(network, edge, ell)
        };

        // Every point of the ellipse lies within beta/2 of the foci midpoint.
        let u = network.node(ell.focus_u);
        let v = network.node(ell.focus_v);
        let (mx, my) = ((u.x + v.x) * 0.5, (u.y + v.y) * 0.5);
        let radius = ell.beta * 0.5 + FEASIBILITY_SLACK;
        let (c0, r0) = self.cell_of(mx - radius, my - radius);
        let (c1, r1) = self.cell_of(mx + radius, my + radius);

        let listed: usize = (r0..=r1)
            .flat_map(|r| (c0..=c1).map(move |c| r * self.cols + c))
            .map(|i| self.cells[i].len())
            .sum();
        if listed >= self.edge_count {
            return (0..self.edge_count as u32)
                .map(EdgeId)
                .filter(keep)
                .collect();
        }

        let mut out = Vec::with_capacity(listed);
        for r in r0..=r1 {
            for c in c0..=c1 {
                out.extend_from_slice(&self.cells[r * self.cols + c]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(keep);
        out
    }
}

fn axis_cell(value: f64, origin: f64, size: f64, count: usize) -> usize {
    let raw = ((value - origin) / size).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(count - 1)
    }
}

/// Builds a grid index; see [`GridIndex::build`].
pub fn build_grid(network: &RoadNetwork, cell_size: f64) -> Result<GridIndex, GridError> {
    GridIndex::build(network, cell_size)
}
