//! Structured right-triangle meshes of the unit square.
//!
//! Square `(i, j)` (column `i`, row `j`) is split along its lower-left to
//! upper-right diagonal into a lower-right cell `2 (j n + i)` and an upper-left
//! cell `2 (j n + i) + 1`. Both are stored counterclockwise starting from the
//! lower-left corner, so every cell has one of exactly two affine maps.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("a mesh needs at least one subdivision per side")]
    ZeroSubdivisions,
    #[error("point ({x}, {y}) lies outside the closed unit square")]
    PointOutside { x: f64, y: f64 },
}

/// An edge, stored with the lower vertex index first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// First adjacent cell; the second is `None` on the boundary.
    pub cells: (usize, Option<usize>),
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Cell containing a point together with the point's barycentric coordinates
/// with respect to that cell's vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub cell: usize,
    pub bary: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// `cell_edges[c][i]` is the edge opposite local vertex `i` of cell `c`.
    cell_edges: Vec<[usize; 3]>,
    h: f64,
}

// Slack used when deciding whether a point sits on a grid line.
const GRID_EPS: f64 = 1e-12;

impl Mesh {
    /// Builds the `n x n` structured mesh of `[0, 1]^2`.
    pub fn structured(n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroSubdivisions);
        }
        let nv = n + 1;
        let inv = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(nv * nv);
        for j in 0..nv {
            for i in 0..nv {
                vertices.push([i as f64 * inv, j as f64 * inv]);
            }
        }

        let vid = |i: usize, j: usize| j * nv + i;
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * n * n + 2 * n);
        let mut edges: Vec<Edge> = Vec::with_capacity(3 * n * n + 2 * n);
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (c, tri) in cells.iter().enumerate() {
            let mut local = [0usize; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                *slot = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge { vertices: [key.0, key.1], cells: (c, None) });
                    edges.len() - 1
                });
                let e = &mut edges[*slot];
                if e.cells.0 != c {
                    e.cells.1 = Some(c);
                }
            }
            cell_edges.push(local);
        }

        Ok(Self { n, vertices, cells, edges, cell_edges, h: std::f64::consts::SQRT_2 * inv })
    }

    /// Subdivisions per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.cells[cell];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of a cell (positive for counterclockwise orientation).
    pub fn signed_area(&self, cell: usize) -> f64 {
        let [p0, p1, p2] = self.cell_vertices(cell);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let nv = self.n + 1;
        let (i, j) = (v % nv, v / nv);
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Maps barycentric coordinates in `cell` to physical coordinates.
    pub fn to_physical(&self, cell: usize, bary: [f64; 3]) -> [f64; 2] {
        let p = self.cell_vertices(cell);
        [
            bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
            bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
        ]
    }

    /// Finds the cell owning `p` in constant time.
    ///
    /// Points shared by several cells (edges, vertices) go to the lowest cell
    /// index among those containing them.
    pub fn locate(&self, p: [f64; 2]) -> Result<Location, MeshError> {
        let [x, y] = p;
        let slack = 1e-14;
        if !(x >= -slack && x <= 1.0 + slack && y >= -slack && y <= 1.0 + slack) {
            return Err(MeshError::PointOutside { x, y });
        }
        let nf = self.n as f64;
        let (s, t) = (x.clamp(0.0, 1.0) * nf, y.clamp(0.0, 1.0) * nf);
        let cand_i = self.grid_candidates(s);
        let cand_j = self.grid_candidates(t);

        let mut best: Option<Location> = None;
        for &j in cand_j.iter().flatten() {
            for &i in cand_i.iter().flatten() {
                let (a, b) = (s - i as f64, t - j as f64);
                let base = 2 * (j * self.n + i);
                // lower-right cell (v00, v10, v11): 0 <= b <= a <= 1
                if b >= -GRID_EPS && a <= 1.0 + GRID_EPS && b <= a + GRID_EPS {
                    let loc = Location { cell: base, bary: normalize([1.0 - a, a - b, b]) };
                    if best.is_none_or(|l| loc.cell < l.cell) {
                        best = Some(loc);
                    }
                }
                // upper-left cell (v00, v11, v01): 0 <= a <= b <= 1
                if a >= -GRID_EPS && b <= 1.0 + GRID_EPS && a <= b + GRID_EPS {
                    let loc = Location { cell: base + 1, bary: normalize([1.0 - b, a, b - a]) };
                    if best.is_none_or(|l| loc.cell < l.cell) {
                        best = Some(loc);
                    }
                }
            }
        }
        // Candidates always cover the point once it is inside the square.
        best.ok_or(MeshError::PointOutside { x, y })
    }

    fn grid_candidates(&self, s: f64) -> [Option<usize>; 2] {
        let last = self.n - 1;
        let lo = ((s - GRID_EPS).floor().max(0.0) as usize).min(last);
        let hi = ((s + GRID_EPS).floor().max(0.0) as usize).min(last);
        [Some(lo), (hi != lo).then_some(hi)]
    }
}

fn normalize(l: [f64; 3]) -> [f64; 3] {
    let c = [l[0].clamp(0.0, 1.0), l[1].clamp(0.0, 1.0), l[2].clamp(0.0, 1.0)];
    let s = c[0] + c[1] + c[2];
    [c[0] / s, c[1] / s, c[2] / s]
}
