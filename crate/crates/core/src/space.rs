//! P2 velocity / P0 pressure spaces: reference basis, degree-of-freedom
//! numbering, finite element functions and their evaluation anywhere in the
//! unit square (including on a different mesh than the one they live on).

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{Location, Mesh, MeshError};
use crate::par::Execution;
use crate::quadrature::QuadratureRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("coefficient vector has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
}

/// Values and reference-coordinate gradients of the six P2 Lagrange basis
/// functions at a point given in barycentric coordinates.
///
/// Local nodes 0..3 are the vertices; node 3 + i is the midpoint of the edge
/// opposite vertex i.
pub fn p2_basis(l: [f64; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let [l0, l1, l2] = l;
    let values = [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l1 * l2,
        4.0 * l2 * l0,
        4.0 * l0 * l1,
    ];
    let d0 = 4.0 * l0 - 1.0;
    let grads = [
        [-d0, -d0],
        [4.0 * l1 - 1.0, 0.0],
        [0.0, 4.0 * l2 - 1.0],
        [4.0 * l2, 4.0 * l1],
        [-4.0 * l2, 4.0 * (l0 - l2)],
        [4.0 * (l0 - l1), -4.0 * l1],
    ];
    (values, grads)
}

/// Affine data of one cell: area and the inverse-transpose Jacobian that maps
/// reference gradients to physical ones.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub area: f64,
    pub jinv_t: [[f64; 2]; 2],
}

impl CellGeometry {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let j00 = p[1][0] - p[0][0];
        let j01 = p[2][0] - p[0][0];
        let j10 = p[1][1] - p[0][1];
        let j11 = p[2][1] - p[0][1];
        let det = j00 * j11 - j01 * j10;
        Self {
            area: 0.5 * det,
            jinv_t: [[j11 / det, -j10 / det], [-j01 / det, j00 / det]],
        }
    }

    #[inline]
    pub fn physical_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let m = self.jinv_t;
        [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
    }
}

/// Numbering of velocity and pressure unknowns.
///
/// Velocity nodes are the mesh vertices followed by the edge midpoints. The
/// x-component of node `a` is DOF `a`, the y-component `a + n_velocity_nodes`.
/// Pressure DOF `c` is the constant on cell `c`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n_velocity_nodes: usize,
    pub n_velocity_dofs: usize,
    pub n_pressure_dofs: usize,
    /// Global velocity node of each local P2 node, per cell.
    pub cell_nodes: Vec<[usize; 6]>,
    pub node_coords: Vec<[f64; 2]>,
    pub boundary_node: Vec<bool>,
    pub boundary_velocity_dofs: Vec<usize>,
    pub interior_velocity_dofs: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.vertices().len();
        let n_nodes = nv + mesh.edges().len();

        let mut node_coords = mesh.vertices().to_vec();
        let mut boundary_node: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        for e in mesh.edges() {
            let [a, b] = e.vertices.map(|v| mesh.vertices()[v]);
            node_coords.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            boundary_node.push(e.is_boundary());
        }

        let cell_nodes = mesh
            .cells()
            .iter()
            .zip(mesh.cell_edges())
            .map(|(v, e)| [v[0], v[1], v[2], nv + e[0], nv + e[1], nv + e[2]])
            .collect();

        let mut boundary_velocity_dofs = Vec::new();
        let mut interior_velocity_dofs = Vec::new();
        for comp in 0..2 {
            for (a, &on_boundary) in boundary_node.iter().enumerate() {
                let dof = a + comp * n_nodes;
                if on_boundary {
                    boundary_velocity_dofs.push(dof);
                } else {
                    interior_velocity_dofs.push(dof);
                }
            }
        }

        Self {
            n_velocity_nodes: n_nodes,
            n_velocity_dofs: 2 * n_nodes,
            n_pressure_dofs: mesh.n_cells(),
            cell_nodes,
            node_coords,
            boundary_node,
            boundary_velocity_dofs,
            interior_velocity_dofs,
        }
    }

    /// The 12 velocity DOFs of a cell, ordered `(node, component)` with the
    /// component varying slowest.
    #[inline]
    pub fn cell_velocity_dofs(&self, cell: usize) -> [usize; 12] {
        let nodes = &self.cell_nodes[cell];
        let mut out = [0; 12];
        for (a, &node) in nodes.iter().enumerate() {
            out[a] = node;
            out[a + 6] = node + self.n_velocity_nodes;
        }
        out
    }
}

/// A mesh together with its P2-P0 DOF numbering and per-cell geometry.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Mesh,
    dofs: DofMap,
    geometry: Vec<CellGeometry>,
    exec: Execution,
}

impl FeSpace {
    pub fn new(mesh: Mesh, exec: Execution) -> Arc<Self> {
        let dofs = DofMap::new(&mesh);
        let geometry = (0..mesh.n_cells()).map(|c| CellGeometry::new(mesh.cell_vertices(c))).collect();
        Arc::new(Self { mesh, dofs, geometry, exec })
    }

    /// Shorthand for `FeSpace::new(Mesh::structured(n)?, exec)`.
    pub fn structured(n: usize, exec: Execution) -> Result<Arc<Self>, MeshError> {
        Ok(Self::new(Mesh::structured(n)?, exec))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn geometry(&self) -> &[CellGeometry] {
        &self.geometry
    }

    pub fn exec(&self) -> Execution {
        self.exec
    }

    pub fn cell_areas(&self) -> Vec<f64> {
        self.geometry.iter().map(|g| g.area).collect()
    }

    /// Two spaces built on structured meshes with the same resolution share
    /// every node, cell and quadrature point.
    pub fn same_mesh(&self, other: &FeSpace) -> bool {
        self.mesh.n() == other.mesh.n()
    }
}

/// Velocity value and gradient at a point; `gradient[i][j] = d u_i / d x_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityValue {
    pub value: [f64; 2],
    pub gradient: [[f64; 2]; 2],
}

/// Vector-valued continuous P2 function.
#[derive(Debug, Clone)]
pub struct VelocityField {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(space: &Arc<FeSpace>) -> Self {
        Self { space: space.clone(), coeffs: vec![0.0; space.dofs.n_velocity_dofs] }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self, SpaceError> {
        let expected = space.dofs.n_velocity_dofs;
        if coeffs.len() != expected {
            return Err(SpaceError::Length { expected, got: coeffs.len() });
        }
        Ok(Self { space: space.clone(), coeffs })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(space: &Arc<FeSpace>, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let n = space.dofs.n_velocity_nodes;
        let mut coeffs = vec![0.0; 2 * n];
        for (a, &p) in space.dofs.node_coords.iter().enumerate() {
            let v = f(p);
            coeffs[a] = v[0];
            coeffs[a + n] = v[1];
        }
        Self { space: space.clone(), coeffs }
    }

    /// Builds a field from interior DOF values, with zeros on the boundary.
    pub fn from_interior(space: &Arc<FeSpace>, interior: &[f64]) -> Result<Self, SpaceError> {
        let dofs = &space.dofs.interior_velocity_dofs;
        if interior.len() != dofs.len() {
            return Err(SpaceError::Length { expected: dofs.len(), got: interior.len() });
        }
        let mut field = Self::zeros(space);
        for (&d, &v) in dofs.iter().zip(interior) {
            field.coeffs[d] = v;
        }
        Ok(field)
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.space.dofs.interior_velocity_dofs.iter().map(|&d| self.coeffs[d]).collect()
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Largest absolute coefficient on boundary DOFs.
    pub fn boundary_max(&self) -> f64 {
        self.space.dofs.boundary_velocity_dofs.iter().map(|&d| self.coeffs[d].abs()).fold(0.0, f64::max)
    }

    /// Evaluation inside a known cell.
    pub fn eval_in_cell(&self, cell: usize, bary: [f64; 3]) -> VelocityValue {
        let (phi, dphi) = p2_basis(bary);
        let geo = &self.space.geometry[cell];
        let nodes = &self.space.dofs.cell_nodes[cell];
        let n = self.space.dofs.n_velocity_nodes;
        let mut value = [0.0; 2];
        let mut gradient = [[0.0; 2]; 2];
        for a in 0..6 {
            let g = geo.physical_gradient(dphi[a]);
            for (comp, offset) in [0, n].into_iter().enumerate() {
                let c = self.coeffs[nodes[a] + offset];
                value[comp] += c * phi[a];
                gradient[comp][0] += c * g[0];
                gradient[comp][1] += c * g[1];
            }
        }
        VelocityValue { value, gradient }
    }

    pub fn value(&self, p: [f64; 2]) -> Result<[f64; 2], SpaceError> {
        Ok(self.value_and_gradient(p)?.value)
    }

    pub fn value_and_gradient(&self, p: [f64; 2]) -> Result<VelocityValue, SpaceError> {
        let Location { cell, bary } = self.space.mesh.locate(p)?;
        Ok(self.eval_in_cell(cell, bary))
    }
}

/// Piecewise-constant pressure.
#[derive(Debug, Clone)]
pub struct PressureField {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl PressureField {
    pub fn zeros(space: &Arc<FeSpace>) -> Self {
        Self { space: space.clone(), coeffs: vec![0.0; space.dofs.n_pressure_dofs] }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self, SpaceError> {
        let expected = space.dofs.n_pressure_dofs;
        if coeffs.len() != expected {
            return Err(SpaceError::Length { expected, got: coeffs.len() });
        }
        Ok(Self { space: space.clone(), coeffs })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn value(&self, p: [f64; 2]) -> Result<f64, SpaceError> {
        Ok(self.coeffs[self.space.mesh.locate(p)?.cell])
    }

    /// Integral over the unit square, which is also the mean.
    pub fn mean(&self) -> f64 {
        self.coeffs.iter().zip(&self.space.geometry).map(|(p, g)| p * g.area).sum()
    }
}

/// Reference basis data of a quadrature rule, shared by every cell of a
/// structured mesh.
#[derive(Debug, Clone)]
pub struct ElementTable {
    pub rule: QuadratureRule,
    pub phi: Vec<[f64; 6]>,
    pub dphi_ref: Vec<[[f64; 2]; 6]>,
}

impl ElementTable {
    pub fn new(rule: QuadratureRule) -> Self {
        let (phi, dphi_ref) = rule.points.iter().map(|&l| p2_basis(l)).unzip();
        Self { rule, phi, dphi_ref }
    }

    pub fn n_points(&self) -> usize {
        self.rule.len()
    }

    /// Physical gradients of the six basis functions at point `q` of `cell`.
    #[inline]
    pub fn physical_gradients(&self, space: &FeSpace, cell: usize, q: usize) -> [[f64; 2]; 6] {
        let geo = &space.geometry[cell];
        self.dphi_ref[q].map(|g| geo.physical_gradient(g))
    }
}

/// Velocity values and gradients at every quadrature point of a target space,
/// indexed `cell * n_points + q`.
#[derive(Debug, Clone)]
pub struct VelocitySamples {
    pub values: Vec<[f64; 2]>,
    pub gradients: Vec<[[f64; 2]; 2]>,
}

impl VelocitySamples {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![[0.0; 2]; len], gradients: vec![[[0.0; 2]; 2]; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Where the quadrature points of a target space fall inside the cells of a
/// source mesh. Built once, reused for every field on the source space.
#[derive(Debug, Clone)]
pub struct Probe {
    source_n: usize,
    target_n: usize,
    n_points: usize,
    locations: Vec<Location>,
}

impl Probe {
    pub fn new(source: &FeSpace, target: &FeSpace, table: &ElementTable) -> Result<Self, SpaceError> {
        let nq = table.n_points();
        let locs = target.exec.map(target.mesh.n_cells(), |c| {
            table
                .rule
                .points
                .iter()
                .map(|&l| source.mesh.locate(target.mesh.to_physical(c, l)))
                .collect::<Result<Vec<_>, _>>()
        });
        let mut locations = Vec::with_capacity(target.mesh.n_cells() * nq);
        for cell_locs in locs {
            locations.extend(cell_locs?);
        }
        Ok(Self { source_n: source.mesh.n(), target_n: target.mesh.n(), n_points: nq, locations })
    }

    /// Samples `field` (living on the probe's source mesh) at the target points.
    pub fn sample(&self, field: &VelocityField) -> VelocitySamples {
        assert_eq!(field.space.mesh.n(), self.source_n, "field lives on a different mesh than the probe source");
        let exec = field.space.exec;
        let vals = exec.map(self.locations.len(), |i| {
            let loc = self.locations[i];
            field.eval_in_cell(loc.cell, loc.bary)
        });
        let mut out = VelocitySamples::zeros(vals.len());
        for (i, v) in vals.into_iter().enumerate() {
            out.values[i] = v.value;
            out.gradients[i] = v.gradient;
        }
        out
    }

    pub fn target_n(&self) -> usize {
        self.target_n
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

/// Samples `field` at the quadrature points of `target`.
///
/// Fields on the target mesh are evaluated directly from the tabulated basis;
/// fields on other meshes go through point location.
pub fn sample_velocity(
    field: &VelocityField,
    target: &FeSpace,
    table: &ElementTable,
) -> Result<VelocitySamples, SpaceError> {
    if !field.space.same_mesh(target) {
        return Ok(Probe::new(&field.space, target, table)?.sample(field));
    }
    let nq = table.n_points();
    let n = field.space.dofs.n_velocity_nodes;
    let per_cell = target.exec.map(target.mesh.n_cells(), |c| {
        let nodes = &field.space.dofs.cell_nodes[c];
        let ux: [f64; 6] = nodes.map(|a| field.coeffs[a]);
        let uy: [f64; 6] = nodes.map(|a| field.coeffs[a + n]);
        (0..nq)
            .map(|q| {
                let phi = &table.phi[q];
                let dphi = table.physical_gradients(target, c, q);
                let mut v = VelocityValue { value: [0.0; 2], gradient: [[0.0; 2]; 2] };
                for a in 0..6 {
                    v.value[0] += ux[a] * phi[a];
                    v.value[1] += uy[a] * phi[a];
                    for j in 0..2 {
                        v.gradient[0][j] += ux[a] * dphi[a][j];
                        v.gradient[1][j] += uy[a] * dphi[a][j];
                    }
                }
                v
            })
            .collect::<Vec<_>>()
    });
    let mut out = VelocitySamples::zeros(target.mesh.n_cells() * nq);
    for (i, v) in per_cell.into_iter().flatten().enumerate() {
        out.values[i] = v.value;
        out.gradients[i] = v.gradient;
    }
    Ok(out)
}
