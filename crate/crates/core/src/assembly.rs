//! Element assembly of the mass, viscous and divergence operators and of the
//! skew-symmetrized trilinear form
//!
//! ```text
//! b(v, w, phi) = 1/2 (v . grad w, phi) - 1/2 (v . grad phi, w)
//! ```
//!
//! both as matrices for a frozen field and as right-hand-side vectors.
//!
//! All integrals use the degree-5 rule, exact for every P2/P0 integrand here
//! when the fields live on the target mesh. Per-cell contributions are computed
//! through [`Execution::map`](crate::par::Execution::map) and scattered
//! sequentially into a sparsity pattern fixed at construction, so the result
//! does not depend on the thread count.

use std::sync::Arc;

use crate::linalg::{CsrPattern, LinalgError, SparseMatrix};
use crate::quadrature::QuadratureRule;
use crate::space::{sample_velocity, ElementTable, FeSpace, SpaceError, VelocityField, VelocitySamples};

/// Quadrature degree used for every assembled integral.
pub const ASSEMBLY_DEGREE: usize = 5;

/// Mass, stiffness and divergence operators of one space.
///
/// `mass` and `stiffness` live on the full velocity pattern (cross-component
/// entries stored as zeros); `divergence` is `n_cells x n_velocity_dofs` with
/// `divergence[c, j] = (1_c, div phi_j)`.
#[derive(Debug, Clone)]
pub struct AssembledForms {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub divergence: SparseMatrix,
}

/// Linearized convection for a frozen field `w`:
/// `n1[i, j] = b(w, phi_j, phi_i)` and `n2[i, j] = b(phi_j, w, phi_i)`.
#[derive(Debug, Clone)]
pub struct TrilinearOperator {
    pub n1: SparseMatrix,
    pub n2: SparseMatrix,
}

type LocalMatrix = [f64; 144];

/// Assembly context of one space: quadrature table and velocity sparsity
/// pattern with per-cell scatter slots.
#[derive(Debug)]
pub struct Assembler {
    space: Arc<FeSpace>,
    table: ElementTable,
    pattern: Arc<CsrPattern>,
    cell_slots: Vec<[usize; 144]>,
}

impl Assembler {
    pub fn new(space: &Arc<FeSpace>) -> Self {
        let dofs = space.dofs();
        let n_cells = space.mesh().n_cells();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dofs.n_velocity_dofs];
        for c in 0..n_cells {
            let cd = dofs.cell_velocity_dofs(c);
            for &i in &cd {
                rows[i].extend_from_slice(&cd);
            }
        }
        let pattern = Arc::new(CsrPattern::from_rows(dofs.n_velocity_dofs, rows));
        let cell_slots = (0..n_cells)
            .map(|c| {
                let cd = dofs.cell_velocity_dofs(c);
                let mut slots = [0usize; 144];
                for (i, &gi) in cd.iter().enumerate() {
                    for (j, &gj) in cd.iter().enumerate() {
                        slots[i * 12 + j] = pattern.find(gi, gj).expect("cell coupling in pattern");
                    }
                }
                slots
            })
            .collect();
        let table = ElementTable::new(QuadratureRule::new(ASSEMBLY_DEGREE).expect("degree 5 rule exists"));
        Self { space: space.clone(), table, pattern, cell_slots }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn table(&self) -> &ElementTable {
        &self.table
    }

    /// Sparsity pattern shared by every velocity-block matrix of this space.
    pub fn velocity_pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    fn scatter(&self, locals: Vec<LocalMatrix>) -> SparseMatrix {
        let mut m = SparseMatrix::zeros(self.pattern.clone());
        let values = m.values_mut();
        for (slots, local) in self.cell_slots.iter().zip(&locals) {
            for (&s, &v) in slots.iter().zip(local.iter()) {
                values[s] += v;
            }
        }
        m
    }

    fn scatter_vector(&self, locals: Vec<[f64; 12]>) -> Vec<f64> {
        let dofs = self.space.dofs();
        let mut out = vec![0.0; dofs.n_velocity_dofs];
        for (c, local) in locals.iter().enumerate() {
            for (&g, &v) in dofs.cell_velocity_dofs(c).iter().zip(local) {
                out[g] += v;
            }
        }
        out
    }

    fn weight(&self, cell: usize, q: usize) -> f64 {
        2.0 * self.space.geometry()[cell].area * self.table.rule.weights[q]
    }

    pub fn assemble_static(&self) -> AssembledForms {
        let nq = self.table.n_points();
        let n_cells = self.space.mesh().n_cells();
        let exec = self.space.exec();

        let locals = exec.map(n_cells, |c| {
            let mut mass = [[0.0; 6]; 6];
            let mut stiff = [[0.0; 6]; 6];
            let mut div = [0.0; 12];
            for q in 0..nq {
                let w = self.weight(c, q);
                let phi = &self.table.phi[q];
                let dphi = self.table.physical_gradients(&self.space, c, q);
                for b in 0..6 {
                    div[b] += w * dphi[b][0];
                    div[b + 6] += w * dphi[b][1];
                    for a in 0..6 {
                        mass[b][a] += w * phi[a] * phi[b];
                        stiff[b][a] += w * (dphi[a][0] * dphi[b][0] + dphi[a][1] * dphi[b][1]);
                    }
                }
            }
            (block_diagonal(&mass), block_diagonal(&stiff), div)
        });

        let mut div_triplets = Vec::with_capacity(12 * n_cells);
        let mut mass_locals = Vec::with_capacity(n_cells);
        let mut stiff_locals = Vec::with_capacity(n_cells);
        for (c, (m, a, d)) in locals.into_iter().enumerate() {
            let cd = self.space.dofs().cell_velocity_dofs(c);
            div_triplets.extend(cd.iter().zip(d).map(|(&j, v)| (c, j, v)));
            mass_locals.push(m);
            stiff_locals.push(a);
        }
        AssembledForms {
            mass: self.scatter(mass_locals),
            stiffness: self.scatter(stiff_locals),
            divergence: SparseMatrix::from_triplets(n_cells, self.space.dofs().n_velocity_dofs, &div_triplets),
        }
    }

    /// Samples a velocity field (on any mesh) at this space's quadrature points.
    pub fn sample(&self, field: &VelocityField) -> Result<VelocitySamples, SpaceError> {
        sample_velocity(field, &self.space, &self.table)
    }

    pub fn trilinear_matrices(&self, w: &VelocityField) -> Result<TrilinearOperator, SpaceError> {
        Ok(self.trilinear_matrices_sampled(&self.sample(w)?))
    }

    /// [`Self::trilinear_matrices`] from pre-sampled values of the frozen field.
    pub fn trilinear_matrices_sampled(&self, w: &VelocitySamples) -> TrilinearOperator {
        let nq = self.table.n_points();
        let exec = self.space.exec();
        let locals = exec.map(self.space.mesh().n_cells(), |c| {
            let mut skew = [[0.0; 6]; 6];
            let mut n2 = [0.0; 144];
            for q in 0..nq {
                let wt = 0.5 * self.weight(c, q);
                let phi = &self.table.phi[q];
                let dphi = self.table.physical_gradients(&self.space, c, q);
                let wv = w.values[c * nq + q];
                let wg = w.gradients[c * nq + q];
                // w . grad(psi_a)
                let conv: [f64; 6] = dphi.map(|g| wv[0] * g[0] + wv[1] * g[1]);
                for b in 0..6 {
                    for a in 0..6 {
                        skew[b][a] += wt * (conv[a] * phi[b] - conv[b] * phi[a]);
                        let pp = phi[a] * phi[b];
                        for d in 0..2 {
                            for comp in 0..2 {
                                n2[(b + 6 * d) * 12 + a + 6 * comp] += wt * (pp * wg[d][comp] - phi[a] * dphi[b][comp] * wv[d]);
                            }
                        }
                    }
                }
            }
            (block_diagonal(&skew), n2)
        });
        let (n1_locals, n2_locals): (Vec<_>, Vec<_>) = locals.into_iter().unzip();
        TrilinearOperator { n1: self.scatter(n1_locals), n2: self.scatter(n2_locals) }
    }

    /// Vector with entries `b(u, v, phi_i)`; `u` and `v` may live on any mesh.
    pub fn trilinear_vector(&self, u: &VelocityField, v: &VelocityField) -> Result<Vec<f64>, SpaceError> {
        Ok(self.trilinear_vector_sampled(&self.sample(u)?, &self.sample(v)?))
    }

    pub fn trilinear_vector_sampled(&self, u: &VelocitySamples, v: &VelocitySamples) -> Vec<f64> {
        let nq = self.table.n_points();
        let exec = self.space.exec();
        let locals = exec.map(self.space.mesh().n_cells(), |c| {
            let mut out = [0.0; 12];
            for q in 0..nq {
                let wt = 0.5 * self.weight(c, q);
                let phi = &self.table.phi[q];
                let dphi = self.table.physical_gradients(&self.space, c, q);
                let (uv, vv, vg) = (u.values[c * nq + q], v.values[c * nq + q], v.gradients[c * nq + q]);
                // u . grad v_d
                let adv = [uv[0] * vg[0][0] + uv[1] * vg[0][1], uv[0] * vg[1][0] + uv[1] * vg[1][1]];
                for b in 0..6 {
                    let conv_b = uv[0] * dphi[b][0] + uv[1] * dphi[b][1];
                    for d in 0..2 {
                        out[b + 6 * d] += wt * (adv[d] * phi[b] - conv_b * vv[d]);
                    }
                }
            }
            out
        });
        self.scatter_vector(locals)
    }

    /// `(f, phi_i)` for a vector-valued source.
    pub fn load_vector<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn([f64; 2]) -> [f64; 2] + Sync + Send,
    {
        let nq = self.table.n_points();
        let mesh = self.space.mesh();
        let locals = self.space.exec().map(mesh.n_cells(), |c| {
            let mut out = [0.0; 12];
            for q in 0..nq {
                let w = self.weight(c, q);
                let fv = f(mesh.to_physical(c, self.table.rule.points[q]));
                for (b, &p) in self.table.phi[q].iter().enumerate() {
                    out[b] += w * fv[0] * p;
                    out[b + 6] += w * fv[1] * p;
                }
            }
            out
        });
        self.scatter_vector(locals)
    }

    /// `M / k + nu A + N1 + N2`, the linearized backward Euler operator.
    pub fn oseen_operator(
        &self,
        forms: &AssembledForms,
        conv: &TrilinearOperator,
        dt: f64,
        nu: f64,
    ) -> Result<SparseMatrix, LinalgError> {
        SparseMatrix::linear_combination(&[
            (1.0 / dt, &forms.mass),
            (nu, &forms.stiffness),
            (1.0, &conv.n1),
            (1.0, &conv.n2),
        ])
    }
}

fn block_diagonal(s: &[[f64; 6]; 6]) -> LocalMatrix {
    let mut out = [0.0; 144];
    for b in 0..6 {
        for a in 0..6 {
            out[b * 12 + a] = s[b][a];
            out[(b + 6) * 12 + a + 6] = s[b][a];
        }
    }
    out
}

pub fn assemble_static(space: &Arc<FeSpace>) -> AssembledForms {
    Assembler::new(space).assemble_static()
}

pub fn assemble_trilinear_matrices(w: &VelocityField, target: &Arc<FeSpace>) -> Result<TrilinearOperator, SpaceError> {
    Assembler::new(target).trilinear_matrices(w)
}

pub fn trilinear_vector(u: &VelocityField, v: &VelocityField, target: &Arc<FeSpace>) -> Result<Vec<f64>, SpaceError> {
    Assembler::new(target).trilinear_vector(u, v)
}
