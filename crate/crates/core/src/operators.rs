//! Assembly of the discrete membrane operators and the resolvent solve.
//!
//! Elements are piecewise linear: two-node segments in 1D and right
//! triangles (each grid cell split along its rising diagonal) in 2D, which
//! reproduces the 5-point stencil. Mass matrices are lumped by nodal
//! (trapezoidal) quadrature unless [`MassKind::Consistent`] is requested.
//! Potentials and the nonlinear term always use nodal quadrature.

use std::sync::OnceLock;

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::fields::FieldPair;
use crate::linalg::{csr_apply, dot, BandedLdl, DofMap, SymBanded};
use crate::mesh::{build_mesh, tag_refuges, Cell, MembraneMesh, Point, SubMesh, Subdomain};
use crate::problem::{CoefficientField, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassKind {
    #[default]
    Lumped,
    Consistent,
}

/// Symmetric weighted mass over all global dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMass {
    pub kind: MassKind,
    pub matrix: CsMat<f64>,
    /// Row sums; the diagonal itself when lumped.
    pub lumped: Vec<f64>,
}

impl BlockMass {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            MassKind::Lumped => self.lumped.iter().zip(x).map(|(w, v)| w * v).collect(),
            MassKind::Consistent => csr_apply(&self.matrix, x),
        }
    }

    pub fn dim(&self) -> usize {
        self.lumped.len()
    }

    /// `xᵀ M x`.
    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }

    pub fn total(&self) -> f64 {
        self.lumped.iter().sum()
    }
}

/// Two-block operator `blkdiag(A11, A22) + B_mu` with its constrained dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    pub a11: CsMat<f64>,
    pub a22: CsMat<f64>,
    pub b_mu: CsMat<f64>,
    pub dirichlet_mask: Vec<bool>,
}

impl BlockOperator {
    pub fn dim(&self) -> usize {
        self.a11.rows() + self.a22.rows()
    }

    pub fn full(&self) -> CsMat<f64> {
        &blkdiag(&self.a11, &self.a22) + &self.b_mu
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        csr_apply(&self.full(), x)
    }

    pub fn dofs(&self) -> DofMap {
        DofMap::from_mask(&self.dirichlet_mask)
    }
}

pub fn blkdiag(a: &CsMat<f64>, b: &CsMat<f64>) -> CsMat<f64> {
    let (n1, n2) = (a.rows(), b.rows());
    let mut t = TriMat::new((n1 + n2, n1 + n2));
    for (v, (i, j)) in a.iter() {
        t.add_triplet(i, j, *v);
    }
    for (v, (i, j)) in b.iter() {
        t.add_triplet(n1 + i, n1 + j, *v);
    }
    t.to_csr()
}

pub fn diagonal(d: &[f64]) -> CsMat<f64> {
    let n = d.len();
    CsMat::new((n, n), (0..=n).collect(), (0..n).collect(), d.to_vec())
}

/// `Σ c_k A_k` for same-shaped matrices.
pub fn combine(terms: &[(f64, &CsMat<f64>)]) -> CsMat<f64> {
    let (first_c, first) = terms[0];
    let mut acc = first.map(|v| first_c * v);
    for &(c, m) in &terms[1..] {
        acc = &acc + &m.map(|v| c * v);
    }
    acc
}

/// Area (length in 1D) weights of nodal quadrature on one subdomain.
pub fn nodal_weights(part: &SubMesh) -> Vec<f64> {
    let g = part.grid;
    let trapezoid = |k: usize, n: usize, h: f64| if k == 0 || k == n { 0.5 * h } else { h };
    (0..part.node_count())
        .map(|k| {
            let (i, j) = g.ij(k);
            let wx = trapezoid(i, g.cells[0], g.spacing[0]);
            if g.cells[1] == 0 {
                wx
            } else {
                wx * trapezoid(j, g.cells[1], g.spacing[1])
            }
        })
        .collect()
}

/// Right triangles of a quad cell, split along the (i,j)-(i+1,j+1) diagonal.
fn triangles(quad: &[usize; 4]) -> [[usize; 3]; 2] {
    [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]]
}

fn triangle_stiffness(p: [Point; 3]) -> [[f64; 3]; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det.abs();
    let grad = |a: usize| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det]
    };
    let g = [grad(0), grad(1), grad(2)];
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// Stiffness of a single structured grid.
pub fn submesh_stiffness(part: &SubMesh) -> CsMat<f64> {
    let n = part.node_count();
    let mut t = TriMat::new((n, n));
    for cell in &part.cells {
        match cell {
            Cell::Segment([a, b]) => {
                let c = 1.0 / (part.nodes[*b][0] - part.nodes[*a][0]);
                t.add_triplet(*a, *a, c);
                t.add_triplet(*b, *b, c);
                t.add_triplet(*a, *b, -c);
                t.add_triplet(*b, *a, -c);
            }
            Cell::Quad(q) => {
                for tri in triangles(q) {
                    let k = triangle_stiffness(tri.map(|v| part.nodes[v]));
                    for a in 0..3 {
                        for b in 0..3 {
                            if k[a][b] != 0.0 {
                                t.add_triplet(tri[a], tri[b], k[a][b]);
                            }
                        }
                    }
                }
            }
        }
    }
    t.to_csr()
}

fn part_consistent_mass(part: &SubMesh, w: &[f64]) -> CsMat<f64> {
    let n = part.node_count();
    let mut t = TriMat::new((n, n));
    for cell in &part.cells {
        match cell {
            Cell::Segment([a, b]) => {
                let h = part.nodes[*b][0] - part.nodes[*a][0];
                let s = h * 0.5 * (w[*a] + w[*b]) / 6.0;
                for (i, j, c) in [(*a, *a, 2.0), (*b, *b, 2.0), (*a, *b, 1.0), (*b, *a, 1.0)] {
                    t.add_triplet(i, j, c * s);
                }
            }
            Cell::Quad(q) => {
                let area = 0.5 * part.grid.spacing[0] * part.grid.spacing[1];
                for tri in triangles(q) {
                    let s = area * (w[tri[0]] + w[tri[1]] + w[tri[2]]) / 3.0 / 12.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            t.add_triplet(tri[a], tri[b], if a == b { 2.0 * s } else { s });
                        }
                    }
                }
            }
        }
    }
    t.to_csr()
}

/// Per-subdomain stiffness blocks without interface coupling.
pub fn assemble_stiffness(mesh: &MembraneMesh) -> BlockOperator {
    let n = mesh.dof_count();
    BlockOperator {
        a11: submesh_stiffness(&mesh.parts[0]),
        a22: submesh_stiffness(&mesh.parts[1]),
        b_mu: CsMat::zero((n, n)),
        dirichlet_mask: mesh.dirichlet_mask(),
    }
}

/// Membrane coupling `μ ∫_Γ (u2 - u1)(v2 - v1)` over global dofs.
///
/// The jump is taken as subdomain two minus subdomain one with the normal
/// pointing out of subdomain one; this is the only place that sign enters.
pub fn assemble_interface(mesh: &MembraneMesh, mu: f64) -> Result<CsMat<f64>> {
    if mu < 0.0 || mu.is_nan() {
        return Err(Error::NegativePermeability(mu));
    }
    let n = mesh.dof_count();
    let mut t = TriMat::new((n, n));
    if mu > 0.0 {
        for (&(a, b), &w) in mesh.interface_pairs.iter().zip(&mesh.interface_weights) {
            let (i, j) = (mesh.global_index(Subdomain::One, a), mesh.global_index(Subdomain::Two, b));
            let c = mu * w;
            t.add_triplet(i, i, c);
            t.add_triplet(j, j, c);
            t.add_triplet(i, j, -c);
            t.add_triplet(j, i, -c);
        }
    }
    Ok(t.to_csr())
}

/// Nodal values of a coefficient pair over global dofs.
pub fn nodal_values(mesh: &MembraneMesh, w1: &CoefficientField, w2: &CoefficientField) -> Vec<f64> {
    let mut out = Vec::with_capacity(mesh.dof_count());
    for (part, w) in mesh.parts.iter().zip([w1, w2]) {
        out.extend(part.nodes.iter().zip(&part.refuge).map(|(p, &r)| w.eval(p, r)));
    }
    out
}

/// Nodal quadrature weights over global dofs.
pub fn quadrature_weights(mesh: &MembraneMesh) -> Vec<f64> {
    mesh.parts.iter().flat_map(nodal_weights).collect()
}

pub fn assemble_weighted_mass(mesh: &MembraneMesh, w1: &CoefficientField, w2: &CoefficientField, kind: MassKind) -> BlockMass {
    mass_from_nodal(mesh, &nodal_values(mesh, w1, w2), kind)
}

/// Mass of a single structured grid for a weight given by its nodal values.
pub fn submesh_mass(part: &SubMesh, w: &[f64], kind: MassKind) -> BlockMass {
    match kind {
        MassKind::Lumped => {
            let lumped: Vec<f64> = nodal_weights(part).iter().zip(w).map(|(q, v)| q * v).collect();
            BlockMass {
                kind,
                matrix: diagonal(&lumped),
                lumped,
            }
        }
        MassKind::Consistent => {
            let matrix = part_consistent_mass(part, w);
            let lumped = csr_apply(&matrix, &vec![1.0; w.len()]);
            BlockMass { kind, matrix, lumped }
        }
    }
}

/// Mass matrix for a weight given by its nodal values.
pub fn mass_from_nodal(mesh: &MembraneMesh, w: &[f64], kind: MassKind) -> BlockMass {
    match kind {
        MassKind::Lumped => {
            let lumped: Vec<f64> = quadrature_weights(mesh).iter().zip(w).map(|(q, v)| q * v).collect();
            BlockMass {
                kind,
                matrix: diagonal(&lumped),
                lumped,
            }
        }
        MassKind::Consistent => {
            let n1 = mesh.parts[0].node_count();
            let matrix = blkdiag(
                &part_consistent_mass(&mesh.parts[0], &w[..n1]),
                &part_consistent_mass(&mesh.parts[1], &w[n1..]),
            );
            let lumped = csr_apply(&matrix, &vec![1.0; w.len()]);
            BlockMass { kind, matrix, lumped }
        }
    }
}

/// `L_F = K + B_mu + Mass(F)`; constraints are recorded, not eliminated.
pub fn compose_lf(stiffness: &BlockOperator, b_mu: &CsMat<f64>, potential: Option<&BlockMass>) -> Result<BlockOperator> {
    let n = stiffness.dim();
    if b_mu.rows() != n || b_mu.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b_mu.rows(),
        });
    }
    let (mut a11, mut a22) = (stiffness.a11.clone(), stiffness.a22.clone());
    if let Some(f) = potential {
        if f.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.dim(),
            });
        }
        let n1 = a11.rows();
        let full = &f.matrix;
        let block = |lo: usize, hi: usize| {
            let mut t = TriMat::new((hi - lo, hi - lo));
            for (v, (i, j)) in full.iter() {
                if (lo..hi).contains(&i) && (lo..hi).contains(&j) {
                    t.add_triplet(i - lo, j - lo, *v);
                }
            }
            t.to_csr::<usize>()
        };
        a11 = &a11 + &block(0, n1);
        a22 = &a22 + &block(n1, n);
    }
    Ok(BlockOperator {
        a11,
        a22,
        b_mu: b_mu.clone(),
        dirichlet_mask: stiffness.dirichlet_mask.clone(),
    })
}

/// Factored `(A + Λ·Mass)` restricted to the unconstrained dofs.
#[derive(Debug, Clone)]
pub struct ShiftedResolvent {
    pub shift: f64,
    dofs: DofMap,
    ldl: BandedLdl,
}

impl ShiftedResolvent {
    /// Requires a positive definite shifted operator.
    pub fn new(op: &BlockOperator, shift: f64, mass: &BlockMass) -> Result<Self> {
        let mat = combine(&[(1.0, &op.full()), (shift, &mass.matrix)]);
        let r = Self::factor(&mat, op.dofs(), shift)?;
        match r.negative_pivots() {
            0 => Ok(r),
            k => Err(Error::ShiftTooSmall { negative_pivots: k }),
        }
    }

    /// Factors an already shifted matrix; indefinite matrices are accepted.
    pub fn factor(mat: &CsMat<f64>, dofs: DofMap, shift: f64) -> Result<Self> {
        let ldl = SymBanded::from_csr(mat, &dofs).factor()?;
        Ok(ShiftedResolvent { shift, dofs, ldl })
    }

    pub fn negative_pivots(&self) -> usize {
        self.ldl.negative_pivots()
    }

    pub fn smallest_pivot(&self) -> (usize, f64) {
        let (k, p) = self.ldl.smallest_pivot();
        (self.dofs.free().get(k).copied().unwrap_or(0), p)
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Solves with a global right-hand side; constrained entries of the
    /// result are zero and constrained entries of `rhs` are ignored.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.dofs.restrict(rhs);
        self.ldl.solve_in_place(&mut x);
        self.dofs.extend(&x)
    }

    /// Solves on free dofs only.
    pub fn solve_free(&self, rhs: &[f64]) -> Vec<f64> {
        self.ldl.solve(rhs)
    }
}

pub fn solve_linear(op: &BlockOperator, shift: f64, mass: &BlockMass, rhs: &FieldPair) -> Result<FieldPair> {
    let g = rhs.to_global();
    if g.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: g.len(),
        });
    }
    let r = ShiftedResolvent::new(op, shift, mass)?;
    let u = r.solve(&g);
    let n1 = op.a11.rows();
    Ok(FieldPair {
        u1: u[..n1].to_vec(),
        u2: u[n1..].to_vec(),
    })
}

/// `|u|^(p-1) u`, the odd extension of `u^p`.
#[inline]
pub fn signed_pow(u: f64, p: f64) -> f64 {
    u.abs().powf(p - 1.0) * u
}

/// A problem bound to a mesh: every assembled piece the solvers need.
#[derive(Debug)]
pub struct Discretization {
    pub spec: ProblemSpec,
    pub mesh: MembraneMesh,
    pub mass_kind: MassKind,
    pub stiffness: BlockOperator,
    pub coupling: CsMat<f64>,
    /// `K + B_mu` over all global dofs.
    pub laplace: CsMat<f64>,
    pub unit_mass: BlockMass,
    pub m_mass: BlockMass,
    pub m_nodal: Vec<f64>,
    /// `a` at nodes; exactly zero on refuge nodes.
    pub a_nodal: Vec<f64>,
    /// Nodal quadrature weights.
    pub weights: Vec<f64>,
    pub dofs: DofMap,
    energy: OnceLock<BandedLdl>,
    pub(crate) lambda_star: OnceLock<f64>,
    pub(crate) lambda_infinity: OnceLock<crate::spectral::LambdaInfinity>,
    pub(crate) ceiling: OnceLock<f64>,
}

impl Discretization {
    pub fn new(spec: &ProblemSpec, n_per_side: usize, ny: usize) -> Result<Self> {
        Self::with_mass(spec, n_per_side, ny, MassKind::Lumped)
    }

    pub fn with_mass(spec: &ProblemSpec, n_per_side: usize, ny: usize, mass_kind: MassKind) -> Result<Self> {
        spec.validate()?;
        let mesh = tag_refuges(&build_mesh(spec.geometry, n_per_side, ny)?, &spec.refuges)?;
        for r in &spec.refuges {
            if mesh.part(r.subdomain).refuge_count() == 0 {
                return Err(Error::EmptyRefuge(r.subdomain));
            }
        }
        let stiffness = assemble_stiffness(&mesh);
        let coupling = assemble_interface(&mesh, spec.mu)?;
        let laplace = &stiffness.full() + &coupling;
        let ones = CoefficientField::Constant(1.0);
        let unit_mass = assemble_weighted_mass(&mesh, &ones, &ones, mass_kind);
        let m_nodal = nodal_values(&mesh, &spec.m[0], &spec.m[1]);
        if let Some((index, &value)) = m_nodal.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::NegativeWeight { index, value });
        }
        let m_mass = mass_from_nodal(&mesh, &m_nodal, mass_kind);
        let refuge = mesh.refuge_mask();
        let mut a_nodal = nodal_values(&mesh, &spec.a[0], &spec.a[1]);
        for (k, a) in a_nodal.iter_mut().enumerate() {
            if refuge[k] {
                *a = 0.0;
            } else if !(*a > 0.0) {
                let (sub, node) = mesh.locate(k);
                return Err(Error::InvalidSpec(format!(
                    "a{sub} must be positive off the refuges, got {a} at node {node}"
                )));
            }
        }
        let weights = quadrature_weights(&mesh);
        let dofs = stiffness.dofs();
        Ok(Discretization {
            spec: spec.clone(),
            mesh,
            mass_kind,
            stiffness,
            coupling,
            laplace,
            unit_mass,
            m_mass,
            m_nodal,
            a_nodal,
            weights,
            dofs,
            energy: OnceLock::new(),
            lambda_star: OnceLock::new(),
            lambda_infinity: OnceLock::new(),
            ceiling: OnceLock::new(),
        })
    }

    /// Same problem on the mesh refined by two in every direction.
    pub fn refined(&self) -> Result<Self> {
        let g = self.mesh.parts[0].grid;
        Self::with_mass(&self.spec, 2 * g.cells[0], 2 * g.cells[1], self.mass_kind)
    }

    pub fn n(&self) -> usize {
        self.mesh.dof_count()
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    /// `L_F` with the crowding potential `F = α a`.
    pub fn block_operator(&self, alpha: f64) -> Result<BlockOperator> {
        let pot = if alpha != 0.0 {
            Some(self.potential_mass(&self.a_nodal.iter().map(|a| alpha * a).collect::<Vec<_>>()))
        } else {
            None
        };
        compose_lf(&self.stiffness, &self.coupling, pot.as_ref())
    }

    /// Nodal-quadrature mass of a potential given by nodal values.
    pub fn potential_mass(&self, q: &[f64]) -> BlockMass {
        mass_from_nodal(&self.mesh, q, MassKind::Lumped)
    }

    /// `K + B_mu - λ Mass(m) + Mass(q)` over global dofs.
    pub fn linear_operator(&self, lambda: f64, q: Option<&[f64]>) -> CsMat<f64> {
        let mut terms = vec![(1.0, &self.laplace)];
        if lambda != 0.0 {
            terms.push((-lambda, &self.m_mass.matrix));
        }
        let qm;
        if let Some(q) = q {
            qm = diagonal(&q.iter().zip(&self.weights).map(|(a, b)| a * b).collect::<Vec<_>>());
            terms.push((1.0, &qm));
        }
        combine(&terms)
    }

    /// Factored `K + B_mu` on free dofs, which defines the energy inner product.
    pub fn energy_factor(&self) -> &BandedLdl {
        self.energy.get_or_init(|| {
            SymBanded::from_csr(&self.laplace, &self.dofs)
                .factor()
                .expect("stiffness with Dirichlet constraints is positive definite")
        })
    }

    /// Dual norm `sqrt(rᵀ (K + B_mu)⁻¹ r)` of a residual restricted to free dofs.
    pub fn dual_norm(&self, r_free: &[f64]) -> f64 {
        let z = self.energy_factor().solve(r_free);
        dot(r_free, &z).max(0.0).sqrt()
    }

    /// Energy norm `sqrt(uᵀ K u)` (gradient part only) of a global vector.
    pub fn gradient_norm(&self, u: &[f64]) -> f64 {
        let ku = self.stiffness.apply(u);
        dot(u, &ku).max(0.0).sqrt()
    }

    /// `(K + B_mu) U - λ Mass(m) U + Mass(a) U^p` over global dofs.
    pub fn residual_vector(&self, lambda: f64, u: &[f64]) -> Vec<f64> {
        let p = self.spec.p;
        let mut r = csr_apply(&self.laplace, u);
        let mu = self.m_mass.apply(u);
        for k in 0..r.len() {
            r[k] += -lambda * mu[k] + self.weights[k] * self.a_nodal[k] * signed_pow(u[k], p);
        }
        r
    }

    /// Dual norm of the weak-form residual at free dofs.
    pub fn residual(&self, lambda: f64, u: &FieldPair) -> f64 {
        let r = self.residual_vector(lambda, &u.to_global());
        self.dual_norm(&self.dofs.restrict(&r))
    }

    /// `μ Σ_Γ w (u2 - u1)²`.
    pub fn interface_form(&self, u: &[f64]) -> f64 {
        dot(u, &csr_apply(&self.coupling, u))
    }

    pub fn field(&self, global: &[f64]) -> FieldPair {
        FieldPair::from_global(&self.mesh, global).expect("global vector sized by this discretization")
    }
}

/// `‖A - Aᵀ‖_max`.
pub fn asymmetry(a: &CsMat<f64>) -> f64 {
    let t = a.transpose_view().to_csr();
    let d = a - &t;
    d.data().iter().fold(0.0, |m, v| m.max(v.abs()))
}
