//! Principal eigenpairs, the threshold map λ ↦ Σ(λ), and the thresholds λ*, λ∞.
//!
//! Every eigenproblem here is a symmetric pencil `A x = σ W x` on the free
//! dofs with `W` positive definite, and the target is always the smallest
//! eigenvalue. It is found by shift-and-invert power iteration: a
//! Gershgorin shift certified by the LDLᵀ inertia first, then a shift just
//! below the settled Rayleigh quotient.

use sprs::CsMat;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fields::FieldPair;
use crate::linalg::{dot, BandedLdl, DofMap, SymBanded};
use crate::mesh::{restrict_to_refuge, restrict_to_refuge_with_cells, RefugeMesh, Subdomain};
use crate::operators::{
    combine, diagonal, submesh_mass, submesh_stiffness, BlockMass, BlockOperator, Discretization, MassKind,
};
use crate::problem::ProblemSpec;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Component norm (relative to the whole) below which a component counts as absent.
pub const ZERO_COMPONENT: f64 = 1e-10;

/// Raw output of the pencil solver over global dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCore {
    pub value: f64,
    /// `W`-normalized, zero on constrained dofs.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `sqrt(rᵀ (A - s₀W)⁻¹ r)` with `r = A x - σ W x` and `s₀` the certified lower shift.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    /// Minimum over the unconstrained (interior and membrane) nodes of each component.
    pub min_interior: [f64; 2],
    pub zero_component: [bool; 2],
}

impl PositivityReport {
    /// Every component that is not identically zero is strictly positive.
    pub fn strictly_positive(&self) -> bool {
        (0..2).all(|c| self.zero_component[c] || self.min_interior[c] > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub eigenvalue: f64,
    pub eigenfunction: FieldPair,
    pub iterations: usize,
    pub residual: f64,
    pub positivity: PositivityReport,
    /// `W`-norm of each component; their squares sum to one.
    pub component_norms: [f64; 2],
}

fn normalize(x: &mut [f64], w: &SymBanded) {
    let n = dot(x, &w.matvec(x)).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

fn gershgorin_lower(a: &CsMat<f64>, w: &[f64], dofs: &DofMap) -> f64 {
    let mut lo = f64::INFINITY;
    for (row, vec) in a.outer_iterator().enumerate() {
        let Some(i) = dofs.slot(row) else { continue };
        let (mut center, mut radius) = (0.0, 0.0);
        for (col, &v) in vec.iter() {
            match dofs.slot(col) {
                Some(j) if j == i => center += v,
                Some(j) => radius += v.abs() / (w[i] * w[j]).sqrt(),
                None => {}
            }
        }
        lo = lo.min(center / w[i] - radius);
    }
    lo
}

/// Smallest eigenpair of `A x = σ W x` restricted to the free dofs.
pub fn smallest_eigenpair(a: &CsMat<f64>, weight: &CsMat<f64>, dofs: &DofMap, tol: f64, max_iters: usize) -> Result<EigenCore> {
    let nf = dofs.n_free();
    let wf = SymBanded::from_csr(weight, dofs);
    for k in 0..nf {
        let d = wf.get(k, k);
        if !(d > 0.0) {
            return Err(Error::NegativeWeight {
                index: dofs.free()[k],
                value: d,
            });
        }
    }
    let af = SymBanded::from_csr(a, dofs);
    let factor_at = |s: f64| SymBanded::from_csr(&combine(&[(1.0, a), (-s, weight)]), dofs).factor();

    let row_mass = wf.matvec(&vec![1.0; nf]);
    let g = gershgorin_lower(a, &row_mass, dofs);
    let mut s0 = g - 1e-3 * (1.0 + g.abs());
    let mut base: Option<BandedLdl> = None;
    for _ in 0..64 {
        if let Ok(f) = factor_at(s0) {
            if f.negative_pivots() == 0 {
                base = Some(f);
                break;
            }
        }
        s0 -= 2.0 * (1.0 + s0.abs());
    }
    let base = base.ok_or(Error::ShiftTooSmall { negative_pivots: 1 })?;

    // Every accepted shift is certified to lie below the smallest eigenvalue,
    // so the iteration cannot lock onto a higher mode.
    let mut x = vec![1.0; nf];
    normalize(&mut x, &wf);
    let mut shift = s0;
    let mut near: Option<BandedLdl> = None;
    let mut frac = 0.05;
    let mut rho_prev = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let wx = wf.matvec(&x);
        let mut y = wx.clone();
        near.as_ref().unwrap_or(&base).solve_in_place(&mut y);
        // x is W-normalized, so 1 / xᵀWy is the Rayleigh quotient of the shifted inverse
        let q = dot(&wx, &y);
        let rho = shift + 1.0 / q;
        normalize(&mut y, &wf);
        let ay = af.matvec(&y);
        let wy = wf.matvec(&y);
        let r: Vec<f64> = ay.iter().zip(&wy).map(|(p, q)| p - rho * q).collect();
        residual = dot(&r, &base.solve(&r)).max(0.0).sqrt();
        x = y;
        let scale = rho.abs().max(1.0);
        if residual <= tol * scale && (rho - rho_prev).abs() <= tol * scale {
            let mut vector = dofs.extend(&x);
            if wy.iter().sum::<f64>() < 0.0 {
                vector.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(EigenCore {
                value: rho,
                vector,
                iterations: it,
                residual,
            });
        }
        let gap = rho - shift;
        if (rho - rho_prev).abs() <= 0.1 * gap {
            let s_try = rho - frac * gap;
            match factor_at(s_try) {
                Ok(f) if f.negative_pivots() == 0 => {
                    shift = s_try;
                    near = Some(f);
                    frac = (0.5 * frac).max(1e-3);
                }
                _ => frac = (2.0 * frac).min(0.5),
            }
        }
        rho_prev = rho;
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

/// True when the pencil has exactly one eigenvalue below `sigma + gap`.
pub fn certify_gap(a: &CsMat<f64>, weight: &CsMat<f64>, dofs: &DofMap, sigma: f64, gap: f64) -> Result<bool> {
    let f = SymBanded::from_csr(&combine(&[(1.0, a), (-(sigma + gap), weight)]), dofs).factor()?;
    Ok(f.negative_pivots() == 1)
}

/// Splits, signs and inspects a two-component eigenvector.
fn finish(core: EigenCore, n1: usize, weight: &BlockMass, dofs: &DofMap) -> EigenResult {
    let mut v = core.vector;
    let wv = weight.apply(&v);
    let norm = |r: std::ops::Range<usize>| dot(&v[r.clone()], &wv[r]).max(0.0).sqrt();
    let norms = [norm(0..n1), norm(n1..v.len())];
    let total = (norms[0].powi(2) + norms[1].powi(2)).sqrt();
    let dominant = if norms[0] >= norms[1] { 0..n1 } else { n1..v.len() };
    if v[dominant].iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let mut min_interior = [f64::INFINITY; 2];
    for &g in dofs.free() {
        let c = usize::from(g >= n1);
        min_interior[c] = min_interior[c].min(v[g]);
    }
    let zero_component = [norms[0] < ZERO_COMPONENT * total, norms[1] < ZERO_COMPONENT * total];
    EigenResult {
        eigenvalue: core.value,
        eigenfunction: FieldPair {
            u1: v[..n1].to_vec(),
            u2: v[n1..].to_vec(),
        },
        iterations: core.iterations,
        residual: core.residual,
        positivity: PositivityReport {
            min_interior,
            zero_component,
        },
        component_norms: norms,
    }
}

/// Smallest eigenpair of `op Φ = σ M Φ`.
pub fn principal_eigenpair(op: &BlockOperator, weight: &BlockMass, tol: f64) -> Result<EigenResult> {
    let dofs = op.dofs();
    let core = smallest_eigenpair(&op.full(), &weight.matrix, &dofs, tol, DEFAULT_MAX_ITERS)?;
    Ok(finish(core, op.a11.rows(), weight, &dofs))
}

/// Smallest eigenpair of an arbitrary global operator with the given weight.
pub fn eigenpair_of(disc: &Discretization, a: &CsMat<f64>, weight: &BlockMass, tol: f64) -> Result<EigenResult> {
    let core = smallest_eigenpair(a, &weight.matrix, &disc.dofs, tol, DEFAULT_MAX_ITERS)?;
    Ok(finish(core, disc.mesh.node_counts()[0], weight, &disc.dofs))
}

/// λ* as the principal eigenvalue of `(K + B_mu) Φ = λ Mass(m) Φ`.
pub fn lambda_star_eigenpair(disc: &Discretization, tol: f64) -> Result<EigenResult> {
    eigenpair_of(disc, &disc.laplace, &disc.m_mass, tol)
}

/// Principal eigenpair of `L_{q - λm}` with unit weight.
pub fn sigma_eigenpair(disc: &Discretization, lambda: f64, q: Option<&[f64]>, tol: f64) -> Result<EigenResult> {
    eigenpair_of(disc, &disc.linear_operator(lambda, q), &disc.unit_mass, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaDomain {
    Full,
    RefugesOnly,
}

/// A single-domain Dirichlet problem on one refuge box.
#[derive(Debug, Clone)]
pub struct RefugeProblem {
    pub refuge: RefugeMesh,
    pub stiffness: CsMat<f64>,
    pub m_mass: BlockMass,
    pub unit_mass: BlockMass,
    pub dofs: DofMap,
}

impl RefugeProblem {
    pub fn new(spec: &ProblemSpec, refuge: RefugeMesh, kind: MassKind) -> Self {
        let part = &refuge.mesh;
        let dim = part.dimension();
        let field = spec.m_of(refuge.subdomain);
        let m: Vec<f64> = part
            .nodes
            .iter()
            .map(|p| field.eval(p, refuge.bounds.contains_open(p, dim)))
            .collect();
        RefugeProblem {
            stiffness: submesh_stiffness(part),
            m_mass: submesh_mass(part, &m, kind),
            unit_mass: submesh_mass(part, &vec![1.0; m.len()], kind),
            dofs: DofMap::from_mask(&refuge.dirichlet_mask()),
            refuge,
        }
    }

    /// Weighted Dirichlet principal eigenvalue `λ^m[-Δ, refuge]`.
    pub fn eigenvalue(&self, tol: f64) -> Result<f64> {
        Ok(smallest_eigenpair(&self.stiffness, &self.m_mass.matrix, &self.dofs, tol, DEFAULT_MAX_ITERS)?.value)
    }

    /// `Σ[-Δ - λm + q; refuge]` with unit weight; `q` given at the refuge nodes.
    pub fn sigma(&self, lambda: f64, q: Option<&[f64]>, tol: f64) -> Result<f64> {
        let mut terms = vec![(1.0, &self.stiffness), (-lambda, &self.m_mass.matrix)];
        let qm;
        if let Some(q) = q {
            qm = diagonal(&q.iter().zip(&self.unit_mass.lumped).map(|(a, b)| a * b).collect::<Vec<_>>());
            terms.push((1.0, &qm));
        }
        let a = combine(&terms);
        Ok(smallest_eigenpair(&a, &self.unit_mass.matrix, &self.dofs, tol, DEFAULT_MAX_ITERS)?.value)
    }
}

/// Refuge problem at the parent spacing, or with explicit cell counts.
pub fn refuge_problem(disc: &Discretization, which: Subdomain, cells: Option<[usize; 2]>) -> Result<RefugeProblem> {
    let rm = match cells {
        Some(c) => restrict_to_refuge_with_cells(&disc.mesh, which, c)?,
        None => restrict_to_refuge(&disc.mesh, which)?,
    };
    Ok(RefugeProblem::new(&disc.spec, rm, disc.mass_kind))
}

/// `Σ[L_{q - λm}]` on the coupled domain or on the refuges alone.
pub fn sigma_of_lambda(disc: &Discretization, lambda: f64, domain: SigmaDomain, q: Option<&[f64]>, tol: f64) -> Result<f64> {
    match domain {
        SigmaDomain::Full => Ok(sigma_eigenpair(disc, lambda, q, tol)?.eigenvalue),
        SigmaDomain::RefugesOnly => {
            if disc.spec.refuges.is_empty() {
                return Err(Error::EmptyRefuge(Subdomain::One));
            }
            let mut best = f64::INFINITY;
            for r in &disc.spec.refuges {
                let prob = refuge_problem(disc, r.subdomain, None)?;
                let local = q.map(|q| {
                    let parent = disc.mesh.part(r.subdomain);
                    prob.refuge
                        .mesh
                        .nodes
                        .iter()
                        .map(|p| q[disc.mesh.global_index(r.subdomain, parent.grid.nearest_node(p))])
                        .collect::<Vec<_>>()
                });
                best = best.min(prob.sigma(lambda, local.as_deref(), tol)?);
            }
            Ok(best)
        }
    }
}

/// Evaluations of λ ↦ Σ(λ), kept sorted and checked for strict decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMap {
    pub domain: SigmaDomain,
    pub points: Vec<(f64, f64)>,
}

impl SigmaMap {
    pub fn new(domain: SigmaDomain) -> Self {
        SigmaMap {
            domain,
            points: Vec::new(),
        }
    }

    /// Inserts `(λ, Σ)`; fails if a neighbour contradicts strict decrease by more than `slack`.
    pub fn record(&mut self, lambda: f64, sigma: f64, slack: f64) -> Result<()> {
        let k = self.points.partition_point(|&(l, _)| l < lambda);
        self.points.insert(k, (lambda, sigma));
        let check = |a: (f64, f64), b: (f64, f64)| {
            if a.1 <= b.1 - slack {
                Err(Error::NonMonotone {
                    lo: a.0,
                    hi: b.0,
                    sigma_lo: a.1,
                    sigma_hi: b.1,
                })
            } else {
                Ok(())
            }
        };
        if k > 0 {
            check(self.points[k - 1], self.points[k])?;
        }
        if k + 1 < self.points.len() {
            check(self.points[k], self.points[k + 1])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCrossing {
    pub lambda: f64,
    pub sigma: f64,
    pub map: SigmaMap,
}

/// Solves `Σ[L_{q - λm}] = level` by bisection down to a 1e-3 bracket, then safeguarded secant.
///
/// The slope of Σ lies in `[-m_max, -m_min]`, which gives a guaranteed bracket.
pub fn solve_sigma_level(disc: &Discretization, q: Option<&[f64]>, level: f64, tol: f64) -> Result<LevelCrossing> {
    let mut map = SigmaMap::new(SigmaDomain::Full);
    let ftol = tol * level.abs().max(1.0);
    let slack = 1e3 * ftol;
    let eval = |lambda: f64, map: &mut SigmaMap| -> Result<f64> {
        let s = sigma_of_lambda(disc, lambda, SigmaDomain::Full, q, 0.1 * tol)?;
        map.record(lambda, s, slack)?;
        Ok(s - level)
    };
    let free_m = disc.dofs.free().iter().map(|&g| disc.m_nodal[g]);
    let m_min = free_m.fold(f64::INFINITY, f64::min);
    let f0 = eval(0.0, &mut map)?;
    if f0.abs() <= ftol {
        return Ok(LevelCrossing {
            lambda: 0.0,
            sigma: f0 + level,
            map,
        });
    }
    let reach = 1.01 * f0.abs() / m_min + 1e-6;
    let (mut lo, mut hi, mut flo, mut fhi) = if f0 > 0.0 {
        (0.0, reach, f0, eval(reach, &mut map)?)
    } else {
        (-reach, 0.0, eval(-reach, &mut map)?, f0)
    };
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        let f = eval(mid, &mut map)?;
        if f.abs() <= ftol {
            return Ok(LevelCrossing {
                lambda: mid,
                sigma: f + level,
                map,
            });
        }
        if f > 0.0 {
            (lo, flo) = (mid, f);
        } else {
            (hi, fhi) = (mid, f);
        }
    }
    let (mut a, mut fa, mut b, mut fb) = (lo, flo, hi, fhi);
    for _ in 0..100 {
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        let fc = eval(c, &mut map)?;
        if fc.abs() <= ftol || hi - lo <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            return Ok(LevelCrossing {
                lambda: c,
                sigma: fc + level,
                map,
            });
        }
        if fc > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        (a, fa, b, fb) = (b, fb, c, fc);
    }
    Err(Error::NoConvergence {
        iterations: 100,
        residual: fb.abs(),
    })
}

/// λ*: the root of Σ(λ) = 0.
pub fn find_lambda_star(disc: &Discretization, tol: f64) -> Result<f64> {
    Ok(solve_sigma_level(disc, None, 0.0, tol)?.lambda)
}

impl Discretization {
    /// λ* at the default tolerance, computed once.
    pub fn lambda_star(&self) -> Result<f64> {
        if let Some(v) = self.lambda_star.get() {
            return Ok(*v);
        }
        let v = find_lambda_star(self, DEFAULT_TOL)?;
        Ok(*self.lambda_star.get_or_init(|| v))
    }

    /// λ∞ at the default tolerance, computed once.
    pub fn lambda_infinity(&self) -> Result<LambdaInfinity> {
        if let Some(v) = self.lambda_infinity.get() {
            return Ok(*v);
        }
        let v = find_lambda_infinity(self, DEFAULT_TOL)?;
        Ok(*self.lambda_infinity.get_or_init(|| v))
    }

    /// Where positive solutions of this discrete problem stop existing: the
    /// smaller of λ∞ and the principal Dirichlet eigenvalue on the refuge
    /// nodes themselves. The two differ when a refuge edge falls between
    /// grid nodes.
    pub fn existence_ceiling(&self) -> Result<f64> {
        if let Some(v) = self.ceiling.get() {
            return Ok(*v);
        }
        let mut v = self.lambda_infinity()?.lambda_inf;
        if self.mesh.is_degenerate() {
            let fixed: Vec<bool> = self.mesh.refuge_mask().iter().map(|r| !r).collect();
            let dofs = DofMap::from_mask(&fixed);
            let core = smallest_eigenpair(&self.laplace, &self.m_mass.matrix, &dofs, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
            v = v.min(core.value);
        }
        Ok(*self.ceiling.get_or_init(|| v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefugeCase {
    EqualCase,
    FirstSmaller,
    SecondSmaller,
    NonDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaInfinity {
    /// `+∞` without refuges.
    pub lambda_inf: f64,
    /// Per-subdomain refuge eigenvalues; `+∞` where a subdomain has no refuge.
    pub per_refuge: [f64; 2],
    pub case: RefugeCase,
}

/// Relative tolerance under which the two refuge eigenvalues count as equal.
pub const TIE_TOL: f64 = 1e-8;

pub fn classify(per_refuge: [f64; 2]) -> LambdaInfinity {
    let lambda_inf = per_refuge[0].min(per_refuge[1]);
    let case = if !lambda_inf.is_finite() {
        RefugeCase::NonDegenerate
    } else if (per_refuge[0] - per_refuge[1]).abs() <= TIE_TOL * lambda_inf {
        RefugeCase::EqualCase
    } else if per_refuge[0] < per_refuge[1] {
        RefugeCase::FirstSmaller
    } else {
        RefugeCase::SecondSmaller
    };
    LambdaInfinity {
        lambda_inf,
        per_refuge,
        case,
    }
}

/// Refuge eigenvalues on submeshes at the parent spacing and their minimum.
pub fn find_lambda_infinity(disc: &Discretization, tol: f64) -> Result<LambdaInfinity> {
    let mut per = [f64::INFINITY; 2];
    for r in &disc.spec.refuges {
        per[r.subdomain.index()] = refuge_problem(disc, r.subdomain, None)?.eigenvalue(tol)?;
    }
    Ok(classify(per))
}

/// Principal eigenpair of `(K + B_mu + α Mass(a)) Φ = λ_α Mass(m) Φ`.
pub fn lambda_alpha(disc: &Discretization, alpha: f64, tol: f64) -> Result<EigenResult> {
    if alpha < 0.0 {
        return Err(Error::InvalidSpec(format!("alpha must be non-negative, got {alpha}")));
    }
    let a = if alpha == 0.0 {
        disc.laplace.clone()
    } else {
        let pot: Vec<f64> = disc
            .a_nodal
            .iter()
            .zip(&disc.weights)
            .map(|(a, w)| alpha * a * w)
            .collect();
        &disc.laplace + &diagonal(&pot)
    };
    eigenpair_of(disc, &a, &disc.m_mass, tol)
}

/// Parameters of `K_λ = (L_F + Λ)⁻¹ (λ M + (Λ + ω))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KLambdaSpec {
    pub lambda: f64,
    pub shift: f64,
    pub omega: f64,
}

impl KLambdaSpec {
    /// `Λ = max(0, -λ m_max) + 1` and `ω = Σ[L_F] + 1`.
    pub fn standard(disc: &Discretization, lambda: f64, q: Option<&[f64]>, tol: f64) -> Result<Self> {
        let m_max = disc.m_nodal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sigma_f = sigma_of_lambda(disc, 0.0, SigmaDomain::Full, q, tol)?;
        Ok(KLambdaSpec {
            lambda,
            shift: (-lambda * m_max).max(0.0) + 1.0,
            omega: sigma_f + 1.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KRadius {
    pub radius: f64,
    /// Smallest eigenvalue of the pencil `(L_F + Λ, λM + Λ + ω)`; the radius is its inverse.
    pub pencil_eigenvalue: f64,
    pub eigenvector_positive: bool,
    pub iterations: usize,
}

/// Spectral radius of `K_λ` by power iteration in the `(λM + Λ + ω)` inner product.
pub fn spectral_radius_k(disc: &Discretization, k: &KLambdaSpec, q: Option<&[f64]>, tol: f64) -> Result<KRadius> {
    for &g in disc.dofs.free() {
        let v = k.lambda * disc.m_nodal[g] + k.shift + k.omega;
        if !(v > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "lambda m + shift + omega must be positive at every node, got {v} at dof {g}"
            )));
        }
    }
    let lf = disc.linear_operator(0.0, q);
    let a = combine(&[(1.0, &lf), (k.shift, &disc.unit_mass.matrix)]);
    let f = SymBanded::from_csr(&a, &disc.dofs).factor()?;
    if f.negative_pivots() > 0 {
        return Err(Error::ShiftTooSmall {
            negative_pivots: f.negative_pivots(),
        });
    }
    let n = combine(&[(k.lambda, &disc.m_mass.matrix), (k.shift + k.omega, &disc.unit_mass.matrix)]);
    let core = smallest_eigenpair(&a, &n, &disc.dofs, tol, DEFAULT_MAX_ITERS)?;
    let positive = disc.dofs.free().iter().all(|&g| core.vector[g] > 0.0);
    Ok(KRadius {
        radius: 1.0 / core.value,
        pencil_eigenvalue: core.value,
        eigenvector_positive: positive,
        iterations: core.iterations,
    })
}

/// `Σ[L; Ω]` at λ = 0 for each permeability.
pub fn sigma_in_mu(spec: &ProblemSpec, mus: &[f64], n_per_side: usize, ny: usize, tol: f64, exec: Execution) -> Result<Vec<(f64, f64)>> {
    if let Some(&mu) = mus.iter().find(|&&m| m < 0.0) {
        return Err(Error::NegativePermeability(mu));
    }
    exec.map(mus, |&mu| {
        let disc = Discretization::new(&spec.clone().with_mu(mu), n_per_side, ny)?;
        Ok((mu, sigma_of_lambda(&disc, 0.0, SigmaDomain::Full, None, tol)?))
    })
    .into_iter()
    .collect()
}

/// `Σ(λ)` over a list of `λ` with everything else fixed.
pub fn sigma_sweep(disc: &Discretization, lambdas: &[f64], domain: SigmaDomain, tol: f64, exec: Execution) -> Result<Vec<(f64, f64)>> {
    exec.map(lambdas, |&l| Ok((l, sigma_of_lambda(disc, l, domain, None, tol)?)))
        .into_iter()
        .collect()
}

/// Richardson extrapolation for a second-order quantity at `h` and `h/2`.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{AxisBox, Geometry, RefugeRegion};
    use std::f64::consts::PI;

    fn interval(gamma: f64) -> Geometry {
        Geometry::Interval {
            x_lo: 0.0,
            x_hi: 1.0,
            gamma,
        }
    }

    fn fd_sine(h: f64, len: f64, k: f64) -> f64 {
        // discrete Dirichlet eigenvalue of the 3-point Laplacian for sin(kπx/len)
        (2.0 / h * (k * PI * h / (2.0 * len)).sin()).powi(2)
    }

    #[test]
    fn symmetric_interval_matches_discrete_sine() {
        let spec = ProblemSpec::uniform(interval(0.5), 1.0, 2.0, 1.0, 1.0);
        let disc = Discretization::new(&spec, 32, 0).unwrap();
        let e = lambda_star_eigenpair(&disc, 1e-11).unwrap();
        assert!((e.eigenvalue - fd_sine(1.0 / 64.0, 1.0, 1.0)).abs() < 1e-9, "{e:?} {}", fd_sine(1.0 / 64.0, 1.0, 1.0));
        assert!(e.positivity.strictly_positive());
        assert!(e.residual < 1e-9);
        let total: f64 = e.component_norms.iter().map(|v| v * v).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_eigenfunction_has_a_vanishing_component() {
        let spec = ProblemSpec::uniform(interval(1.0 / 3.0), 0.0, 2.0, 1.0, 1.0);
        let disc = Discretization::new(&spec, 48, 0).unwrap();
        let e = lambda_star_eigenpair(&disc, 1e-11).unwrap();
        assert!(e.positivity.zero_component[0]);
        assert!(!e.positivity.zero_component[1]);
        assert!(e.component_norms[0] < 1e-8);
        assert!((e.eigenvalue - (3.0 * PI / 4.0).powi(2)).abs() < 2e-3);
    }

    #[test]
    fn root_matches_direct_eigenvalue() {
        let spec = ProblemSpec::uniform(interval(0.4), 0.7, 2.0, 1.0, 1.0);
        let disc = Discretization::new(&spec, 24, 0).unwrap();
        let root = find_lambda_star(&disc, 1e-10).unwrap();
        let direct = lambda_star_eigenpair(&disc, 1e-11).unwrap().eigenvalue;
        assert!((root - direct).abs() < 1e-8, "{root} vs {direct}");
        assert!(sigma_of_lambda(&disc, root, SigmaDomain::Full, None, 1e-11).unwrap().abs() < 1e-9);
    }

    #[test]
    fn sigma_map_flags_increase() {
        let mut m = SigmaMap::new(SigmaDomain::Full);
        m.record(0.0, 1.0, 1e-12).unwrap();
        m.record(2.0, -1.0, 1e-12).unwrap();
        assert!(m.record(1.0, 3.0, 1e-12).is_err());
    }

    #[test]
    fn lambda_infinity_cases() {
        let base = ProblemSpec::uniform(interval(0.5), 1.0, 2.0, 1.0, 1.0);
        let disc = Discretization::new(&base, 16, 0).unwrap();
        let li = find_lambda_infinity(&disc, 1e-10).unwrap();
        assert_eq!(li.case, RefugeCase::NonDegenerate);
        assert!(li.lambda_inf.is_infinite());

        let spec = base.with_refuges(vec![
            RefugeRegion::new(Subdomain::One, AxisBox::interval(0.125, 0.375)),
            RefugeRegion::new(Subdomain::Two, AxisBox::interval(0.625, 0.875)),
        ]);
        let disc = Discretization::new(&spec, 32, 0).unwrap();
        let li = find_lambda_infinity(&disc, 1e-11).unwrap();
        assert_eq!(li.case, RefugeCase::EqualCase);
        let h = 1.0 / 64.0;
        assert!((li.per_refuge[0] - fd_sine(h, 0.25, 1.0)).abs() < 1e-8);
    }

    #[test]
    fn k_radius_at_zero_lambda() {
        let spec = ProblemSpec::uniform(interval(0.3), 2.0, 2.0, 1.0, 1.0);
        let disc = Discretization::new(&spec, 20, 0).unwrap();
        let k = KLambdaSpec::standard(&disc, 0.0, None, 1e-11).unwrap();
        let r = spectral_radius_k(&disc, &k, None, 1e-11).unwrap();
        let sigma = k.omega - 1.0;
        assert!((r.radius - (k.shift + k.omega) / (k.shift + sigma)).abs() < 1e-9);
        assert!(r.eigenvector_positive);
    }

    #[test]
    fn sigma_sweep_is_ordered_and_decreasing() {
        let disc = Discretization::new(&ProblemSpec::uniform(interval(0.3), 1.0, 2.0, 1.0, 1.0), 24, 0).unwrap();
        let lambdas = [0.0, 5.0, 10.0, 40.0];
        let seq = sigma_sweep(&disc, &lambdas, SigmaDomain::Full, 1e-10, Execution::Sequential).unwrap();
        let par = sigma_sweep(&disc, &lambdas, SigmaDomain::Full, 1e-10, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        assert!(seq.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn negative_weight_is_rejected() {
        let spec = ProblemSpec::uniform(interval(0.5), 1.0, 2.0, 1.0, 1.0);
        let disc = Discretization::new(&spec, 8, 0).unwrap();
        let mut w = disc.unit_mass.lumped.clone();
        w[3] = -1.0;
        let r = smallest_eigenpair(&disc.laplace, &diagonal(&w), &disc.dofs, 1e-10, 50);
        assert!(matches!(r, Err(Error::NegativeWeight { index: 3, .. })));
    }
}
