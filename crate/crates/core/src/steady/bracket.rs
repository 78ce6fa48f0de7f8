//! Ordered sub/supersolution pairs for the monotone iteration.

use crate::error::{Error, Result};
use crate::fields::FieldPair;
use crate::linalg::{csr_apply, DofMap, SymBanded};
use crate::mesh::{AxisBox, Subdomain};
use crate::operators::{signed_pow, Discretization};
use crate::spectral::{sigma_eigenpair, smallest_eigenpair, DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Patch widths tried for the refuge-neighbourhood supersolution, as fractions of the refuge diameter.
pub const PATCH_DELTAS: [f64; 3] = [0.04, 0.02, 0.01];

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuperKind {
    /// Constant `k` on free nodes.
    Constant,
    /// Principal eigenfunctions on enlarged refuge neighbourhoods, blended outward.
    EigenPatch { delta_fraction: f64 },
    /// Exact solution of the linear problem on the refuges with unit data around them.
    ResolventPatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneBracket {
    pub sub: FieldPair,
    pub sup: FieldPair,
    pub epsilon: f64,
    pub k: f64,
    pub kind: SuperKind,
}

/// Node-wise residual with a per-node roundoff allowance, at free dofs.
fn residual_with_slack(disc: &Discretization, lambda: f64, u: &[f64]) -> Vec<(usize, f64, f64)> {
    let p = disc.spec.p;
    let lu = csr_apply(&disc.laplace, u);
    let mu = disc.m_mass.apply(u);
    disc.dofs
        .free()
        .iter()
        .map(|&g| {
            let nl = disc.weights[g] * disc.a_nodal[g] * signed_pow(u[g], p);
            let r = lu[g] - lambda * mu[g] + nl;
            let slack = 1e-11 * (lu[g].abs() + (lambda * mu[g]).abs() + nl.abs()) + 1e-300;
            (g, r, slack)
        })
        .collect()
}

/// Every free-node residual is `<= 0` up to roundoff.
pub fn is_subsolution(disc: &Discretization, lambda: f64, u: &FieldPair) -> bool {
    residual_with_slack(disc, lambda, &u.to_global())
        .iter()
        .all(|&(_, r, s)| r <= s)
}

/// Every free-node residual is `>= 0` up to roundoff.
pub fn is_supersolution(disc: &Discretization, lambda: f64, u: &FieldPair) -> bool {
    residual_with_slack(disc, lambda, &u.to_global())
        .iter()
        .all(|&(_, r, s)| r >= -s)
}

/// Fails unless `λ* < λ < λ∞` (with λ∞ capped by the discrete ceiling).
pub fn check_window(disc: &Discretization, lambda: f64) -> Result<()> {
    let lower = disc.lambda_star()?;
    let upper = disc.existence_ceiling()?;
    if lambda > lower && lambda < upper {
        Ok(())
    } else {
        Err(Error::WindowViolation { lambda, lower, upper })
    }
}

/// `(λ m_max / a_min)^(1/(p-1))` over non-refuge free nodes.
pub fn constant_super_level(disc: &Discretization, lambda: f64) -> f64 {
    let (mut m_max, mut a_min) = (0.0f64, f64::INFINITY);
    for &g in disc.dofs.free() {
        m_max = m_max.max(disc.m_nodal[g]);
        if disc.a_nodal[g] > 0.0 {
            a_min = a_min.min(disc.a_nodal[g]);
        }
    }
    (lambda.max(0.0) * m_max / a_min).powf(1.0 / (disc.spec.p - 1.0))
}

/// Smallest `k` making `k ψ` a supersolution, given `ψ > 0` on free dofs.
///
/// Nodes without crowding cannot be helped by `k` and must already satisfy
/// the linear inequality; otherwise `None`.
fn scale_for_super(disc: &Discretization, lambda: f64, psi: &[f64]) -> Option<f64> {
    let p = disc.spec.p;
    let c = csr_apply(&disc.linear_operator(lambda, None), psi);
    let mut need = 0.0f64;
    for &g in disc.dofs.free() {
        let lin = c[g];
        let slack = 1e-10 * (csr_apply_row_scale(disc, g) * psi[g].abs()) + 1e-300;
        let a = disc.weights[g] * disc.a_nodal[g];
        if a > 0.0 {
            if lin < 0.0 {
                need = need.max(-lin / (a * psi[g].powf(p)));
            }
        } else if lin < -slack {
            return None;
        }
    }
    // a little headroom keeps the node-wise check clear of roundoff
    Some(1.01 * need.powf(1.0 / (p - 1.0)))
}

fn csr_apply_row_scale(disc: &Discretization, g: usize) -> f64 {
    disc.laplace
        .outer_view(g)
        .map(|row| row.iter().map(|(_, v)| v.abs()).sum::<f64>())
        .unwrap_or(0.0)
}

fn free_ones(disc: &Discretization) -> Vec<f64> {
    disc.dofs.extend(&vec![1.0; disc.dofs.n_free()])
}

fn refuge_box_nodes(disc: &Discretization, sub: Subdomain, bounds: &AxisBox, delta: f64) -> Vec<usize> {
    let dim = disc.mesh.dimension();
    let part = disc.mesh.part(sub);
    (0..part.node_count())
        .map(|k| disc.mesh.global_index(sub, k))
        .filter(|&g| disc.dofs.slot(g).is_some())
        .filter(|&g| {
            let (_, k) = disc.mesh.locate(g);
            bounds.distance(&part.nodes[k], dim) <= delta
        })
        .collect()
}

/// The refuge-neighbourhood eigenfunction patch for one width.
fn eigen_patch(disc: &Discretization, lambda: f64, fraction: f64) -> Result<Option<Vec<f64>>> {
    let n = disc.n();
    let dim = disc.mesh.dimension();
    let c = disc.linear_operator(lambda, None);
    let mut psi = vec![f64::NAN; n];
    let mut inner_all = vec![false; n];
    let mut trace_min = f64::INFINITY;
    for r in &disc.spec.refuges {
        let delta = fraction * r.bounds.diameter(dim);
        let outer = refuge_box_nodes(disc, r.subdomain, &r.bounds, delta);
        let inner = refuge_box_nodes(disc, r.subdomain, &r.bounds, 0.5 * delta);
        let mut fixed = vec![true; n];
        outer.iter().for_each(|&g| fixed[g] = false);
        let dofs = DofMap::from_mask(&fixed);
        let core = smallest_eigenpair(&c, &disc.unit_mass.matrix, &dofs, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
        if core.value <= 0.0 {
            return Ok(None);
        }
        let peak = inner.iter().map(|&g| core.vector[g]).fold(0.0, f64::max);
        let mut here = vec![false; n];
        for &g in &inner {
            psi[g] = core.vector[g] / peak;
            inner_all[g] = true;
            here[g] = true;
        }
        for &g in &inner {
            // trace: inner nodes with a neighbour outside the inner set
            let touches_out = c
                .outer_view(g)
                .map(|row| row.iter().any(|(j, _)| !here[j]))
                .unwrap_or(false);
            if touches_out {
                trace_min = trace_min.min(psi[g]);
            }
        }
    }
    if !(trace_min > 0.0) {
        return Ok(None);
    }
    // harmonic blend outside the inner sets: value 1 on the outer boundary,
    // the eigenfunction trace on the inner sets
    let mut data = vec![0.0; n];
    let mut fixed = vec![true; n];
    for g in 0..n {
        if inner_all[g] {
            data[g] = psi[g];
        } else if disc.dofs.slot(g).is_none() {
            data[g] = 1.0;
        } else {
            fixed[g] = false;
        }
    }
    let dofs = DofMap::from_mask(&fixed);
    let lifted = csr_apply(&disc.laplace, &data);
    let rhs: Vec<f64> = dofs.free().iter().map(|&g| -lifted[g]).collect();
    let sol = SymBanded::from_csr(&disc.laplace, &dofs).factor()?.solve(&rhs);
    for (k, &g) in dofs.free().iter().enumerate() {
        psi[g] = sol[k].max(trace_min);
    }
    for g in 0..n {
        if disc.dofs.slot(g).is_none() {
            psi[g] = 0.0;
        }
    }
    Ok(Some(psi))
}

/// Solves the linear problem exactly on the refuge nodes with unit data around them.
fn resolvent_patch(disc: &Discretization, lambda: f64) -> Result<Vec<f64>> {
    let mut psi = free_ones(disc);
    let mask = disc.mesh.refuge_mask();
    let c = disc.linear_operator(lambda, None);
    let mut outside = psi.clone();
    mask.iter().enumerate().filter(|(_, &r)| r).for_each(|(g, _)| outside[g] = 0.0);
    let lifted = csr_apply(&c, &outside);
    let fixed: Vec<bool> = mask.iter().map(|r| !r).collect();
    let dofs = DofMap::from_mask(&fixed);
    let f = SymBanded::from_csr(&c, &dofs).factor()?;
    if f.negative_pivots() > 0 {
        let sub = disc
            .spec
            .refuges
            .first()
            .map(|r| r.subdomain)
            .unwrap_or(Subdomain::One);
        return Err(Error::PatchFailure(sub));
    }
    let rhs: Vec<f64> = dofs.free().iter().map(|&g| -lifted[g]).collect();
    let sol = f.solve(&rhs);
    for (k, &g) in dofs.free().iter().enumerate() {
        psi[g] = sol[k];
    }
    Ok(psi)
}

/// Supersolution `k ψ` at `λ`, without any lower ordering constraint.
pub fn supersolution(disc: &Discretization, lambda: f64) -> Result<(Vec<f64>, f64, SuperKind)> {
    if !disc.mesh.is_degenerate() {
        let k = constant_super_level(disc, lambda);
        return Ok((free_ones(disc), k, SuperKind::Constant));
    }
    let upper = disc.existence_ceiling()?;
    if lambda >= upper {
        return Err(Error::WindowViolation {
            lambda,
            lower: f64::NEG_INFINITY,
            upper,
        });
    }
    for fraction in PATCH_DELTAS {
        if let Some(psi) = eigen_patch(disc, lambda, fraction)? {
            if let Some(k) = scale_for_super(disc, lambda, &psi) {
                return Ok((psi, k, SuperKind::EigenPatch { delta_fraction: fraction }));
            }
        }
    }
    let psi = resolvent_patch(disc, lambda)?;
    let k = scale_for_super(disc, lambda, &psi).ok_or(Error::PatchFailure(
        disc.spec.refuges[0].subdomain,
    ))?;
    Ok((psi, k, SuperKind::ResolventPatch))
}

/// `[ε Φ₀, k ψ]` for `λ` inside the existence window.
pub fn build_bracket(disc: &Discretization, lambda: f64) -> Result<MonotoneBracket> {
    check_window(disc, lambda)?;
    let lstar = disc.lambda_star()?;
    let phi = sigma_eigenpair(disc, lambda, None, DEFAULT_TOL)?;
    let peak = phi.eigenfunction.sup_norm();
    let shape = phi.eigenfunction.scaled(1.0 / peak);
    let mut epsilon = 1e-3 * (lambda - lstar).powf(1.0 / (disc.spec.p - 1.0));
    let mut found = false;
    for _ in 0..=MAX_HALVINGS {
        if is_subsolution(disc, lambda, &shape.scaled(epsilon)) {
            found = true;
            break;
        }
        epsilon *= 0.5;
    }
    if !found {
        return Err(Error::SubsolutionFailure { epsilon });
    }
    let sub = shape.scaled(epsilon);
    let (psi, mut k, kind) = supersolution(disc, lambda)?;
    let sub_g = sub.to_global();
    for &g in disc.dofs.free() {
        k = k.max(sub_g[g] / psi[g]);
    }
    let sup: Vec<f64> = psi.iter().map(|v| k * v).collect();
    Ok(MonotoneBracket {
        sub,
        sup: disc.field(&sup),
        epsilon,
        k,
        kind,
    })
}

/// `[0, k ψ]`, valid for any `λ` below the ceiling (including `λ <= λ*`).
pub fn build_upper_bracket(disc: &Discretization, lambda: f64) -> Result<MonotoneBracket> {
    let (psi, k, kind) = supersolution(disc, lambda)?;
    let sup: Vec<f64> = psi.iter().map(|v| k * v).collect();
    Ok(MonotoneBracket {
        sub: FieldPair::zeros(&disc.mesh),
        sup: disc.field(&sup),
        epsilon: 0.0,
        k,
        kind,
    })
}
