//! De Donder–Weyl solvers for connection coefficients at a point, the
//! nonholonomic projection of a free solution, and Euler–Lagrange /
//! nonholonomic field-equation residuals.
//!
//! Coefficient convention: the horizontal lift is
//! `H_μ = ∂_{x^μ} + Γ^a_μ ∂_{y^a} + Γ^a_{μν} ∂_{y^a_ν}`, so `Γ^a_{μν}` is the
//! rate of change of `y^a_ν` along `x^μ`. In this convention the coordinate
//! form of `i_h Ω_L = n Ω_L` for a semi-holonomic connection reads
//!
//! ```text
//! Σ_{b,τ,ν} Γ^b_{τν} H[bν][aτ] = ∂L/∂y^a − Σ_τ ∂²L/∂x^τ∂y^a_τ − Σ_{b,τ} y^b_τ ∂²L/∂y^b∂y^a_τ
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint::{
    coefficients_from, constraint_derivatives, constraint_forms, constraint_rank_check, ConstraintDerivs,
    ConstraintFn, ConstraintSpec,
};
use crate::error::{Error, Result};
use crate::exterior::{one_form, Covector, Form, Layout, TangentVector};
use crate::jet::{semiholonomic_residual, ConnectionCoeffs, Jet2Point, JetPoint};
use crate::lagrangian::{
    derivative_bundle, hessian_regularity, omega_form, DerivativeBundle, Lagrangian, RegularityThresholds,
};
use crate::projector::{inverse_compatibility, random_vectors, solve_zeta_linear, ProjectorPair, ZetaBasis};

/// How the underdetermined DDW system was closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Minimum Frobenius norm over all free coefficients.
    MinNorm,
    /// Spatial-first-index block taken from section data.
    Pinned,
    /// Obtained by projecting another solution.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DdwResiduals {
    /// Residual of the coordinate DDW equations (form level when verified).
    pub ddw_form: f64,
    pub tangency: f64,
    pub semiholonomic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdwSolution {
    pub coeffs: ConnectionCoeffs,
    /// `λ^α_μ`, row `α`, column `μ`; empty for the free problem.
    pub lam: Vec<f64>,
    pub residuals: DdwResiduals,
    pub selection: Selection,
}

/// Right side of the coordinate DDW equations.
pub fn ddw_rhs(bundle: &DerivativeBundle) -> Vec<f64> {
    let l = bundle.layout;
    let (b, nv) = (l.base(), l.jet());
    (0..l.m)
        .map(|a| {
            let mut r = bundle.dldy[a];
            for tau in 0..b {
                r -= bundle.d2ldxdv[tau * nv + a * b + tau];
                for bb in 0..l.m {
                    r -= bundle.point.v_at(bb, tau) * bundle.d2ldydv[bb * nv + a * b + tau];
                }
            }
            r
        })
        .collect()
}

/// Coefficient of `Γ^b_{τν}` in DDW equation `a`: `H[(b,ν)][(a,τ)]`.
#[inline]
fn ddw_coeff(bundle: &DerivativeBundle, a: usize, b: usize, tau: usize, nu: usize) -> f64 {
    let base = bundle.layout.base();
    bundle.hess(b * base + nu, a * base + tau)
}

/// Minimum-norm least-squares solution and the max-abs residual.
///
/// The system is first reduced to a square triangular one by QR so the SVD
/// only ever sees a small square matrix; a direct SVD of tall rank-deficient
/// matrices loses accuracy in the singular vectors.
pub fn lstsq_min_norm(a: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), rhs.amax());
    }
    let square_solve = |r: DMatrix<f64>, b: &DVector<f64>| -> DVector<f64> {
        let svd = r.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        svd.solve(b, eps).expect("U and V were requested")
    };
    let x = if a.nrows() >= a.ncols() {
        let qr = a.clone().qr();
        let qtb = qr.q().transpose() * rhs;
        square_solve(qr.r(), &qtb)
    } else {
        let qr = a.transpose().qr();
        let z = square_solve(qr.r().transpose(), rhs);
        qr.q() * z
    };
    let resid = (a * &x - rhs).amax();
    (x, resid)
}

fn check_fixed(l: Layout, fixed: &[f64]) -> Result<()> {
    let expected = l.m * l.n * l.base();
    if fixed.len() != expected {
        return Err(Error::DimensionMismatch { context: "pinned spatial block", expected, found: fixed.len() });
    }
    Ok(())
}

/// Index of `fixed_spatial[a][i−1][ν]`.
#[inline]
fn fixed_index(l: Layout, a: usize, i: usize, nu: usize) -> usize {
    (a * l.n + (i - 1)) * l.base() + nu
}

/// Connection with `Γ^a_μ = y^a_μ` and the spatial block (plus its mirror
/// into `Γ^a_{0i}`) pinned.
fn pinned_start(bundle: &DerivativeBundle, fixed: Option<&[f64]>) -> ConnectionCoeffs {
    let l = bundle.layout;
    let mut c = ConnectionCoeffs::zeros(l);
    c.gamma = bundle.point.v.clone();
    if let Some(f) = fixed {
        for a in 0..l.m {
            for i in 1..l.base() {
                for nu in 0..l.base() {
                    *c.g2_mut(a, i, nu) = f[fixed_index(l, a, i, nu)];
                }
                *c.g2_mut(a, 0, i) = c.g2(a, i, 0);
            }
        }
    }
    c
}

fn algebraic_ddw_residual(bundle: &DerivativeBundle, c: &ConnectionCoeffs, lam: &[f64], coeffs: &[f64]) -> f64 {
    let l = bundle.layout;
    let (b, nv) = (l.base(), l.jet());
    let rhs = ddw_rhs(bundle);
    let k = lam.len() / b.max(1);
    (0..l.m)
        .map(|a| {
            let mut s = 0.0;
            for bb in 0..l.m {
                for tau in 0..b {
                    for nu in 0..b {
                        s += c.g2(bb, tau, nu) * ddw_coeff(bundle, a, bb, tau, nu);
                    }
                }
            }
            for alpha in 0..k {
                for tau in 0..b {
                    s += lam[alpha * b + tau] * coeffs[alpha * nv + a * b + tau];
                }
            }
            (s - rhs[a]).abs()
        })
        .fold(0.0, f64::max)
}

/// Free DDW solution from a precomputed derivative bundle; the reported
/// `ddw_form` residual is the algebraic one.
pub fn solve_free_ddw_at(bundle: &DerivativeBundle, fixed_spatial: Option<&[f64]>) -> Result<DdwSolution> {
    let l = bundle.layout;
    let b = l.base();
    let rhs = ddw_rhs(bundle);
    let mut c = pinned_start(bundle, fixed_spatial);
    let selection = match fixed_spatial {
        Some(f) => {
            check_fixed(l, f)?;
            // Move everything except Γ^b_{00} to the right side.
            let mut red = DVector::from_vec(rhs.clone());
            for a in 0..l.m {
                for bb in 0..l.m {
                    for tau in 0..b {
                        for nu in 0..b {
                            if tau == 0 && nu == 0 {
                                continue;
                            }
                            red[a] -= c.g2(bb, tau, nu) * ddw_coeff(bundle, a, bb, tau, nu);
                        }
                    }
                }
            }
            let block = DMatrix::from_fn(l.m, l.m, |a, bb| ddw_coeff(bundle, a, bb, 0, 0));
            let sol = block.lu().solve(&red).filter(|s| s.iter().all(|x| x.is_finite())).ok_or_else(|| {
                Error::SingularSystem { block: "temporal-temporal Hessian block H[(b,0)][(a,0)]".into() }
            })?;
            for bb in 0..l.m {
                *c.g2_mut(bb, 0, 0) = sol[bb];
            }
            Selection::Pinned
        }
        None => {
            let cols = l.m * b * b;
            let a_mat = DMatrix::from_fn(l.m, cols, |a, j| {
                let (bb, tau, nu) = (j / (b * b), (j / b) % b, j % b);
                ddw_coeff(bundle, a, bb, tau, nu)
            });
            let (x, _) = lstsq_min_norm(&a_mat, &DVector::from_vec(rhs));
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSystem { block: "free DDW minimum-norm system".into() });
            }
            c.gamma2.copy_from_slice(x.as_slice());
            Selection::MinNorm
        }
    };
    let residuals = DdwResiduals {
        ddw_form: algebraic_ddw_residual(bundle, &c, &[], &[]),
        tangency: 0.0,
        semiholonomic: semiholonomic_residual(&c, &bundle.point),
    };
    Ok(DdwSolution { coeffs: c, lam: Vec::new(), residuals, selection })
}

/// `(i_h Ω_L)(u₁..u_k) = Σ_i Ω_L(u₁, …, h(u_i), …, u_k)`.
fn insert_h(omega: &Form, c: &ConnectionCoeffs, vecs: &[TangentVector]) -> f64 {
    let mut total = 0.0;
    for i in 0..vecs.len() {
        let hv = c.horizontal_part(&vecs[i]);
        let slices: Vec<&[f64]> =
            vecs.iter().enumerate().map(|(j, v)| if j == i { hv.as_slice() } else { v.as_slice() }).collect();
        total += omega.eval_slices(&slices);
    }
    total
}

/// `max |(i_h Ω_L − n Ω_L)(tuple)|` over random (n+2)-tuples.
pub fn ddw_form_residual(
    bundle: &DerivativeBundle,
    c: &ConnectionCoeffs,
    tuples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let l = bundle.layout;
    let omega = omega_form(bundle);
    let mut worst: f64 = 0.0;
    for _ in 0..tuples {
        let vs = random_vectors(l, l.n + 2, rng);
        let slices: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let r = insert_h(&omega, c, &vs) - l.n as f64 * omega.eval_slices(&slices);
        worst = worst.max(r.abs());
    }
    worst
}

const VERIFY_SEED: u64 = 0x0dd0_5eed;

/// Free DDW solution with `Γ^a_μ = y^a_μ`. Without a pin the
/// minimum-norm `Γ^a_{μν}` is returned; with `fixed_spatial[a][i][ν]`
/// (`i` = 1..n) the spatial block is pinned, `Γ^a_{0i} := Γ^a_{i0}` and
/// only `Γ^a_{00}` is solved. The reported `ddw_form` residual is the
/// form-level one on 50 random tuples.
pub fn solve_free_ddw<L: Lagrangian>(model: &L, p: &JetPoint, fixed_spatial: Option<&[f64]>) -> Result<DdwSolution> {
    let bundle = derivative_bundle(model, p)?;
    let reg = hessian_regularity(&bundle, RegularityThresholds::default());
    if !reg.regular {
        return Err(Error::Regularity { det: reg.det, cond: reg.cond });
    }
    let mut sol = solve_free_ddw_at(&bundle, fixed_spatial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    sol.residuals.ddw_form = ddw_form_residual(&bundle, &sol.coeffs, 50, &mut rng);
    Ok(sol)
}

/// `dφ_α(H_μ)` for all α, μ (row α, column μ).
fn dphi_on_lifts(d: &ConstraintDerivs, c: &ConnectionCoeffs) -> Vec<f64> {
    let b = c.layout.base();
    let lifts: Vec<TangentVector> = (0..b).map(|mu| c.horizontal_lift(mu)).collect();
    let mut out = vec![0.0; d.k() * b];
    for alpha in 0..d.k() {
        let g = d.differential(alpha);
        for (mu, h) in lifts.iter().enumerate() {
            out[alpha * b + mu] = g.iter().zip(h.as_slice()).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Project a free solution onto the constraint: `H'_μ = P(H_μ)`, with
/// multipliers `λ^α_μ = Σ_β Λ^{αβ} dφ_β(H_μ)` (so `Q(H_μ) = λ^α_μ ζ_α`).
pub fn project_connection(
    free: &DdwSolution,
    pp: &ProjectorPair,
    zb: &ZetaBasis,
    d: &ConstraintDerivs,
) -> Result<DdwSolution> {
    let sol = project_with_inverse(free, &pp.lam, zb, d);
    // The new lifts must coincide with P applied to the old ones.
    let b = free.coeffs.layout.base();
    let mut mismatch: f64 = 0.0;
    for mu in 0..b {
        let projected = pp.apply_p(&free.coeffs.horizontal_lift(mu));
        let direct = sol.coeffs.horizontal_lift(mu);
        for (x, y) in projected.as_slice().iter().zip(direct.as_slice()) {
            mismatch = mismatch.max((x - y).abs());
        }
    }
    let scale = 1.0 + free.coeffs.gamma2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if mismatch > 1e-9 * scale * pp.invariants.scale {
        return Err(Error::Consistency { check: "P(H_mu) vs projected coefficients".into(), residual: mismatch });
    }
    Ok(sol)
}

/// The coefficient-level projection given `Λ = (Mᵀ)⁻¹` only, without
/// forming `P`; used on hot paths.
pub fn project_with_inverse(free: &DdwSolution, inv: &DMatrix<f64>, zb: &ZetaBasis, d: &ConstraintDerivs) -> DdwSolution {
    let l = free.coeffs.layout;
    let (b, k) = (l.base(), zb.k());
    let dh = dphi_on_lifts(d, &free.coeffs);
    let mut lam = vec![0.0; k * b];
    for alpha in 0..k {
        for mu in 0..b {
            lam[alpha * b + mu] = (0..k).map(|beta| inv[(alpha, beta)] * dh[beta * b + mu]).sum();
        }
    }
    let mut c = free.coeffs.clone();
    for a in 0..l.m {
        for mu in 0..b {
            for nu in 0..b {
                let shift: f64 = (0..k).map(|al| lam[al * b + mu] * zb.jet_components(al)[a * b + nu]).sum();
                *c.g2_mut(a, mu, nu) -= shift;
            }
        }
    }
    let tangency = dphi_on_lifts(d, &c).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let residuals = DdwResiduals {
        ddw_form: free.residuals.ddw_form,
        tangency,
        semiholonomic: free.residuals.semiholonomic,
    };
    DdwSolution { coeffs: c, lam, residuals, selection: Selection::Projected }
}

/// Constrained DDW from precomputed data; `derivs`/`coeffs` may describe
/// zero constraints, in which case this is the free problem.
pub fn solve_constrained_at(
    bundle: &DerivativeBundle,
    derivs: &ConstraintDerivs,
    coeffs: &[f64],
    fixed_spatial: Option<&[f64]>,
) -> Result<DdwSolution> {
    let l = bundle.layout;
    let (b, nv, k) = (l.base(), l.jet(), derivs.k());
    let rhs = ddw_rhs(bundle);
    let p = &bundle.point;
    // −(∂φ_α/∂x^μ + Σ_b y^b_μ ∂φ_α/∂y^b), the tangency right side.
    let tan_rhs = |alpha: usize, mu: usize| -> f64 {
        -(derivs.dphidx(alpha)[mu] + (0..l.m).map(|bb| p.v_at(bb, mu) * derivs.dphidy(alpha)[bb]).sum::<f64>())
    };
    let mut c = pinned_start(bundle, fixed_spatial);
    let mut lam = vec![0.0; k * b];
    let selection = match fixed_spatial {
        None => {
            let ng = l.m * b * b;
            let rows = l.m + k * b;
            let mut a_mat = DMatrix::zeros(rows, ng + k * b);
            let mut r = DVector::zeros(rows);
            for a in 0..l.m {
                for j in 0..ng {
                    let (bb, tau, nu) = (j / (b * b), (j / b) % b, j % b);
                    a_mat[(a, j)] = ddw_coeff(bundle, a, bb, tau, nu);
                }
                for alpha in 0..k {
                    for tau in 0..b {
                        a_mat[(a, ng + alpha * b + tau)] = coeffs[alpha * nv + a * b + tau];
                    }
                }
                r[a] = rhs[a];
            }
            for alpha in 0..k {
                for mu in 0..b {
                    let row = l.m + alpha * b + mu;
                    for bb in 0..l.m {
                        for nu in 0..b {
                            a_mat[(row, c.g2_index(bb, mu, nu))] = derivs.dphidv(alpha)[bb * b + nu];
                        }
                    }
                    r[row] = tan_rhs(alpha, mu);
                }
            }
            let (x, resid) = lstsq_min_norm(&a_mat, &r);
            if resid > 1e-9 * (1.0 + a_mat.amax() * x.amax().max(1.0)) {
                return Err(Error::InconsistentSystem { residual: resid });
            }
            c.gamma2.copy_from_slice(&x.as_slice()[..ng]);
            lam.copy_from_slice(&x.as_slice()[ng..]);
            Selection::MinNorm
        }
        Some(f) => {
            check_fixed(l, f)?;
            // Spatial tangency rows involve pinned data only.
            let mut spatial_resid: f64 = 0.0;
            for alpha in 0..k {
                for i in 1..b {
                    let s: f64 = (0..l.m)
                        .flat_map(|bb| (0..b).map(move |nu| (bb, nu)))
                        .map(|(bb, nu)| c.g2(bb, i, nu) * derivs.dphidv(alpha)[bb * b + nu])
                        .sum();
                    spatial_resid = spatial_resid.max((s - tan_rhs(alpha, i)).abs());
                }
            }
            if spatial_resid > 1e-9 {
                return Err(Error::InconsistentSystem { residual: spatial_resid });
            }
            // Unknowns: Γ^a_{00}, deviations δ^a_i = Γ^a_{0i} − Γ^a_{i0}, λ^α_τ.
            let nd = l.m * l.n;
            let cols = l.m + nd + k * b;
            let rows = l.m + k;
            let mut a_mat = DMatrix::zeros(rows, cols);
            let mut r = DVector::zeros(rows);
            for a in 0..l.m {
                let mut known = rhs[a];
                for bb in 0..l.m {
                    for tau in 0..b {
                        for nu in 0..b {
                            if tau == 0 && nu == 0 {
                                continue;
                            }
                            known -= c.g2(bb, tau, nu) * ddw_coeff(bundle, a, bb, tau, nu);
                        }
                    }
                    a_mat[(a, bb)] = ddw_coeff(bundle, a, bb, 0, 0);
                    for i in 1..b {
                        a_mat[(a, l.m + bb * l.n + i - 1)] = ddw_coeff(bundle, a, bb, 0, i);
                    }
                }
                for alpha in 0..k {
                    for tau in 0..b {
                        a_mat[(a, l.m + nd + alpha * b + tau)] = coeffs[alpha * nv + a * b + tau];
                    }
                }
                r[a] = known;
            }
            for alpha in 0..k {
                let row = l.m + alpha;
                let g = derivs.dphidv(alpha);
                let mut known = tan_rhs(alpha, 0);
                for bb in 0..l.m {
                    a_mat[(row, bb)] = g[bb * b];
                    for i in 1..b {
                        a_mat[(row, l.m + bb * l.n + i - 1)] = g[bb * b + i];
                        known -= c.g2(bb, 0, i) * g[bb * b + i];
                    }
                }
                r[row] = known;
            }
            let (x, resid) = lstsq_min_norm(&a_mat, &r);
            if resid > 1e-9 * (1.0 + a_mat.amax() * x.amax().max(1.0)) {
                return Err(Error::InconsistentSystem { residual: resid });
            }
            for bb in 0..l.m {
                *c.g2_mut(bb, 0, 0) = x[bb];
                for i in 1..b {
                    *c.g2_mut(bb, 0, i) += x[l.m + bb * l.n + i - 1];
                }
            }
            lam.copy_from_slice(&x.as_slice()[l.m + nd..]);
            Selection::Pinned
        }
    };
    let tangency = dphi_on_lifts(derivs, &c).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let residuals = DdwResiduals {
        ddw_form: algebraic_ddw_residual(bundle, &c, &lam, coeffs),
        tangency,
        semiholonomic: semiholonomic_residual(&c, p),
    };
    Ok(DdwSolution { coeffs: c, lam, residuals, selection })
}

/// Solve the constrained DDW equations directly for `(Γ^a_{μν}, λ^α_μ)`.
pub fn solve_constrained_ddw<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: &ConstraintSpec<F>,
    p: &JetPoint,
    fixed_spatial: Option<&[f64]>,
) -> Result<DdwSolution> {
    let bundle = derivative_bundle(model, p)?;
    let reg = hessian_regularity(&bundle, RegularityThresholds::default());
    if !reg.regular {
        return Err(Error::Regularity { det: reg.det, cond: reg.cond });
    }
    constraint_rank_check(spec, p)?;
    let d = constraint_derivatives(spec, p)?;
    let c = coefficients_from(spec, p, &d)?;
    let zb = solve_zeta_linear(&bundle, &c)?;
    inverse_compatibility(&zb, &d)?;
    solve_constrained_at(&bundle, &d, &c, fixed_spatial)
}

/// Outcome of the `I(F)` membership test for a constrained solution.
#[derive(Debug, Clone, PartialEq)]
pub struct NhDdwResidual {
    /// Best-fit residual of `i_hΩ_L − nΩ_L − λ'^α_μ dx^μ∧Φ_α` on the tuples.
    pub form_residual: f64,
    pub tangency_residual: f64,
    /// Minimum-norm `λ'` (row α, column μ).
    pub lam_fit: Vec<f64>,
    /// Residual with `λ'` replaced by the solution's own multipliers.
    pub residual_at_solution_lam: f64,
    /// `max_a |Σ λ'^α_μ (C_α)^μ_a − Σ λ^α_μ (C_α)^μ_a|`: only this
    /// combination of the multipliers is determined by the forms.
    pub force_mismatch: f64,
}

/// Membership of `i_hΩ_L − nΩ_L` in the ansatz `λ'^α_μ dx^μ ∧ Φ_α`,
/// fitted on `tuples` random (n+2)-tuples.
pub fn nh_ddw_residual_at(
    bundle: &DerivativeBundle,
    derivs: &ConstraintDerivs,
    coeffs: &[f64],
    sol: &DdwSolution,
    tuples: usize,
    rng: &mut impl Rng,
) -> Result<NhDdwResidual> {
    let l = bundle.layout;
    let (b, nv, k) = (l.base(), l.jet(), derivs.k());
    let omega = omega_form(bundle);
    let phis = constraint_forms(l, &bundle.point, coeffs);
    let basis: Vec<Form> = (0..k)
        .flat_map(|alpha| {
            let phi = &phis[alpha];
            (0..b).map(move |mu| one_form(l, Covector::Basis(l.x(mu))).wedge(phi))
        })
        .collect();
    let mut a_mat = DMatrix::zeros(tuples, k * b);
    let mut r = DVector::zeros(tuples);
    for t in 0..tuples {
        let vs = random_vectors(l, l.n + 2, rng);
        let slices: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        r[t] = insert_h(&omega, &sol.coeffs, &vs) - l.n as f64 * omega.eval_slices(&slices);
        for (j, f) in basis.iter().enumerate() {
            a_mat[(t, j)] = f.eval_slices(&slices);
        }
    }
    let (x, form_residual) = lstsq_min_norm(&a_mat, &r);
    let lam_fit: Vec<f64> = x.as_slice().to_vec();
    let residual_at_solution_lam = if sol.lam.len() == k * b {
        (&a_mat * DVector::from_column_slice(&sol.lam) - &r).amax()
    } else {
        r.amax()
    };
    let force = |lam: &[f64]| -> Vec<f64> {
        (0..l.m)
            .map(|a| {
                (0..k)
                    .flat_map(|al| (0..b).map(move |mu| (al, mu)))
                    .map(|(al, mu)| lam.get(al * b + mu).copied().unwrap_or(0.0) * coeffs[al * nv + a * b + mu])
                    .sum()
            })
            .collect()
    };
    let force_mismatch = force(&lam_fit)
        .iter()
        .zip(force(&sol.lam))
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let tangency_residual = dphi_on_lifts(derivs, &sol.coeffs).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(NhDdwResidual { form_residual, tangency_residual, lam_fit, residual_at_solution_lam, force_mismatch })
}

pub fn nh_ddw_residual<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: &ConstraintSpec<F>,
    sol: &DdwSolution,
    p: &JetPoint,
) -> Result<NhDdwResidual> {
    let bundle = derivative_bundle(model, p)?;
    let d = constraint_derivatives(spec, p)?;
    let c = coefficients_from(spec, p, &d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    nh_ddw_residual_at(&bundle, &d, &c, sol, 50, &mut rng)
}

/// `E_a = d/dx^μ(∂L/∂y^a_μ) − ∂L/∂y^a`, the total derivative expanded
/// through the second jet.
pub fn el_residual<L: Lagrangian>(model: &L, q: &Jet2Point) -> Result<Vec<f64>> {
    let bundle = derivative_bundle(model, &q.point)?;
    Ok(el_residual_at(&bundle, q))
}

pub fn el_residual_at(bundle: &DerivativeBundle, q: &Jet2Point) -> Vec<f64> {
    let l = bundle.layout;
    let (b, nv) = (l.base(), l.jet());
    (0..l.m)
        .map(|a| {
            let mut e = -bundle.dldy[a];
            for mu in 0..b {
                let col = a * b + mu;
                e += bundle.d2ldxdv[mu * nv + col];
                for bb in 0..l.m {
                    e += q.point.v_at(bb, mu) * bundle.d2ldydv[bb * nv + col];
                    for nu in 0..b {
                        e += bundle.hess(bb * b + nu, col) * q.w_at(bb, nu, mu);
                    }
                }
            }
            e
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NhFieldResidual {
    /// Minimum-norm `λ^α_μ` with `λ^α_μ (C_α)^μ_a = E_a` (row α, column μ).
    pub lam_fit: Vec<f64>,
    pub residual: Vec<f64>,
    pub constraint_vals: Vec<f64>,
}

/// Residual of the nonholonomic field equations `E_a = λ^α_μ (C_α)^μ_a`,
/// `φ_α = 0` at a second-jet point.
pub fn nh_field_residual<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: &ConstraintSpec<F>,
    q: &Jet2Point,
) -> Result<NhFieldResidual> {
    let l = model.layout();
    let (b, nv, k) = (l.base(), l.jet(), spec.k());
    let e = el_residual(model, q)?;
    let d = constraint_derivatives(spec, &q.point)?;
    let c = coefficients_from(spec, &q.point, &d)?;
    let a_mat = DMatrix::from_fn(l.m, k * b, |a, j| {
        let (al, mu) = (j / b, j % b);
        c[al * nv + a * b + mu]
    });
    let ev = DVector::from_vec(e.clone());
    let (x, _) = lstsq_min_norm(&a_mat, &ev);
    let fitted = &a_mat * &x;
    let residual = e.iter().zip(fitted.iter()).map(|(ei, fi)| ei - fi).collect();
    Ok(NhFieldResidual { lam_fit: x.as_slice().to_vec(), residual, constraint_vals: d.values })
}
