//! The constraint distribution `span{ζ_α}`, the compatibility condition and
//! the nonholonomic projector pair `(P, Q)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint::{constraint_forms, ConstraintDerivs};
use crate::error::{Error, Result};
use crate::exterior::{Layout, TangentVector};
use crate::lagrangian::{hessian_regularity, omega_form, DerivativeBundle, RegularityThresholds};

/// Jet-vertical vectors `ζ_α` with `Σ_{aμ} (ζ_α)^a_μ H[aμ][bν] = (C_α)^ν_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaBasis {
    pub layout: Layout,
    /// Row `α`, column `a·(n+1) + μ`.
    pub zeta: Vec<f64>,
}

impl ZetaBasis {
    #[inline]
    pub fn k(&self) -> usize {
        self.zeta.len() / self.layout.jet()
    }

    pub fn jet_components(&self, alpha: usize) -> &[f64] {
        let nv = self.layout.jet();
        &self.zeta[alpha * nv..(alpha + 1) * nv]
    }

    /// `ζ_α` as a tangent vector (x- and y-blocks zero).
    pub fn vector(&self, alpha: usize) -> TangentVector {
        let l = self.layout;
        let mut t = TangentVector::zeros(l);
        t.as_mut_slice()[l.v_offset()..].copy_from_slice(self.jet_components(alpha));
        t
    }
}

/// Solve `H ζ_α = C_α` by LU with partial pivoting, checking the linear
/// residual only.
pub fn solve_zeta_linear(bundle: &DerivativeBundle, c: &[f64]) -> Result<ZetaBasis> {
    let l = bundle.layout;
    let nv = l.jet();
    if c.len() % nv != 0 || c.is_empty() {
        return Err(Error::DimensionMismatch { context: "constraint coefficients", expected: nv, found: c.len() });
    }
    let k = c.len() / nv;
    let h = bundle.hessian_matrix();
    let lu = h.clone().lu();
    let rhs = DMatrix::from_fn(nv, k, |r, a| c[a * nv + r]);
    let sol = match lu.solve(&rhs) {
        Some(s) if s.iter().all(|x| x.is_finite()) => s,
        _ => {
            let r = hessian_regularity(bundle, RegularityThresholds::default());
            return Err(Error::Regularity { det: r.det, cond: r.cond });
        }
    };
    let resid = (&h * &sol - &rhs).amax();
    let scale = 1.0 + h.amax() * sol.amax();
    if resid > 1e-9 * scale {
        let r = hessian_regularity(bundle, RegularityThresholds::default());
        return Err(Error::Regularity { det: r.det, cond: r.cond });
    }
    let zeta = (0..k).flat_map(|a| sol.column(a).iter().copied().collect::<Vec<_>>()).collect();
    Ok(ZetaBasis { layout: l, zeta })
}

/// Random vectors with entries in `[-1, 1]`.
pub fn random_vectors(layout: Layout, count: usize, rng: &mut impl Rng) -> Vec<TangentVector> {
    (0..count)
        .map(|_| {
            let c = (0..layout.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            TangentVector::from_vec(layout, c).expect("sized by layout")
        })
        .collect()
}

/// `max |(i_{ζ_α}Ω_L + Φ_α)(u₁..u_{n+1})|` over `tuples` random tuples.
pub fn zeta_form_residual(
    bundle: &DerivativeBundle,
    zb: &ZetaBasis,
    c: &[f64],
    tuples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let l = bundle.layout;
    let omega = omega_form(bundle);
    let phis = constraint_forms(l, &bundle.point, c);
    let contracted: Vec<_> = (0..zb.k()).map(|a| omega.contract(&zb.vector(a))).collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for _ in 0..tuples {
        let vs = random_vectors(l, l.n + 1, rng);
        let refs: Vec<&TangentVector> = vs.iter().collect();
        for (iz, phi) in contracted.iter().zip(&phis) {
            worst = worst.max((iz.eval(&refs)? + phi.eval(&refs)?).abs());
        }
    }
    Ok(worst)
}

/// [`solve_zeta_linear`] plus the form-level postcondition
/// `i_{ζ_α}Ω_L = −Φ_α` on 20 random tuples.
pub fn solve_zeta(bundle: &DerivativeBundle, c: &[f64]) -> Result<ZetaBasis> {
    let zb = solve_zeta_linear(bundle, c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a65_7461);
    let resid = zeta_form_residual(bundle, &zb, c, 20, &mut rng)?;
    let scale = 1.0 + c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if resid > 1e-9 * scale {
        return Err(Error::Consistency { check: "i_zeta Omega_L + Phi".into(), residual: resid });
    }
    Ok(zb)
}

/// The matrix `M[α][β] = ζ_α(φ_β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Compatibility {
    /// Row-major `k × k`.
    pub mmat: Vec<f64>,
    pub det: f64,
    /// `Π_α ‖ζ_α‖ ‖∂φ_α/∂v‖`, the natural size of `det`.
    pub scale: f64,
    pub compatible: bool,
}

pub fn compatibility_matrix(zb: &ZetaBasis, d: &ConstraintDerivs) -> Compatibility {
    let k = zb.k();
    let mut mmat = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            mmat[a * k + b] = zb.jet_components(a).iter().zip(d.dphidv(b)).map(|(z, g)| z * g).sum();
        }
    }
    let det = DMatrix::from_row_slice(k, k, &mmat).lu().determinant();
    let norm = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale: f64 = (0..k).map(|a| norm(zb.jet_components(a)) * norm(d.dphidv(a))).product();
    Compatibility { mmat, det, scale, compatible: det.abs() > 1e-10 * scale && det.is_finite() }
}

/// `Q = Σ_{αβ} ζ_α Λ^{αβ} dφ_β`, `P = I − Q`, with `Λ = (Mᵀ)⁻¹` so that
/// `Q ζ_γ = ζ_γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorPair {
    pub layout: Layout,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub lam: DMatrix<f64>,
    pub invariants: ProjectorInvariants,
}

/// Residuals of the projector identities (max-abs entries).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorInvariants {
    pub p_idempotent: f64,
    pub q_idempotent: f64,
    pub sum_identity: f64,
    pub pq_zero: f64,
    /// `max |dφ_β · P|` as covectors.
    pub dphi_p: f64,
    /// Distance of the columns of `Q` from `span{ζ_α}`.
    pub image_q: f64,
    /// `max |Q ζ_γ − ζ_γ|`.
    pub q_fixes_zeta: f64,
    pub rank_q: usize,
    /// Entry scale used for relative tolerances.
    pub scale: f64,
}

impl ProjectorInvariants {
    pub fn worst(&self) -> f64 {
        [
            self.p_idempotent,
            self.q_idempotent,
            self.sum_identity,
            self.pq_zero,
            self.dphi_p,
            self.image_q,
            self.q_fixes_zeta,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl ProjectorPair {
    pub fn apply_p(&self, v: &TangentVector) -> TangentVector {
        let out = &self.p * DVector::from_column_slice(v.as_slice());
        TangentVector::from_vec(self.layout, out.as_slice().to_vec()).expect("sized by layout")
    }

    pub fn apply_q(&self, v: &TangentVector) -> TangentVector {
        let out = &self.q * DVector::from_column_slice(v.as_slice());
        TangentVector::from_vec(self.layout, out.as_slice().to_vec()).expect("sized by layout")
    }
}

fn zeta_matrix(zb: &ZetaBasis) -> DMatrix<f64> {
    let l = zb.layout;
    DMatrix::from_fn(l.dim(), zb.k(), |r, a| zb.vector(a).as_slice()[r])
}

fn dphi_matrix(d: &ConstraintDerivs) -> DMatrix<f64> {
    DMatrix::from_fn(d.k(), d.layout.dim(), |a, c| d.differential(a)[c])
}

/// `Λ = (Mᵀ)⁻¹`, or an incompatibility error.
pub fn inverse_compatibility(zb: &ZetaBasis, d: &ConstraintDerivs) -> Result<(Compatibility, DMatrix<f64>)> {
    let comp = compatibility_matrix(zb, d);
    if !comp.compatible {
        return Err(Error::Incompatible { det: comp.det, point: None });
    }
    let k = zb.k();
    let mt = DMatrix::from_row_slice(k, k, &comp.mmat).transpose();
    let lam = mt.try_inverse().ok_or(Error::Incompatible { det: comp.det, point: None })?;
    Ok((comp, lam))
}

pub fn build_projectors(zb: &ZetaBasis, d: &ConstraintDerivs) -> Result<ProjectorPair> {
    let l = zb.layout;
    let dim = l.dim();
    let (_, lam) = inverse_compatibility(zb, d)?;
    let z = zeta_matrix(zb);
    let g = dphi_matrix(d);
    let q = &z * &lam * &g;
    let p = DMatrix::identity(dim, dim) - &q;

    let scale = 1.0f64.max(q.amax());
    let q_fixes_zeta = (&q * &z - &z).amax();
    // Orthogonal projector onto span ζ via SVD of Z.
    let svd = z.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let pz = &u * u.transpose();
    let image_q = (&q - &pz * &q).amax();
    let qsv = q.clone().singular_values();
    let qmax = qsv.max();
    let rank_q = qsv.iter().filter(|&&s| s > 1e-9 * qmax.max(1.0)).count();
    let inv = ProjectorInvariants {
        p_idempotent: (&p * &p - &p).amax(),
        q_idempotent: (&q * &q - &q).amax(),
        sum_identity: (&p + &q - DMatrix::identity(dim, dim)).amax(),
        pq_zero: (&p * &q).amax(),
        dphi_p: (&g * &p).amax(),
        image_q,
        q_fixes_zeta,
        rank_q,
        scale,
    };
    let worst = inv.worst();
    if worst > 1e-9 * scale * scale || rank_q != zb.k() {
        return Err(Error::Consistency { check: "projector invariants".into(), residual: worst });
    }
    Ok(ProjectorPair { layout: l, p, q, lam, invariants: inv })
}
