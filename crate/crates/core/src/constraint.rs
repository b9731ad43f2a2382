//! Constraint functions `φ_α` on J¹π, their derivatives, the constraint
//! (n+1)-forms `Φ_α = (C_α)^μ_a θ^a ∧ dⁿx_μ`, and rank checks.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exterior::{hyperface, Covector, Form, FormTerm, Layout, TangentVector};
use crate::jet::{contact_covector, JetPoint};
use crate::lagrangian::JetVars;
use crate::scalar::{Dual, Scalar};

/// `k` smooth functions on (a neighbourhood of the constraint set in) J¹π.
pub trait ConstraintFn: Send + Sync {
    fn layout(&self) -> Layout;
    fn count(&self) -> usize;
    fn eval<S: Scalar>(&self, alpha: usize, p: &JetVars<'_, S>) -> S;
}

/// User-supplied coefficients `(C_α)^μ_a`, row `α`, column `a·(n+1) + μ`.
pub type CoefficientFn = Arc<dyn Fn(&JetPoint) -> Vec<f64> + Send + Sync>;

/// How the constraint forms are obtained from the constraints.
#[derive(Clone, Default)]
pub enum CoefficientRule {
    /// `(C_α)^μ_a = ∂φ_α/∂y^a_μ`.
    #[default]
    Chetaev,
    Custom(CoefficientFn),
}

impl fmt::Debug for CoefficientRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientRule::Chetaev => f.write_str("Chetaev"),
            CoefficientRule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl CoefficientRule {
    /// A constant coefficient matrix.
    pub fn constant(c: Vec<f64>) -> Self {
        CoefficientRule::Custom(Arc::new(move |_| c.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintSpec<F> {
    pub functions: F,
    pub rule: CoefficientRule,
    /// `|φ_α| ≤ on_tolerance` counts as lying on the constraint set.
    pub on_tolerance: f64,
}

impl<F: ConstraintFn> ConstraintSpec<F> {
    pub fn chetaev(functions: F) -> Self {
        Self { functions, rule: CoefficientRule::Chetaev, on_tolerance: 1e-8 }
    }

    pub fn with_rule(functions: F, rule: CoefficientRule) -> Self {
        Self { functions, rule, on_tolerance: 1e-8 }
    }

    #[inline]
    pub fn layout(&self) -> Layout {
        self.functions.layout()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.functions.count()
    }

    pub fn values(&self, p: &JetPoint) -> Vec<f64> {
        let c = p.to_flat();
        let vars = JetVars::from_flat(self.layout(), &c);
        (0..self.k()).map(|a| self.functions.eval(a, &vars)).collect()
    }
}

/// Values and full differentials of the constraints at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintDerivs {
    pub layout: Layout,
    pub values: Vec<f64>,
    /// `dφ_α`, row-major `k × N`.
    pub grad: Vec<f64>,
}

impl ConstraintDerivs {
    #[inline]
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn differential(&self, alpha: usize) -> &[f64] {
        let n = self.layout.dim();
        &self.grad[alpha * n..(alpha + 1) * n]
    }

    pub fn dphidx(&self, alpha: usize) -> &[f64] {
        &self.differential(alpha)[..self.layout.base()]
    }

    pub fn dphidy(&self, alpha: usize) -> &[f64] {
        &self.differential(alpha)[self.layout.base()..self.layout.v_offset()]
    }

    pub fn dphidv(&self, alpha: usize) -> &[f64] {
        &self.differential(alpha)[self.layout.v_offset()..]
    }

    /// `k × m(n+1)` matrix of jet derivatives.
    pub fn jet_jacobian(&self) -> DMatrix<f64> {
        let nv = self.layout.jet();
        DMatrix::from_fn(self.k(), nv, |r, c| self.dphidv(r)[c])
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Forward-mode differentials of all constraints.
pub fn constraint_derivatives<F: ConstraintFn>(
    spec: &ConstraintSpec<F>,
    p: &JetPoint,
) -> Result<ConstraintDerivs> {
    let l = spec.layout();
    p.check(l)?;
    let c = p.to_flat();
    let (k, dim) = (spec.k(), l.dim());
    let mut values = vec![0.0; k];
    let mut grad = vec![0.0; k * dim];
    let mut vars: Vec<Dual<f64>> = c.iter().map(|&x| Dual::constant(x)).collect();
    for t in 0..dim {
        for (i, var) in vars.iter_mut().enumerate() {
            var.eps = if i == t { 1.0 } else { 0.0 };
        }
        let jv = JetVars::from_flat(l, &vars);
        for alpha in 0..k {
            let r = spec.functions.eval(alpha, &jv);
            if !r.is_finite() {
                return Err(Error::Evaluation { what: format!("constraint {alpha}"), index: t });
            }
            values[alpha] = r.re;
            grad[alpha * dim + t] = r.eps;
        }
    }
    Ok(ConstraintDerivs { layout: l, values, grad })
}

/// `(C_α)^μ_a` at `p`: the jet derivatives under the Chetaev rule,
/// otherwise the user matrix. Row `α`, column `a·(n+1) + μ`.
pub fn chetaev_coefficients<F: ConstraintFn>(spec: &ConstraintSpec<F>, p: &JetPoint) -> Result<Vec<f64>> {
    let d = constraint_derivatives(spec, p)?;
    coefficients_from(spec, p, &d)
}

/// Same as [`chetaev_coefficients`] reusing precomputed differentials.
pub fn coefficients_from<F: ConstraintFn>(
    spec: &ConstraintSpec<F>,
    p: &JetPoint,
    d: &ConstraintDerivs,
) -> Result<Vec<f64>> {
    let l = spec.layout();
    match &spec.rule {
        CoefficientRule::Chetaev => Ok((0..spec.k()).flat_map(|a| d.dphidv(a).to_vec()).collect()),
        CoefficientRule::Custom(f) => {
            let c = f(p);
            if c.len() != spec.k() * l.jet() {
                return Err(Error::DimensionMismatch {
                    context: "custom constraint coefficients",
                    expected: spec.k() * l.jet(),
                    found: c.len(),
                });
            }
            Ok(c)
        }
    }
}

/// `Φ_α = Σ_{a,μ} (C_α)^μ_a θ^a ∧ dⁿx_μ` as forms.
pub fn constraint_forms(layout: Layout, p: &JetPoint, coeffs: &[f64]) -> Vec<Form> {
    let nv = layout.jet();
    let k = coeffs.len() / nv;
    let faces: Vec<Form> = (0..layout.base()).map(|mu| hyperface(layout, mu)).collect();
    let thetas: Vec<Covector> = (0..layout.m).map(|a| contact_covector(layout, p, a)).collect();
    (0..k)
        .map(|alpha| {
            let mut f = Form::zero(layout, layout.n + 1);
            for a in 0..layout.m {
                for mu in 0..layout.base() {
                    let c = coeffs[alpha * nv + a * layout.base() + mu];
                    if c == 0.0 {
                        continue;
                    }
                    let t = &faces[mu].terms()[0];
                    let mut factors = vec![thetas[a].clone()];
                    factors.extend(t.factors.iter().cloned());
                    f.push(FormTerm { coeff: c * t.coeff, factors }).expect("degree n+1");
                }
            }
            f
        })
        .collect()
}

pub fn constraint_form_eval<F: ConstraintFn>(
    spec: &ConstraintSpec<F>,
    p: &JetPoint,
    vecs: &[&TangentVector],
) -> Result<Vec<f64>> {
    let l = spec.layout();
    if vecs.len() != l.n + 1 {
        return Err(Error::DimensionMismatch {
            context: "constraint form arity",
            expected: l.n + 1,
            found: vecs.len(),
        });
    }
    let c = chetaev_coefficients(spec, p)?;
    constraint_forms(l, p, &c).iter().map(|f| f.eval(vecs)).collect()
}

/// Numerical rank of a row set with threshold `σ > rel·σ_max`; on
/// deficiency also returns the left singular vector of the smallest σ.
fn numerical_rank(mat: DMatrix<f64>, rel: f64) -> (usize, Option<Vec<f64>>) {
    let rows = mat.nrows();
    // Work with the k×k Gram-free route: SVD of the (possibly wide) matrix.
    let svd = mat.svd(true, false);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| smax > 0.0 && s > rel * smax).count();
    if rank >= rows {
        return (rank, None);
    }
    let u = svd.u.expect("requested U");
    // Columns of U beyond the min dimension are absent; fall back to the
    // column of the smallest computed singular value.
    let (imin, _) = sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| {
        if s < acc.1 {
            (i, s)
        } else {
            acc
        }
    });
    (rank, Some(u.column(imin).iter().copied().collect()))
}

fn describe_combination(c: &[f64]) -> String {
    let terms: Vec<String> = c
        .iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > 1e-6)
        .map(|(a, x)| format!("{x:+.6}·dφ{a}"))
        .collect();
    format!("{} ≈ 0", terms.join(" "))
}

/// Rank of `∂φ/∂v` at an on-constraint point (and of the custom
/// coefficients, if any). Errors when the rank falls short of `k`.
pub fn constraint_rank_check<F: ConstraintFn>(spec: &ConstraintSpec<F>, p: &JetPoint) -> Result<usize> {
    let d = constraint_derivatives(spec, p)?;
    if d.max_abs_value() >= spec.on_tolerance {
        return Err(Error::OffConstraint { values: d.values.clone(), tolerance: spec.on_tolerance });
    }
    let k = spec.k();
    let (rank, comb) = numerical_rank(d.jet_jacobian(), 1e-8);
    if rank < k {
        return Err(Error::RankDeficient {
            rank,
            expected: k,
            detail: format!(
                "jet derivatives of the constraints are dependent: {}",
                comb.map(|c| describe_combination(&c)).unwrap_or_default()
            ),
        });
    }
    if let CoefficientRule::Custom(_) = spec.rule {
        let c = coefficients_from(spec, p, &d)?;
        let nv = spec.layout().jet();
        let (crank, comb) = numerical_rank(DMatrix::from_row_slice(k, nv, &c), 1e-8);
        if crank < k {
            return Err(Error::RankDeficient {
                rank: crank,
                expected: k,
                detail: format!(
                    "custom coefficient rows are dependent: {}",
                    comb.map(|c| describe_combination(&c)).unwrap_or_default()
                ),
            });
        }
    }
    Ok(rank)
}

/// Read a constant coefficient matrix: one CSV row per constraint, columns
/// `(a, μ)` in layout order, no header.
pub fn load_custom_coefficients(path: impl AsRef<Path>, layout: Layout, k: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut out = Vec::with_capacity(k * layout.jet());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != layout.jet() {
            return Err(Error::DimensionMismatch {
                context: "custom coefficient row",
                expected: layout.jet(),
                found: rec.len(),
            });
        }
        for field in rec.iter() {
            out.push(field.trim().parse::<f64>().map_err(|e| {
                Error::InvalidArgument(format!("bad coefficient `{field}`: {e}"))
            })?);
        }
        rows += 1;
    }
    if rows != k {
        return Err(Error::DimensionMismatch { context: "custom coefficient rows", expected: k, found: rows });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstraintKind, LinearTransport};

    fn lt(c: f64) -> ConstraintSpec<ConstraintKind> {
        ConstraintSpec::chetaev(ConstraintKind::LinearTransport(LinearTransport { c }))
    }

    #[test]
    fn linear_transport_coefficients() {
        let s = lt(2.0);
        let p = JetPoint::new(s.layout(), vec![0.0; 2], vec![0.5], vec![2.0, 1.0]).unwrap();
        assert_eq!(chetaev_coefficients(&s, &p).unwrap(), vec![1.0, -2.0]);
        assert_eq!(constraint_rank_check(&s, &p).unwrap(), 1);
    }

    #[test]
    fn form_example() {
        let s = lt(2.0);
        let l = s.layout();
        let p = JetPoint::zeros(l);
        let ey = TangentVector::basis(l, l.y(0));
        let ex1 = TangentVector::basis(l, l.x(1));
        assert_eq!(constraint_form_eval(&s, &p, &[&ey, &ex1]).unwrap(), vec![1.0]);
        assert_eq!(constraint_form_eval(&s, &p, &[&ey, &ey]).unwrap(), vec![0.0]);
    }

    #[test]
    fn off_constraint_rejected() {
        let s = lt(2.0);
        let p = JetPoint::new(s.layout(), vec![0.0; 2], vec![0.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(constraint_rank_check(&s, &p), Err(Error::OffConstraint { .. })));
    }

    #[test]
    fn custom_matches_chetaev_when_equal() {
        let s = lt(-0.5);
        let custom = ConstraintSpec::with_rule(s.functions.clone(), CoefficientRule::constant(vec![1.0, 0.5]));
        let l = s.layout();
        let p = JetPoint::new(l, vec![0.2, 0.1], vec![0.4], vec![0.3, -0.6]).unwrap();
        let vecs: Vec<TangentVector> = (0..2)
            .map(|i| TangentVector::from_vec(l, (0..5).map(|j| ((i * 5 + j) as f64).sin()).collect()).unwrap())
            .collect();
        let r: Vec<&TangentVector> = vecs.iter().collect();
        let a = constraint_form_eval(&s, &p, &r).unwrap();
        let b = constraint_form_eval(&custom, &p, &r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coefficient_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "1.0,-2.0\n").unwrap();
        let c = load_custom_coefficients(&path, Layout::new(1, 1), 1).unwrap();
        assert_eq!(c, vec![1.0, -2.0]);
        assert!(load_custom_coefficients(&path, Layout::new(1, 1), 2).is_err());
    }
}
