//! Lagrangian densities, their exact derivatives, regularity, and the
//! Poincaré–Cartan (n+2)-form Ω_L.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exterior::{hyperface, volume, Covector, Form, FormTerm, Layout, TangentVector};
use crate::jet::{contact_covector, JetPoint};
use crate::scalar::{HyperDual, Scalar};

/// Jet coordinates over a generic scalar.
#[derive(Debug, Clone, Copy)]
pub struct JetVars<'a, S> {
    pub layout: Layout,
    pub x: &'a [S],
    pub y: &'a [S],
    pub v: &'a [S],
}

impl<'a, S: Scalar> JetVars<'a, S> {
    /// Split a flat coordinate slice in [`Layout`] order.
    pub fn from_flat(layout: Layout, c: &'a [S]) -> Self {
        let (x, rest) = c.split_at(layout.base());
        let (y, v) = rest.split_at(layout.m);
        Self { layout, x, y, v }
    }

    #[inline]
    pub fn v(&self, a: usize, mu: usize) -> S {
        self.v[a * self.layout.base() + mu]
    }
}

/// A first-order Lagrangian density `L(x, y, v)`.
pub trait Lagrangian: Send + Sync {
    fn layout(&self) -> Layout;

    fn eval<S: Scalar>(&self, p: &JetVars<'_, S>) -> S;

    /// Whether `L` depends explicitly on the base point; when false the
    /// mixed `x`/`v` second derivatives are known to vanish and are skipped.
    fn depends_on_x(&self) -> bool {
        true
    }

    /// Whether `L` depends on the field values `y`.
    fn depends_on_y(&self) -> bool {
        true
    }

    /// Plain evaluation at a jet point.
    fn value(&self, p: &JetPoint) -> f64 {
        let c = p.to_flat();
        self.eval(&JetVars::from_flat(self.layout(), &c))
    }
}

/// Every partial derivative of `L` the field equations use, at one point.
///
/// Jet indices `(a, μ)` are flattened as `a·(n+1) + μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub layout: Layout,
    pub point: JetPoint,
    pub l: f64,
    pub dldx: Vec<f64>,
    pub dldy: Vec<f64>,
    pub dldv: Vec<f64>,
    /// `∂²L/∂y^a_μ∂y^b_ν`, row-major `V×V`.
    pub h: Vec<f64>,
    /// `∂²L/∂y^b∂y^a_μ`, row `b`, column `(a,μ)`.
    pub d2ldydv: Vec<f64>,
    /// `∂²L/∂x^τ∂y^a_μ`, row `τ`, column `(a,μ)`.
    pub d2ldxdv: Vec<f64>,
}

impl DerivativeBundle {
    #[inline]
    pub fn jet_dim(&self) -> usize {
        self.layout.jet()
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.layout.jet() + j]
    }

    pub fn hessian_matrix(&self) -> DMatrix<f64> {
        let v = self.layout.jet();
        DMatrix::from_row_slice(v, v, &self.h)
    }

    /// The full differential `d(∂L/∂y^a_μ)` as a covector on J¹π.
    pub fn momentum_differential(&self, jet_index: usize) -> Covector {
        let l = self.layout;
        let v = l.jet();
        let mut c = vec![0.0; l.dim()];
        for tau in 0..l.base() {
            c[l.x(tau)] = self.d2ldxdv[tau * v + jet_index];
        }
        for b in 0..l.m {
            c[l.y(b)] = self.d2ldydv[b * v + jet_index];
        }
        for j in 0..v {
            c[l.v_offset() + j] = self.h[j * v + jet_index];
        }
        Covector::dense(c)
    }
}

/// All first derivatives and the second derivatives with at least one jet
/// index, by nested forward-mode differentiation.
pub fn derivative_bundle<L: Lagrangian>(model: &L, p: &JetPoint) -> Result<DerivativeBundle> {
    let l = model.layout();
    p.check(l)?;
    let c = p.to_flat();
    let dim = l.dim();
    let vo = l.v_offset();
    let nv = l.jet();

    let mut out = DerivativeBundle {
        layout: l,
        point: p.clone(),
        l: 0.0,
        dldx: vec![0.0; l.base()],
        dldy: vec![0.0; l.m],
        dldv: vec![0.0; nv],
        h: vec![0.0; nv * nv],
        d2ldydv: vec![0.0; l.m * nv],
        d2ldxdv: vec![0.0; l.base() * nv],
    };

    let skip = |j: usize| {
        (j < l.base() && !model.depends_on_x()) || (j >= l.base() && j < vo && !model.depends_on_y())
    };
    let mut vars: Vec<HyperDual> = c.iter().map(|&x| HyperDual::seeded(x, false, false)).collect();
    for i in vo..dim {
        for j in 0..=i {
            if skip(j) {
                continue;
            }
            for (t, var) in vars.iter_mut().enumerate() {
                *var = HyperDual::seeded(c[t], t == i, t == j);
            }
            let r = model.eval(&JetVars::from_flat(l, &vars));
            if !r.is_finite() {
                return Err(Error::Evaluation { what: "Lagrangian derivative".into(), index: j });
            }
            let (di, dj, dij) = (r.eps.re, r.re.eps, r.eps.eps);
            out.l = r.re.re;
            let ri = i - vo;
            out.dldv[ri] = di;
            if j < l.base() {
                out.dldx[j] = dj;
                out.d2ldxdv[j * nv + ri] = dij;
            } else if j < vo {
                out.dldy[j - l.base()] = dj;
                out.d2ldydv[(j - l.base()) * nv + ri] = dij;
            } else {
                let rj = j - vo;
                out.h[ri * nv + rj] = dij;
                out.h[rj * nv + ri] = dij;
            }
        }
    }
    Ok(out)
}

/// Thresholds for calling the jet Hessian non-degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityThresholds {
    pub det_min: f64,
    pub cond_max: f64,
}

impl Default for RegularityThresholds {
    fn default() -> Self {
        Self { det_min: 1e-10, cond_max: 1e12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub det: f64,
    pub cond: f64,
    pub regular: bool,
}

pub fn hessian_regularity(bundle: &DerivativeBundle, th: RegularityThresholds) -> Regularity {
    let hm = bundle.hessian_matrix();
    let det = hm.clone().lu().determinant();
    let sv = hm.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    Regularity { det, cond, regular: det.abs() > th.det_min && cond < th.cond_max }
}

pub fn regularity_check<L: Lagrangian>(
    model: &L,
    p: &JetPoint,
    th: RegularityThresholds,
) -> Result<Regularity> {
    Ok(hessian_regularity(&derivative_bundle(model, p)?, th))
}

/// `Ω_L = −∂L/∂y^a dy^a ∧ dⁿ⁺¹x − d(∂L/∂y^a_μ) ∧ θ^a ∧ dⁿx_μ`.
pub fn omega_form(bundle: &DerivativeBundle) -> Form {
    let l = bundle.layout;
    let vol = volume(l);
    let mut omega = Form::zero(l, l.n + 2);
    for a in 0..l.m {
        let c = bundle.dldy[a];
        if c != 0.0 {
            let mut factors = vec![Covector::Basis(l.y(a))];
            factors.extend(vol.terms()[0].factors.iter().cloned());
            omega.push(FormTerm { coeff: -c, factors }).expect("degree n+2");
        }
    }
    for a in 0..l.m {
        let theta = contact_covector(l, &bundle.point, a);
        for mu in 0..l.base() {
            let df = bundle.momentum_differential(a * l.base() + mu);
            let face = hyperface(l, mu);
            let t = &face.terms()[0];
            let mut factors = vec![df, theta.clone()];
            factors.extend(t.factors.iter().cloned());
            omega.push(FormTerm { coeff: -t.coeff, factors }).expect("degree n+2");
        }
    }
    omega
}

pub fn omega_l_eval<L: Lagrangian>(model: &L, p: &JetPoint, vecs: &[&TangentVector]) -> Result<f64> {
    let l = model.layout();
    if vecs.len() != l.n + 2 {
        return Err(Error::DimensionMismatch {
            context: "Omega_L arity",
            expected: l.n + 2,
            found: vecs.len(),
        });
    }
    omega_form(&derivative_bundle(model, p)?).eval(vecs)
}
