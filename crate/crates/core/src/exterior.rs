//! Pointwise exterior algebra on the tangent space of the first jet bundle.
//!
//! Forms are kept as explicit lists of wedge monomials. At desk scale the
//! ambient dimension is small (N ≤ ~20) and the forms that occur have few
//! terms, so evaluating each monomial as a k×k determinant is cheap and
//! avoids building dense component tensors.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Index bookkeeping for the coordinates `(x^μ, y^a, y^a_μ)` of J¹π.
///
/// Components are ordered x-block, y-block, then the jet block a-major,
/// μ-minor. `μ = 0` is the time direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Layout {
    /// Spatial dimension; the base has dimension `n + 1`.
    pub n: usize,
    /// Fibre rank.
    pub m: usize,
}

impl Layout {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    /// Base dimension `n + 1`.
    #[inline]
    pub fn base(&self) -> usize {
        self.n + 1
    }

    /// Number of jet coordinates `m(n+1)`.
    #[inline]
    pub fn jet(&self) -> usize {
        self.m * (self.n + 1)
    }

    /// Total dimension `N = (n+1) + m + m(n+1)`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.base() + self.m + self.jet()
    }

    #[inline]
    pub fn x(&self, mu: usize) -> usize {
        mu
    }

    #[inline]
    pub fn y(&self, a: usize) -> usize {
        self.base() + a
    }

    #[inline]
    pub fn v(&self, a: usize, mu: usize) -> usize {
        self.base() + self.m + a * self.base() + mu
    }

    /// Offset of the jet block inside the full layout.
    #[inline]
    pub fn v_offset(&self) -> usize {
        self.base() + self.m
    }
}

/// A tangent vector to J¹π, stored flat in [`Layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    layout: Layout,
    comps: Vec<f64>,
}

impl TangentVector {
    pub fn zeros(layout: Layout) -> Self {
        Self { layout, comps: vec![0.0; layout.dim()] }
    }

    pub fn from_vec(layout: Layout, comps: Vec<f64>) -> Result<Self> {
        if comps.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                context: "tangent vector",
                expected: layout.dim(),
                found: comps.len(),
            });
        }
        Ok(Self { layout, comps })
    }

    /// Assemble from the three blocks; `dv` is a-major, μ-minor.
    pub fn from_blocks(layout: Layout, dx: &[f64], dy: &[f64], dv: &[f64]) -> Result<Self> {
        let check = |ctx, want: usize, got: usize| {
            if want == got {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { context: ctx, expected: want, found: got })
            }
        };
        check("dx block", layout.base(), dx.len())?;
        check("dy block", layout.m, dy.len())?;
        check("dv block", layout.jet(), dv.len())?;
        let mut comps = Vec::with_capacity(layout.dim());
        comps.extend_from_slice(dx);
        comps.extend_from_slice(dy);
        comps.extend_from_slice(dv);
        Ok(Self { layout, comps })
    }

    /// Coordinate basis vector with a single unit component.
    pub fn basis(layout: Layout, index: usize) -> Self {
        let mut v = Self::zeros(layout);
        v.comps[index] = 1.0;
        v
    }

    #[inline]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.comps
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.comps
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.comps
    }

    pub fn dx(&self) -> &[f64] {
        &self.comps[..self.layout.base()]
    }

    pub fn dy(&self) -> &[f64] {
        &self.comps[self.layout.base()..self.layout.v_offset()]
    }

    pub fn dv(&self) -> &[f64] {
        &self.comps[self.layout.v_offset()..]
    }

    #[inline]
    pub fn dv_at(&self, a: usize, mu: usize) -> f64 {
        self.comps[self.layout.v(a, mu)]
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &TangentVector) -> TangentVector {
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a + s * b).collect();
        TangentVector { layout: self.layout, comps }
    }

    pub fn scale(&self, s: f64) -> TangentVector {
        TangentVector { layout: self.layout, comps: self.comps.iter().map(|c| s * c).collect() }
    }
}

/// A covector: either a coordinate differential or a dense row.
#[derive(Debug, Clone, PartialEq)]
pub enum Covector {
    Basis(usize),
    Dense(Arc<[f64]>),
}

impl Covector {
    pub fn dense(comps: Vec<f64>) -> Self {
        Covector::Dense(comps.into())
    }

    #[inline]
    pub fn pair(&self, v: &[f64]) -> f64 {
        match self {
            Covector::Basis(i) => v[*i],
            Covector::Dense(c) => c.iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Covector::Basis(i) if *i >= dim => Err(Error::InvalidArgument(format!(
                "basis covector index {i} out of range for dimension {dim}"
            ))),
            Covector::Dense(c) if c.len() != dim => Err(Error::DimensionMismatch {
                context: "dense covector",
                expected: dim,
                found: c.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// `coeff · f₁ ∧ … ∧ f_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormTerm {
    pub coeff: f64,
    pub factors: Vec<Covector>,
}

/// A k-form as a sum of wedge monomials of equal degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    layout: Layout,
    degree: usize,
    terms: Vec<FormTerm>,
}

impl Form {
    pub fn zero(layout: Layout, degree: usize) -> Self {
        Self { layout, degree, terms: Vec::new() }
    }

    /// The constant 0-form `c`.
    pub fn scalar(layout: Layout, c: f64) -> Self {
        Self { layout, degree: 0, terms: vec![FormTerm { coeff: c, factors: Vec::new() }] }
    }

    pub fn monomial(layout: Layout, coeff: f64, factors: Vec<Covector>) -> Result<Self> {
        let mut f = Self::zero(layout, factors.len());
        f.push(FormTerm { coeff, factors })?;
        Ok(f)
    }

    pub fn push(&mut self, term: FormTerm) -> Result<()> {
        if term.factors.len() != self.degree {
            return Err(Error::DimensionMismatch {
                context: "form term degree",
                expected: self.degree,
                found: term.factors.len(),
            });
        }
        for f in &term.factors {
            f.check_dim(self.layout.dim())?;
        }
        if term.coeff != 0.0 {
            self.terms.push(term);
        }
        Ok(())
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn terms(&self) -> &[FormTerm] {
        &self.terms
    }

    pub fn add(mut self, other: Form) -> Result<Form> {
        if other.degree != self.degree {
            return Err(Error::DimensionMismatch {
                context: "form sum degree",
                expected: self.degree,
                found: other.degree,
            });
        }
        self.terms.extend(other.terms);
        Ok(self)
    }

    pub fn scale(mut self, s: f64) -> Form {
        for t in &mut self.terms {
            t.coeff *= s;
        }
        self
    }

    pub fn wedge(&self, other: &Form) -> Form {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().cloned());
                terms.push(FormTerm { coeff: a.coeff * b.coeff, factors });
            }
        }
        Form { layout: self.layout, degree: self.degree + other.degree, terms }
    }

    /// Evaluate on `degree` vectors.
    pub fn eval(&self, vectors: &[&TangentVector]) -> Result<f64> {
        if vectors.len() != self.degree {
            return Err(Error::DimensionMismatch {
                context: "form evaluation arity",
                expected: self.degree,
                found: vectors.len(),
            });
        }
        for v in vectors {
            if v.layout != self.layout {
                return Err(Error::InvalidArgument("vector layout differs from form layout".into()));
            }
        }
        let slices: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
        Ok(self.eval_slices(&slices))
    }

    /// Evaluate on raw component slices (dimensions assumed checked).
    pub fn eval_slices(&self, vectors: &[&[f64]]) -> f64 {
        let k = self.degree;
        let mut a = vec![0.0; k * k];
        let mut total = 0.0;
        for t in &self.terms {
            for (i, f) in t.factors.iter().enumerate() {
                for (j, v) in vectors.iter().enumerate() {
                    a[i * k + j] = f.pair(v);
                }
            }
            total += t.coeff * det_in_place(&mut a, k);
        }
        total
    }

    /// Interior product `i_v`: the (k−1)-form `(v₂..v_k) ↦ self(v, v₂..v_k)`.
    pub fn contract(&self, v: &TangentVector) -> Result<Form> {
        if self.degree == 0 {
            return Err(Error::InvalidArgument("cannot contract a 0-form".into()));
        }
        if v.layout != self.layout {
            return Err(Error::InvalidArgument("vector layout differs from form layout".into()));
        }
        let mut out = Form::zero(self.layout, self.degree - 1);
        for t in &self.terms {
            for (i, f) in t.factors.iter().enumerate() {
                let c = f.pair(v.as_slice());
                if c == 0.0 {
                    continue;
                }
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let factors = t
                    .factors
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, g)| g.clone())
                    .collect();
                out.terms.push(FormTerm { coeff: sign * c * t.coeff, factors });
            }
        }
        Ok(out)
    }
}

/// `det ⟨factors[i], vectors[j]⟩`.
pub fn eval_wedge_monomial(factors: &[Covector], vectors: &[&TangentVector]) -> Result<f64> {
    let k = factors.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty wedge monomial".into()));
    }
    if vectors.len() != k {
        return Err(Error::DimensionMismatch {
            context: "wedge monomial arity",
            expected: k,
            found: vectors.len(),
        });
    }
    let dim = vectors[0].layout().dim();
    for f in factors {
        f.check_dim(dim)?;
    }
    for v in vectors {
        if v.as_slice().len() != dim {
            return Err(Error::DimensionMismatch {
                context: "wedge monomial vector",
                expected: dim,
                found: v.as_slice().len(),
            });
        }
    }
    let mut a = vec![0.0; k * k];
    for (i, f) in factors.iter().enumerate() {
        for (j, v) in vectors.iter().enumerate() {
            a[i * k + j] = f.pair(v.as_slice());
        }
    }
    Ok(det_in_place(&mut a, k))
}

/// Determinant of a row-major k×k matrix by Gaussian elimination with
/// partial pivoting. Destroys `a`.
pub(crate) fn det_in_place(a: &mut [f64], k: usize) -> f64 {
    match k {
        0 => return 1.0,
        1 => return a[0],
        2 => return a[0] * a[3] - a[1] * a[2],
        _ => {}
    }
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        let mut best = a[col * k + col].abs();
        for r in col + 1..k {
            let x = a[r * k + col].abs();
            if x > best {
                best = x;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                a.swap(col * k + c, piv * k + c);
            }
            det = -det;
        }
        let d = a[col * k + col];
        det *= d;
        for r in col + 1..k {
            let f = a[r * k + col] / d;
            if f != 0.0 {
                for c in col + 1..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
            }
        }
    }
    det
}

/// Volume form `dx⁰ ∧ … ∧ dxⁿ` on the base.
pub fn volume(layout: Layout) -> Form {
    let factors = (0..layout.base()).map(|mu| Covector::Basis(layout.x(mu))).collect();
    Form { layout, degree: layout.base(), terms: vec![FormTerm { coeff: 1.0, factors }] }
}

/// `dⁿx_μ = i_{∂/∂x^μ}(dx⁰ ∧ … ∧ dxⁿ) = (−1)^μ ⋀_{ν≠μ} dx^ν`.
pub fn hyperface(layout: Layout, mu: usize) -> Form {
    let factors = (0..layout.base())
        .filter(|&nu| nu != mu)
        .map(|nu| Covector::Basis(layout.x(nu)))
        .collect();
    let coeff = if mu % 2 == 0 { 1.0 } else { -1.0 };
    Form { layout, degree: layout.n, terms: vec![FormTerm { coeff, factors }] }
}

/// A single covector as a 1-form.
pub fn one_form(layout: Layout, f: Covector) -> Form {
    Form { layout, degree: 1, terms: vec![FormTerm { coeff: 1.0, factors: vec![f] }] }
}
