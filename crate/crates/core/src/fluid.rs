//! Incompressible barotropic fluid on a 3+1 dimensional base: Lagrangian,
//! the constraint `J = det(y^a_i) = 1`, closed forms for the constraint
//! distribution and projector, and the null-Lagrangian identities of the
//! Jacobian.

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constraint::{
    chetaev_coefficients, constraint_derivatives, ConstraintFn, ConstraintSpec,
};
use crate::error::{Error, Result};
use crate::exterior::Layout;
use crate::jet::JetPoint;
use crate::lagrangian::{derivative_bundle, JetVars, Lagrangian};
use crate::models::ConstraintKind;
use crate::projector::{build_projectors, compatibility_matrix, solve_zeta};
use crate::scalar::Scalar;

/// Material parameters; `W(J) = κ/2 (J−1)² + β (J−1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub rho: f64,
    pub kappa: f64,
    pub beta: f64,
    /// Optional Frobenius regularizer `μ/2 Σ (y^a_i)²` in the stored energy.
    pub mu: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self { rho: 1.0, kappa: 1.0, beta: 1.0, mu: 0.0 }
    }
}

impl FluidParams {
    pub fn w(&self, j: f64) -> f64 {
        0.5 * self.kappa * (j - 1.0).powi(2) + self.beta * (j - 1.0)
    }

    pub fn w1(&self, j: f64) -> f64 {
        self.kappa * (j - 1.0) + self.beta
    }

    pub fn w2(&self) -> f64 {
        self.kappa
    }
}

/// `L = ½ρ|y_0|² − ρ W(J) − μ/2 Σ (y^a_i)²` with `n = m = 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidModel {
    pub params: FluidParams,
}

impl FluidModel {
    /// Validates `ρ > 0`, `κ, μ ≥ 0`, and `β ≠ 0` unless `μ > 0` (otherwise
    /// the jet Hessian degenerates at `v = I`).
    pub fn new(params: FluidParams) -> Result<Self> {
        if !(params.rho > 0.0) || params.kappa < 0.0 || params.mu < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fluid parameters need rho > 0, kappa >= 0, mu >= 0 (got {params:?})"
            )));
        }
        if params.beta == 0.0 && params.mu == 0.0 {
            return Err(Error::InvalidArgument(
                "fluid with beta = 0 and mu = 0 has a degenerate Hessian at the identity".into(),
            ));
        }
        Ok(Self { params })
    }

    /// Skip validation (used to exhibit the degenerate case).
    pub fn new_unchecked(params: FluidParams) -> Self {
        Self { params }
    }
}

/// `det [y^a_i]` for the spatial jet block of a 3+1 point.
pub fn jacobian<S: Scalar>(p: &JetVars<'_, S>) -> S {
    let v = |a: usize, i: usize| p.v(a, i + 1);
    v(0, 0) * (v(1, 1) * v(2, 2) - v(1, 2) * v(2, 1)) - v(0, 1) * (v(1, 0) * v(2, 2) - v(1, 2) * v(2, 0))
        + v(0, 2) * (v(1, 0) * v(2, 1) - v(1, 1) * v(2, 0))
}

impl Lagrangian for FluidModel {
    fn layout(&self) -> Layout {
        Layout::new(3, 3)
    }

    fn eval<S: Scalar>(&self, p: &JetVars<'_, S>) -> S {
        let fp = &self.params;
        let mut kin = S::zero();
        let mut reg = S::zero();
        for a in 0..3 {
            let v0 = p.v(a, 0);
            kin += v0 * v0;
            for i in 1..4 {
                let vi = p.v(a, i);
                reg += vi * vi;
            }
        }
        let jm1 = jacobian(p) - 1.0;
        let w = jm1 * jm1 * (0.5 * fp.kappa) + jm1 * fp.beta;
        kin * (0.5 * fp.rho) - w * fp.rho - reg * (0.5 * fp.mu)
    }

    fn depends_on_x(&self) -> bool {
        false
    }

    fn depends_on_y(&self) -> bool {
        false
    }
}

/// `φ = J − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Incompressibility;

impl ConstraintFn for Incompressibility {
    fn layout(&self) -> Layout {
        Layout::new(3, 3)
    }

    fn count(&self) -> usize {
        1
    }

    fn eval<S: Scalar>(&self, _alpha: usize, p: &JetVars<'_, S>) -> S {
        jacobian(p) - 1.0
    }
}

/// The spatial jet block `V[a][i] = y^a_i` of a 3+1 point.
pub fn spatial_block(p: &JetPoint) -> Matrix3<f64> {
    Matrix3::from_fn(|a, i| p.v_at(a, i + 1))
}

/// Cofactor matrix `cof[a][i] = ∂J/∂V[a][i] = J (V⁻¹)[i][a]`.
pub fn cofactor(v: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|a, i| {
        let (a1, a2) = ((a + 1) % 3, (a + 2) % 3);
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        v[(a1, i1)] * v[(a2, i2)] - v[(a1, i2)] * v[(a2, i1)]
    })
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Closed-form quantities of the fluid example at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidQuantities {
    pub j: f64,
    /// `(V⁻¹)[i][a]`.
    pub vinv: Matrix3<f64>,
    /// `C^i_a = J (V⁻¹)^i_a`, indexed `[i][a]`.
    pub c: Matrix3<f64>,
    /// `ζ` from the generic Hessian solve (jet layout).
    pub zeta: Vec<f64>,
    /// `ζ` from the closed form `ζ_0 = 0`, `ζ_s = −(ρ𝓗 + μI)⁻¹ C`.
    pub zeta_closed: Vec<f64>,
    /// `f = ζ(φ)`.
    pub f: f64,
    /// `P = I − f⁻¹ ζ ⊗ dφ` on the full tangent space.
    pub p: DMatrix<f64>,
    /// `max |ζ − ζ_closed|`.
    pub zeta_agreement: f64,
    /// `max |P_generic − P_closed|`.
    pub p_agreement: f64,
}

/// Generic (AD + linear solve) and closed-form ζ, f and P, cross-checked.
pub fn fluid_quantities(params: FluidParams, p: &JetPoint) -> Result<FluidQuantities> {
    let model = FluidModel::new_unchecked(params);
    let l = model.layout();
    p.check(l)?;
    let v = spatial_block(p);
    let j = v.determinant();
    let vinv = v.try_inverse().filter(|_| j.abs() > 1e-12).ok_or_else(|| Error::SingularSystem {
        block: "spatial jet block of the fluid point".into(),
    })?;
    let c = vinv * j;
    let cof = cofactor(&v);

    // Generic path.
    let spec = ConstraintSpec::chetaev(ConstraintKind::Incompressibility(Incompressibility));
    let bundle = derivative_bundle(&model, p)?;
    let coeffs = chetaev_coefficients(&spec, p)?;
    let zb = solve_zeta(&bundle, &coeffs)?;
    let d = constraint_derivatives(&spec, p)?;
    let comp = compatibility_matrix(&zb, &d);
    if !comp.compatible {
        return Err(Error::Incompatible { det: comp.det, point: None });
    }
    let pp = build_projectors(&zb, &d)?;

    // Closed form on the 9 spatial jet coordinates, index a·3 + i.
    let fp = &params;
    let w1 = fp.w1(j);
    let s = DMatrix::from_fn(9, 9, |r, q| {
        let (a, i) = (r / 3, r % 3);
        let (b, jj) = (q / 3, q % 3);
        let d2j: f64 = (0..3)
            .flat_map(|cc| (0..3).map(move |kk| (cc, kk)))
            .map(|(cc, kk)| levi_civita(a, b, cc) * levi_civita(i, jj, kk) * v[(cc, kk)])
            .sum();
        let hh = fp.w2() * cof[(a, i)] * cof[(b, jj)] + w1 * d2j;
        fp.rho * hh + if r == q { fp.mu } else { 0.0 }
    });
    let cs = DVector::from_fn(9, |r, _| c[(r % 3, r / 3)]);
    let zs = s
        .lu()
        .solve(&cs)
        .ok_or_else(|| Error::SingularSystem { block: "fluid spatial Hessian block".into() })?;
    let mut zeta_closed = vec![0.0; l.jet()];
    for a in 0..3 {
        for i in 0..3 {
            zeta_closed[a * 4 + 1 + i] = -zs[a * 3 + i];
        }
    }
    let zeta = zb.zeta.clone();
    let zeta_agreement = zeta.iter().zip(&zeta_closed).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));

    let dphi: Vec<f64> = d.differential(0).to_vec();
    let f: f64 = zeta_closed.iter().zip(&dphi[l.v_offset()..]).map(|(z, g)| z * g).sum();
    if f.abs() <= 1e-10 * comp.scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Incompatible { det: f, point: None });
    }
    let mut zfull = vec![0.0; l.dim()];
    zfull[l.v_offset()..].copy_from_slice(&zeta_closed);
    let zv = DVector::from_vec(zfull);
    let gv = DVector::from_vec(dphi);
    let p_closed = DMatrix::identity(l.dim(), l.dim()) - zv * gv.transpose() / f;
    let p_agreement = (&pp.p - &p_closed).amax();

    let scale = 1.0 + zeta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if zeta_agreement > 1e-9 * scale {
        return Err(Error::Consistency { check: "fluid zeta closed form".into(), residual: zeta_agreement });
    }
    if p_agreement > 1e-9 * pp.invariants.scale {
        return Err(Error::Consistency { check: "fluid projector closed form".into(), residual: p_agreement });
    }
    Ok(FluidQuantities { j, vinv, c, zeta, zeta_closed, f, p: p_closed, zeta_agreement, p_agreement })
}

/// Uniformly random rotation (Haar) via QR of a Gaussian matrix.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let g = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..3 {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Random `V` with `det V = 1`: `Q₁ diag(s₁, s₂, 1/(s₁s₂)) Q₂` with
/// `ln sᵢ ∈ [−spread, spread]`.
pub fn random_unimodular(rng: &mut impl Rng, spread: f64) -> Matrix3<f64> {
    let s1 = rng.random_range(-spread..spread).exp();
    let s2 = rng.random_range(-spread..spread).exp();
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(s1, s2, 1.0 / (s1 * s2)));
    random_rotation(rng) * d * random_rotation(rng)
}

/// A random fluid jet point on the constraint set.
pub fn random_fluid_point(rng: &mut impl Rng, spread: f64) -> JetPoint {
    let l = Layout::new(3, 3);
    let mut p = JetPoint::zeros(l);
    for x in p.x.iter_mut().chain(p.y.iter_mut()) {
        *x = rng.random_range(-1.0..1.0);
    }
    let v = random_unimodular(rng, spread);
    for a in 0..3 {
        *p.v_at_mut(a, 0) = rng.random_range(-1.0..1.0);
        for i in 0..3 {
            *p.v_at_mut(a, i + 1) = v[(a, i)];
        }
    }
    p
}

/// Samples `y(x)` of a section on a uniform, non-periodic 4D patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSamples {
    pub origin: [f64; 4],
    pub spacing: [f64; 4],
    pub shape: [usize; 4],
    /// `values[idx]` with `idx = ((i₀·s₁ + i₁)·s₂ + i₂)·s₃ + i₃`.
    pub values: Vec<[f64; 3]>,
}

impl PatchSamples {
    /// Sample `f` on `npts⁴` points spanning `[origin, origin + extent]`.
    pub fn from_fn(origin: [f64; 4], extent: f64, npts: usize, f: impl Fn(&[f64; 4]) -> [f64; 3]) -> Result<Self> {
        if npts < 9 {
            return Err(Error::InvalidArgument(format!("patch needs at least 9 points per direction, got {npts}")));
        }
        let h = extent / (npts - 1) as f64;
        let shape = [npts; 4];
        let mut values = Vec::with_capacity(npts.pow(4));
        for i0 in 0..npts {
            for i1 in 0..npts {
                for i2 in 0..npts {
                    for i3 in 0..npts {
                        let x = [
                            origin[0] + i0 as f64 * h,
                            origin[1] + i1 as f64 * h,
                            origin[2] + i2 as f64 * h,
                            origin[3] + i3 as f64 * h,
                        ];
                        values.push(f(&x));
                    }
                }
            }
        }
        Ok(Self { origin, spacing: [h; 4], shape, values })
    }

    fn index(&self, i: &[usize; 4]) -> usize {
        ((i[0] * self.shape[1] + i[1]) * self.shape[2] + i[2]) * self.shape[3] + i[3]
    }

    fn coords(&self, i: &[usize; 4]) -> [f64; 4] {
        std::array::from_fn(|d| self.origin[d] + i[d] as f64 * self.spacing[d])
    }

    /// Interior multi-indices at distance ≥ `margin` from every face.
    fn interior(&self, margin: usize) -> Vec<[usize; 4]> {
        let r = |d: usize| margin..self.shape[d].saturating_sub(margin);
        let mut out = Vec::new();
        for i0 in r(0) {
            for i1 in r(1) {
                for i2 in r(2) {
                    for i3 in r(3) {
                        out.push([i0, i1, i2, i3]);
                    }
                }
            }
        }
        out
    }

    fn shifted(&self, i: &[usize; 4], dir: usize, s: isize) -> [usize; 4] {
        let mut j = *i;
        j[dir] = (j[dir] as isize + s) as usize;
        j
    }

    /// 4th-order central derivative of a point function along `dir`.
    fn central<T, F>(&self, i: &[usize; 4], dir: usize, f: F) -> T
    where
        F: Fn(&[usize; 4]) -> T,
        T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
    {
        let h = self.spacing[dir];
        let fm2 = f(&self.shifted(i, dir, -2));
        let fm1 = f(&self.shifted(i, dir, -1));
        let fp1 = f(&self.shifted(i, dir, 1));
        let fp2 = f(&self.shifted(i, dir, 2));
        ((fp1 - fm1) * 8.0 - (fp2 - fm2)) * (1.0 / (12.0 * h))
    }

    /// Spatial jet block `V[a][k] = ∂y^a/∂x^{k+1}` by central differences.
    fn jet_block(&self, i: &[usize; 4]) -> Matrix3<f64> {
        let mut v = Matrix3::zeros();
        for k in 0..3 {
            let col = self.central(i, k + 1, |j| nalgebra::Vector3::from(self.values[self.index(j)]));
            v.set_column(k, &col);
        }
        v
    }

    fn y(&self, i: &[usize; 4]) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::from(self.values[self.index(i)])
    }
}

fn check_jet_block(v: &Matrix3<f64>) -> Result<f64> {
    let j = v.determinant();
    if !(j.abs() > 1e-8) {
        return Err(Error::SingularSystem { block: format!("near-singular jet block (det = {j:e})") });
    }
    Ok(j)
}

/// `max |d/dx^μ(∂φ/∂y^a_μ) − ∂φ/∂y^a|` over interior points for `φ = J − 1`
/// (the Piola identity `∂_i cof^a_i = 0`), all derivatives by 4th-order
/// central differences.
pub fn null_lagrangian_residual(samples: &PatchSamples) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in samples.interior(4) {
        let mut div = nalgebra::Vector3::zeros();
        for k in 0..3 {
            // ∂φ/∂y^a_0 = 0, so only spatial directions contribute.
            let d = samples.central(&i, k + 1, |j| {
                let v = samples.jet_block(j);
                cofactor(&v).column(k).into_owned()
            });
            div += d;
        }
        check_jet_block(&samples.jet_block(&i))?;
        worst = worst.max(div.amax());
    }
    Ok(worst)
}

/// `max |φ − ∂_μ ψ^μ|` with `ψ⁰ = 0`, `ψ^i = ⅓(J y^a (V⁻¹)^i_a − x^i)`.
pub fn psi_divergence_residual(samples: &PatchSamples) -> Result<f64> {
    let psi = |j: &[usize; 4]| -> nalgebra::Vector3<f64> {
        let v = samples.jet_block(j);
        let det = v.determinant();
        let vinv = v.try_inverse().unwrap_or_else(Matrix3::zeros);
        let y = samples.y(j);
        let x = samples.coords(j);
        (vinv * y * det - nalgebra::Vector3::new(x[1], x[2], x[3])) / 3.0
    };
    let mut worst: f64 = 0.0;
    for i in samples.interior(4) {
        let v = samples.jet_block(&i);
        let j = check_jet_block(&v)?;
        let div: f64 = (0..3).map(|k| samples.central(&i, k + 1, |jj| psi(jj)[k])).sum();
        worst = worst.max(((j - 1.0) - div).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{regularity_check, RegularityThresholds};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point(v: Matrix3<f64>) -> JetPoint {
        let mut p = JetPoint::zeros(Layout::new(3, 3));
        for a in 0..3 {
            for i in 0..3 {
                *p.v_at_mut(a, i + 1) = v[(a, i)];
            }
        }
        p
    }

    #[test]
    fn identity_point() {
        let q = fluid_quantities(FluidParams::default(), &point(Matrix3::identity())).unwrap();
        assert_eq!(q.j, 1.0);
        assert_eq!(q.vinv, Matrix3::identity());
        assert_eq!(q.c, Matrix3::identity());
        assert!((q.f + 0.6).abs() < 1e-12, "f = {}", q.f);
    }

    #[test]
    fn diagonal_stretch() {
        let v = Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 1.0, 0.5));
        let q = fluid_quantities(FluidParams::default(), &point(v)).unwrap();
        assert!((q.j - 1.0).abs() < 1e-15);
        let expect = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.5, 1.0, 2.0));
        assert!((q.c - expect).amax() < 1e-15);
    }

    #[test]
    fn degenerate_stored_energy_is_not_regular() {
        let m = FluidModel::new_unchecked(FluidParams { beta: 0.0, ..Default::default() });
        let r = regularity_check(&m, &point(Matrix3::identity()), RegularityThresholds::default()).unwrap();
        assert!(!r.regular);
        assert!(FluidModel::new(FluidParams { beta: 0.0, ..Default::default() }).is_err());
        let ok = FluidModel::new(FluidParams::default()).unwrap();
        assert!(regularity_check(&ok, &point(Matrix3::identity()), Default::default()).unwrap().regular);
    }

    #[test]
    fn unimodular_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = random_unimodular(&mut rng, 0.5);
            assert!((v.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_section_identities() {
        let a = Matrix3::new(1.0, 0.3, 0.0, 0.2, 1.5, 0.1, 0.0, -0.4, 0.8);
        let s = PatchSamples::from_fn([0.0; 4], 1.0, 10, |x| {
            let r = a * nalgebra::Vector3::new(x[1], x[2], x[3]);
            [r[0] + 0.1, r[1], r[2] - 0.2]
        })
        .unwrap();
        assert!(null_lagrangian_residual(&s).unwrap() < 1e-10);
    }
}
