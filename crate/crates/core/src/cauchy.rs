//! Discretized Cauchy data on a periodic spatial grid: the induced forms
//! `η̃` and `Ω̃_L`, the (projected) second-order vector field, and explicit
//! time integration with diagnostics.
//!
//! A state samples `y`, `y_0` and (in full-jet mode) `y_i` on the grid. At
//! each grid point the connection is fixed along the section: its spatial
//! rows are the spatial derivatives of the jet fields, its temporal row
//! comes from the DDW equations, and with constraints it is then projected.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::constraint::{
    coefficients_from, constraint_derivatives, constraint_forms, ConstraintDerivs, ConstraintFn, ConstraintSpec,
};
use crate::ddw::{lstsq_min_norm, project_with_inverse, solve_free_ddw_at};
use crate::error::{Error, Result};
use crate::exterior::{volume, Form, Layout, TangentVector};
use crate::grid::{DiffScheme, PeriodicGrid};
use crate::jet::{ConnectionCoeffs, JetPoint};
use crate::lagrangian::{derivative_bundle, omega_form, JetVars, Lagrangian};
use crate::projector::{inverse_compatibility, random_vectors, solve_zeta_linear};
use crate::scalar::Dual;

/// What a state stores per grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateMode {
    /// `(y, ẏ)`; spatial jet data are recomputed from `y`.
    Pde,
    /// `(y, y_0, y_i)`; the spatial jet data evolve independently.
    #[default]
    FullJet,
}

/// Cauchy data on `[0,1)ⁿ` (unit spatial volume).
///
/// Per-point arrays are interleaved by component: `y[j·m + a]`,
/// `v0[j·m + a]`, `vi[(j·m + a)·n + i]`. The optional `background` `G`
/// (row-major `m × n`) adds the non-periodic part `y = y_stored + G·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyState {
    pub t: f64,
    pub grid: PeriodicGrid,
    pub m: usize,
    pub mode: StateMode,
    pub y: Vec<f64>,
    pub v0: Vec<f64>,
    pub vi: Vec<f64>,
    pub background: Vec<f64>,
}

fn check_len(context: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch { context, expected, found: v.len() });
    }
    Ok(())
}

impl CauchyState {
    pub fn pde(grid: PeriodicGrid, m: usize, y: Vec<f64>, ydot: Vec<f64>) -> Result<Self> {
        let s = Self {
            t: 0.0,
            background: vec![0.0; m * grid.dims],
            grid,
            m,
            mode: StateMode::Pde,
            y,
            v0: ydot,
            vi: Vec::new(),
        };
        s.check()?;
        Ok(s)
    }

    pub fn full_jet(grid: PeriodicGrid, m: usize, y: Vec<f64>, v0: Vec<f64>, vi: Vec<f64>) -> Result<Self> {
        let s = Self { t: 0.0, background: vec![0.0; m * grid.dims], grid, m, mode: StateMode::FullJet, y, v0, vi };
        s.check()?;
        Ok(s)
    }

    /// Full-jet state with `y_i` taken from the derivatives of `y`.
    pub fn holonomic(grid: PeriodicGrid, m: usize, y: Vec<f64>, v0: Vec<f64>, scheme: DiffScheme) -> Result<Self> {
        let pde = Self::pde(grid, m, y, v0)?;
        Ok(pde.to_full_jet(scheme))
    }

    /// Set the background gradient `G`. Full-jet `y_i` are stored as full
    /// gradients and are left untouched.
    pub fn with_background(mut self, g: Vec<f64>) -> Result<Self> {
        check_len("background gradient", &g, self.m * self.grid.dims)?;
        self.background = g;
        Ok(self)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    fn check(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("Cauchy state needs at least one field component".into()));
        }
        let pm = self.len() * self.m;
        check_len("state y", &self.y, pm)?;
        check_len("state y_0", &self.v0, pm)?;
        match self.mode {
            StateMode::Pde => check_len("state y_i (pde mode)", &self.vi, 0)?,
            StateMode::FullJet => check_len("state y_i", &self.vi, pm * self.n())?,
        }
        check_len("background gradient", &self.background, self.m * self.n())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.n(), self.m)
    }

    fn component(&self, data: &[f64], a: usize, stride: usize, offset: usize) -> Vec<f64> {
        (0..self.len()).map(|j| data[j * stride + a * (stride / self.m) + offset]).collect()
    }

    /// Component `a` of `y` (stored, periodic part).
    pub fn y_component(&self, a: usize) -> Vec<f64> {
        self.component(&self.y, a, self.m, 0)
    }

    pub fn v0_component(&self, a: usize) -> Vec<f64> {
        self.component(&self.v0, a, self.m, 0)
    }

    /// Full spatial jet field `y^a_i` (including the background gradient).
    pub fn vi_component(&self, a: usize, i: usize, scheme: DiffScheme) -> Vec<f64> {
        let g = self.background[a * self.n() + i];
        match self.mode {
            StateMode::FullJet => self.component(&self.vi, a, self.m * self.n(), i),
            StateMode::Pde => self.grid.d1(&self.y_component(a), i, scheme).into_iter().map(|d| d + g).collect(),
        }
    }

    /// Convert to full-jet mode with `y_i = ∂_i y + G`.
    pub fn to_full_jet(&self, scheme: DiffScheme) -> Self {
        if self.mode == StateMode::FullJet {
            return self.clone();
        }
        let (n, m) = (self.n(), self.m);
        let mut vi = vec![0.0; self.len() * m * n];
        for a in 0..m {
            for i in 0..n {
                for (j, d) in self.vi_component(a, i, scheme).into_iter().enumerate() {
                    vi[(j * m + a) * n + i] = d;
                }
            }
        }
        Self { mode: StateMode::FullJet, vi, ..self.clone() }
    }

    /// `max |y^a_i − ∂_i y^a − G^a_i|` (zero in PDE mode).
    pub fn holonomy_defect(&self, scheme: DiffScheme) -> f64 {
        if self.mode == StateMode::Pde {
            return 0.0;
        }
        let n = self.n();
        let mut worst: f64 = 0.0;
        for a in 0..self.m {
            let ya = self.y_component(a);
            for i in 0..n {
                let g = self.background[a * n + i];
                let d = self.grid.d1(&ya, i, scheme);
                let vi = self.vi_component(a, i, scheme);
                for (x, y) in vi.iter().zip(&d) {
                    worst = worst.max((x - y - g).abs());
                }
            }
        }
        worst
    }

    /// Jet points assembled from the grid data.
    pub fn jet_points(&self, scheme: DiffScheme) -> Vec<JetPoint> {
        self.section_data(scheme).points
    }

    fn flat(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.y.len() + self.v0.len() + self.vi.len());
        f.extend_from_slice(&self.y);
        f.extend_from_slice(&self.v0);
        f.extend_from_slice(&self.vi);
        f
    }

    fn advanced(&self, rate: &[f64], h: f64) -> Self {
        let mut s = self.clone();
        let (ny, n0) = (s.y.len(), s.v0.len());
        for (x, r) in s.y.iter_mut().zip(&rate[..ny]) {
            *x += h * r;
        }
        for (x, r) in s.v0.iter_mut().zip(&rate[ny..ny + n0]) {
            *x += h * r;
        }
        for (x, r) in s.vi.iter_mut().zip(&rate[ny + n0..]) {
            *x += h * r;
        }
        s.t += h;
        s
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|x| x.is_finite())
    }

    /// Jet points plus the pinned spatial rows `Γ^a_{iν} = ∂_i y^a_ν` in the
    /// layout expected by the pinned DDW solver.
    fn section_data(&self, scheme: DiffScheme) -> SectionData {
        let (n, m, b) = (self.n(), self.m, self.n() + 1);
        let l = self.layout();
        let npts = self.len();
        let grid = &self.grid;
        let mut points: Vec<JetPoint> = (0..npts)
            .map(|j| {
                let u = grid.coords(j);
                let mut x = Vec::with_capacity(b);
                x.push(self.t);
                x.extend_from_slice(&u);
                let y = (0..m)
                    .map(|a| self.y[j * m + a] + (0..n).map(|i| self.background[a * n + i] * u[i]).sum::<f64>())
                    .collect();
                JetPoint { x, y, v: vec![0.0; l.jet()] }
            })
            .collect();
        let mut pinned = vec![vec![0.0; m * n * b]; npts];
        let fixed = |a: usize, i: usize, nu: usize| (a * n + i) * b + nu;
        for a in 0..m {
            let ya = self.y_component(a);
            let v0 = self.v0_component(a);
            let vis: Vec<Vec<f64>> = (0..n).map(|i| self.vi_component(a, i, scheme)).collect();
            for j in 0..npts {
                *points[j].v_at_mut(a, 0) = v0[j];
                for i in 0..n {
                    *points[j].v_at_mut(a, i + 1) = vis[i][j];
                }
            }
            for i in 0..n {
                let d0 = grid.d1(&v0, i, scheme);
                for j in 0..npts {
                    pinned[j][fixed(a, i, 0)] = d0[j];
                }
                for k in 0..n {
                    let d = match self.mode {
                        StateMode::Pde if i == k => grid.d2(&ya, i, scheme),
                        _ => grid.d1(&vis[k], i, scheme),
                    };
                    for j in 0..npts {
                        pinned[j][fixed(a, i, k + 1)] = d[j];
                    }
                }
            }
        }
        SectionData { layout: l, points, pinned }
    }
}

struct SectionData {
    layout: Layout,
    points: Vec<JetPoint>,
    pinned: Vec<Vec<f64>>,
}

impl SectionData {
    /// Connection along the section with only the spatial rows filled.
    fn spatial_connection(&self, j: usize) -> ConnectionCoeffs {
        let l = self.layout;
        let (n, b) = (l.n, l.base());
        let mut c = ConnectionCoeffs::zeros(l);
        c.gamma = self.points[j].v.clone();
        for a in 0..l.m {
            for i in 0..n {
                for nu in 0..b {
                    *c.g2_mut(a, i + 1, nu) = self.pinned[j][(a * n + i) * b + nu];
                }
            }
        }
        c
    }

    /// Pushforwards `T_i = κ_*(∂_{u^i})` of the embedding.
    fn tangents(&self, j: usize) -> Vec<TangentVector> {
        let c = self.spatial_connection(j);
        (1..self.layout.base()).map(|i| c.horizontal_lift(i)).collect()
    }
}

/// A vector field along the embedded Cauchy surface: one tangent vector per
/// grid point, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVariation {
    pub layout: Layout,
    pub comps: Vec<f64>,
}

impl StateVariation {
    pub fn zeros(layout: Layout, points: usize) -> Self {
        Self { layout, comps: vec![0.0; points * layout.dim()] }
    }

    pub fn from_vectors(layout: Layout, vectors: &[TangentVector]) -> Result<Self> {
        let mut comps = Vec::with_capacity(vectors.len() * layout.dim());
        for v in vectors {
            if v.layout() != layout {
                return Err(Error::DimensionMismatch {
                    context: "variation vector",
                    expected: layout.dim(),
                    found: v.as_slice().len(),
                });
            }
            comps.extend_from_slice(v.as_slice());
        }
        Ok(Self { layout, comps })
    }

    /// Independent standard-normal components at every point.
    pub fn random(layout: Layout, points: usize, rng: &mut impl Rng) -> Self {
        let v = random_vectors(layout, points, rng);
        Self::from_vectors(layout, &v).expect("layouts agree")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.comps.len() / self.layout.dim()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    #[inline]
    pub fn at(&self, j: usize) -> &[f64] {
        let d = self.layout.dim();
        &self.comps[j * d..(j + 1) * d]
    }

    #[inline]
    pub fn at_mut(&mut self, j: usize) -> &mut [f64] {
        let d = self.layout.dim();
        &mut self.comps[j * d..(j + 1) * d]
    }

    pub fn vector(&self, j: usize) -> TangentVector {
        TangentVector::from_vec(self.layout, self.at(j).to_vec()).expect("length matches layout")
    }
}

fn check_variation(state: &CauchyState, w: &StateVariation) -> Result<()> {
    if w.layout != state.layout() {
        return Err(Error::DimensionMismatch {
            context: "variation layout",
            expected: state.layout().dim(),
            found: w.layout.dim(),
        });
    }
    if w.len() != state.len() || w.comps.len() % w.layout.dim() != 0 {
        return Err(Error::DimensionMismatch { context: "variation points", expected: state.len(), found: w.len() });
    }
    Ok(())
}

/// `η̃(W) = ∫_M κ*(i_W η)`, by the periodic trapezoid rule.
pub fn tilde_eta_contract(state: &CauchyState, w: &StateVariation, scheme: DiffScheme) -> Result<f64> {
    check_variation(state, w)?;
    let sd = state.section_data(scheme);
    let vol = volume(state.layout());
    let mut acc = 0.0;
    for j in 0..state.len() {
        let ts = sd.tangents(j);
        let mut args: Vec<&[f64]> = vec![w.at(j)];
        args.extend(ts.iter().map(|t| t.as_slice()));
        acc += vol.eval_slices(&args);
    }
    Ok(acc / state.len() as f64)
}

/// Per-point data for repeated `Ω̃_L` evaluations on one state.
pub struct CauchyGeometry {
    pub layout: Layout,
    pub points: Vec<JetPoint>,
    pub tangents: Vec<Vec<TangentVector>>,
    pub omegas: Vec<Form>,
}

impl CauchyGeometry {
    pub fn new<L: Lagrangian>(model: &L, state: &CauchyState, scheme: DiffScheme) -> Result<Self> {
        if model.layout() != state.layout() {
            return Err(Error::DimensionMismatch {
                context: "model vs state layout",
                expected: model.layout().dim(),
                found: state.layout().dim(),
            });
        }
        let sd = state.section_data(scheme);
        let tangents: Vec<Vec<TangentVector>> = (0..state.len()).map(|j| sd.tangents(j)).collect();
        let omegas = sd
            .points
            .par_iter()
            .map(|p| derivative_bundle(model, p).map(|b| omega_form(&b)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layout: sd.layout, points: sd.points, tangents, omegas })
    }

    fn check(&self, w: &StateVariation) -> Result<()> {
        if w.layout != self.layout || w.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                context: "variation points",
                expected: self.points.len(),
                found: w.len(),
            });
        }
        Ok(())
    }

    /// `Ω̃_L(W, W') = ∫_M κ*(i_W i_{W'} Ω_L)`.
    pub fn omega(&self, w: &StateVariation, w2: &StateVariation) -> Result<f64> {
        self.check(w)?;
        self.check(w2)?;
        let mut acc = 0.0;
        for j in 0..self.points.len() {
            let mut args: Vec<&[f64]> = vec![w2.at(j), w.at(j)];
            args.extend(self.tangents[j].iter().map(|t| t.as_slice()));
            acc += self.omegas[j].eval_slices(&args);
        }
        Ok(acc / self.points.len() as f64)
    }

    /// Pointwise covectors `c ↦ Ω_L(e_c, X_j, T_1, …, T_n)`, so that
    /// `Ω̃_L(X, W) = mean_j ⟨cov_j, W_j⟩`.
    pub fn contraction_covectors(&self, x: &StateVariation) -> Result<Vec<Vec<f64>>> {
        self.check(x)?;
        let dim = self.layout.dim();
        Ok((0..self.points.len())
            .map(|j| {
                (0..dim)
                    .map(|c| {
                        let e = TangentVector::basis(self.layout, c);
                        let mut args: Vec<&[f64]> = vec![e.as_slice(), x.at(j)];
                        args.extend(self.tangents[j].iter().map(|t| t.as_slice()));
                        self.omegas[j].eval_slices(&args)
                    })
                    .collect()
            })
            .collect())
    }
}

pub fn tilde_omega_contract<L: Lagrangian>(
    model: &L,
    state: &CauchyState,
    w: &StateVariation,
    w2: &StateVariation,
    scheme: DiffScheme,
) -> Result<f64> {
    check_variation(state, w)?;
    check_variation(state, w2)?;
    CauchyGeometry::new(model, state, scheme)?.omega(w, w2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SodeOptions {
    pub scheme: DiffScheme,
    /// Largest `|φ_α|` accepted at a grid point; `None` uses the constraint's
    /// `on_tolerance`.
    pub constraint_tol: Option<f64>,
}

impl Default for SodeOptions {
    fn default() -> Self {
        Self { scheme: DiffScheme::FourthOrder, constraint_tol: None }
    }
}

/// The second-order vector field on the state and its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct SodeField {
    /// `P̃Γ` with constraints, `Γ` otherwise.
    pub variation: StateVariation,
    /// The unprojected `Γ`.
    pub free: StateVariation,
    /// `λ^α_0` per point, `[j·k + α]` (empty without constraints).
    pub lam0: Vec<f64>,
    /// `max_j |φ_α(p_j)|`.
    pub constraint_drift: f64,
}

struct PointField {
    free: Vec<f64>,
    projected: Option<(Vec<f64>, Vec<f64>)>,
    drift: f64,
}

/// Free SODE field (no constraints).
pub fn free_sode_vector_field<L: Lagrangian>(
    model: &L,
    state: &CauchyState,
    opts: SodeOptions,
) -> Result<SodeField> {
    sode_impl::<L, crate::models::ConstraintKind>(model, None, state, opts)
}

/// Per grid point: pin the spatial rows of the connection to the section
/// data, solve the DDW equations for the temporal row, and with a constraint
/// project by `P`. The variation is `H_0`: `dx = (1,0,…)`, `dy = y_0`,
/// `dy_ν = Γ^a_{0ν}`.
pub fn sode_vector_field<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: Option<&ConstraintSpec<F>>,
    state: &CauchyState,
    opts: SodeOptions,
) -> Result<SodeField> {
    sode_impl(model, spec, state, opts)
}

fn sode_impl<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: Option<&ConstraintSpec<F>>,
    state: &CauchyState,
    opts: SodeOptions,
) -> Result<SodeField> {
    let l = state.layout();
    if model.layout() != l {
        return Err(Error::DimensionMismatch {
            context: "model vs state layout",
            expected: model.layout().dim(),
            found: l.dim(),
        });
    }
    if let Some(s) = spec {
        if s.layout() != l {
            return Err(Error::DimensionMismatch {
                context: "constraint vs state layout",
                expected: s.layout().dim(),
                found: l.dim(),
            });
        }
    }
    let sd = state.section_data(opts.scheme);
    let results: Vec<Result<PointField>> = (0..state.len())
        .into_par_iter()
        .map(|j| {
            let p = &sd.points[j];
            let bundle = derivative_bundle(model, p)?;
            let free = solve_free_ddw_at(&bundle, Some(&sd.pinned[j]))?;
            let free_h = free.coeffs.horizontal_lift(0).into_vec();
            let Some(spec) = spec else {
                return Ok(PointField { free: free_h, projected: None, drift: 0.0 });
            };
            let d = constraint_derivatives(spec, p)?;
            let tol = opts.constraint_tol.unwrap_or(spec.on_tolerance);
            let drift = d.max_abs_value();
            if !(drift <= tol) {
                return Err(Error::OffConstraint { values: d.values.clone(), tolerance: tol });
            }
            let coeffs = coefficients_from(spec, p, &d)?;
            let zb = solve_zeta_linear(&bundle, &coeffs)?;
            let (_, inv) = inverse_compatibility(&zb, &d).map_err(|e| match e {
                Error::Incompatible { det, .. } => Error::Incompatible { det, point: Some(j) },
                e => e,
            })?;
            let proj = project_with_inverse(&free, &inv, &zb, &d);
            let tscale = 1.0 + free.coeffs.gamma2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if proj.residuals.tangency > 1e-9 * tscale {
                return Err(Error::Consistency {
                    check: format!("tangency of the projected connection at grid point {j}"),
                    residual: proj.residuals.tangency,
                });
            }
            let b = l.base();
            let lam0 = (0..zb.k()).map(|alpha| proj.lam[alpha * b]).collect();
            Ok(PointField { free: free_h, projected: Some((proj.coeffs.horizontal_lift(0).into_vec(), lam0)), drift })
        })
        .collect();
    let mut free = StateVariation::zeros(l, state.len());
    let mut variation = StateVariation::zeros(l, state.len());
    let mut lam0 = Vec::new();
    let mut constraint_drift: f64 = 0.0;
    for (j, r) in results.into_iter().enumerate() {
        let pf = r?;
        free.at_mut(j).copy_from_slice(&pf.free);
        match pf.projected {
            Some((h, lam)) => {
                variation.at_mut(j).copy_from_slice(&h);
                lam0.extend(lam);
            }
            None => variation.at_mut(j).copy_from_slice(&pf.free),
        }
        constraint_drift = constraint_drift.max(pf.drift);
    }
    Ok(SodeField { variation, free, lam0, constraint_drift })
}

/// Time derivative of the stored state arrays encoded by a SODE variation.
fn state_rate(state: &CauchyState, w: &StateVariation) -> Vec<f64> {
    let l = state.layout();
    let (n, m, npts) = (l.n, l.m, state.len());
    let mut rate = vec![0.0; state.y.len() + state.v0.len() + state.vi.len()];
    let (ry, rest) = rate.split_at_mut(npts * m);
    let (r0, ri) = rest.split_at_mut(npts * m);
    for j in 0..npts {
        let c = w.at(j);
        for a in 0..m {
            ry[j * m + a] = c[l.y(a)];
            r0[j * m + a] = c[l.v(a, 0)];
            if state.mode == StateMode::FullJet {
                for i in 0..n {
                    ri[(j * m + a) * n + i] = c[l.v(a, i + 1)];
                }
            }
        }
    }
    rate
}

/// `∫ (y_0 · ∂L/∂y_0 − L) du`.
pub fn energy<L: Lagrangian>(model: &L, state: &CauchyState, scheme: DiffScheme) -> Result<f64> {
    let l = state.layout();
    let pts = state.jet_points(scheme);
    let total: f64 = pts
        .par_iter()
        .map(|p| {
            let flat = p.to_flat();
            let mut acc = -model.value(p);
            for a in 0..l.m {
                let idx = l.v(a, 0);
                let vars: Vec<Dual<f64>> = flat
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| Dual::new(x, if i == idx { 1.0 } else { 0.0 }))
                    .collect();
                let dl = model.eval(&JetVars::from_flat(l, &vars)).eps;
                acc += flat[idx] * dl;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let e = total / state.len() as f64;
    if !e.is_finite() {
        return Err(Error::Evaluation { what: "energy".into(), index: 0 });
    }
    Ok(e)
}

/// Which jet columns Newton projection onto the constraint set may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VColumns {
    /// Only `y^a_0`.
    Temporal,
    /// All jet coordinates.
    All,
    /// Temporal when `∂φ/∂y_0` has full rank, otherwise all.
    #[default]
    Auto,
}

fn jet_columns(l: Layout, d: &ConstraintDerivs, columns: VColumns) -> Vec<usize> {
    let temporal: Vec<usize> = (0..l.m).map(|a| a * l.base()).collect();
    let all: Vec<usize> = (0..l.jet()).collect();
    match columns {
        VColumns::Temporal => temporal,
        VColumns::All => all,
        VColumns::Auto => {
            let sub = DMatrix::from_fn(d.k(), temporal.len(), |r, c| d.dphidv(r)[temporal[c]]);
            let sv = sub.singular_values();
            let smax = sv.max();
            let rank = sv.iter().filter(|&&s| smax > 0.0 && s > 1e-10 * smax).count();
            if rank == d.k() {
                temporal
            } else {
                all
            }
        }
    }
}

/// Gauss–Newton with minimum-norm steps in the chosen jet columns until
/// `max |φ_α| ≤ tol`.
pub fn project_point_onto_constraint<F: ConstraintFn>(
    spec: &ConstraintSpec<F>,
    p: &JetPoint,
    columns: VColumns,
    tol: f64,
) -> Result<JetPoint> {
    let l = spec.layout();
    let mut q = p.clone();
    let mut d = constraint_derivatives(spec, &q)?;
    let cols = jet_columns(l, &d, columns);
    for _ in 0..50 {
        if d.max_abs_value() <= tol {
            return Ok(q);
        }
        let jm = DMatrix::from_fn(d.k(), cols.len(), |r, c| d.dphidv(r)[cols[c]]);
        let rhs = nalgebra::DVector::from_iterator(d.k(), d.values.iter().map(|v| -v));
        let (step, _) = lstsq_min_norm(&jm, &rhs);
        for (c, s) in cols.iter().zip(step.iter()) {
            q.v[*c] += s;
        }
        d = constraint_derivatives(spec, &q)?;
    }
    if d.max_abs_value() <= tol {
        Ok(q)
    } else {
        Err(Error::OffConstraint { values: d.values, tolerance: tol })
    }
}

/// Project every grid point onto the constraint set. PDE states may only
/// move `ẏ`.
pub fn project_state_onto_constraint<F: ConstraintFn>(
    spec: &ConstraintSpec<F>,
    state: &CauchyState,
    scheme: DiffScheme,
    columns: VColumns,
    tol: f64,
) -> Result<CauchyState> {
    let l = state.layout();
    let columns = if state.mode == StateMode::Pde { VColumns::Temporal } else { columns };
    let pts = state.jet_points(scheme);
    let projected = pts
        .par_iter()
        .map(|p| project_point_onto_constraint(spec, p, columns, tol))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut s = state.clone();
    let (n, m) = (l.n, l.m);
    for (j, q) in projected.iter().enumerate() {
        for a in 0..m {
            s.v0[j * m + a] = q.v_at(a, 0);
            if s.mode == StateMode::FullJet {
                for i in 0..n {
                    s.vi[(j * m + a) * n + i] = q.v_at(a, i + 1);
                }
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub steps: usize,
    pub integrator: Integrator,
    pub scheme: DiffScheme,
    /// Re-solve `φ = 0` by Newton after every step.
    pub stabilize: bool,
    /// Abort once `max |φ|` exceeds this; also the tolerance accepted at
    /// intermediate stages.
    pub drift_ceiling: f64,
    /// Keep every `record_every`-th state (the final state is always kept).
    pub record_every: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            steps: 0,
            integrator: Integrator::Rk4,
            scheme: DiffScheme::FourthOrder,
            stabilize: false,
            drift_ceiling: 1e-4,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// `max_{j,α} |φ_α|` (zero without constraints).
    pub constraint_drift: f64,
    pub holonomy_defect: f64,
    /// `η̃(Γ̃)`.
    pub eta_gamma: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub trajectory: Vec<CauchyState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

pub fn evolve_free<L: Lagrangian>(model: &L, state0: &CauchyState, opts: EvolveOptions) -> Result<Evolution> {
    evolve::<L, crate::models::ConstraintKind>(model, None, state0, opts)
}

/// Explicit time stepping with the (projected) SODE field as right side.
pub fn evolve<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: Option<&ConstraintSpec<F>>,
    state0: &CauchyState,
    opts: EvolveOptions,
) -> Result<Evolution> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive and finite, got {}", opts.dt)));
    }
    if !(opts.drift_ceiling > 0.0) || opts.record_every == 0 {
        return Err(Error::InvalidArgument("drift ceiling must be positive and record_every at least 1".into()));
    }
    state0.check()?;
    if let Some(s) = spec {
        let initial = SodeOptions { scheme: opts.scheme, constraint_tol: None };
        // Validates that the initial state lies on the constraint set.
        sode_vector_field(model, Some(s), state0, initial)?;
    }
    let sopts = SodeOptions { scheme: opts.scheme, constraint_tol: Some(opts.drift_ceiling) };
    let field = |s: &CauchyState, step: usize| -> Result<SodeField> {
        sode_vector_field(model, spec, s, sopts).map_err(|e| match e {
            Error::OffConstraint { values, .. } => Error::Drift {
                step,
                value: values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                ceiling: opts.drift_ceiling,
            },
            e => e,
        })
    };
    let mut s = state0.clone();
    let mut trajectory = vec![s.clone()];
    let mut diagnostics = Vec::with_capacity(opts.steps + 1);
    for step in 0..=opts.steps {
        let k1 = field(&s, step)?;
        diagnostics.push(StepDiagnostics {
            step,
            t: s.t,
            constraint_drift: k1.constraint_drift,
            holonomy_defect: s.holonomy_defect(opts.scheme),
            eta_gamma: tilde_eta_contract(&s, &k1.variation, opts.scheme)?,
            energy: energy(model, &s, opts.scheme)?,
        });
        if step == opts.steps {
            break;
        }
        let dt = opts.dt;
        let r1 = state_rate(&s, &k1.variation);
        let mut next = match opts.integrator {
            Integrator::Euler => s.advanced(&r1, dt),
            Integrator::Rk4 => {
                let s2 = s.advanced(&r1, 0.5 * dt);
                let r2 = state_rate(&s2, &field(&s2, step)?.variation);
                let s3 = s.advanced(&r2, 0.5 * dt);
                let r3 = state_rate(&s3, &field(&s3, step)?.variation);
                let s4 = s.advanced(&r3, dt);
                let r4 = state_rate(&s4, &field(&s4, step)?.variation);
                let comb: Vec<f64> = (0..r1.len()).map(|i| (r1[i] + 2.0 * r2[i] + 2.0 * r3[i] + r4[i]) / 6.0).collect();
                s.advanced(&comb, dt)
            }
        };
        // Avoid accumulating round-off in t.
        next.t = state0.t + (step + 1) as f64 * dt;
        if !next.is_finite() {
            return Err(Error::Instability { step: step + 1 });
        }
        if opts.stabilize {
            if let Some(sp) = spec {
                next = project_state_onto_constraint(sp, &next, opts.scheme, VColumns::Auto, sp.on_tolerance * 1e-3)?;
            }
        }
        s = next;
        if (step + 1) % opts.record_every == 0 || step + 1 == opts.steps {
            trajectory.push(s.clone());
        }
    }
    Ok(Evolution { trajectory, diagnostics })
}

/// Checks of the free SODE field on one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSodeCheck {
    /// `η̃(Γ)`; must be 1.
    pub eta: f64,
    /// `max |dy-block − y_0|`; the SODE condition.
    pub sode_defect: f64,
    /// `max |i_Γ Ω̃_L(W)|` over random variations.
    pub omega_max: f64,
}

pub fn free_sode_check<L: Lagrangian>(
    model: &L,
    state: &CauchyState,
    scheme: DiffScheme,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<FreeSodeCheck> {
    let opts = SodeOptions { scheme, constraint_tol: None };
    let field = free_sode_vector_field(model, state, opts)?;
    let geo = CauchyGeometry::new(model, state, scheme)?;
    let eta = tilde_eta_contract(state, &field.variation, scheme)?;
    let sode_defect = sode_defect(state, &field.variation, scheme);
    let cov = geo.contraction_covectors(&field.variation)?;
    let mut omega_max: f64 = 0.0;
    for _ in 0..samples {
        let w = StateVariation::random(geo.layout, state.len(), rng);
        omega_max = omega_max.max(mean_pairing(&cov, &w).abs());
    }
    Ok(FreeSodeCheck { eta, sode_defect, omega_max })
}

fn sode_defect(state: &CauchyState, w: &StateVariation, scheme: DiffScheme) -> f64 {
    let l = state.layout();
    let pts = state.jet_points(scheme);
    let mut worst: f64 = 0.0;
    for (j, p) in pts.iter().enumerate() {
        for a in 0..l.m {
            worst = worst.max((w.at(j)[l.y(a)] - p.v_at(a, 0)).abs());
        }
    }
    worst
}

fn mean_pairing(cov: &[Vec<f64>], w: &StateVariation) -> f64 {
    let s: f64 = cov.iter().enumerate().map(|(j, c)| dot(c, w.at(j))).sum();
    s / cov.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Remove from `w` its component in the span of `rows` (Euclidean).
fn project_out(rows: &[&[f64]], w: &mut [f64]) {
    if rows.is_empty() {
        return;
    }
    let a = DMatrix::from_fn(w.len(), rows.len(), |r, c| rows[c][r]);
    let (c, _) = lstsq_min_norm(&a, &nalgebra::DVector::from_column_slice(w));
    let fit = a * c;
    for (x, f) in w.iter_mut().zip(fit.iter()) {
        *x -= f;
    }
}

/// Checks of the projected SODE field on a state lying on the constraint
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSodeCheck {
    /// `η̃(P̃Γ)`; must be 1.
    pub eta: f64,
    pub sode_defect: f64,
    /// `max |i_{P̃Γ}Ω̃_L(W)|` over `W` with `dφ_α(W_j) = 0` at every point.
    pub tangent: f64,
    /// Same, with `W_j` also annihilated by the constraint forms
    /// `Φ_α(·, T_1, …, T_n)`.
    pub annihilated: f64,
    /// Max residual of fitting `i_{P̃Γ}Ω̃_L − i_ΓΩ̃_L` by
    /// `Σ_{α,j} c_{α,j} Φ_α(W_j, T_j)` over random `W`.
    pub ansatz_residual: f64,
    /// Max `|i_{P̃Γ}Ω̃_L(W) − i_ΓΩ̃_L(W)|` over the fitting variations.
    pub difference_scale: f64,
    /// `max |c_{α,j} + λ^α_0(p_j)|`: the fitted coefficients against the
    /// pointwise multipliers of the projection.
    pub coefficient_mismatch: f64,
    /// `max_j |λ^α_0|`.
    pub lam0_max: f64,
}

pub fn constrained_sode_check<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: &ConstraintSpec<F>,
    state: &CauchyState,
    scheme: DiffScheme,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<ConstrainedSodeCheck> {
    let opts = SodeOptions { scheme, constraint_tol: None };
    let field = sode_vector_field(model, Some(spec), state, opts)?;
    let geo = CauchyGeometry::new(model, state, scheme)?;
    let (l, npts, k) = (geo.layout, state.len(), spec.k());
    let eta = tilde_eta_contract(state, &field.variation, scheme)?;
    let sode_defect = sode_defect(state, &field.variation, scheme);
    let cov_p = geo.contraction_covectors(&field.variation)?;
    let cov_f = geo.contraction_covectors(&field.free)?;

    // Pointwise dφ rows and constraint-form covectors Φ_α(·, T_1..T_n).
    let mut dphi = Vec::with_capacity(npts);
    let mut phi_cov = Vec::with_capacity(npts);
    for (j, p) in geo.points.iter().enumerate() {
        let d = constraint_derivatives(spec, p)?;
        let coeffs = coefficients_from(spec, p, &d)?;
        let forms = constraint_forms(l, p, &coeffs);
        let rows: Vec<Vec<f64>> = forms
            .iter()
            .map(|f| {
                (0..l.dim())
                    .map(|c| {
                        let e = TangentVector::basis(l, c);
                        let mut args: Vec<&[f64]> = vec![e.as_slice()];
                        args.extend(geo.tangents[j].iter().map(|t| t.as_slice()));
                        f.eval_slices(&args)
                    })
                    .collect()
            })
            .collect();
        dphi.push((0..k).map(|a| d.differential(a).to_vec()).collect::<Vec<_>>());
        phi_cov.push(rows);
    }

    let mut tangent: f64 = 0.0;
    let mut annihilated: f64 = 0.0;
    for _ in 0..samples {
        let mut w = StateVariation::random(l, npts, rng);
        let mut w2 = w.clone();
        for j in 0..npts {
            let rows: Vec<&[f64]> = dphi[j].iter().map(|r| r.as_slice()).collect();
            project_out(&rows, w.at_mut(j));
            let rows2: Vec<&[f64]> = rows.iter().copied().chain(phi_cov[j].iter().map(|r| r.as_slice())).collect();
            project_out(&rows2, w2.at_mut(j));
        }
        tangent = tangent.max(mean_pairing(&cov_p, &w).abs());
        annihilated = annihilated.max(mean_pairing(&cov_p, &w2).abs());
    }

    // Fit of the difference: k·N unknowns, k·N + samples equations.
    let rows = k * npts + samples;
    let mut a = DMatrix::zeros(rows, k * npts);
    let mut r = nalgebra::DVector::zeros(rows);
    for t in 0..rows {
        let w = StateVariation::random(l, npts, rng);
        let mut diff = 0.0;
        for j in 0..npts {
            let wj = w.at(j);
            diff += dot(&cov_p[j], wj) - dot(&cov_f[j], wj);
            for alpha in 0..k {
                a[(t, alpha * npts + j)] = dot(&phi_cov[j][alpha], wj) / npts as f64;
            }
        }
        r[t] = diff / npts as f64;
    }
    let (c, ansatz_residual) = lstsq_min_norm(&a, &r);
    let difference_scale = r.amax();
    let mut coefficient_mismatch: f64 = 0.0;
    let mut lam0_max: f64 = 0.0;
    for j in 0..npts {
        for alpha in 0..k {
            let lam = field.lam0[j * k + alpha];
            lam0_max = lam0_max.max(lam.abs());
            coefficient_mismatch = coefficient_mismatch.max((c[alpha * npts + j] + lam).abs());
        }
    }
    Ok(ConstrainedSodeCheck {
        eta,
        sode_defect,
        tangent,
        annihilated,
        ansatz_residual,
        difference_scale,
        coefficient_mismatch,
        lam0_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstraintKind, LinearTransport, Wave};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine_state(nu: usize) -> CauchyState {
        let g = PeriodicGrid::new(1, nu).unwrap();
        let y = (0..nu).map(|j| (2.0 * PI * j as f64 / nu as f64).sin()).collect();
        CauchyState::pde(g, 1, y, vec![0.0; nu]).unwrap()
    }

    #[test]
    fn constant_state_is_equilibrium() {
        let g = PeriodicGrid::new(1, 16).unwrap();
        let s = CauchyState::pde(g, 1, vec![0.7; 16], vec![0.0; 16]).unwrap();
        let f = free_sode_vector_field(&Wave::new(1.0, 1, 1), &s, SodeOptions::default()).unwrap();
        assert!(f.variation.comps.iter().enumerate().all(|(i, x)| if i % 5 == 0 { *x == 1.0 } else { x.abs() < 1e-9 }));
    }

    #[test]
    fn wave_acceleration() {
        let s = sine_state(64);
        let opts = SodeOptions { scheme: DiffScheme::Spectral, constraint_tol: None };
        let f = free_sode_vector_field(&Wave::new(1.0, 1, 1), &s, opts).unwrap();
        let l = s.layout();
        for j in 0..64 {
            let u = j as f64 / 64.0;
            let expect = -(2.0 * PI).powi(2) * (2.0 * PI * u).sin();
            assert!((f.variation.at(j)[l.v(0, 0)] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn eta_examples() {
        let s = sine_state(32);
        let l = s.layout();
        let mut w = StateVariation::zeros(l, 32);
        for j in 0..32 {
            w.at_mut(j)[0] = 1.0;
        }
        assert_eq!(tilde_eta_contract(&s, &w, DiffScheme::FourthOrder).unwrap(), 1.0);
        for j in 0..32 {
            w.at_mut(j)[0] = (2.0 * PI * j as f64 / 32.0).sin();
        }
        assert!(tilde_eta_contract(&s, &w, DiffScheme::FourthOrder).unwrap().abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = StateVariation::random(l, 32, &mut rng);
        for j in 0..32 {
            v.at_mut(j)[0] = 0.0;
            v.at_mut(j)[1] = 0.0;
        }
        assert_eq!(tilde_eta_contract(&s, &v, DiffScheme::FourthOrder).unwrap(), 0.0);
    }

    #[test]
    fn omega_antisymmetry() {
        let s = sine_state(16);
        let w = Wave::new(1.0, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = StateVariation::random(s.layout(), 16, &mut rng);
        let b = StateVariation::random(s.layout(), 16, &mut rng);
        let sc = DiffScheme::FourthOrder;
        assert!(tilde_omega_contract(&w, &s, &a, &a, sc).unwrap().abs() < 1e-14);
        let x = tilde_omega_contract(&w, &s, &a, &b, sc).unwrap();
        let y = tilde_omega_contract(&w, &s, &b, &a, sc).unwrap();
        assert!((x + y).abs() < 1e-13 && x.abs() > 1e-3);
    }

    #[test]
    fn zero_steps_is_noop() {
        let s = sine_state(16);
        let ev = evolve_free(&Wave::new(1.0, 1, 1), &s, EvolveOptions::default()).unwrap();
        assert_eq!(ev.trajectory, vec![s]);
        assert_eq!(ev.diagnostics.len(), 1);
        assert_eq!(ev.diagnostics[0].eta_gamma, 1.0);
    }

    #[test]
    fn linear_transport_is_euler_consistent() {
        let nu = 32;
        let g = PeriodicGrid::new(1, nu).unwrap();
        let y: Vec<f64> = (0..nu).map(|j| 0.1 * (2.0 * PI * j as f64 / nu as f64).sin()).collect();
        let s0 = CauchyState::holonomic(g, 1, y, vec![0.0; nu], DiffScheme::FourthOrder).unwrap();
        let spec = ConstraintSpec::chetaev(ConstraintKind::LinearTransport(LinearTransport { c: 2.0 }));
        let s = project_state_onto_constraint(&spec, &s0, DiffScheme::FourthOrder, VColumns::Auto, 1e-13).unwrap();
        let w = Wave::new(1.0, 1, 1);
        let opts = EvolveOptions { dt: 1e-3, steps: 1, integrator: Integrator::Euler, ..Default::default() };
        let ev = evolve(&w, Some(&spec), &s, opts).unwrap();
        assert!(ev.diagnostics[1].constraint_drift < 1e-12);
    }
}
