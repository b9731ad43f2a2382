//! Jet-bundle coordinates, numerical prolongation of sampled sections,
//! contact forms and connection coefficients.

use std::path::Path;

use crate::error::{Error, Result};
use crate::exterior::{Covector, Layout, TangentVector};
use crate::grid::{fourth_order_line, DiffScheme, PeriodicGrid, SpectralLine};

/// Problem dimensions: base `n + 1`, fibre rank `m`, `k` constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, k: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("fibre rank m must be at least 1".into()));
        }
        if k == 0 || k > m * (n + 1) {
            return Err(Error::InvalidArgument(format!(
                "number of constraints k = {k} must lie in 1..={}",
                m * (n + 1)
            )));
        }
        Ok(Self { n, m, k })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.n, self.m)
    }
}

/// A point `(x^μ, y^a, y^a_μ)` of J¹π. `v` is a-major, μ-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

impl JetPoint {
    pub fn new(layout: Layout, x: Vec<f64>, y: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let p = Self { x, y, v };
        p.check(layout)?;
        Ok(p)
    }

    pub fn zeros(layout: Layout) -> Self {
        Self { x: vec![0.0; layout.base()], y: vec![0.0; layout.m], v: vec![0.0; layout.jet()] }
    }

    /// Infer the layout from block lengths.
    pub fn layout(&self) -> Layout {
        Layout::new(self.x.len().saturating_sub(1), self.y.len())
    }

    pub fn check(&self, layout: Layout) -> Result<()> {
        let blocks = [
            ("jet point x block", layout.base(), self.x.len()),
            ("jet point y block", layout.m, self.y.len()),
            ("jet point v block", layout.jet(), self.v.len()),
        ];
        for (context, expected, found) in blocks {
            if expected != found {
                return Err(Error::DimensionMismatch { context, expected, found });
            }
        }
        if let Some(i) = self.to_flat().iter().position(|c| !c.is_finite()) {
            return Err(Error::Evaluation { what: "jet point coordinate".into(), index: i });
        }
        Ok(())
    }

    #[inline]
    pub fn v_at(&self, a: usize, mu: usize) -> f64 {
        self.v[a * self.x.len() + mu]
    }

    #[inline]
    pub fn v_at_mut(&mut self, a: usize, mu: usize) -> &mut f64 {
        let b = self.x.len();
        &mut self.v[a * b + mu]
    }

    /// Coordinates in [`Layout`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len() + self.y.len() + self.v.len());
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.y);
        out.extend_from_slice(&self.v);
        out
    }

    pub fn from_flat(layout: Layout, c: &[f64]) -> Result<Self> {
        if c.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                context: "flat jet point",
                expected: layout.dim(),
                found: c.len(),
            });
        }
        let (x, rest) = c.split_at(layout.base());
        let (y, v) = rest.split_at(layout.m);
        Ok(Self { x: x.to_vec(), y: y.to_vec(), v: v.to_vec() })
    }
}

/// A point of J²π restricted to what residual evaluation needs:
/// `w[a][μ][ν] = ∂²y^a/∂x^μ∂x^ν`, stored symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2Point {
    pub point: JetPoint,
    pub w: Vec<f64>,
    /// Largest asymmetry `|w[a][μ][ν] − w[a][ν][μ]|` before averaging.
    pub holonomy_defect: f64,
}

impl Jet2Point {
    /// Symmetrizes `w` and records the asymmetry.
    pub fn new(point: JetPoint, mut w: Vec<f64>) -> Result<Self> {
        let layout = point.layout();
        let b = layout.base();
        if w.len() != layout.m * b * b {
            return Err(Error::DimensionMismatch {
                context: "second jet block",
                expected: layout.m * b * b,
                found: w.len(),
            });
        }
        let mut defect: f64 = 0.0;
        for a in 0..layout.m {
            for mu in 0..b {
                for nu in mu + 1..b {
                    let (i, j) = (a * b * b + mu * b + nu, a * b * b + nu * b + mu);
                    defect = defect.max((w[i] - w[j]).abs());
                    let avg = 0.5 * (w[i] + w[j]);
                    w[i] = avg;
                    w[j] = avg;
                }
            }
        }
        Ok(Self { point, w, holonomy_defect: defect })
    }

    #[inline]
    pub fn w_at(&self, a: usize, mu: usize, nu: usize) -> f64 {
        let b = self.point.x.len();
        self.w[a * b * b + mu * b + nu]
    }
}

/// Coefficients of the horizontal projector of a connection on π₁:
/// `H_μ = ∂/∂x^μ + Γ^a_μ ∂/∂y^a + Γ^a_{μν} ∂/∂y^a_ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionCoeffs {
    pub layout: Layout,
    /// `Γ^a_μ`, a-major.
    pub gamma: Vec<f64>,
    /// `Γ^a_{μν}`, index `(a·(n+1) + μ)·(n+1) + ν`.
    pub gamma2: Vec<f64>,
}

impl ConnectionCoeffs {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            gamma: vec![0.0; layout.jet()],
            gamma2: vec![0.0; layout.jet() * layout.base()],
        }
    }

    #[inline]
    pub fn g(&self, a: usize, mu: usize) -> f64 {
        self.gamma[a * self.layout.base() + mu]
    }

    #[inline]
    pub fn g2_index(&self, a: usize, mu: usize, nu: usize) -> usize {
        let b = self.layout.base();
        (a * b + mu) * b + nu
    }

    #[inline]
    pub fn g2(&self, a: usize, mu: usize, nu: usize) -> f64 {
        self.gamma2[self.g2_index(a, mu, nu)]
    }

    #[inline]
    pub fn g2_mut(&mut self, a: usize, mu: usize, nu: usize) -> &mut f64 {
        let i = self.g2_index(a, mu, nu);
        &mut self.gamma2[i]
    }

    /// The horizontal lift `H_μ` of `∂/∂x^μ`.
    pub fn horizontal_lift(&self, mu: usize) -> TangentVector {
        let l = self.layout;
        let mut h = TangentVector::basis(l, l.x(mu));
        let c = h.as_mut_slice();
        for a in 0..l.m {
            c[l.y(a)] = self.g(a, mu);
            for nu in 0..l.base() {
                c[l.v(a, nu)] = self.g2(a, mu, nu);
            }
        }
        h
    }

    /// `h(u) = Σ_μ dx^μ(u) H_μ`.
    pub fn horizontal_part(&self, u: &TangentVector) -> TangentVector {
        let l = self.layout;
        let mut out = TangentVector::zeros(l);
        for mu in 0..l.base() {
            let c = u.dx()[mu];
            if c != 0.0 {
                out = out.axpy(c, &self.horizontal_lift(mu));
            }
        }
        out
    }

    /// `max |Γ^a_{μν} − Γ^a_{νμ}|`; zero for a holonomic connection.
    pub fn asymmetry(&self) -> f64 {
        let l = self.layout;
        let mut worst: f64 = 0.0;
        for a in 0..l.m {
            for mu in 0..l.base() {
                for nu in mu + 1..l.base() {
                    worst = worst.max((self.g2(a, mu, nu) - self.g2(a, nu, mu)).abs());
                }
            }
        }
        worst
    }
}

/// `θ^a(u) = u.dy[a] − Σ_μ v[a][μ] u.dx[μ]`.
pub fn contact_eval(p: &JetPoint, u: &TangentVector) -> Result<Vec<f64>> {
    let l = u.layout();
    p.check(l)?;
    Ok((0..l.m)
        .map(|a| u.dy()[a] - (0..l.base()).map(|mu| p.v_at(a, mu) * u.dx()[mu]).sum::<f64>())
        .collect())
}

/// The contact form `θ^a = dy^a − v[a][μ] dx^μ` at `p` as a dense covector.
pub fn contact_covector(layout: Layout, p: &JetPoint, a: usize) -> Covector {
    let mut c = vec![0.0; layout.dim()];
    c[layout.y(a)] = 1.0;
    for mu in 0..layout.base() {
        c[layout.x(mu)] = -p.v_at(a, mu);
    }
    Covector::dense(c)
}

/// `max_{a,μ} |Γ^a_μ − v[a][μ]|`, cross-checked against `max |θ^a(H_μ)|`.
pub fn semiholonomic_residual(c: &ConnectionCoeffs, p: &JetPoint) -> f64 {
    let l = c.layout;
    let direct = c
        .gamma
        .iter()
        .zip(&p.v)
        .map(|(g, v)| (g - v).abs())
        .fold(0.0, f64::max);
    let via_contact = (0..l.base())
        .flat_map(|mu| contact_eval(p, &c.horizontal_lift(mu)).unwrap_or_default())
        .map(f64::abs)
        .fold(0.0, f64::max);
    debug_assert!(
        (direct - via_contact).abs() <= 1e-14 * (1.0 + direct),
        "contact cross-check disagrees: {direct} vs {via_contact}"
    );
    direct.max(via_contact)
}

/// Analytic time derivatives supplied alongside the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDerivatives {
    /// `∂y/∂t`, same shape as the samples.
    pub ydot: Vec<f64>,
    /// `∂²y/∂t²`, same shape as the samples.
    pub yddot: Vec<f64>,
}

/// Samples of a section on `times × [0,1)ⁿ` with uniform periodic spatial
/// spacing. `values[(s·P + j)·m + a]` is `y^a` at time slice `s`, point `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionGrid {
    pub m: usize,
    pub grid: PeriodicGrid,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub time_derivatives: Option<TimeDerivatives>,
}

impl SectionGrid {
    pub fn new(m: usize, grid: PeriodicGrid, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = Self { m, grid, times, values, time_derivatives: None };
        s.validate()?;
        Ok(s)
    }

    /// Sample `f(t, u) -> y` on the grid.
    pub fn from_fn(
        m: usize,
        grid: PeriodicGrid,
        times: Vec<f64>,
        f: impl Fn(f64, &[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(times.len() * grid.len() * m);
        for &t in &times {
            for j in 0..grid.len() {
                let y = f(t, &grid.coords(j));
                if y.len() != m {
                    return Err(Error::DimensionMismatch {
                        context: "section sample",
                        expected: m,
                        found: y.len(),
                    });
                }
                values.extend(y);
            }
        }
        Self::new(m, grid, times, values)
    }

    /// Attach analytic `∂_t y` and `∂²_t y` (same sampling as the values).
    pub fn with_time_derivatives(mut self, ydot: Vec<f64>, yddot: Vec<f64>) -> Result<Self> {
        for (context, v) in [("ydot samples", &ydot), ("yddot samples", &yddot)] {
            if v.len() != self.values.len() {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: self.values.len(),
                    found: v.len(),
                });
            }
        }
        self.time_derivatives = Some(TimeDerivatives { ydot, yddot });
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.dims
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.grid.dims, self.m)
    }

    fn validate(&self) -> Result<()> {
        let expected = self.times.len() * self.grid.len() * self.m;
        if self.values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "section samples",
                expected,
                found: self.values.len(),
            });
        }
        if self.times.is_empty() {
            return Err(Error::InvalidArgument("section needs at least one time slice".into()));
        }
        check_uniform(&self.times, "time")?;
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { what: "section sample".into(), index: i });
        }
        for s in 0..self.times.len() {
            for a in 0..self.m {
                let field = self.component(s, a);
                for dir in 0..self.grid.dims {
                    self.check_periodic(&field, dir, a)?;
                }
            }
        }
        Ok(())
    }

    /// Reject data whose wrap-around jump is out of proportion to the
    /// interior variation, i.e. a section that is not periodic.
    fn check_periodic(&self, field: &[f64], dir: usize, a: usize) -> Result<()> {
        let nu = self.grid.nu;
        let s = self.grid.stride(dir);
        for start in (0..self.grid.len()).filter(|j| (j / s) % nu == 0) {
            let at = |i: usize| field[start + i * s];
            let interior = (1..nu).map(|i| (at(i) - at(i - 1)).abs()).fold(0.0, f64::max);
            let wrap = (at(0) - at(nu - 1)).abs();
            if wrap > 8.0 * interior + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "section component y{} is not periodic along direction {}: wrap jump {wrap:e} vs interior step {interior:e}",
                    a + 1,
                    dir + 1
                )));
            }
        }
        Ok(())
    }

    /// Scalar field `y^a` at slice `s`.
    pub fn component(&self, s: usize, a: usize) -> Vec<f64> {
        let p = self.grid.len();
        (0..p).map(|j| self.values[(s * p + j) * self.m + a]).collect()
    }

    fn component_of(&self, data: &[f64], s: usize, a: usize) -> Vec<f64> {
        let p = self.grid.len();
        (0..p).map(|j| data[(s * p + j) * self.m + a]).collect()
    }

    /// Load an n = 1 section from CSV with header `t,u,y1..ym`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "t" || &headers[1] != "u" {
            return Err(Error::InvalidArgument("section CSV header must be `t,u,y1..ym`".into()));
        }
        let m = headers.len() - 2;
        for (a, h) in headers.iter().skip(2).enumerate() {
            if h != format!("y{}", a + 1) {
                return Err(Error::InvalidArgument(format!("unexpected column `{h}` in section CSV")));
            }
        }
        let mut rows: Vec<(f64, f64, Vec<f64>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("bad number `{}` in section CSV: {e}", &rec[i]))
                })
            };
            let y = (2..2 + m).map(parse).collect::<Result<Vec<_>>>()?;
            rows.push((parse(0)?, parse(1)?, y));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut us: Vec<Vec<f64>> = Vec::new();
        let mut values = Vec::with_capacity(rows.len() * m);
        for (t, u, y) in rows {
            if times.last() != Some(&t) {
                times.push(t);
                us.push(Vec::new());
            }
            us.last_mut().expect("slice exists").push(u);
            values.extend(y);
        }
        let nu = us.first().map_or(0, Vec::len);
        if us.iter().any(|u| u.len() != nu) {
            return Err(Error::InvalidArgument("time slices have differing point counts".into()));
        }
        for u in &us {
            for (j, &uj) in u.iter().enumerate() {
                if (uj - j as f64 / nu as f64).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "non-uniform spatial grid: u[{j}] = {uj}, expected {}",
                        j as f64 / nu as f64
                    )));
                }
            }
        }
        Self::new(m, PeriodicGrid::new(1, nu)?, times, values)
    }

    /// Write an n = 1 section as CSV with header `t,u,y1..ym`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.grid.dims != 1 {
            return Err(Error::InvalidArgument("CSV export supports one spatial direction".into()));
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "u".to_string()];
        header.extend((1..=self.m).map(|a| format!("y{a}")));
        w.write_record(&header)?;
        let p = self.grid.len();
        for (s, t) in self.times.iter().enumerate() {
            for j in 0..p {
                let mut row = vec![format!("{t:e}"), format!("{:e}", self.grid.coords(j)[0])];
                row.extend((0..self.m).map(|a| format!("{:e}", self.values[(s * p + j) * self.m + a])));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_uniform(xs: &[f64], what: &str) -> Result<()> {
    if xs.len() < 3 {
        return Ok(());
    }
    let h = xs[1] - xs[0];
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("{what} samples must be increasing")));
    }
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!("non-uniform {what} grid")));
        }
    }
    Ok(())
}

/// Weights of 5-point 4th-order first-derivative stencils, scaled by 12h,
/// for offsets 0..5 from the left end at positions 0, 1, 2.
const D1_ONE_SIDED: [[f64; 5]; 3] = [
    [-25.0, 48.0, -36.0, 16.0, -3.0],
    [-3.0, -10.0, 18.0, -6.0, 1.0],
    [1.0, -8.0, 0.0, 8.0, -1.0],
];

/// Same for second derivatives, scaled by 12h².
const D2_ONE_SIDED: [[f64; 5]; 3] = [
    [35.0, -104.0, 114.0, -56.0, 11.0],
    [11.0, -20.0, 6.0, 4.0, -1.0],
    [-1.0, 16.0, -30.0, 16.0, -1.0],
];

/// Stencil over time slices for a derivative at slice `s`: returns the five
/// slice indices and weights (already divided by the spacing power).
fn time_stencil(nt: usize, s: usize, h: f64, order: u32) -> Result<Vec<(usize, f64)>> {
    if nt < 5 {
        return Err(Error::InvalidArgument(format!(
            "temporal differences need at least 5 time slices (got {nt}); supply analytic time derivatives instead"
        )));
    }
    let (table, scale) = match order {
        1 => (&D1_ONE_SIDED, 12.0 * h),
        _ => (&D2_ONE_SIDED, 12.0 * h * h),
    };
    // Distance from the nearest end decides the stencil row.
    let (row, start, mirrored) = if s >= 2 && s + 2 < nt {
        (2, s - 2, false)
    } else if s < 2 {
        (s, 0, false)
    } else {
        (nt - 1 - s, nt - 5, true)
    };
    let sign = if mirrored && order == 1 { -1.0 } else { 1.0 };
    Ok((0..5)
        .map(|i| {
            let (idx, wgt) = if mirrored {
                (start + 4 - i, table[row][i])
            } else {
                (start + i, table[row][i])
            };
            (idx, sign * wgt / scale)
        })
        .collect())
}

/// Extract the line through `j` along `dir`, returning it and `j`'s position.
fn line_through(grid: &PeriodicGrid, f: &[f64], j: usize, dir: usize) -> (Vec<f64>, usize) {
    let pos = grid.multi_index(j)[dir];
    let start = grid.shifted(j, dir, -(pos as isize));
    let s = grid.stride(dir);
    ((0..grid.nu).map(|i| f[start + i * s]).collect(), pos)
}

fn line_derivative(
    grid: &PeriodicGrid,
    f: &[f64],
    j: usize,
    dir: usize,
    order: u32,
    scheme: DiffScheme,
    spectral: &Option<SpectralLine>,
) -> f64 {
    let (line, pos) = line_through(grid, f, j, dir);
    let d = match (scheme, spectral) {
        (DiffScheme::Spectral, Some(sp)) => sp.derivative(&line, order),
        _ => fourth_order_line(&line, grid.h(), order),
    };
    d[pos]
}

/// First and second jets of a sampled section at `(slice, point)`.
///
/// Spatial derivatives use the chosen periodic scheme; temporal ones come
/// from the attached analytic derivatives or from 5-point differences over
/// the time slices (one-sided near the ends).
pub fn prolong_section(
    section: &SectionGrid,
    slice: usize,
    point: usize,
    scheme: DiffScheme,
) -> Result<Jet2Point> {
    let grid = &section.grid;
    let (n, m) = (section.n(), section.m);
    let b = n + 1;
    if slice >= section.times.len() || point >= grid.len() {
        return Err(Error::InvalidArgument(format!(
            "target (slice {slice}, point {point}) outside the section grid"
        )));
    }
    let spectral = match scheme {
        DiffScheme::Spectral => Some(SpectralLine::new(grid.nu)),
        DiffScheme::FourthOrder => None,
    };
    let d = |f: &[f64], j: usize, dir: usize, order: u32| {
        line_derivative(grid, f, j, dir, order, scheme, &spectral)
    };
    let p_count = grid.len();
    let nt = section.times.len();
    let ht = if nt > 1 { section.times[1] - section.times[0] } else { 1.0 };

    let mut x = vec![section.times[slice]];
    x.extend(grid.coords(point));
    let y: Vec<f64> = (0..m).map(|a| section.values[(slice * p_count + point) * m + a]).collect();
    let mut v = vec![0.0; m * b];
    let mut w = vec![0.0; m * b * b];
    let widx = |a: usize, mu: usize, nu: usize| a * b * b + mu * b + nu;

    for a in 0..m {
        let field = section.component(slice, a);
        // Spatial block.
        for i in 0..n {
            v[a * b + 1 + i] = d(&field, point, i, 1);
            w[widx(a, 1 + i, 1 + i)] = d(&field, point, i, 2);
            for k in 0..n {
                if k != i {
                    let dk: Vec<f64> = grid.d1(&field, k, scheme);
                    w[widx(a, 1 + i, 1 + k)] = d(&dk, point, i, 1);
                }
            }
        }
        // Temporal block.
        match &section.time_derivatives {
            Some(td) => {
                let ydot = section.component_of(&td.ydot, slice, a);
                v[a * b] = ydot[point];
                w[widx(a, 0, 0)] = td.yddot[(slice * p_count + point) * m + a];
                for i in 0..n {
                    let val = d(&ydot, point, i, 1);
                    w[widx(a, 0, 1 + i)] = val;
                    w[widx(a, 1 + i, 0)] = val;
                }
            }
            None => {
                let st1 = time_stencil(nt, slice, ht, 1)?;
                let st2 = time_stencil(nt, slice, ht, 2)?;
                let mut ydot = vec![0.0; p_count];
                for &(s, c) in &st1 {
                    let f = section.component(s, a);
                    for (acc, fj) in ydot.iter_mut().zip(&f) {
                        *acc += c * fj;
                    }
                }
                v[a * b] = ydot[point];
                w[widx(a, 0, 0)] = st2
                    .iter()
                    .map(|&(s, c)| c * section.values[(s * p_count + point) * m + a])
                    .sum();
                for i in 0..n {
                    // ∂_i ∂_t y and ∂_t ∂_i y; their difference is reported as
                    // holonomy defect after symmetrization.
                    w[widx(a, 1 + i, 0)] = d(&ydot, point, i, 1);
                    w[widx(a, 0, 1 + i)] = st1
                        .iter()
                        .map(|&(s, c)| c * d(&section.component(s, a), point, i, 1))
                        .sum();
                }
            }
        }
    }
    let p = JetPoint { x, y, v };
    Jet2Point::new(p, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn times(k: usize, dt: f64) -> Vec<f64> {
        (0..k).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn constant_section_has_zero_jets() {
        let g = PeriodicGrid::new(1, 16).unwrap();
        let s = SectionGrid::from_fn(2, g, times(5, 0.1), |_, _| vec![3.0, -1.0]).unwrap();
        let q = prolong_section(&s, 2, 5, DiffScheme::FourthOrder).unwrap();
        assert!(q.point.v.iter().all(|x| x.abs() < 1e-12));
        assert!(q.w.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn non_periodic_section_rejected() {
        let g = PeriodicGrid::new(1, 64).unwrap();
        let err = SectionGrid::from_fn(1, g, vec![0.0], |_, u| vec![u[0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn non_uniform_times_rejected() {
        let g = PeriodicGrid::new(1, 8).unwrap();
        let r = SectionGrid::from_fn(1, g, vec![0.0, 0.1, 0.3], |_, _| vec![0.0]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sine_derivatives() {
        let g = PeriodicGrid::new(1, 64).unwrap();
        let s = SectionGrid::from_fn(1, g.clone(), vec![0.0], |_, u| vec![(2.0 * PI * u[0]).sin()])
            .unwrap()
            .with_time_derivatives(vec![0.0; 64], vec![0.0; 64])
            .unwrap();
        let mut worst4: f64 = 0.0;
        let mut worst_sp: f64 = 0.0;
        for j in 0..64 {
            let u = g.coords(j)[0];
            let exact = 2.0 * PI * (2.0 * PI * u).cos();
            let q4 = prolong_section(&s, 0, j, DiffScheme::FourthOrder).unwrap();
            let qs = prolong_section(&s, 0, j, DiffScheme::Spectral).unwrap();
            worst4 = worst4.max((q4.point.v_at(0, 1) - exact).abs());
            worst_sp = worst_sp.max((qs.point.v_at(0, 1) - exact).abs());
        }
        // Leading truncation term (2π)⁵h⁴/30 ≈ 1.4e-5 for N = 64.
        assert!(worst4 < 2e-5, "{worst4}");
        assert!(worst_sp < 1e-6, "{worst_sp}");
    }

    #[test]
    fn temporal_polynomials_are_differentiated_exactly() {
        // Cubic in t times a resolved spatial mode; 5-point time stencils
        // (central and one-sided) are exact on cubics.
        let g = PeriodicGrid::new(1, 16).unwrap();
        let f = |t: f64| t * t * t - 0.5 * t * t + 2.0 * t;
        let s = SectionGrid::from_fn(1, g.clone(), times(7, 0.05), |t, u| {
            vec![f(t) * (2.0 * PI * u[0]).cos()]
        })
        .unwrap();
        for slice in 0..7 {
            let t = slice as f64 * 0.05;
            let j = 3;
            let c = (2.0 * PI * g.coords(j)[0]).cos();
            let q = prolong_section(&s, slice, j, DiffScheme::Spectral).unwrap();
            assert!((q.point.v_at(0, 0) - (3.0 * t * t - t + 2.0) * c).abs() < 1e-9);
            assert!((q.w_at(0, 0, 0) - (6.0 * t - 1.0) * c).abs() < 1e-8);
            assert!(q.holonomy_defect < 1e-9);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let g = PeriodicGrid::new(1, 8).unwrap();
        let s = SectionGrid::from_fn(2, g, times(3, 0.5), |t, u| {
            vec![(2.0 * PI * u[0]).sin() + t, (2.0 * PI * u[0]).cos()]
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        s.write_csv(&path).unwrap();
        let r = SectionGrid::read_csv(&path).unwrap();
        assert_eq!(r.times, s.times);
        assert!(r.values.iter().zip(&s.values).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn semiholonomic_residual_reports_perturbation() {
        let l = Layout::new(1, 2);
        let p = JetPoint::new(l, vec![0.0, 0.0], vec![1.0, 2.0], vec![0.3, -0.2, 1.1, 0.7]).unwrap();
        let mut c = ConnectionCoeffs::zeros(l);
        c.gamma = p.v.clone();
        assert_eq!(semiholonomic_residual(&c, &p), 0.0);
        c.gamma[2] += 0.5;
        assert!((semiholonomic_residual(&c, &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn contact_forms_vanish_on_jet_directions() {
        let l = Layout::new(1, 2);
        let p = JetPoint::new(l, vec![0.0, 0.0], vec![1.0, 2.0], vec![0.3, -0.2, 1.1, 0.7]).unwrap();
        for mu in 0..2 {
            let mut u = TangentVector::basis(l, l.x(mu));
            for a in 0..2 {
                u.as_mut_slice()[l.y(a)] = p.v_at(a, mu);
            }
            assert!(contact_eval(&p, &u).unwrap().iter().all(|x| x.abs() < 1e-15));
        }
        let th = contact_eval(&p, &TangentVector::basis(l, l.y(1))).unwrap();
        assert_eq!(th, vec![0.0, 1.0]);
    }
}
