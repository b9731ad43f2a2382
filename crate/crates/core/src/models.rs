//! Built-in Lagrangians and constraints, and the name-keyed registries the
//! CLI selects from.

use std::collections::BTreeMap;

use crate::constraint::ConstraintFn;
use crate::error::{Error, Result};
use crate::exterior::Layout;
use crate::fluid::{FluidModel, FluidParams, Incompressibility};
use crate::lagrangian::{JetVars, Lagrangian};
use crate::scalar::Scalar;

/// `L = ½ Σ_a [(y^a_0)² − c² Σ_i (y^a_i)²]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub c: f64,
    pub n: usize,
    pub m: usize,
}

impl Wave {
    pub fn new(c: f64, n: usize, m: usize) -> Self {
        Self { c, n, m }
    }
}

impl Lagrangian for Wave {
    fn layout(&self) -> Layout {
        Layout::new(self.n, self.m)
    }

    fn eval<S: Scalar>(&self, p: &JetVars<'_, S>) -> S {
        let c2 = self.c * self.c;
        let mut acc = S::zero();
        for a in 0..self.m {
            let v0 = p.v(a, 0);
            acc += v0 * v0;
            for i in 1..=self.n {
                let vi = p.v(a, i);
                acc -= vi * vi * c2;
            }
        }
        acc * 0.5
    }

    fn depends_on_x(&self) -> bool {
        false
    }

    fn depends_on_y(&self) -> bool {
        false
    }
}

/// `L = ½ Σ (y^a_μ)² + g Σ_a y^a y^a_0 − ½ M² Σ_a (y^a)² + d·x⁰ Σ_a y^a_0`.
///
/// The coupling, mass and drive terms exercise the `y`- and
/// `x`-dependent parts of the field equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub n: usize,
    pub m: usize,
    pub coupling: f64,
    pub mass: f64,
    pub drive: f64,
}

impl Lagrangian for Quadratic {
    fn layout(&self) -> Layout {
        Layout::new(self.n, self.m)
    }

    fn eval<S: Scalar>(&self, p: &JetVars<'_, S>) -> S {
        let mut acc = S::zero();
        for &v in p.v {
            acc += v * v * 0.5;
        }
        for a in 0..self.m {
            let (y, v0) = (p.y[a], p.v(a, 0));
            acc += y * v0 * self.coupling - y * y * (0.5 * self.mass * self.mass)
                + p.x[0] * v0 * self.drive;
        }
        acc
    }

    fn depends_on_x(&self) -> bool {
        self.drive != 0.0
    }
}

/// Registry of built-in Lagrangians.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Wave(Wave),
    Quadratic(Quadratic),
    Fluid(FluidModel),
}

impl Lagrangian for Model {
    fn layout(&self) -> Layout {
        match self {
            Model::Wave(w) => w.layout(),
            Model::Quadratic(q) => q.layout(),
            Model::Fluid(f) => f.layout(),
        }
    }

    fn eval<S: Scalar>(&self, p: &JetVars<'_, S>) -> S {
        match self {
            Model::Wave(w) => w.eval(p),
            Model::Quadratic(q) => q.eval(p),
            Model::Fluid(f) => f.eval(p),
        }
    }

    fn depends_on_x(&self) -> bool {
        match self {
            Model::Wave(w) => w.depends_on_x(),
            Model::Quadratic(q) => q.depends_on_x(),
            Model::Fluid(f) => f.depends_on_x(),
        }
    }

    fn depends_on_y(&self) -> bool {
        match self {
            Model::Wave(w) => w.depends_on_y(),
            Model::Quadratic(q) => q.depends_on_y(),
            Model::Fluid(f) => f.depends_on_y(),
        }
    }
}

/// Pulls typed parameters out of a name → value map, rejecting leftovers.
struct Params<'a> {
    owner: &'a str,
    map: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn new(owner: &'a str, map: &BTreeMap<String, f64>) -> Self {
        Self { owner, map: map.clone() }
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.map.remove(key).unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{}: parameter `{key}` must be finite", self.owner)));
        }
        Ok(v)
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize> {
        let v = self.real(key, default as f64)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{}: parameter `{key}` must be a non-negative integer",
                self.owner
            )));
        }
        Ok(v as usize)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::InvalidArgument(format!("{}: unknown parameter `{k}`", self.owner))),
            None => Ok(()),
        }
    }
}

impl Model {
    pub const NAMES: [&'static str; 3] = ["wave", "quadratic", "fluid"];

    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Params::new(name, params);
        let model = match name {
            "wave" => {
                let w = Wave { c: p.real("c", 1.0)?, n: p.count("n", 1)?, m: p.count("m", 1)? };
                if w.m == 0 {
                    return Err(Error::InvalidArgument("wave: m must be at least 1".into()));
                }
                Model::Wave(w)
            }
            "quadratic" => {
                let q = Quadratic {
                    n: p.count("n", 1)?,
                    m: p.count("m", 1)?,
                    coupling: p.real("coupling", 0.0)?,
                    mass: p.real("mass", 0.0)?,
                    drive: p.real("drive", 0.0)?,
                };
                if q.m == 0 {
                    return Err(Error::InvalidArgument("quadratic: m must be at least 1".into()));
                }
                Model::Quadratic(q)
            }
            "fluid" => {
                let d = FluidParams::default();
                let fp = FluidParams {
                    rho: p.real("rho", d.rho)?,
                    kappa: p.real("kappa", d.kappa)?,
                    beta: p.real("beta", d.beta)?,
                    mu: p.real("mu", d.mu)?,
                };
                Model::Fluid(FluidModel::new(fp)?)
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown model `{other}` (known: {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        p.finish()?;
        Ok(model)
    }
}

/// `φ = y_0 − c·y_1` on the scalar 1+1 bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTransport {
    pub c: f64,
}

/// `φ = y_0 − c·y_1 − e·y_1³`: a transport constraint whose differential
/// varies along the constraint set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicTransport {
    pub c: f64,
    pub e: f64,
}

/// Two coupled constraints on a 2-component 1+1 bundle:
/// `φ₀ = y⁰_0 − a·y¹_1 + e·(y⁰_1)²`, `φ₁ = y¹_0 + b·y⁰_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledPair {
    pub a: f64,
    pub b: f64,
    pub e: f64,
}

impl Default for CoupledPair {
    fn default() -> Self {
        Self { a: 2.0, b: 0.5, e: 0.3 }
    }
}

/// Registry of built-in constraints.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    LinearTransport(LinearTransport),
    CubicTransport(CubicTransport),
    CoupledPair(CoupledPair),
    Incompressibility(Incompressibility),
}

impl ConstraintFn for ConstraintKind {
    fn layout(&self) -> Layout {
        match self {
            ConstraintKind::LinearTransport(_) | ConstraintKind::CubicTransport(_) => Layout::new(1, 1),
            ConstraintKind::CoupledPair(_) => Layout::new(1, 2),
            ConstraintKind::Incompressibility(i) => i.layout(),
        }
    }

    fn count(&self) -> usize {
        match self {
            ConstraintKind::CoupledPair(_) => 2,
            _ => 1,
        }
    }

    fn eval<S: Scalar>(&self, alpha: usize, p: &JetVars<'_, S>) -> S {
        match self {
            ConstraintKind::LinearTransport(t) => p.v(0, 0) - p.v(0, 1) * t.c,
            ConstraintKind::CubicTransport(t) => {
                let v1 = p.v(0, 1);
                p.v(0, 0) - v1 * t.c - v1.powi(3) * t.e
            }
            ConstraintKind::CoupledPair(c) => match alpha {
                0 => p.v(0, 0) - p.v(1, 1) * c.a + p.v(0, 1) * p.v(0, 1) * c.e,
                _ => p.v(1, 0) + p.v(0, 1) * c.b,
            },
            ConstraintKind::Incompressibility(i) => i.eval(alpha, p),
        }
    }
}

impl ConstraintKind {
    pub const NAMES: [&'static str; 4] =
        ["linear-transport", "cubic-transport", "coupled-pair", "incompressibility"];

    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Params::new(name, params);
        let kind = match name {
            "linear-transport" => ConstraintKind::LinearTransport(LinearTransport { c: p.real("c", 2.0)? }),
            "cubic-transport" => ConstraintKind::CubicTransport(CubicTransport {
                c: p.real("c", 2.0)?,
                e: p.real("e", 0.5)?,
            }),
            "coupled-pair" => {
                let d = CoupledPair::default();
                ConstraintKind::CoupledPair(CoupledPair {
                    a: p.real("a", d.a)?,
                    b: p.real("b", d.b)?,
                    e: p.real("e", d.e)?,
                })
            }
            "incompressibility" => ConstraintKind::Incompressibility(Incompressibility),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown constraint `{other}` (known: {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        p.finish()?;
        Ok(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        let mut params = BTreeMap::new();
        params.insert("c".to_string(), 2.0);
        assert_eq!(Model::from_name("wave", &params).unwrap(), Model::Wave(Wave::new(2.0, 1, 1)));
        assert!(Model::from_name("nope", &BTreeMap::new()).is_err());
        params.insert("bogus".to_string(), 1.0);
        assert!(Model::from_name("wave", &params).is_err());
        assert!(ConstraintKind::from_name("linear-transport", &BTreeMap::new()).is_ok());
        assert!(ConstraintKind::from_name("incompressibility", &BTreeMap::new()).is_ok());
    }
}
