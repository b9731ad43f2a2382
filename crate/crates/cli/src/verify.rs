//! `verify`: the pointwise identities at seeded random points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhfields::cauchy::{project_point_onto_constraint, VColumns};
use nhfields::constraint::{coefficients_from, constraint_derivatives, ConstraintSpec};
use nhfields::ddw::{nh_ddw_residual, project_connection, solve_constrained_ddw, solve_free_ddw};
use nhfields::fluid::random_fluid_point;
use nhfields::lagrangian::{derivative_bundle, hessian_regularity, RegularityThresholds};
use nhfields::models::{ConstraintKind, Model};
use nhfields::projector::{build_projectors, compatibility_matrix, solve_zeta_linear, zeta_form_residual};
use nhfields::{Error, JetPoint, Lagrangian};

use crate::config::Scenario;
use crate::report::{Check, Obj};

/// Running maximum of one named quantity, remembering the first error.
struct Acc {
    name: &'static str,
    tol: f64,
    worst: f64,
    error: Option<String>,
    used: bool,
}

impl Acc {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, tol, worst: 0.0, error: None, used: false }
    }

    fn add(&mut self, v: f64) {
        self.used = true;
        self.worst = if v.is_nan() { f64::NAN } else { self.worst.max(v) };
    }

    fn fail(&mut self, point: usize, e: &Error) {
        self.used = true;
        if self.error.is_none() {
            self.error = Some(format!("point {point}: {e}"));
        }
    }

    fn check(&self) -> Option<Check> {
        if !self.used {
            return None;
        }
        Some(match &self.error {
            Some(d) => Check { name: self.name.into(), value: self.worst, tolerance: self.tol, pass: false, detail: Some(d.clone()) },
            None => Check::at_most(self.name, self.worst, self.tol),
        })
    }
}

fn random_point(model: &Model, rng: &mut ChaCha8Rng) -> JetPoint {
    if let Model::Fluid(_) = model {
        return random_fluid_point(rng, 0.3);
    }
    let l = model.layout();
    let mut p = JetPoint::zeros(l);
    for x in p.x.iter_mut().chain(p.y.iter_mut()).chain(p.v.iter_mut()) {
        *x = rng.random_range(-1.0..1.0);
    }
    p
}

pub fn run(sc: &Scenario) -> (Vec<Check>, Obj) {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let model = &sc.model;
    let l = model.layout();
    let mut regularity = Acc::new("regularity", 0.0);
    let mut sampling = Acc::new("constraint_sampling", 0.0);
    let mut zeta = Acc::new("zeta_form", sc.tol("zeta_form"));
    let mut compat = Acc::new("compatibility", 0.0);
    let mut proj = Acc::new("projector", sc.tol("projector"));
    let mut free_ddw = Acc::new("ddw_form", sc.tol("ddw_form"));
    let mut semi = Acc::new("semiholonomic", sc.tol("semiholonomic"));
    let mut nh_form = Acc::new("nh_ddw_form", sc.tol("nh_ddw_form"));
    let mut tangency = Acc::new("tangency", sc.tol("tangency"));
    let mut force = Acc::new("multiplier_force", sc.tol("multiplier_force"));
    let mut direct_form = Acc::new("constrained_solve_form", sc.tol("nh_ddw_form"));
    let mut direct_tan = Acc::new("constrained_solve_tangency", sc.tol("tangency"));
    let mut min_det: f64 = f64::INFINITY;
    let mut max_cond: f64 = 0.0;
    let mut min_compat: f64 = f64::INFINITY;

    for j in 0..sc.config.points {
        let raw = random_point(model, &mut rng);
        let p = match &sc.constraint {
            None => raw,
            Some(spec) => match project_point_onto_constraint(spec, &raw, VColumns::Auto, 1e-13) {
                Ok(p) => {
                    sampling.add(0.0);
                    p
                }
                Err(e) => {
                    sampling.fail(j, &e);
                    continue;
                }
            },
        };
        let bundle = match derivative_bundle(model, &p) {
            Ok(b) => b,
            Err(e) => {
                regularity.fail(j, &e);
                continue;
            }
        };
        let reg = hessian_regularity(&bundle, RegularityThresholds::default());
        min_det = min_det.min(reg.det.abs());
        max_cond = max_cond.max(reg.cond);
        if !reg.regular {
            regularity.fail(j, &Error::Regularity { det: reg.det, cond: reg.cond });
            continue;
        }
        regularity.add(0.0);

        // Free problem: minimum-norm and a randomly pinned solution.
        if let Err(e) = solve_free_ddw(model, &p, None).map(|s| {
            free_ddw.add(s.residuals.ddw_form);
            semi.add(s.residuals.semiholonomic);
        }) {
            free_ddw.fail(j, &e);
        }
        let fixed: Vec<f64> = (0..l.m * l.n * l.base()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pinned = match solve_free_ddw(model, &p, Some(&fixed)) {
            Ok(s) => {
                free_ddw.add(s.residuals.ddw_form);
                semi.add(s.residuals.semiholonomic);
                s
            }
            Err(e) => {
                free_ddw.fail(j, &e);
                continue;
            }
        };

        let Some(spec) = &sc.constraint else { continue };
        // Failures are recorded in the accumulators.
        let _ = constrained_point(
            spec,
            model,
            j,
            &p,
            &pinned,
            &mut rng,
            [&mut zeta, &mut compat, &mut proj, &mut nh_form, &mut tangency, &mut force, &mut direct_form, &mut direct_tan],
            &mut min_compat,
        );
    }

    let accs = [
        &sampling, &regularity, &zeta, &compat, &proj, &free_ddw, &semi, &nh_form, &tangency, &force, &direct_form,
        &direct_tan,
    ];
    let checks: Vec<Check> = accs.iter().filter_map(|a| a.check()).collect();
    let mut summary = Obj::new().set("points", sc.config.points).set("min_abs_hessian_det", min_det).set("max_hessian_cond", max_cond);
    if sc.constraint.is_some() {
        summary.push("min_relative_compatibility_det", min_compat);
    }
    (checks, summary)
}

#[allow(clippy::too_many_arguments)]
fn constrained_point(
    spec: &ConstraintSpec<ConstraintKind>,
    model: &Model,
    j: usize,
    p: &JetPoint,
    pinned: &nhfields::ddw::DdwSolution,
    rng: &mut ChaCha8Rng,
    accs: [&mut Acc; 8],
    min_compat: &mut f64,
) -> Result<(), ()> {
    let [zeta, compat, proj, nh_form, tangency, force, direct_form, direct_tan] = accs;
    let bundle = derivative_bundle(model, p).map_err(|e| zeta.fail(j, &e))?;
    let d = constraint_derivatives(spec, p).map_err(|e| zeta.fail(j, &e))?;
    let c = coefficients_from(spec, p, &d).map_err(|e| zeta.fail(j, &e))?;
    let zb = solve_zeta_linear(&bundle, &c).map_err(|e| zeta.fail(j, &e))?;
    let r = zeta_form_residual(&bundle, &zb, &c, 50, rng).map_err(|e| zeta.fail(j, &e))?;
    zeta.add(r);
    let cm = compatibility_matrix(&zb, &d);
    *min_compat = min_compat.min(cm.det.abs() / cm.scale.max(f64::MIN_POSITIVE));
    if !cm.compatible {
        compat.fail(j, &Error::Incompatible { det: cm.det, point: None });
        return Err(());
    }
    compat.add(0.0);
    let pp = build_projectors(&zb, &d).map_err(|e| proj.fail(j, &e))?;
    proj.add(pp.invariants.worst() / (pp.invariants.scale * pp.invariants.scale));
    let projected = project_connection(pinned, &pp, &zb, &d).map_err(|e| nh_form.fail(j, &e))?;
    let r = nh_ddw_residual(model, spec, &projected, p).map_err(|e| nh_form.fail(j, &e))?;
    nh_form.add(r.form_residual);
    tangency.add(r.tangency_residual);
    force.add(r.force_mismatch);
    let direct = solve_constrained_ddw(model, spec, p, None).map_err(|e| direct_form.fail(j, &e))?;
    let r = nh_ddw_residual(model, spec, &direct, p).map_err(|e| direct_form.fail(j, &e))?;
    direct_form.add(r.form_residual.max(r.residual_at_solution_lam));
    direct_tan.add(r.tangency_residual);
    Ok(())
}
