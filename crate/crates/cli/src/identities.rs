//! `fluid-identities`: closed-form comparison and the null-Lagrangian /
//! divergence identities with a refinement table.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nhfields::fluid::{
    fluid_quantities, null_lagrangian_residual, psi_divergence_residual, random_fluid_point, PatchSamples,
};
use nhfields::models::Model;

use crate::config::Scenario;
use crate::report::{Check, Node, Obj};

/// Patch extent used for the refinement study.
pub const PATCH_EXTENT: f64 = 0.25;

/// Smooth non-volume-preserving section for the refinement study.
pub fn wavy_section(x: &[f64; 4]) -> [f64; 3] {
    let e = 0.1;
    std::array::from_fn(|a| {
        let (b, c) = ((a + 1) % 3 + 1, (a + 2) % 3 + 1);
        x[a + 1] + e * (2.0 * PI * (x[b] + 0.5 * x[c] + 0.3 * x[a + 1])).sin()
    })
}

pub fn run(sc: &Scenario) -> Result<(Vec<Check>, Obj), String> {
    let Model::Fluid(fm) = &sc.model else {
        return Err("task fluid-identities needs model `fluid`".into());
    };
    let mut checks = Vec::new();

    // Closed forms against the generic pipeline at random J = 1 points.
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let tol = sc.tol("closed_form");
    let mut worst_zeta: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    let mut min_f = f64::INFINITY;
    let mut failure = None;
    for j in 0..sc.config.points {
        let p = random_fluid_point(&mut rng, 0.3);
        match fluid_quantities(fm.params, &p) {
            Ok(q) => {
                worst_zeta = worst_zeta.max(q.zeta_agreement);
                worst_p = worst_p.max(q.p_agreement);
                worst_idem = worst_idem.max((&q.p * &q.p - &q.p).amax());
                min_f = min_f.min(q.f.abs());
            }
            Err(e) => {
                failure.get_or_insert_with(|| format!("point {j}: {e}"));
            }
        }
    }
    let mut zc = Check::at_most("closed_form_zeta", worst_zeta, tol);
    if let Some(f) = &failure {
        zc = Check { pass: false, ..zc.with_detail(f.clone()) };
    }
    checks.push(zc);
    checks.push(Check::at_most("closed_form_projector", worst_p, tol));
    checks.push(Check::at_most("projector_idempotent", worst_idem, tol));

    // Null-Lagrangian residual under refinement.
    let mut rows = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut orders = Vec::new();
    for (idx, &nu) in sc.config.refinement.iter().enumerate() {
        let samples = PatchSamples::from_fn([0.0; 4], PATCH_EXTENT, nu, wavy_section).map_err(|e| e.to_string())?;
        let h = samples.spacing[0];
        let r = match null_lagrangian_residual(&samples) {
            Ok(r) => r,
            Err(e) => {
                checks.push(Check::failed("null_lagrangian", e.to_string()));
                return Ok((checks, Obj::new()));
            }
        };
        let mut row = Obj::new().set("nu", nu).set("h", h).set("residual", r);
        if let Some((ph, pr)) = prev {
            let order = (pr / r).ln() / (ph / h).ln();
            row.push("observed_order", order);
            orders.push(order);
        } else {
            row.push("observed_order", Node::Null);
        }
        if idx == 0 {
            checks.push(Check::at_most(&format!("null_lagrangian_{nu}"), r, sc.tol("null_lagrangian")));
        }
        rows.push(Node::from(row));
        prev = Some((h, r));
    }
    let (lo, hi) = (sc.tol("convergence_order_min"), sc.tol("convergence_order_max"));
    let worst_order_gap = orders.iter().map(|o| if *o < lo { lo - o } else if *o > hi { o - hi } else { 0.0 }).fold(0.0, f64::max);
    checks.push(
        Check::at_most("null_lagrangian_order", worst_order_gap, 0.0)
            .with_detail(format!("observed orders {orders:?}, accepted range [{lo}, {hi}]")),
    );

    // Divergence identity on the three hand-checked sections.
    let nu = sc.config.refinement[0];
    let sections: [(&str, fn(&[f64; 4]) -> [f64; 3], f64); 3] = [
        ("psi_identity", |x| [x[1], x[2], x[3]], sc.tol("psi_identity")),
        ("psi_shear", |x| [x[1] + 0.7 * x[2], x[2], x[3]], sc.tol("psi_divergence")),
        ("psi_stretch", |x| [2.0 * x[1], x[2], x[3]], sc.tol("psi_divergence")),
    ];
    let mut psi_rows = Obj::new();
    for (name, f, tol) in sections {
        let samples = PatchSamples::from_fn([0.0; 4], 1.0, nu, f).map_err(|e| e.to_string())?;
        match psi_divergence_residual(&samples) {
            Ok(r) => {
                psi_rows.push(name, r);
                checks.push(Check::at_most(name, r, tol));
            }
            Err(e) => checks.push(Check::failed(name, e.to_string())),
        }
    }

    let summary = Obj::new()
        .set("points", sc.config.points)
        .set("min_abs_f", min_f)
        .set("patch_extent", PATCH_EXTENT)
        .set("null_lagrangian_refinement", Node::Arr(rows))
        .set("psi_residuals", psi_rows);
    Ok((checks, summary))
}
