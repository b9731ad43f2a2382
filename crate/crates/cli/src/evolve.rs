//! `evolve`: time integration of Cauchy data with trajectory and
//! diagnostic CSVs.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nhfields::cauchy::{
    evolve, project_state_onto_constraint, CauchyState, EvolveOptions, Evolution, StateMode, VColumns,
};
use nhfields::grid::PeriodicGrid;
use nhfields::models::Model;
use nhfields::Lagrangian;

use crate::config::Scenario;
use crate::report::{format_number, Check, Obj};

/// The configured initial state, projected onto the constraint set when
/// one is given.
pub fn initial_state(sc: &Scenario) -> Result<CauchyState, String> {
    let l = sc.model.layout();
    let (n, m) = (l.n, l.m);
    let grid = PeriodicGrid::new(n, sc.config.grid.nu).map_err(|e| e.to_string())?;
    let np = grid.len();
    let amp = sc.config.initial.amplitude;
    let state = match sc.config.initial.profile.as_str() {
        "fluid-rest" => {
            if !matches!(sc.model, Model::Fluid(_)) {
                return Err("initial profile fluid-rest needs model `fluid`".into());
            }
            // Rest configuration y = x plus a divergence-carrying velocity.
            let mut v0 = vec![0.0; np * m];
            for j in 0..np {
                let u = grid.coords(j);
                for a in 0..m {
                    let s = (2.0 * PI * u[(a + 1) % n]).sin();
                    let c = (2.0 * PI * u[a % n]).cos();
                    v0[j * m + a] = amp * (s + 0.5 * c);
                }
            }
            let mut vi = vec![0.0; np * m * n];
            let mut g = vec![0.0; m * n];
            for a in 0..m.min(n) {
                g[a * n + a] = 1.0;
            }
            for j in 0..np {
                for a in 0..m {
                    for i in 0..n {
                        vi[(j * m + a) * n + i] = g[a * n + i];
                    }
                }
            }
            let s = CauchyState::full_jet(grid, m, vec![0.0; np * m], v0, vi).map_err(|e| e.to_string())?;
            let s = s.with_background(g).map_err(|e| e.to_string())?;
            match sc.mode() {
                StateMode::FullJet => s,
                StateMode::Pde => CauchyState { mode: StateMode::Pde, vi: Vec::new(), ..s },
            }
        }
        _ => {
            let mut y = vec![0.0; np * m];
            for j in 0..np {
                let u = grid.coords(j);
                for a in 0..m {
                    y[j * m + a] = amp * (2.0 * PI * u[0] + a as f64 * PI / 3.0).sin();
                }
            }
            let s = CauchyState::pde(grid, m, y, vec![0.0; np * m]).map_err(|e| e.to_string())?;
            match sc.mode() {
                StateMode::Pde => s,
                StateMode::FullJet => s.to_full_jet(sc.scheme()),
            }
        }
    };
    match &sc.constraint {
        None => Ok(state),
        Some(spec) => project_state_onto_constraint(spec, &state, sc.scheme(), VColumns::Auto, spec.on_tolerance * 1e-3)
            .map_err(|e| format!("cannot place the initial state on the constraint set: {e}")),
    }
}

pub fn options(sc: &Scenario) -> EvolveOptions {
    EvolveOptions {
        dt: sc.config.dt,
        steps: sc.config.steps,
        integrator: sc.integrator(),
        scheme: sc.scheme(),
        stabilize: sc.config.stabilize,
        drift_ceiling: sc.config.drift_ceiling,
        record_every: sc.config.record_every,
    }
}

fn num(x: f64) -> String {
    format_number(x).unwrap_or_else(|| "nan".into())
}

fn write_trajectory(path: &Path, ev: &Evolution) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let s0 = &ev.trajectory[0];
    let (n, m) = (s0.n(), s0.m);
    let mut header = vec!["t".to_string()];
    if n == 1 {
        header.push("u".into());
    } else {
        header.extend((1..=n).map(|i| format!("u{i}")));
    }
    header.extend((1..=m).map(|a| format!("y{a}")));
    header.extend((1..=m).map(|a| format!("ydot{a}")));
    writeln!(w, "{}", header.join(","))?;
    for s in &ev.trajectory {
        for j in 0..s.len() {
            let mut row = vec![num(s.t)];
            row.extend(s.grid.coords(j).into_iter().map(num));
            row.extend((0..m).map(|a| num(s.y[j * m + a])));
            row.extend((0..m).map(|a| num(s.v0[j * m + a])));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()
}

fn write_series(path: &Path, ev: &Evolution, f: impl Fn(&nhfields::cauchy::StepDiagnostics) -> f64) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,value")?;
    for d in &ev.diagnostics {
        writeln!(w, "{},{}", num(d.t), num(f(d)))?;
    }
    w.flush()
}

pub fn run(sc: &Scenario) -> Result<(Vec<Check>, Obj), String> {
    let s0 = initial_state(sc)?;
    let opts = options(sc);
    let ev = match evolve(&sc.model, sc.constraint.as_ref(), &s0, opts) {
        Ok(ev) => ev,
        Err(e) => {
            let check = Check::failed("evolution", e.to_string());
            let summary = Obj::new().set("steps_requested", sc.config.steps);
            return Ok((vec![check], summary));
        }
    };
    let out = &sc.output_dir;
    let io = |e: std::io::Error| format!("cannot write output: {e}");
    write_trajectory(&out.join("traj_fields.csv"), &ev).map_err(io)?;
    write_series(&out.join("diag_constraint_drift.csv"), &ev, |d| d.constraint_drift).map_err(io)?;
    write_series(&out.join("diag_holonomy_defect.csv"), &ev, |d| d.holonomy_defect).map_err(io)?;
    write_series(&out.join("diag_eta_gamma.csv"), &ev, |d| d.eta_gamma).map_err(io)?;
    write_series(&out.join("diag_energy.csv"), &ev, |d| d.energy).map_err(io)?;

    let eta_err = ev.diagnostics.iter().map(|d| (d.eta_gamma - 1.0).abs()).fold(0.0, f64::max);
    let drift = ev.diagnostics.iter().map(|d| d.constraint_drift).fold(0.0, f64::max);
    let e0 = ev.diagnostics[0].energy;
    let energy_drift = ev.diagnostics.iter().map(|d| (d.energy - e0).abs()).fold(0.0, f64::max);
    let last = ev.diagnostics.last().expect("at least one diagnostic row");
    let mut checks = vec![Check::at_most("eta_gamma", eta_err, sc.tol("eta_gamma"))];
    if sc.constraint.is_some() {
        checks.push(Check::at_most("constraint_drift", drift, sc.config.drift_ceiling));
    }
    let summary = Obj::new()
        .set("steps", sc.config.steps)
        .set("final_time", last.t)
        .set("grid_points", s0.len())
        .set("max_constraint_drift", drift)
        .set("max_energy_drift", energy_drift)
        .set("initial_energy", e0)
        .set("final_holonomy_defect", last.holonomy_defect)
        .set("recorded_states", ev.trajectory.len());
    Ok((checks, summary))
}
