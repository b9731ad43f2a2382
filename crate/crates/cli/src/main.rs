//! `nhfields --config path [--task verify|evolve|fluid-identities] [--seed N] [--out dir]`
//!
//! Exit status: 0 when every check passes, 1 naming the first failing
//! check, 2 on configuration errors.

mod config;
mod evolve;
mod identities;
mod report;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use config::{Scenario, Task};
use report::{checks_node, first_failure, to_json, Node, Obj};

#[derive(Debug, Parser)]
#[command(name = "nhfields", version, about = "Nonholonomic field theory scenario runner")]
struct Args {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    task: Option<Task>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn scenario_node(sc: &Scenario) -> Node {
    let params = |m: &std::collections::BTreeMap<String, f64>| -> Node {
        let mut o = Obj::new();
        for (k, v) in m {
            o.push(k, *v);
        }
        o.into()
    };
    let mut o = Obj::new()
        .set("task", sc.task.name())
        .set("seed", sc.seed)
        .set("model", Obj::new().set("name", sc.config.model.name.as_str()).set("params", params(&sc.config.model.params)));
    match &sc.config.constraint {
        Some(c) => o.push(
            "constraint",
            Obj::new()
                .set("name", c.name.as_str())
                .set("mode", format!("{:?}", c.mode).to_lowercase())
                .set("params", params(&c.params)),
        ),
        None => o.push("constraint", Node::Null),
    }
    o.into()
}

fn run(sc: &Scenario) -> Result<bool, String> {
    std::fs::create_dir_all(&sc.output_dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", sc.output_dir.display()))?;
    let (checks, summary) = match sc.task {
        Task::Verify => verify::run(sc),
        Task::Evolve => evolve::run(sc)?,
        Task::FluidIdentities => identities::run(sc)?,
    };
    let failure = first_failure(&checks).cloned();
    let mut tol = Obj::new();
    for (k, v) in &sc.tolerances {
        tol.push(k, *v);
    }
    let report: Node = Obj::new()
        .set("scenario", scenario_node(sc))
        .set("tolerances", tol)
        .set("checks", checks_node(&checks))
        .set("summary", summary)
        .set("status", if failure.is_none() { "pass" } else { "fail" })
        .set("first_failure", failure.as_ref().map_or(Node::Null, |c| Node::from(c.name.as_str())))
        .into();
    let path = sc.output_dir.join("report.json");
    std::fs::write(&path, to_json(&report)).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    match failure {
        None => {
            println!("{}: all {} checks passed ({})", sc.task.name(), checks.len(), path.display());
            Ok(true)
        }
        Some(c) => {
            match &c.detail {
                Some(d) => eprintln!("check failed: {}: {d}", c.name),
                None => eprintln!("check failed: {} = {:e} > {:e}", c.name, c.value, c.tolerance),
            }
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let scenario = config::load(&args.config).and_then(|c| config::validate(c, &base, args.task, args.seed, args.out));
    let sc = match scenario {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&sc) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
