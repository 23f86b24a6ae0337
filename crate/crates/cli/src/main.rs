use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use obstakit::config::{self, Command, Domain, Expr, RunConfig};
use obstakit::control::{ControlOptions, ControlProblem, ControlRun};
use obstakit::io::{columns_csv, csv_string, fmt_f64, vtk_string};
use obstakit::mesh::{NodalField, StructuredTriMesh};
use obstakit::obstacle::{
    cross_check_decomposition, order_bounds, solve_bilateral, ObstacleProblem, ObstacleSolution,
    PdasOptions,
};
use obstakit::operators::{DualVector, SparseSpd};
use obstakit::oracles::{chain_mass, chain_stiffness};
use obstakit::verify::{bridge_suite, subspace_suite};
use obstakit::Error;

const USAGE: &str = "usage: obstakit <command> [--config FILE] [--key=value ...]

commands:
  solve-obstacle    PDAS solve of one obstacle problem
  solve-control     semismooth Newton solve of the control problem
  table1            iteration counts over a list of mesh widths
  subspace-verify   randomized checks of the angled-subspace calculus
  mesh-info         mesh and matrix sizes";

/// Contract tolerance of the subspace suite and the bridge check.
const SUITE_TOL: f64 = 1e-9;

enum Failure {
    Config(String),
    NonConvergence(String),
    Contract(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Contract(_) | Failure::Other(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            Error::Parse { .. } => Failure::Config(e.to_string()),
            Error::Convergence { .. }
            | Error::ObstacleNonConvergence { .. }
            | Error::Cycling { .. }
            | Error::ControlNonConvergence(_) => Failure::NonConvergence(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{USAGE}");
        return if args.is_empty() { ExitCode::from(2) } else { ExitCode::SUCCESS };
    }
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("config error", m),
                Failure::NonConvergence(m) => ("not converged", m),
                Failure::Contract(m) => ("contract failed", m),
                Failure::Other(m) => ("error", m),
            };
            eprintln!("obstakit: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn run(args: &[String]) -> Outcome {
    let inv = config::parse_args(args)?;
    let text = match &inv.config_file {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let cfg = config::resolve(&inv, text.as_deref())?;
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Other(format!("cannot create {}: {e}", dir.display())))?;
    }
    match cfg.command {
        Command::SolveObstacle => solve_obstacle(&cfg),
        Command::SolveControl => solve_control(&cfg),
        Command::Table1 => table1(&cfg),
        Command::SubspaceVerify => subspace_verify(&cfg),
        Command::MeshInfo => mesh_info(&cfg),
    }
}

fn write(out: &Option<PathBuf>, name: &str, content: Result<String, Error>) -> Outcome {
    if let Some(dir) = out {
        let path = dir.join(name);
        std::fs::write(&path, content?)
            .map_err(|e| Failure::Other(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn pdas(cfg: &RunConfig) -> PdasOptions {
    PdasOptions {
        c: cfg.c_pdas,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
    }
}

fn interpolate(mesh: &StructuredTriMesh, e: Expr) -> Result<NodalField, Failure> {
    if e == Expr::BenchmarkZ0 {
        return Err(Failure::Config("benchmark-z0 is not a pointwise expression".into()));
    }
    Ok(mesh.interpolate(|x1, x2| e.eval(x1, x2).unwrap_or(f64::NAN))?)
}

fn control_problem(cfg: &RunConfig, mesh: &StructuredTriMesh) -> Result<ControlProblem, Failure> {
    let (lo, up) = cfg.bounds();
    let n = mesh.num_interior();
    Ok(ControlProblem::new(
        mesh.assemble_stiffness(),
        mesh.assemble_mass(cfg.mass.lumped()),
        cfg.nu,
        interpolate(mesh, cfg.yd)?,
        vec![lo; n],
        vec![up; n],
    )?)
}

fn status_labels(sol: &ObstacleSolution) -> Vec<&'static str> {
    (0..sol.y.len())
        .map(|i| {
            if sol.active_lower.contains(i) {
                "lower"
            } else if sol.active_upper.contains(i) {
                "upper"
            } else {
                "inactive"
            }
        })
        .collect()
}

fn obstacle_csv(sol: &ObstacleSolution) -> Result<String, Error> {
    let status = status_labels(sol);
    let rows: Vec<Vec<String>> = (0..sol.y.len())
        .map(|i| {
            vec![
                i.to_string(),
                fmt_f64(sol.y[i]),
                fmt_f64(sol.lambda[i]),
                fmt_f64(sol.lambda_lower[i]),
                fmt_f64(sol.lambda_upper[i]),
                status[i].to_string(),
            ]
        })
        .collect();
    csv_string(&["index", "y", "lambda", "lambda_lower", "lambda_upper", "status"], &rows)
}

fn solve_obstacle(cfg: &RunConfig) -> Outcome {
    let (lo, up) = cfg.bounds();
    let n_dof;
    let mesh;
    let a: SparseSpd;
    let load: DualVector;
    match cfg.domain {
        Domain::Chain => {
            mesh = None;
            n_dof = cfg.n;
            a = chain_stiffness(n_dof)?;
            let m = chain_mass(n_dof)?;
            load = match cfg.load {
                Expr::Const(c) => m.load(&NodalField::constant(n_dof, c)),
                _ => return Err(Failure::Config("on a chain the load must be a constant".into())),
            };
        }
        Domain::Square => {
            let msh = StructuredTriMesh::friedrichs_keller(cfg.n)?;
            n_dof = msh.num_interior();
            a = msh.assemble_stiffness();
            let m = msh.assemble_mass(cfg.mass.lumped());
            load = match cfg.load {
                Expr::BenchmarkZ0 => {
                    let yd = interpolate(&msh, cfg.yd)?;
                    let mut z = obstakit::operators::poisson_solve(&a, &m.load(&yd))?;
                    z.iter_mut().for_each(|v| *v /= cfg.nu);
                    m.load(&z)
                }
                e => m.load(&interpolate(&msh, e)?),
            };
            mesh = Some(msh);
        }
    }
    let prob = ObstacleProblem::new(&a, load, vec![lo; n_dof], vec![up; n_dof])?;
    let opts = pdas(cfg);
    let sol = solve_bilateral(&prob, &opts)?;
    let dec = cross_check_decomposition(&sol, &prob, &opts)?;

    println!("dof                {n_dof}");
    println!("pdas iterations    {}", sol.iterations);
    println!("active lower       {}", sol.active_lower.len());
    println!("active upper       {}", sol.active_upper.len());
    println!("feasibility        {:.3e}", sol.kkt.feasibility);
    println!("sign               {:.3e}", sol.kkt.sign);
    println!("complementarity    {:.3e}", sol.kkt.complementarity);
    println!("stationarity       {:.3e}", sol.kkt.stationarity);
    println!("kkt residual       {:.3e}", sol.kkt_residual);
    println!("decomposition      {:.3e}", dec.max());
    let ls = order_bounds(&sol, &prob);
    println!("order bounds       below {:.3e}  above {:.3e} (diagnostic)", ls.below, ls.above);

    write(&cfg.out, "obstacle.csv", obstacle_csv(&sol))?;
    if let Some(mesh) = &mesh {
        let code: Vec<f64> = status_labels(&sol)
            .iter()
            .map(|s| match *s {
                "lower" => -1.0,
                "upper" => 1.0,
                _ => 0.0,
            })
            .collect();
        write(
            &cfg.out,
            "obstacle.vtk",
            vtk_string(mesh, "obstacle solution", &[("y", &sol.y), ("lambda", &sol.lambda), ("status", &code)]),
        )?;
    }
    if sol.kkt_residual > cfg.tol {
        return Err(Failure::Contract(format!("kkt residual {:.3e} above tol", sol.kkt_residual)));
    }
    if dec.max() > 10.0 * cfg.tol {
        return Err(Failure::Contract(format!("decomposition deviation {:.3e}", dec.max())));
    }
    Ok(())
}

fn control_options(cfg: &RunConfig) -> ControlOptions {
    ControlOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        pdas: PdasOptions {
            c: cfg.c_pdas,
            ..PdasOptions::default()
        },
        ..ControlOptions::default()
    }
}

fn residual_csv(run: &ControlRun) -> Result<String, Error> {
    let last = run.iterations.len() - 1;
    let rows: Vec<Vec<String>> = run
        .iterations
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let ratio = if i == 0 { String::new() } else { fmt_f64(run.ratios[i - 1]) };
            let status = if i < last {
                "step"
            } else if run.converged {
                "converged"
            } else {
                "stopped"
            };
            vec![
                i.to_string(),
                fmt_f64(it.residual),
                ratio,
                it.inactive.len().to_string(),
                it.cg_iterations.to_string(),
                status.to_string(),
            ]
        })
        .collect();
    csv_string(&["iteration", "residual", "ratio", "inactive_nodes", "cg_iterations", "status"], &rows)
}

fn solve_control(cfg: &RunConfig) -> Outcome {
    let mesh = StructuredTriMesh::friedrichs_keller(cfg.n)?;
    let prob = control_problem(cfg, &mesh)?;
    let t = Instant::now();
    let run = match prob.solve(&NodalField::zeros(prob.dim()), &control_options(cfg)) {
        Ok(run) => run,
        Err(Error::ControlNonConvergence(run)) => {
            write(&cfg.out, "residuals.csv", residual_csv(&run))?;
            return Err(Failure::NonConvergence(format!(
                "residual {:.3e} after {} iterations",
                run.iterations.last().unwrap().residual,
                run.newton_iterations()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let elapsed = t.elapsed();
    let ver = run.verification.expect("converged runs carry a verification");
    let (lo, up) = cfg.bounds();
    let dof = prob.dim() as f64;
    let at_upper = run.u_bar.iter().filter(|&&u| u == up).count();
    let at_lower = run.u_bar.iter().filter(|&&u| u == lo).count();
    let lambda = &run.final_obstacle().lambda;

    println!("mesh               n = {}, h = 1/{}, dof = {}", cfg.n, cfg.n, prob.dim());
    println!("mass               {}", cfg.mass.name());
    println!("counting           Newton steps taken before ‖y_i − ỹ_i‖_M ≤ tol");
    for (i, it) in run.iterations.iter().enumerate() {
        println!("  i = {i}  residual {:.6e}  |O| = {}", it.residual, it.inactive.len());
    }
    println!("iterations         {}", run.newton_iterations());
    println!("control at upper   {at_upper} ({:.2}%)", 100.0 * at_upper as f64 / dof);
    println!("control at lower   {at_lower} ({:.2}%)", 100.0 * at_lower as f64 / dof);
    println!("verify residual    {:.3e}", ver.state_residual);
    println!("verify control     {:.3e}", ver.control_deviation);
    println!("time               {:.3} s", elapsed.as_secs_f64());

    write(&cfg.out, "residuals.csv", residual_csv(&run))?;
    write(
        &cfg.out,
        "control.csv",
        columns_csv(
            &["u", "y", "y_d", "lambda"],
            &[&run.u_bar, &run.y_bar, prob.target(), lambda],
        ),
    )?;
    write(
        &cfg.out,
        "control.vtk",
        vtk_string(
            &mesh,
            "optimal control",
            &[("u", &run.u_bar), ("y", &run.y_bar), ("y_d", prob.target()), ("lambda", lambda)],
        ),
    )?;
    if !ver.passes(cfg.tol) {
        return Err(Failure::Contract(format!("post-hoc verification failed: {ver:?}")));
    }
    Ok(())
}

struct SweepRow {
    n: usize,
    iterations: usize,
    residual: f64,
    decomposition: f64,
    seconds: f64,
}

fn sweep_one(cfg: &RunConfig, n: usize) -> Result<SweepRow, Failure> {
    let t = Instant::now();
    let mesh = StructuredTriMesh::friedrichs_keller(n)?;
    let prob = control_problem(cfg, &mesh)?;
    let opts = control_options(cfg);
    let run = prob.solve(&NodalField::zeros(prob.dim()), &opts)?;
    let mut decomposition = 0.0f64;
    for it in &run.iterations {
        let obst = prob.obstacle_problem(&it.z)?;
        decomposition = decomposition.max(cross_check_decomposition(&it.obstacle, &obst, &opts.pdas)?.max());
    }
    if !run.verification.is_some_and(|v| v.passes(cfg.tol)) {
        return Err(Failure::Contract(format!("verification failed at n = {n}")));
    }
    Ok(SweepRow {
        n,
        iterations: run.newton_iterations(),
        residual: run.iterations.last().unwrap().residual,
        decomposition,
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn thread_count() -> usize {
    std::env::var("OBSTAKIT_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |k| k.get()))
}

fn table1(cfg: &RunConfig) -> Outcome {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count().min(cfg.h_list.len()))
        .build()
        .map_err(|e| Failure::Other(e.to_string()))?;
    let t = Instant::now();
    let results: Vec<Result<SweepRow, Failure>> =
        pool.install(|| cfg.h_list.par_iter().map(|&n| sweep_one(cfg, n)).collect());
    let mut rows = Vec::new();
    for r in results {
        rows.push(r?);
    }

    let width = 10;
    let mut line_h = format!("{:<12}", "h");
    let mut line_it = format!("{:<12}", "iterations");
    for r in &rows {
        line_h.push_str(&format!("{:>width$}", format!("1/{}", r.n)));
        line_it.push_str(&format!("{:>width$}", r.iterations));
    }
    println!("{line_h}\n{line_it}");
    let independent = rows.windows(2).all(|w| w[0].iterations == w[1].iterations);
    println!("mass: {}; counting: Newton steps taken before the residual check passes", cfg.mass.name());
    for r in &rows {
        println!(
            "  1/{:<5} residual {:.3e}  decomposition {:.3e}  {:.2} s",
            r.n, r.residual, r.decomposition, r.seconds
        );
    }
    println!("mesh independence: {}", if independent { "pass" } else { "FAIL" });
    println!("total time {:.2} s", t.elapsed().as_secs_f64());

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(1.0 / r.n as f64),
                r.n.to_string(),
                r.iterations.to_string(),
                fmt_f64(r.residual),
                fmt_f64(r.decomposition),
            ]
        })
        .collect();
    write(
        &cfg.out,
        "table1.csv",
        csv_string(&["h", "n", "iterations", "final_residual", "decomposition"], &csv_rows),
    )?;
    if !independent {
        return Err(Failure::Contract("iteration counts differ across mesh widths".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.decomposition > 1e-9) {
        return Err(Failure::Contract(format!("decomposition deviation {:.3e} at 1/{}", r.decomposition, r.n)));
    }
    Ok(())
}

fn subspace_verify(cfg: &RunConfig) -> Outcome {
    let t = Instant::now();
    let rep = subspace_suite(cfg.seed, cfg.trials, cfg.dim)?;
    let bridge = bridge_suite(cfg.seed, 8, 20)?;
    let mut rows: Vec<(&str, f64)> = rep.rows();
    rows.push(("fem_bridge", bridge.max_deviation));
    println!("trials {}  max dim {}  seed {}", cfg.trials, cfg.dim, cfg.seed);
    let mut csv_rows = Vec::new();
    for (name, dev) in &rows {
        let ok = *dev <= SUITE_TOL;
        println!("{name:<24}{dev:>12.3e}  {}", if ok { "pass" } else { "FAIL" });
        csv_rows.push(vec![name.to_string(), fmt_f64(*dev), ok.to_string()]);
    }
    println!(
        "{:<24}{:>12}  {}",
        "degenerate_rejected",
        "",
        if rep.degenerate_rejected { "pass" } else { "FAIL" }
    );
    csv_rows.push(vec!["degenerate_rejected".into(), String::new(), rep.degenerate_rejected.to_string()]);
    println!("time {:.2} s", t.elapsed().as_secs_f64());
    write(&cfg.out, "subspace_verify.csv", csv_string(&["property", "max_deviation", "pass"], &csv_rows))?;
    if rows.iter().any(|(_, d)| *d > SUITE_TOL) || !rep.degenerate_rejected {
        return Err(Failure::Contract("subspace suite deviation above 1e-9".into()));
    }
    Ok(())
}

fn mesh_info(cfg: &RunConfig) -> Outcome {
    let mesh = StructuredTriMesh::friedrichs_keller(cfg.n)?;
    let a = mesh.assemble_stiffness();
    let m = mesh.assemble_mass(false);
    println!("subdivisions       {}", mesh.subdivisions());
    println!("width              {}", fmt_f64(mesh.width()));
    println!("nodes              {}", mesh.num_nodes());
    println!("triangles          {}", mesh.triangles().len());
    println!("interior nodes     {}", mesh.num_interior());
    println!("boundary nodes     {}", mesh.boundary_nodes().len());
    println!("stiffness nnz      {}", a.nnz());
    println!("mass nnz           {}", m.nnz());
    Ok(())
}
