//! Command-line front end: problem loading, experiment orchestration, CSV and
//! JSON outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use crate::analysis::{convergence_study, l2_error_on, linf_error_on, solve_problem, StudyOptions};
use crate::assembly::{assemble_adjoint, assemble_mass, assemble_rhs, test_spaces, DataMode, RhsOptions};
use crate::problem::{catalog, from_json_file, instantiate, validate, CatalogProblem};
use crate::rb::{
    draw_params, equidistant, hierarchical_estimate, load_model, online_solve, save_model,
    strong_greedy, test_error_sweep, GreedyTrace, ReducedModel,
};
use crate::solver::{post_process, solve_full, Evaluate};
use crate::{Error, Result};

const CLASSIFY_SAMPLES: usize = 17;

#[derive(Parser)]
#[command(name = "transport", version, about = "Optimally stable ultraweak transport solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and print a summary.
    Solve(SolveArgs),
    /// Run a mesh-refinement study and print an error table.
    Convergence(ConvergenceArgs),
    /// Build a reduced model by greedy snapshot selection.
    Greedy(GreedyArgs),
    /// Evaluate a stored reduced model at one parameter.
    Online(OnlineArgs),
    /// Check the well-posedness conditions of a problem.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Catalog name or problem JSON path.
    #[arg(long)]
    problem: String,
    /// Cells per dimension.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Polynomial order of the test space.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Outflow extension layers.
    #[arg(long, default_value_t = 0)]
    extend: usize,
    /// Project the derivative terms one order down after solving.
    #[arg(long)]
    postprocess: bool,
    /// Coefficient handling: constant, pwconstant, or general.
    #[arg(long)]
    mode: Option<DataMode>,
    /// Gauss points per direction (default: order + 2).
    #[arg(long)]
    quad_order: Option<usize>,
    /// Error-quadrature subdivisions per cell.
    #[arg(long = "quad-subdiv", default_value_t = 4)]
    quad_subdiv: usize,
    /// Parameter value for parametrized problems (default: box midpoint).
    #[arg(long)]
    mu: Option<f64>,
    /// Also write u on a k^dim lattice to solution.csv (needs --out).
    #[arg(long)]
    sample: Option<usize>,
    /// Directory for summary.json and solution.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// Catalog name or problem JSON path.
    #[arg(long)]
    problem: String,
    /// Polynomial order of the test space.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Grid levels a:b, doubling from a up to b cells per dimension.
    #[arg(long, default_value = "4:32")]
    levels: String,
    /// Outflow extension layers.
    #[arg(long, default_value_t = 0)]
    extend: usize,
    /// Project the derivative terms one order down after solving.
    #[arg(long)]
    postprocess: bool,
    /// Coefficient handling: constant, pwconstant, or general.
    #[arg(long)]
    mode: Option<DataMode>,
    /// Gauss points per direction (default: order + 2).
    #[arg(long)]
    quad_order: Option<usize>,
    /// Error-quadrature subdivisions per cell.
    #[arg(long = "quad-subdiv", default_value_t = 4)]
    quad_subdiv: usize,
    /// Extra right-hand-side quadrature subdivisions per cell.
    #[arg(long, default_value_t = 1)]
    rhs_subdiv: usize,
    /// Parameter value for parametrized problems (default: box midpoint).
    #[arg(long)]
    mu: Option<f64>,
    /// Directory for convergence.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GreedyArgs {
    /// Catalog name or problem JSON path (must be parametrized).
    #[arg(long)]
    problem: String,
    /// Cells per dimension.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Polynomial order of the test space.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Number of equidistant training parameters.
    #[arg(long, default_value_t = 100)]
    train: usize,
    /// Number of random held-out test parameters (0 skips the sweep).
    #[arg(long, default_value_t = 0)]
    test: usize,
    /// Target maximum train error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Seed for the test-parameter draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for model.rbm, trace.csv, and test_errors.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct OnlineArgs {
    /// Stored reduced-model file.
    #[arg(long)]
    model: PathBuf,
    /// Parameter value.
    #[arg(long)]
    mu: f64,
    /// Include the reduced coefficients in the output.
    #[arg(long)]
    coeffs: bool,
    /// Solve full-order at mu and report the L2 distance.
    #[arg(long)]
    check_full: bool,
    /// Finer nested model file for the hierarchical error estimate.
    #[arg(long)]
    hierarchical: Option<PathBuf>,
    /// Problem JSON path when the model's problem is not in the catalog.
    #[arg(long)]
    problem: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Catalog name or problem JSON path.
    #[arg(long)]
    problem: String,
    /// Cells per dimension of the sampling grid.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Parameter value for parametrized problems (default: box midpoint).
    #[arg(long)]
    mu: Option<f64>,
}

/// Parses arguments, dispatches, and maps errors to exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Solve(a) => cmd_solve(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Greedy(a) => cmd_greedy(a),
        Command::Online(a) => cmd_online(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

/// Six significant digits, plain notation within a sane exponent range.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..=5).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, v)
    } else {
        format!("{:.5e}", v)
    }
}

fn load_problem(name_or_path: &str) -> Result<CatalogProblem> {
    if name_or_path.ends_with(".json") || name_or_path.contains('/') || name_or_path.contains('\\') {
        from_json_file(Path::new(name_or_path))
    } else {
        catalog(name_or_path)
    }
}

/// Freezes a parametrized problem at --mu (or the box midpoint); returns the
/// parameter actually used, if any.
fn at_parameter(cp: &CatalogProblem, mu: Option<f64>) -> (crate::problem::TransportProblem, Option<f64>) {
    match &cp.affine {
        Some(aff) => {
            let m = mu.unwrap_or_else(|| aff.mu_bar());
            (instantiate(&cp.problem, aff, m), Some(m))
        }
        None => (cp.problem.clone(), None),
    }
}

fn parse_levels(s: &str) -> Result<Vec<usize>> {
    let err = || Error::BadInput(format!("levels '{s}' are not of the form a:b with b = a*2^k"));
    let (a, b) = s.split_once(':').ok_or_else(err)?;
    let a: usize = a.parse().map_err(|_| err())?;
    let b: usize = b.parse().map_err(|_| err())?;
    if a == 0 || b < a {
        return Err(err());
    }
    let mut levels = Vec::new();
    let mut n = a;
    while n < b {
        levels.push(n);
        n *= 2;
    }
    if n != b {
        return Err(err());
    }
    levels.push(b);
    Ok(levels)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

#[derive(serde::Serialize)]
struct SolveSummary {
    problem: String,
    n: usize,
    order: usize,
    mode: DataMode,
    n_test: usize,
    n_broken: usize,
    extended: bool,
    postprocessed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_rel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l2_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    linf_error: Option<f64>,
}

fn sample_csv(eval: &dyn Evaluate, k: usize) -> Result<String> {
    let grid = eval.grid().clone();
    let dim = grid.dim;
    let mut s = String::new();
    for d in 0..dim {
        s.push_str(&format!("x{d},"));
    }
    s.push_str("u\n");
    for flat in 0..k.pow(dim as u32) {
        let mut rest = flat;
        let mut x = vec![0.0; dim];
        for d in (0..dim).rev() {
            let i = rest % k;
            rest /= k;
            x[d] = grid.a[d] + (grid.b[d] - grid.a[d]) * (i as f64 + 0.5) / k as f64;
        }
        let u = eval.eval_at(&x)?;
        for v in &x {
            s.push_str(&sig6(*v));
            s.push(',');
        }
        s.push_str(&sig6(u));
        s.push('\n');
    }
    Ok(s)
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    if a.sample.is_some() && a.out.is_none() {
        return Err(Error::BadInput("--sample needs --out".into()));
    }
    let cp = load_problem(&a.problem)?;
    let (problem, mu) = at_parameter(&cp, a.mu);
    let opts = StudyOptions {
        mode: a.mode,
        extend: a.extend,
        postprocess: a.postprocess,
        subdivisions: a.quad_subdiv,
        quad_order: a.quad_order,
        rhs_subdiv: 1,
        with_linf: false,
    };
    let sol = solve_problem(&problem, a.n, a.order, &opts)?;
    let post;
    let eval: &dyn Evaluate = if a.postprocess {
        post = post_process(&sol, None)?;
        &post
    } else {
        &sol
    };
    let (mut l2, mut linf) = (None, None);
    if let Some(exact) = &problem.exact {
        let q = a.quad_order.unwrap_or(a.order + 2);
        let (lo, hi) = (&problem.domain.0, &problem.domain.1);
        l2 = Some(l2_error_on(eval, &|x: &[f64]| exact(x), lo, hi, a.quad_subdiv, q)?);
        linf = Some(linf_error_on(eval, &|x: &[f64]| exact(x), lo, hi)?);
    }
    let summary = SolveSummary {
        problem: problem.name.clone(),
        n: a.n,
        order: a.order,
        mode: sol.op.mode,
        n_test: sol.diagnostics.n_test,
        n_broken: sol.diagnostics.n_broken,
        extended: a.extend > 0,
        postprocessed: a.postprocess,
        mu,
        method: sol.diagnostics.method.clone(),
        residual_rel: sol.diagnostics.residual_rel,
        l2_error: l2,
        linf_error: linf,
    };
    let text = serde_json::to_string_pretty(&summary)?;
    println!("{text}");
    if let Some(dir) = &a.out {
        write_file(dir, "summary.json", &format!("{text}\n"))?;
        if let Some(k) = a.sample {
            write_file(dir, "solution.csv", &sample_csv(eval, k)?)?;
        }
    }
    Ok(())
}

fn cmd_convergence(a: ConvergenceArgs) -> Result<()> {
    let cp = load_problem(&a.problem)?;
    let (problem, _) = at_parameter(&cp, a.mu);
    let levels = parse_levels(&a.levels)?;
    let opts = StudyOptions {
        mode: a.mode,
        extend: a.extend,
        postprocess: a.postprocess,
        subdivisions: a.quad_subdiv,
        quad_order: a.quad_order,
        rhs_subdiv: a.rhs_subdiv,
        with_linf: false,
    };
    let report = convergence_study(&problem, &levels, a.order, &opts)?;
    let mut csv = String::from("inv_h,l2_error,rate\n");
    for level in &report.levels {
        let rate = level.rate.map(sig6).unwrap_or_default();
        csv.push_str(&format!("{},{},{rate}\n", level.inv_h, sig6(level.l2_error)));
    }
    print!("{csv}");
    if let Some(dir) = &a.out {
        write_file(dir, "convergence.csv", &csv)?;
    }
    Ok(())
}

fn trace_csv(trace: &GreedyTrace) -> String {
    let mut csv = String::from("N,mu_star,max_train_error\n");
    for step in &trace.steps {
        let mu = step.mu_star.map(sig6).unwrap_or_default();
        csv.push_str(&format!("{},{mu},{}\n", step.n_basis, sig6(step.max_error)));
    }
    csv
}

#[derive(serde::Serialize)]
struct GreedySummary {
    problem: String,
    n: usize,
    order: usize,
    train: usize,
    tol: f64,
    n_basis: usize,
    status: crate::rb::GreedyStatus,
    model: String,
    trace: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_errors: Option<String>,
}

fn cmd_greedy(a: GreedyArgs) -> Result<()> {
    let cp = load_problem(&a.problem)?;
    let affine = cp
        .affine
        .clone()
        .ok_or_else(|| Error::BadInput(format!("problem '{}' has no parameter structure", a.problem)))?;
    if a.train == 0 {
        return Err(Error::BadInput("--train must be at least 1".into()));
    }
    let grid = cp.problem.grid(a.n);
    let spaces = test_spaces(&cp.problem, &grid, a.order)?;
    let (lo, hi) = affine.parameter_box;
    let train = equidistant(lo, hi, a.train);
    let opts = RhsOptions::for_order(a.order);
    let (model, trace) = strong_greedy(&cp.problem, &affine, &grid, &spaces, &train, a.tol, opts)?;
    let model_path = {
        std::fs::create_dir_all(&a.out)?;
        let path = a.out.join("model.rbm");
        save_model(&model, &path)?;
        path
    };
    let trace_path = write_file(&a.out, "trace.csv", &trace_csv(&trace))?;
    let mut test_path = None;
    if a.test > 0 {
        let mus = draw_params(lo, hi, a.test, a.seed);
        let n_values: Vec<usize> = (0..=model.n()).collect();
        let sweep = test_error_sweep(&model, &cp.problem, &affine, &grid, &spaces, &mus, &n_values, opts)?;
        let mut csv = String::from("N,max_test_error\n");
        for (n, e) in sweep.n_values.iter().zip(&sweep.max_errors) {
            csv.push_str(&format!("{n},{}\n", sig6(*e)));
        }
        test_path = Some(write_file(&a.out, "test_errors.csv", &csv)?);
    }
    let summary = GreedySummary {
        problem: cp.problem.name.clone(),
        n: a.n,
        order: a.order,
        train: a.train,
        tol: a.tol,
        n_basis: model.n(),
        status: trace.status,
        model: model_path.display().to_string(),
        trace: trace_path.display().to_string(),
        test_errors: test_path.map(|p| p.display().to_string()),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(serde::Serialize)]
struct OnlineSummary {
    mu: f64,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l2_vs_full: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<f64>,
}

/// Full-order L2 distance to the reduced solution at mu.
fn online_check_full(
    model: &ReducedModel,
    u_reduced: &[f64],
    problem_flag: Option<&str>,
    mu: f64,
) -> Result<f64> {
    let cp = match problem_flag {
        Some(p) => load_problem(p)?,
        None => catalog(&model.problem)?,
    };
    let affine = cp
        .affine
        .clone()
        .ok_or_else(|| Error::BadInput("the model's problem has no parameter structure".into()))?;
    let grid = cp.problem.grid(model.n_h);
    let spaces = test_spaces(&cp.problem, &grid, model.p)?;
    let n_y: usize = spaces.iter().map(|s| s.n_test()).product();
    if n_y != model.n_y {
        return Err(Error::BadInput(format!(
            "model test-space size {} does not match the rebuilt grid's {n_y}",
            model.n_y
        )));
    }
    let inst = instantiate(&cp.problem, &affine, mu);
    let op = std::sync::Arc::new(assemble_adjoint(&inst, &grid, &spaces, DataMode::Constant)?);
    let rhs = assemble_rhs(&inst, &grid, &spaces, RhsOptions::for_order(model.p))?;
    let sol = solve_full(op.clone(), &rhs)?;
    let u_full = sol.u_broken.as_ref().expect("constant mode reconstructs");
    let diff: Vec<f64> = u_reduced.iter().zip(u_full).map(|(a, b)| a - b).collect();
    let mass = assemble_mass(&spaces);
    let md = mass.mul_vec(&diff);
    Ok(diff.iter().zip(&md).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

fn cmd_online(a: OnlineArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let online = online_solve(&model, a.mu, a.check_full)?;
    let estimate = match &a.hierarchical {
        Some(path) => {
            let fine = load_model(path)?;
            Some(hierarchical_estimate(&model, &fine, a.mu)?)
        }
        None => None,
    };
    let l2_vs_full = match &online.u_broken {
        Some(u) => Some(online_check_full(&model, u, a.problem.as_deref(), a.mu)?),
        None => None,
    };
    let summary = OnlineSummary {
        mu: a.mu,
        n: model.n(),
        w: a.coeffs.then(|| online.w.clone()),
        l2_vs_full,
        estimate,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let cp = load_problem(&a.problem)?;
    let (problem, _) = at_parameter(&cp, a.mu);
    let grid = problem.grid(a.n);
    let report = validate(&problem, &grid, CLASSIFY_SAMPLES)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits_in_both_notations() {
        assert_eq!(sig6(0.01664), "0.0166400");
        assert_eq!(sig6(0.99274), "0.992740");
        assert_eq!(sig6(123.456), "123.456");
        assert_eq!(sig6(123456.0), "123456");
        assert_eq!(sig6(8.91234e-5), "8.91234e-5");
        assert_eq!(sig6(1.23e9), "1.23000e9");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-0.5), "-0.500000");
    }

    #[test]
    fn level_ranges_expand_by_doubling() {
        assert_eq!(parse_levels("4:32").unwrap(), vec![4, 8, 16, 32]);
        assert_eq!(parse_levels("16:16").unwrap(), vec![16]);
        assert!(parse_levels("4:24").is_err());
        assert!(parse_levels("0:8").is_err());
        assert!(parse_levels("8").is_err());
        assert!(parse_levels("32:4").is_err());
    }

}
