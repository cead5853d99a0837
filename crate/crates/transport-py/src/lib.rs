//! Python bindings: catalog lookup, full-order solves with error reporting,
//! point evaluation, and greedy reduced-basis construction.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use transport::analysis::{l2_error_on, linf_error_on, solve_problem, StudyOptions};
use transport::assembly::{test_spaces, RhsOptions};
use transport::problem::{catalog, instantiate, TransportProblem};
use transport::rb::{equidistant, strong_greedy};
use transport::solver::{post_process, Evaluate};

fn err(e: transport::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Freezes a catalog problem at a parameter (box midpoint when none is given).
fn load(problem: &str, mu: Option<f64>) -> PyResult<TransportProblem> {
    let cp = catalog(problem).map_err(err)?;
    Ok(match &cp.affine {
        Some(aff) => instantiate(&cp.problem, aff, mu.unwrap_or_else(|| aff.mu_bar())),
        None => cp.problem.clone(),
    })
}

/// Names of the built-in problems.
#[pyfunction]
fn catalog_names() -> Vec<String> {
    transport::problem::catalog_names().iter().map(|s| s.to_string()).collect()
}

/// Solves a catalog problem and returns (l2_error, linf_error) against its
/// exact solution.
#[pyfunction]
#[pyo3(signature = (problem, n, order = 1, mu = None, postprocess = false))]
fn solve_errors(
    problem: &str,
    n: usize,
    order: usize,
    mu: Option<f64>,
    postprocess: bool,
) -> PyResult<(f64, f64)> {
    let inst = load(problem, mu)?;
    let exact = inst
        .exact
        .clone()
        .ok_or_else(|| PyValueError::new_err(format!("problem '{problem}' has no exact solution")))?;
    let sol = solve_problem(&inst, n, order, &StudyOptions::default()).map_err(err)?;
    let post;
    let eval: &dyn Evaluate = if postprocess {
        post = post_process(&sol, None).map_err(err)?;
        &post
    } else {
        &sol
    };
    let (lo, hi) = (&inst.domain.0, &inst.domain.1);
    let f = |x: &[f64]| exact(x);
    let l2 = l2_error_on(eval, &f, lo, hi, 4, order + 2).map_err(err)?;
    let linf = linf_error_on(eval, &f, lo, hi).map_err(err)?;
    Ok((l2, linf))
}

/// Solves a catalog problem and evaluates the solution at the given points.
#[pyfunction]
#[pyo3(signature = (problem, n, points, order = 1, mu = None))]
fn solve_at(
    problem: &str,
    n: usize,
    points: Vec<Vec<f64>>,
    order: usize,
    mu: Option<f64>,
) -> PyResult<Vec<f64>> {
    let inst = load(problem, mu)?;
    let sol = solve_problem(&inst, n, order, &StudyOptions::default()).map_err(err)?;
    points.iter().map(|x| sol.eval_at(x).map_err(err)).collect()
}

/// Runs the strong greedy on a parametrized problem; returns the selected
/// parameters and the max train error before each extension.
#[pyfunction]
#[pyo3(signature = (problem, n, order = 1, train = 32, tol = 1e-4))]
fn greedy_build(
    problem: &str,
    n: usize,
    order: usize,
    train: usize,
    tol: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cp = catalog(problem).map_err(err)?;
    let aff = cp
        .affine
        .clone()
        .ok_or_else(|| PyValueError::new_err(format!("problem '{problem}' has no parameter structure")))?;
    let grid = cp.problem.grid(n);
    let spaces = test_spaces(&cp.problem, &grid, order).map_err(err)?;
    let (lo, hi) = aff.parameter_box;
    let mus = equidistant(lo, hi, train);
    let (model, trace) =
        strong_greedy(&cp.problem, &aff, &grid, &spaces, &mus, tol, RhsOptions::for_order(order))
            .map_err(err)?;
    let errors = trace.steps.iter().map(|s| s.max_error).collect();
    Ok((model.selected.clone(), errors))
}

#[pymodule]
fn transport_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    m.add_function(wrap_pyfunction!(solve_errors, m)?)?;
    m.add_function(wrap_pyfunction!(solve_at, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_build, m)?)?;
    Ok(())
}
