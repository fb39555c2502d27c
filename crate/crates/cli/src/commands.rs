use convex_order::geometry::{
    cx_set, cx_set_subset, find_witness, DirectionSet, Polytope, WitnessSimplex,
};
use convex_order::measures::DiscreteMeasure;
use convex_order::order::{
    build_kernel_iterative, build_kernel_lp, check_order, Certificate, Kernel, KernelMethod,
    OrderError, OrderRelation,
};
use convex_order::sim::{
    compare, default_lambda_grid, derive_seed, deviation_bound, empirical_tail, simulate_terminal,
    CompareOptions, CompareRow, DeviationRow, Scenario,
};
use serde::{Deserialize, Serialize};

use crate::io::{emit, parse_point, read_json, CliError};
use crate::{GeometryCmd, KernelCmd, Method, OrderCmd, PairArgs, SimCmd};

const KERNEL_L1_TOL: f64 = 1e-6;
const KERNEL_BARYCENTER_TOL: f64 = 1e-8;

fn read_pair(p: &PairArgs) -> Result<(DiscreteMeasure, DiscreteMeasure), CliError> {
    let mu: DiscreteMeasure = read_json(&p.mu)?;
    let nu: DiscreteMeasure = read_json(&p.nu)?;
    if mu.dimension() != nu.dimension() {
        return Err(CliError::Arg(format!(
            "mu has dimension {}, nu has {}",
            mu.dimension(),
            nu.dimension()
        )));
    }
    Ok((mu, nu))
}

fn point_for(s: &str, mu: &DiscreteMeasure) -> Result<Vec<f64>, CliError> {
    let x = parse_point(s)?;
    if x.len() != mu.dimension() {
        return Err(CliError::Arg(format!(
            "point has {} coordinates, measures have dimension {}",
            x.len(),
            mu.dimension()
        )));
    }
    Ok(x)
}

pub fn order(cmd: OrderCmd) -> Result<bool, CliError> {
    let OrderCmd::Check {
        relation,
        pair,
        certificate,
        exact,
        validate,
    } = cmd;
    let rel = OrderRelation::from(relation);
    let (mu, nu) = read_pair(&pair)?;
    if let Some(path) = validate {
        let cert: Certificate = read_json(&path)?;
        return check_certificate(&cert, &mu, &nu, rel, exact);
    }
    let verdict = check_order(&mu, &nu, rel)?;
    if exact {
        check_certificate(&verdict.certificate, &mu, &nu, rel, true)?;
    } else {
        println!("{}", describe(&verdict.certificate, &mu, &nu, rel)?);
    }
    if let Some(path) = certificate {
        emit(&path, &verdict.certificate);
    }
    Ok(verdict.ordered)
}

fn describe(
    cert: &Certificate,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
) -> Result<String, CliError> {
    Ok(match cert {
        Certificate::Coupling(c) => format!(
            "ordered: mu <=_{rel} nu (coupling, max residual {:.2e})",
            c.validate(mu, nu, rel)?.max()
        ),
        Certificate::Separator(s) => format!(
            "not ordered: mu is not <=_{rel} nu (separator, gap {:.6e})",
            s.validate(mu, nu, rel)?.gap
        ),
    })
}

/// Residual checks only; the exact variants redo them in rational arithmetic.
fn check_certificate(
    cert: &Certificate,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rel: OrderRelation,
    exact: bool,
) -> Result<bool, CliError> {
    let line = describe(cert, mu, nu, rel)?;
    let ordered = match cert {
        Certificate::Coupling(c) => {
            if exact {
                c.validate_exact(mu, nu, rel)?;
            }
            true
        }
        Certificate::Separator(s) => {
            if exact {
                s.validate_exact(mu, nu, rel)?;
            }
            false
        }
    };
    println!("{line}{}", if exact { ", exact check passed" } else { "" });
    Ok(ordered)
}

pub fn geometry(cmd: GeometryCmd) -> Result<bool, CliError> {
    match cmd {
        GeometryCmd::CxSet {
            pair,
            point,
            subset,
            directions,
            out,
            validate,
        } => {
            let (mu, nu) = read_pair(&pair)?;
            let x = point_for(&point, &mu)?;
            let points: Vec<Vec<f64>> = match &subset {
                Some(path) => read_json(path)?,
                None => vec![x.clone()],
            };
            if let Some(path) = validate {
                let p: Polytope = read_json(&path)?;
                return validate_polytope(&p, &points);
            }
            let set = directions.map_or(DirectionSet::Auto, DirectionSet::Count);
            let p = match subset {
                Some(_) => cx_set_subset(&mu, &nu, &points, &set)?,
                None => cx_set(&mu, &nu, &x, &set)?,
            };
            println!(
                "{} half-spaces, {} vertices",
                p.halfspaces.len(),
                p.vertices.len()
            );
            for v in &p.vertices {
                println!("  {}", fmt_point(v));
            }
            emit(out.as_deref().expect("clap requires --out"), &p);
            Ok(true)
        }
        GeometryCmd::Witness {
            pair,
            point,
            out,
            validate,
        } => {
            let (mu, nu) = read_pair(&pair)?;
            let x = point_for(&point, &mu)?;
            if let Some(path) = validate {
                let w: WitnessSimplex = read_json(&path)?;
                return validate_witness(&w, &mu, &nu, &x);
            }
            let w = find_witness(&mu, &nu, &x)?;
            println!("{:>10}  point", "weight");
            for (y, a) in w.points.iter().zip(&w.weights) {
                println!("{a:>10.6}  {}", fmt_point(y));
            }
            emit(out.as_deref().expect("clap requires --out"), &w);
            Ok(true)
        }
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.9}")).collect();
    format!("({})", parts.join(", "))
}

fn validate_polytope(p: &Polytope, points: &[Vec<f64>]) -> Result<bool, CliError> {
    let scale = 1.0
        + p.halfspaces
            .iter()
            .map(|h| h.offset.abs())
            .fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    if let Some(h) = p.halfspaces.iter().find(|h| {
        let n: f64 = h.normal.iter().map(|v| v * v).sum();
        (n.sqrt() - 1.0).abs() > 1e-9
    }) {
        return Err(CliError::Arg(format!(
            "normal {:?} is not a unit vector",
            h.normal
        )));
    }
    for x in points {
        let v = p.max_violation(x);
        if v > tol {
            return Err(CliError::Arg(format!(
                "point {x:?} violates a half-space by {v:e}"
            )));
        }
    }
    for y in &p.vertices {
        let v = p.max_violation(y);
        if v > tol {
            return Err(CliError::Arg(format!(
                "vertex {y:?} violates a half-space by {v:e}"
            )));
        }
    }
    println!(
        "polytope valid: {} half-spaces, {} vertices, contains the given points",
        p.halfspaces.len(),
        p.vertices.len()
    );
    Ok(true)
}

fn validate_witness(
    w: &WitnessSimplex,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    x: &[f64],
) -> Result<bool, CliError> {
    if !w.is_valid(x) {
        return Err(CliError::Arg(format!(
            "witness fails its weight or barycenter checks (residual {:e})",
            w.residual(x)
        )));
    }
    if let Some(y) = w.points.iter().find(|y| nu.index_of(y).is_none()) {
        return Err(CliError::Arg(format!(
            "witness point {y:?} is not an atom of nu"
        )));
    }
    let c = cx_set(mu, nu, x, &DirectionSet::Auto)?;
    let scale = 1.0 + nu.points().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(y) = w.points.iter().find(|y| !c.contains(y, 1e-9 * scale)) {
        return Err(CliError::Arg(format!(
            "witness point {y:?} lies outside C_x"
        )));
    }
    println!(
        "witness valid: {} atoms of nu in C_x, barycenter residual {:.2e}",
        w.points.len(),
        w.residual(x)
    );
    Ok(true)
}

#[derive(Serialize)]
struct DeviationFile<'a> {
    scenario: &'a Scenario,
    n_paths: usize,
    seed: u64,
    rows: &'a [DeviationRow],
}

fn parse_grid(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    parse_point(s).map_err(|e| CliError::Arg(format!("{what}: {e}")))
}

pub fn sim(cmd: SimCmd) -> Result<bool, CliError> {
    match cmd {
        SimCmd::Compare {
            sim,
            force,
            battery,
        } => {
            let sc: Scenario = read_json(&sim.scenario)?;
            let (f, g) = sc.specs()?;
            let opts = CompareOptions {
                force,
                battery: battery.into(),
            };
            let report = compare(&f, &g, sc.relation, sim.paths, sim.seed, &opts)?;
            if !report.hypotheses.holds() {
                println!(
                    "hypotheses fail on {} of {} intervals; simulating anyway",
                    report.hypotheses.failures(),
                    report.hypotheses.intervals.len()
                );
            }
            print_compare(&report.rows);
            println!(
                "{} of {} test functions violate E phi(F) <= E phi(G)",
                report.violations(),
                report.rows.len()
            );
            if let Some(path) = &sim.out {
                emit(path, &report);
            }
            Ok(report.violations() == 0)
        }
        SimCmd::Deviation {
            sim,
            x_grid,
            lambda_grid,
        } => {
            let sc: Scenario = read_json(&sim.scenario)?;
            let (f, g) = sc.specs()?;
            let xs = parse_grid(&x_grid, "x grid")?;
            let lambdas = match lambda_grid {
                Some(s) => parse_grid(&s, "lambda grid")?,
                None => default_lambda_grid(),
            };
            let fs = simulate_terminal(&f, sim.paths, derive_seed(sim.seed, 0))?;
            let gs = simulate_terminal(&g, sim.paths, derive_seed(sim.seed, 1))?;
            let mut rows = deviation_bound(&gs, &xs, &lambdas)?;
            for r in &mut rows {
                let (p, se) = empirical_tail(&fs, r.x);
                r.tail = Some(p);
                r.tail_se = Some(se);
            }
            println!(
                "{:>10} {:>12} {:>8} {:>12} {:>10}  ok",
                "x", "bound", "lambda", "tail", "tail se"
            );
            for r in &rows {
                println!(
                    "{:>10.4} {:>12.6} {:>8.3} {:>12.6} {:>10.2e}  {}",
                    r.x,
                    r.bound,
                    r.lambda,
                    r.tail.unwrap_or(f64::NAN),
                    r.tail_se.unwrap_or(f64::NAN),
                    if r.holds() { "yes" } else { "NO" }
                );
            }
            if let Some(path) = &sim.out {
                emit(
                    path,
                    &DeviationFile {
                        scenario: &sc,
                        n_paths: sim.paths,
                        seed: sim.seed,
                        rows: &rows,
                    },
                );
            }
            Ok(rows.iter().all(DeviationRow::holds))
        }
    }
}

/// The serialized name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn print_compare(rows: &[CompareRow]) {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    println!(
        "{:<w$} {:>14} {:>10} {:>14} {:>10}  decision",
        "phi", "E phi(F)", "se", "E phi(G)", "se"
    );
    for r in rows {
        println!(
            "{:<w$} {:>14.6} {:>10.2e} {:>14.6} {:>10.2e}  {}",
            r.name,
            r.mean_f,
            r.se_f,
            r.mean_g,
            r.se_g,
            label(&r.decision)
        );
    }
}

#[derive(Serialize, Deserialize)]
struct KernelFile {
    #[serde(flatten)]
    kernel: Kernel,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    method: Option<KernelMethod>,
    #[serde(default)]
    rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    stall_reason: Option<String>,
    /// Max-norm distance between each row's barycenter and its atom.
    #[serde(default)]
    row_barycenter_residuals: Vec<f64>,
    #[serde(default)]
    l1_error: f64,
}

fn row_residuals(k: &Kernel) -> Vec<f64> {
    k.rows
        .iter()
        .zip(&k.k)
        .map(|(x, row)| {
            (0..x.len())
                .map(|i| {
                    let b: f64 = k.cols.iter().zip(row).map(|(y, w)| w * y[i]).sum();
                    (b - x[i]).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

pub fn kernel(cmd: KernelCmd) -> Result<bool, CliError> {
    let KernelCmd::Build {
        pair,
        method,
        max_rounds,
        eps_floor,
        out,
        validate,
    } = cmd;
    let (mu, nu) = read_pair(&pair)?;
    if let Some(path) = validate {
        let file: KernelFile = read_json(&path)?;
        return validate_kernel(&file.kernel, &mu, &nu);
    }
    if !(eps_floor > 0.0 && eps_floor <= 1.0) {
        return Err(CliError::Arg("--eps-floor must lie in (0, 1]".into()));
    }
    let built = match method {
        Method::Lp => build_kernel_lp(&mu, &nu),
        Method::Iterative => build_kernel_iterative(&mu, &nu, max_rounds, eps_floor),
    };
    let report = match built {
        Ok(r) => r,
        Err(OrderError::NotOrdered) => {
            println!("not ordered: mu is not <=_cx nu, no kernel exists");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    let residuals = row_residuals(&report.kernel);
    let l1 = report.kernel.l1_error(&mu, &nu);
    println!(
        "kernel {}x{} via {} after {} rounds, |mu K - nu|_1 = {l1:.2e}, max row barycenter residual {:.2e}",
        report.kernel.rows.len(),
        report.kernel.cols.len(),
        label(&report.method),
        report.rounds,
        residuals.iter().cloned().fold(0.0, f64::max)
    );
    if let Some(reason) = &report.stall_reason {
        println!("transfer loop stopped early: {reason}");
    }
    let file = KernelFile {
        kernel: report.kernel,
        method: Some(report.method),
        rounds: report.rounds,
        stall_reason: report.stall_reason,
        row_barycenter_residuals: residuals,
        l1_error: l1,
    };
    emit(out.as_deref().expect("clap requires --out"), &file);
    Ok(true)
}

fn validate_kernel(
    k: &Kernel,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<bool, CliError> {
    let fail = |msg: String| Err(CliError::Arg(format!("kernel invalid: {msg}")));
    if k.k.len() != k.rows.len() || k.k.iter().any(|r| r.len() != k.cols.len()) {
        return fail("matrix shape does not match rows and cols".into());
    }
    if k.k.iter().flatten().any(|v| *v < 0.0 || !v.is_finite()) {
        return fail("negative or non-finite entry".into());
    }
    if let Some(a) = mu
        .atoms()
        .iter()
        .find(|a| !k.rows.iter().any(|x| x == &a.point))
    {
        return fail(format!("no row for mu atom {:?}", a.point));
    }
    let stoch = k.stochasticity_residual();
    let bary = k.barycenter_residual();
    let l1 = k.l1_error(mu, nu);
    if stoch > KERNEL_BARYCENTER_TOL || bary > KERNEL_BARYCENTER_TOL || l1 > KERNEL_L1_TOL {
        return fail(format!(
            "row sums off by {stoch:e}, barycenters by {bary:e}, |mu K - nu|_1 = {l1:e}"
        ));
    }
    println!("kernel valid: |mu K - nu|_1 = {l1:.2e}, barycenter residual {bary:.2e}, row sums within {stoch:.2e}");
    Ok(true)
}
