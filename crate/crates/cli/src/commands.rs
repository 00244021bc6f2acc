use serde_json::json;

use meyers_core::analysis::{
    dyadic_radii, holder_exponent, integrability_threshold, linear_grid, GradSource, HolderEstimate, ThresholdScan,
    ValueSource,
};
use meyers_core::coeff::{bmo_seminorm, default_bmo_sampling, eval_example_d, example_sup_norm, BmoEstimate};
use meyers_core::fem::{solve_problem, SolveOptions};
use meyers_core::mesh::{build_disk_mesh, MeshTri};
use meyers_core::studies::{
    graded_solve_options, manufactured_convergence, manufactured_rhs, manufactured_value, meyers_scan,
    observed_rates, oracle_convergence, oracle_weak_residuals, refined, solve_oracle_problem, GradedFamily,
    LevelResult, MeyersScan, ScanField,
};
use meyers_core::{CoefficientField, OracleSolution};

use crate::artifacts::{csv_bytes, emit, io_error, json_bytes, num};
use crate::config::*;
use crate::CliError;

/// Radii of the annulus and modulus scans: `2^-2 .. 2^-11`.
pub(crate) fn scan_radii() -> Vec<f64> {
    dyadic_radii(2, 10)
}

/// Angles sampled per circle by the Hölder modulus.
pub(crate) const HOLDER_ANGLES: usize = 256;

pub(crate) fn execute(config: &RunConfig) -> Result<i32, CliError> {
    match &config.command {
        Command::Solve(a) => solve(a),
        Command::VerifyOracle(a) => verify_oracle(a),
        Command::ScanMeyers(a) => scan(a),
        Command::Bmo(a) => bmo(a),
        Command::Threshold(a) => threshold(a),
        Command::Convergence(a) => convergence(a),
        Command::Reproduce(a) => {
            let report = crate::reproduce_paper(&a.out_dir, config.seed)?;
            Ok(if report.all_pass() { 0 } else { 1 })
        }
    }
}

fn solve(a: &SolveArgs) -> Result<i32, CliError> {
    let base = build_disk_mesh(a.rings, a.sectors, a.grading)?;
    let mesh = refined(&base, a.refine);
    let field = match a.mu {
        Some(mu) => CoefficientField::example(mu)?,
        None => CoefficientField::identity(),
    };
    let oracle = a.mu.map(OracleSolution::new).transpose()?;
    let mut opts = SolveOptions::with_tol(a.tol);
    opts.gmres.restart = a.restart;
    opts.gmres.max_iter = a.max_iter;
    opts.quad_order = a.quad;

    let manufactured = manufactured_rhs(&field);
    let f = |x: f64, y: f64| match a.rhs {
        RhsArg::Zero => Some([0.0, 0.0]),
        RhsArg::Const { fx, fy } => Some([fx, fy]),
        RhsArg::Manufactured => manufactured(x, y),
    };
    let g = |x: f64, y: f64| match (a.bc, oracle) {
        (BcArg::Oracle, Some(o)) => o.value_or_zero(x, y),
        _ if a.rhs == RhsArg::Manufactured => manufactured_value(x, y),
        _ => 0.0,
    };
    let (sol, report) = solve_problem(&mesh, &field, &f, &g, &opts)?;

    if let Some(path) = &a.mesh_out {
        let mut buf = Vec::new();
        mesh.write_ascii(&mut buf).map_err(|e| io_error(path, e))?;
        crate::artifacts::write_new(path, &buf)?;
    }
    let rows: Vec<Vec<String>> = mesh
        .vertices
        .iter()
        .zip(&sol.coeffs)
        .map(|(v, u)| vec![num(v.x), num(v.y), num(*u)])
        .collect();
    emit(a.out.as_deref(), &csv_bytes(&["x", "y", "u"], &rows)?)?;
    eprintln!(
        "solved {} unknowns: {} iterations, relative residual {:e}",
        mesh.n_vertices(),
        report.iterations,
        report.relative_residual
    );
    Ok(0)
}

fn verify_oracle(a: &VerifyOracleArgs) -> Result<i32, CliError> {
    let family = GradedFamily {
        rings: a.rings,
        sectors: a.sectors,
        grading: a.grading,
    };
    let levels = oracle_weak_residuals(a.mu, &family, a.levels, a.quad)?;
    let rows: Vec<Vec<String>> = levels
        .iter()
        .map(|l| vec![l.level.to_string(), l.n_vertices.to_string(), num(l.max_residual)])
        .collect();
    emit(
        a.csv.as_deref(),
        &csv_bytes(&["level", "n_vertices", "max_weak_residual"], &rows)?,
    )?;
    Ok(0)
}

pub(crate) fn run_scan(field: ScanField, level: usize, p_min: f64, p_max: f64, p_step: f64) -> Result<MeyersScan, CliError> {
    let grid = linear_grid(p_min, p_max, p_step);
    Ok(meyers_scan(field, level, &grid)?)
}

fn scan(a: &ScanMeyersArgs) -> Result<i32, CliError> {
    let field = match a.mu {
        Some(mu) => ScanField::Example { mu },
        None => ScanField::Identity,
    };
    let result = run_scan(field, a.refine, a.p_min, a.p_max, a.p_step)?;
    let s = &result.scan;
    let rows: Vec<Vec<String>> = (0..s.p_grid.len())
        .map(|k| {
            let (c, r) = s.argmax[k];
            vec![num(s.p_grid[k]), num(s.max_ratio[k]), num(c[0]), num(c[1]), num(r)]
        })
        .collect();
    emit(
        a.csv.as_deref(),
        &csv_bytes(
            &["p", "max_ratio", "argmax_center_x", "argmax_center_y", "argmax_radius"],
            &rows,
        )?,
    )?;
    Ok(0)
}

pub(crate) fn bmo_estimate(mu: f64, grid: usize, min_exp: u32, quad: usize) -> Result<BmoEstimate, CliError> {
    let d = move |x: f64, y: f64| eval_example_d(x, y, mu).ok();
    let (centers, radii) = default_bmo_sampling(grid, min_exp);
    Ok(bmo_seminorm(&d, &centers, &radii, quad)?)
}

fn bmo(a: &BmoArgs) -> Result<i32, CliError> {
    let est = bmo_estimate(a.mu, a.grid, a.radii_min_exp, a.quad)?;
    let bound = 2.0 * example_sup_norm(a.mu);
    if a.json {
        let v = json!({
            "mu": a.mu,
            "value": est.value,
            "argmax_center": est.argmax_center,
            "argmax_radius": est.argmax_radius,
            "n_balls": est.n_balls,
            "quadrature_points_per_ball": est.quadrature_points_per_ball,
            "sup_norm_bound": bound,
        });
        emit(None, &json_bytes(&v))?;
    } else {
        println!(
            "BMO lower bound {:.6} (ball at ({}, {}), radius {}; {} balls); 2 sup|d| = {:.6}",
            est.value, est.argmax_center[0], est.argmax_center[1], est.argmax_radius, est.n_balls, bound
        );
    }
    Ok(0)
}

pub(crate) fn example_solution_mesh(level: usize) -> Result<MeshTri, CliError> {
    Ok(GradedFamily::default().mesh(level)?)
}

pub(crate) fn lp_threshold(mu: f64, p_step: f64, source: SourceArg, level: usize) -> Result<ThresholdScan, CliError> {
    let o = OracleSolution::new(mu)?;
    let grid = linear_grid(2.0, 2.0 / (1.0 - mu) + 2.0, p_step);
    match source {
        SourceArg::Oracle => Ok(integrability_threshold(GradSource::Oracle(o), &grid, &scan_radii(), 3)?),
        SourceArg::Fem => {
            let mesh = example_solution_mesh(level)?;
            let field = CoefficientField::example(mu)?;
            let (sol, _) = solve_oracle_problem(&mesh, &field, &o, &graded_solve_options())?;
            Ok(integrability_threshold(GradSource::Fem(&sol), &grid, &scan_radii(), 3)?)
        }
    }
}

pub(crate) fn holder_threshold(mu: f64, source: SourceArg, level: usize) -> Result<HolderEstimate, CliError> {
    let o = OracleSolution::new(mu)?;
    match source {
        SourceArg::Oracle => Ok(holder_exponent(ValueSource::Oracle(o), &scan_radii(), HOLDER_ANGLES)?),
        SourceArg::Fem => {
            let mesh = example_solution_mesh(level)?;
            let field = CoefficientField::example(mu)?;
            let (sol, _) = solve_oracle_problem(&mesh, &field, &o, &graded_solve_options())?;
            Ok(holder_exponent(ValueSource::Fem(&sol), &scan_radii(), HOLDER_ANGLES)?)
        }
    }
}

fn threshold(a: &ThresholdArgs) -> Result<i32, CliError> {
    let v = match a.mode {
        ThresholdMode::Lp => {
            let scan = lp_threshold(a.mu, a.p_step, a.source, a.level)?;
            json!({
                "mu": a.mu,
                "mode": a.mode,
                "source": a.source,
                "p_star": scan.p_star,
                "target": 2.0 / (1.0 - a.mu),
                "p_grid": scan.p_grid,
                "slopes": scan.slopes,
            })
        }
        ThresholdMode::Holder => {
            let est = holder_threshold(a.mu, a.source, a.level)?;
            json!({
                "mu": a.mu,
                "mode": a.mode,
                "source": a.source,
                "alpha": est.alpha,
                "target": a.mu,
                "r2": est.fit.r2,
                "scales": est.scales,
                "moduli": est.moduli,
            })
        }
    };
    if a.json {
        emit(None, &json_bytes(&v))?;
    } else {
        match a.mode {
            ThresholdMode::Lp => println!("p* = {} (2/(1-mu) = {:.6})", v["p_star"], v["target"]),
            ThresholdMode::Holder => println!("alpha = {:.6} (mu = {})", v["alpha"].as_f64().unwrap_or(f64::NAN), a.mu),
        }
    }
    Ok(0)
}

fn convergence(a: &ConvergenceArgs) -> Result<i32, CliError> {
    let levels: Vec<LevelResult> = match a.case {
        CaseArg::Manufactured => {
            let field = CoefficientField::example(a.mu)?;
            manufactured_convergence(&field, a.levels, &SolveOptions::default())?
        }
        CaseArg::Oracle => oracle_convergence(a.mu, &GradedFamily::default(), a.levels, &graded_solve_options())?,
    };
    let rates = observed_rates(&levels);
    let rows: Vec<Vec<String>> = levels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            vec![
                l.level.to_string(),
                l.n_vertices.to_string(),
                num(l.h_max),
                num(l.error),
                if k == 0 { String::new() } else { num(rates[k - 1]) },
                l.solve.iterations.to_string(),
                num(l.solve.relative_residual),
            ]
        })
        .collect();
    emit(
        a.csv.as_deref(),
        &csv_bytes(
            &["level", "n_vertices", "h_max", "error", "rate", "iterations", "relative_residual"],
            &rows,
        )?,
    )?;
    Ok(0)
}
