//! The full check matrix and its markdown report.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use meyers_core::fem::assemble_stiffness;
use meyers_core::mesh::build_disk_mesh;
use meyers_core::studies::ScanField;
use meyers_core::CoefficientField;

use crate::artifacts::{io_error, write_new};
use crate::commands::{bmo_estimate, holder_threshold, lp_threshold};
use crate::{CliError, SourceArg};

pub const MUS: [f64; 3] = [0.25, 0.5, 0.75];

/// Grid spacing of the lp row plus the fit slack.
const LP_TOLERANCE: f64 = 0.25 + 0.15;
const HOLDER_TOLERANCE: f64 = 0.05;
const HOLDER_LEVEL: usize = 3;
const SCAN_LEVELS: [usize; 3] = [1, 2, 3];
/// Required growth of the supercritical max ratio from the first to the last level.
const SCAN_GROWTH: f64 = 1.5;
/// Allowed spread of the `p = 2` max ratio across levels.
const SCAN_BOUNDED: f64 = 2.0;
const BMO_STABILITY: f64 = 0.05;
const SKEW_VECTORS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Lp,
    Holder,
    MeyersScan,
    Bmo,
}

impl Check {
    pub const ALL: [Check; 4] = [Check::Lp, Check::Holder, Check::MeyersScan, Check::Bmo];

    fn name(self) -> &'static str {
        match self {
            Check::Lp => "lp",
            Check::Holder => "holder",
            Check::MeyersScan => "meyers-scan",
            Check::Bmo => "bmo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub mu: f64,
    pub check: Check,
    pub pass: bool,
    pub measured: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<RowResult>,
    /// Markdown written to `report.md`.
    pub body: String,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn failed_row(mu: f64, check: Check, target: String, e: CliError) -> RowResult {
    RowResult {
        mu,
        check,
        pass: false,
        measured: format!("error: {} ({})", e, e.code()),
        target,
    }
}

fn lp_row(mu: f64) -> RowResult {
    let pc = 2.0 / (1.0 - mu);
    let target = format!("p* = {pc:.4} ± {LP_TOLERANCE}");
    match lp_threshold(mu, 0.25, SourceArg::Oracle, 0) {
        Ok(scan) => RowResult {
            mu,
            check: Check::Lp,
            pass: (scan.p_star - pc).abs() <= LP_TOLERANCE,
            measured: format!("p* = {:.4}", scan.p_star),
            target,
        },
        Err(e) => failed_row(mu, Check::Lp, target, e),
    }
}

fn holder_row(mu: f64) -> RowResult {
    let target = format!("alpha = {mu} ± {HOLDER_TOLERANCE} (FEM, graded level {HOLDER_LEVEL})");
    match holder_threshold(mu, SourceArg::Fem, HOLDER_LEVEL) {
        Ok(est) => RowResult {
            mu,
            check: Check::Holder,
            pass: (est.alpha - mu).abs() <= HOLDER_TOLERANCE,
            measured: format!("alpha = {:.4}", est.alpha),
            target,
        },
        Err(e) => failed_row(mu, Check::Holder, target, e),
    }
}

fn scan_row(mu: f64) -> RowResult {
    let pc = 2.0 / (1.0 - mu);
    let target = format!(
        "max ratio at p = {:.3} increasing over levels 1-3, growth >= {SCAN_GROWTH}; at p = 2 within {SCAN_BOUNDED}x",
        2.0 * pc
    );
    let grid = [2.0, pc, 2.0 * pc];
    let scans: Result<Vec<_>, CliError> = SCAN_LEVELS
        .iter()
        .map(|&l| meyers_core::studies::meyers_scan(ScanField::Example { mu }, l, &grid).map_err(CliError::from))
        .collect();
    match scans {
        Ok(scans) => {
            let high: Vec<f64> = scans.iter().map(|s| s.scan.max_ratio[2]).collect();
            let low: Vec<f64> = scans.iter().map(|s| s.scan.max_ratio[0]).collect();
            let increasing = high.windows(2).all(|w| w[1] > w[0]);
            let growth = high[high.len() - 1] / high[0];
            let spread = low.iter().cloned().fold(f64::MIN, f64::max) / low.iter().cloned().fold(f64::MAX, f64::min);
            let list = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
            RowResult {
                mu,
                check: Check::MeyersScan,
                pass: increasing && growth >= SCAN_GROWTH && spread < SCAN_BOUNDED,
                measured: format!("p = {:.3}: [{}]; p = 2: [{}]", 2.0 * pc, list(&high), list(&low)),
                target,
            }
        }
        Err(e) => failed_row(mu, Check::MeyersScan, target, e),
    }
}

fn bmo_row(mu: f64) -> RowResult {
    let bound = std::f64::consts::PI * (1.0 - mu * mu) / mu;
    let target = format!("value <= {bound:.4}, change <= {:.0}% when quadrature doubles", BMO_STABILITY * 100.0);
    let run = || -> Result<(f64, f64), CliError> {
        let a = bmo_estimate(mu, 21, 6, 64)?.value;
        let b = bmo_estimate(mu, 21, 6, 128)?.value;
        Ok((a, b))
    };
    match run() {
        Ok((a, b)) => {
            let change = (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
            RowResult {
                mu,
                check: Check::Bmo,
                pass: a <= bound && b <= bound && change <= BMO_STABILITY,
                measured: format!("value = {a:.6} (q = 64), {b:.6} (q = 128), change {:.2e}", change),
                target,
            }
        }
        Err(e) => failed_row(mu, Check::Bmo, target, e),
    }
}

/// Largest `|z^T K_skew z| / (|z|^2 max|K_skew|)` over seeded random vectors.
fn skew_check(seed: u64) -> Result<f64, CliError> {
    let mesh = build_disk_mesh(4, 16, 2.0)?;
    let field = CoefficientField::example(0.5)?;
    let st = assemble_stiffness(&mesh, &field, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = st.skew.max_abs();
    let mut worst = 0.0f64;
    for _ in 0..SKEW_VECTORS {
        let z: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        worst = worst.max(st.skew.quadratic_form(&z).abs() / (zz * scale));
    }
    Ok(worst)
}

fn render(rows: &[RowResult], seed: u64, skew: &Result<f64, CliError>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Reproduction report\n");
    let _ = writeln!(s, "seed: {seed}\n");
    let _ = writeln!(s, "| mu | check | result | measured | target |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            r.mu,
            r.check.name(),
            if r.pass { "PASS" } else { "FAIL" },
            r.measured,
            r.target
        );
    }
    let passed = rows.iter().filter(|r| r.pass).count();
    let _ = writeln!(s, "\n{passed} of {} rows pass.\n", rows.len());
    match skew {
        Ok(v) => {
            let _ = writeln!(
                s,
                "Skew annihilation, {SKEW_VECTORS} seeded vectors: max |z^T K z| / (|z|^2 max|K|) = {v:.3e}"
            );
        }
        Err(e) => {
            let _ = writeln!(s, "Skew annihilation check failed: {e}");
        }
    }
    s
}

/// Runs every `(mu, check)` row, writes `out_dir/report.md` and returns the
/// rows. Rows run in parallel; the report is assembled in a fixed order.
pub fn reproduce_paper(out_dir: &Path, seed: u64) -> Result<Report, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let path = out_dir.join("report.md");
    if path.exists() {
        return Err(io_error(&path, std::io::ErrorKind::AlreadyExists.into()));
    }
    let cases: Vec<(f64, Check)> = MUS
        .iter()
        .flat_map(|&mu| Check::ALL.iter().map(move |&c| (mu, c)))
        .collect();
    let rows: Vec<RowResult> = cases
        .par_iter()
        .map(|&(mu, check)| match check {
            Check::Lp => lp_row(mu),
            Check::Holder => holder_row(mu),
            Check::MeyersScan => scan_row(mu),
            Check::Bmo => bmo_row(mu),
        })
        .collect();
    let skew = skew_check(seed);
    let body = render(&rows, seed, &skew);
    write_new(&path, body.as_bytes())?;
    Ok(Report { rows, body })
}
