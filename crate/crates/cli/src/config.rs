use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Finite-element laboratory for div(A grad u) = div F with skew-symmetric,
/// possibly discontinuous coefficients.
#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "meyers", version)]
pub struct RunConfig {
    /// Seed for randomized checks
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Solve one Dirichlet problem and write the nodal solution as CSV
    Solve(SolveArgs),
    /// Weak residual of the exact example solution on graded meshes
    VerifyOracle(VerifyOracleArgs),
    /// Reverse Hölder ratio scan over balls
    ScanMeyers(ScanMeyersArgs),
    /// Sampled BMO seminorm of the example drift coefficient
    Bmo(BmoArgs),
    /// Integrability or Hölder threshold of the example solution
    Threshold(ThresholdArgs),
    /// Refinement study of the manufactured or the example problem
    Convergence(ConvergenceArgs),
    /// Run the full check matrix and write a markdown report
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldArg {
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsArg {
    Zero,
    Const { fx: f64, fy: f64 },
    Manufactured,
}

impl FromStr for RhsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(Self::Zero),
            "manufactured" => Ok(Self::Manufactured),
            _ => {
                let rest = s
                    .strip_prefix("const:")
                    .ok_or_else(|| format!("expected zero, const:<fx>,<fy> or manufactured, got {s:?}"))?;
                let (a, b) = rest
                    .split_once(',')
                    .ok_or_else(|| format!("expected const:<fx>,<fy>, got {s:?}"))?;
                let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
                Ok(Self::Const {
                    fx: parse(a)?,
                    fy: parse(b)?,
                })
            }
        }
    }
}

impl fmt::Display for RhsArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Const { fx, fy } => write!(f, "const:{fx},{fy}"),
            Self::Manufactured => write!(f, "manufactured"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcArg {
    Zero,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    Lp,
    Holder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceArg {
    /// Closed-form solution
    Oracle,
    /// Finite-element solution on a graded mesh
    Fem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseArg {
    Manufactured,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Example drift parameter in (0, 1)
    #[arg(long)]
    pub mu: Option<f64>,
    /// Use the identity coefficient instead of the example field
    #[arg(long, value_enum)]
    pub field: Option<FieldArg>,
    #[arg(long, default_value_t = 4)]
    pub rings: usize,
    #[arg(long, default_value_t = 16)]
    pub sectors: usize,
    #[arg(long, default_value_t = 1.0)]
    pub grading: f64,
    /// Uniform refinements of the base mesh
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    /// zero, const:<fx>,<fy> or manufactured
    #[arg(long, default_value_t = RhsArg::Zero)]
    pub rhs: RhsArg,
    #[arg(long, value_enum, default_value_t = BcArg::Zero)]
    pub bc: BcArg,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub restart: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Quadrature points per element: 1, 3 or 6
    #[arg(long, default_value_t = 3)]
    pub quad: usize,
    /// Solution CSV (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mesh in ASCII format
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VerifyOracleArgs {
    #[arg(long)]
    pub mu: f64,
    /// Finest graded level (levels 0..=k are computed)
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 4)]
    pub rings: usize,
    #[arg(long, default_value_t = 16)]
    pub sectors: usize,
    #[arg(long, default_value_t = 3.0)]
    pub grading: f64,
    #[arg(long, default_value_t = 3)]
    pub quad: usize,
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScanMeyersArgs {
    #[arg(long)]
    pub mu: Option<f64>,
    /// Scan the identity control problem instead of the example
    #[arg(long, value_enum)]
    pub field: Option<FieldArg>,
    #[arg(long, default_value_t = 2.0)]
    pub p_min: f64,
    #[arg(long, default_value_t = 8.0)]
    pub p_max: f64,
    #[arg(long, default_value_t = 0.25)]
    pub p_step: f64,
    /// Graded mesh level (at least 1)
    #[arg(long, default_value_t = 3)]
    pub refine: usize,
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BmoArgs {
    #[arg(long)]
    pub mu: f64,
    /// Centers per side of the grid on [-1, 1]^2
    #[arg(long, default_value_t = 21)]
    pub grid: usize,
    /// Smallest radius is 2^-k
    #[arg(long, default_value_t = 6)]
    pub radii_min_exp: u32,
    /// Polar quadrature points per direction
    #[arg(long, default_value_t = 64)]
    pub quad: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub mu: f64,
    #[arg(long, value_enum)]
    pub mode: ThresholdMode,
    #[arg(long, value_enum, default_value_t = SourceArg::Oracle)]
    pub source: SourceArg,
    /// Graded mesh level for --source fem
    #[arg(long, default_value_t = 3)]
    pub level: usize,
    /// Spacing of the exponent grid in lp mode
    #[arg(long, default_value_t = 0.25)]
    pub p_step: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConvergenceArgs {
    #[arg(long, value_enum)]
    pub case: CaseArg,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn check_mu(mu: f64) -> Result<(), CliError> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(CliError::validation(format!("--mu must lie in (0, 1), got {mu}")))
    }
}

fn check_field(mu: Option<f64>, field: Option<FieldArg>) -> Result<(), CliError> {
    match (mu, field) {
        (Some(m), None) => check_mu(m),
        (None, Some(_)) => Ok(()),
        (Some(_), Some(_)) => Err(CliError::validation("--mu and --field identity are mutually exclusive")),
        (None, None) => Err(CliError::validation("one of --mu or --field identity is required")),
    }
}

fn check_quad(q: usize) -> Result<(), CliError> {
    if matches!(q, 1 | 3 | 6) {
        Ok(())
    } else {
        Err(CliError::validation(format!("--quad must be 1, 3 or 6, got {q}")))
    }
}

impl RunConfig {
    /// Checks flag combinations; runs before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        match &self.command {
            Command::Solve(a) => {
                check_field(a.mu, a.field)?;
                if a.bc == BcArg::Oracle && a.mu.is_none() {
                    return Err(CliError::validation("--bc oracle requires --mu"));
                }
                if !(a.tol > 0.0) || a.restart == 0 || a.max_iter == 0 {
                    return Err(CliError::validation("--tol, --restart and --max-iter must be positive"));
                }
                if !(a.grading >= 1.0) {
                    return Err(CliError::validation("--grading must be at least 1"));
                }
                check_quad(a.quad)
            }
            Command::VerifyOracle(a) => {
                check_mu(a.mu)?;
                check_quad(a.quad)?;
                if a.levels == 0 {
                    return Err(CliError::validation("--levels must be at least 1"));
                }
                Ok(())
            }
            Command::ScanMeyers(a) => {
                check_field(a.mu, a.field)?;
                if a.refine == 0 {
                    return Err(CliError::validation("--refine must be at least 1"));
                }
                if !(a.p_min >= 1.0 && a.p_max >= a.p_min && a.p_step > 0.0) {
                    return Err(CliError::validation("need 1 <= --p-min <= --p-max and --p-step > 0"));
                }
                Ok(())
            }
            Command::Bmo(a) => {
                check_mu(a.mu)?;
                if a.quad < 64 || a.grid == 0 {
                    return Err(CliError::validation("--quad must be at least 64 and --grid positive"));
                }
                Ok(())
            }
            Command::Threshold(a) => {
                check_mu(a.mu)?;
                if !(a.p_step > 0.0) {
                    return Err(CliError::validation("--p-step must be positive"));
                }
                Ok(())
            }
            Command::Convergence(a) => {
                check_mu(a.mu)?;
                if a.levels == 0 {
                    return Err(CliError::validation("--levels must be at least 1"));
                }
                Ok(())
            }
            Command::Reproduce(_) => Ok(()),
        }
    }
}
