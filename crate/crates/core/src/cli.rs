//! Command-line front end.
//!
//! Exit codes: 0 success (including the `NoNegativeBasis` finding of
//! `certificate`), 2 usage errors, 3 numerical failures. Failures are
//! reported as a JSON object with an `"error"` key on standard output.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::exactbasis::{audit_degrees, format_rational, MAX_DEGREE};
use crate::fem::{norm, DEFAULT_CG_TOL};
use crate::jsonfmt::{fixed17, fixed17_opt, format_f64};
use crate::ocp::{
    build_certificate, convergence_study, ModelProblem, OcpConfig, OcpError, DEFAULT_ALPHA,
    DEFAULT_KKT_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ctrldisc",
    version,
    about = "Exact sign audits of Lagrange bases and the non-feasible-limit counterexample"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact integrals of every reference Lagrange basis function, k = 1..max-degree.
    AuditBasis(AuditArgs),
    /// Counterexample certificate (beta, M^2, t_hat, delta) on one mesh.
    Certificate(CertificateArgs),
    /// Solve the discretized optimal control problem on one mesh.
    Solve(SolveArgs),
    /// Solve on a sequence of meshes and classify the limit.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// JSON output (default).
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    /// CSV output for the tabular part of the report.
    #[arg(long)]
    pub csv: bool,
    /// Write the report to PATH instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    pub dim: u32,
    #[arg(long)]
    pub max_degree: u32,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CertificateArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub dim: u32,
    #[arg(long)]
    pub degree: u32,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Mesh used to measure L_n and J_n(t_hat w_n).
    #[arg(long, default_value_t = 4)]
    pub mesh: usize,
    #[arg(long, default_value_t = DEFAULT_CG_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub dim: u32,
    #[arg(long)]
    pub degree: u32,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub mesh: usize,
    /// Relative residual tolerance of the state and adjoint solves.
    #[arg(long, default_value_t = DEFAULT_CG_TOL)]
    pub tol: f64,
    /// Stopping tolerance of the projected-gradient QP solver.
    #[arg(long, default_value_t = DEFAULT_KKT_TOL)]
    pub kkt_tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub dim: u32,
    #[arg(long)]
    pub degree: u32,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    pub meshes: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_CG_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_KKT_TOL)]
    pub kkt_tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Exit code and text produced by one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

impl Outcome {
    fn error(code: i32, kind: &str, message: impl Into<String>) -> Self {
        let body = json!({ "error": kind, "message": message.into() });
        Outcome {
            code,
            stdout: format!("{}\n", serde_json::to_string_pretty(&body).unwrap()),
        }
    }
}

fn usage(message: impl Into<String>) -> Outcome {
    Outcome::error(EXIT_USAGE, "usage", message)
}

fn from_ocp_error(e: OcpError) -> Outcome {
    if e.is_numerical() {
        let mut body = json!({ "error": "numerical", "message": e.to_string() });
        if let OcpError::IterationCap(best) = &e {
            body["best_objective"] = json!(best.objective);
            body["iterations"] = json!(best.iterations);
        }
        Outcome {
            code: EXIT_NUMERICAL,
            stdout: format!("{}\n", serde_json::to_string_pretty(&body).unwrap()),
        }
    } else {
        usage(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Outcome {
                    code: EXIT_OK,
                    stdout: e.to_string(),
                },
                _ => usage(e.to_string()),
            };
        }
    };
    let (result, output) = match &cli.command {
        Command::AuditBasis(a) => (audit(a), &a.output),
        Command::Certificate(a) => (certificate(a), &a.output),
        Command::Solve(a) => (solve(a), &a.output),
        Command::Convergence(a) => (convergence(a), &a.output),
    };
    match result {
        Ok(Report::Json(text)) | Ok(Report::Csv(text)) => emit(text, output),
        Ok(Report::Finding(outcome)) | Err(outcome) => outcome,
    }
}

enum Report {
    Json(String),
    Csv(String),
    /// A successful run whose payload is an `"error"` object.
    Finding(Outcome),
}

fn emit(text: String, output: &OutputArgs) -> Outcome {
    match &output.out {
        Some(path) => match std::fs::write(path, &text) {
            Ok(()) => Outcome {
                code: EXIT_OK,
                stdout: String::new(),
            },
            Err(e) => usage(format!("cannot write {}: {e}", path.display())),
        },
        None => Outcome {
            code: EXIT_OK,
            stdout: text,
        },
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    format!("{}\n", serde_json::to_string_pretty(v).expect("report serializes"))
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn f(x: f64) -> String {
    format_f64(x).unwrap_or_default()
}

fn audit(a: &AuditArgs) -> Result<Report, Outcome> {
    let dim = a.dim as usize;
    let max = MAX_DEGREE[dim - 1];
    if a.max_degree == 0 || a.max_degree > max {
        return Err(usage(format!(
            "--max-degree must be in 1..={max} for --dim {dim}"
        )));
    }
    let report = audit_degrees(dim, a.max_degree).map_err(|e| usage(e.to_string()))?;
    if a.output.csv {
        let rows = report
            .records
            .iter()
            .flat_map(|r| {
                r.integrals.iter().enumerate().map(move |(j, v)| {
                    vec![
                        dim.to_string(),
                        r.k.to_string(),
                        j.to_string(),
                        format_rational(v),
                        (!r.negative_indices.contains(&j)).to_string(),
                    ]
                })
            })
            .collect();
        Ok(Report::Csv(csv_text(
            &["dimension", "k", "index", "integral", "nonnegative"],
            rows,
        )))
    } else {
        Ok(Report::Json(to_json(&report)))
    }
}

fn config(dim: u32, degree: u32, n: usize, alpha: f64, tol: f64, kkt: f64) -> Result<OcpConfig, Outcome> {
    let c = OcpConfig {
        dim: dim as usize,
        degree,
        n,
        alpha,
        cg_tol: tol,
        kkt_tol: kkt,
        max_iter: 100_000,
    };
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn certificate(a: &CertificateArgs) -> Result<Report, Outcome> {
    let cfg = config(a.dim, a.degree, a.mesh, a.alpha, a.tol, DEFAULT_KKT_TOL)?;
    let problem = ModelProblem::new(cfg.clone()).map_err(from_ocp_error)?;
    let cert = match build_certificate(&problem) {
        Ok(c) => c,
        Err(OcpError::NoNegativeBasis) => {
            let body = json!({
                "error": "NoNegativeBasis",
                "dim": cfg.dim,
                "degree": cfg.degree,
                "message": "every reference basis function has a non-negative integral",
            });
            return Ok(Report::Finding(Outcome {
                code: EXIT_OK,
                stdout: to_json(&body),
            }));
        }
        Err(e) => return Err(from_ocp_error(e)),
    };
    let report = cert.report(&cfg);
    if a.output.csv {
        let rows = [
            ("beta", cert.beta),
            ("M2", cert.m2),
            ("beta_measured", cert.beta_measured),
            ("M2_measured", cert.m2_measured),
            ("L_n", cert.l_n),
            ("t_hat", cert.t_hat),
            ("delta", cert.delta),
            ("bound", cert.bound),
            ("measured_objective", cert.measured_objective),
        ]
        .iter()
        .map(|(k, v)| vec![k.to_string(), f(*v)])
        .collect();
        Ok(Report::Csv(csv_text(&["quantity", "value"], rows)))
    } else {
        Ok(Report::Json(to_json(&report)))
    }
}

#[derive(Serialize)]
struct SolveReport {
    config: OcpConfig,
    #[serde(rename = "J", serialize_with = "fixed17")]
    objective: f64,
    #[serde(serialize_with = "fixed17")]
    kkt_residual: f64,
    iters: usize,
    #[serde(serialize_with = "fixed17")]
    lambda_norm: f64,
    #[serde(serialize_with = "fixed17")]
    min_cell_avg: f64,
    #[serde(serialize_with = "fixed17")]
    neg_part_norm: f64,
    #[serde(serialize_with = "fixed17")]
    negative_cell_fraction: f64,
    #[serde(serialize_with = "fixed17_opt")]
    certificate_bound: Option<f64>,
}

fn solve(a: &SolveArgs) -> Result<Report, Outcome> {
    let cfg = config(a.dim, a.degree, a.mesh, a.alpha, a.tol, a.kkt_tol)?;
    let problem = ModelProblem::new(cfg.clone()).map_err(from_ocp_error)?;
    let bound = match build_certificate(&problem) {
        Ok(c) => Some(c.bound),
        Err(OcpError::NoNegativeBasis) => None,
        Err(e) => return Err(from_ocp_error(e)),
    };
    let sol = problem.solve_qp().map_err(from_ocp_error)?;
    let audit = problem
        .feasibility_audit(&sol.lambda)
        .map_err(from_ocp_error)?;
    let report = SolveReport {
        config: cfg,
        objective: sol.objective,
        kkt_residual: sol.kkt_residual,
        iters: sol.iterations,
        lambda_norm: norm(&sol.lambda),
        min_cell_avg: audit.min_cell_average,
        neg_part_norm: audit.negative_part_norm,
        negative_cell_fraction: audit.negative_cell_fraction,
        certificate_bound: bound,
    };
    if a.output.csv {
        let row = vec![
            report.config.n.to_string(),
            f(report.objective),
            f(report.kkt_residual),
            report.iters.to_string(),
            f(report.lambda_norm),
            f(report.min_cell_avg),
            f(report.neg_part_norm),
        ];
        Ok(Report::Csv(csv_text(
            &["n", "J", "kkt_residual", "iters", "lambda_norm", "min_cell_avg", "neg_part_norm"],
            vec![row],
        )))
    } else {
        Ok(Report::Json(to_json(&report)))
    }
}

fn convergence(a: &ConvergenceArgs) -> Result<Report, Outcome> {
    if a.meshes.len() < 2 {
        return Err(usage("--meshes needs at least two mesh parameters"));
    }
    let first = *a.meshes.first().unwrap();
    let cfg = config(a.dim, a.degree, first, a.alpha, a.tol, a.kkt_tol)?;
    let report = convergence_study(&cfg, &a.meshes).map_err(from_ocp_error)?;
    if a.output.csv {
        let rows = report
            .runs
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    f(r.objective),
                    f(r.min_cell_avg),
                    f(r.neg_part_norm),
                    r.iters.to_string(),
                    r.bound.map(f).unwrap_or_default(),
                ]
            })
            .collect();
        Ok(Report::Csv(csv_text(
            &["n", "J", "min_cell_avg", "neg_part_norm", "iters", "bound"],
            rows,
        )))
    } else {
        Ok(Report::Json(to_json(&report)))
    }
}
