use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qe_core::dbr::NodeLayout;
use qe_core::fock::FockCoeffs;
use qe_core::report::{cmd_fock_shift, cmd_report, render_fock_text, render_text, ReportConfig};
use qe_core::Poly;

#[derive(Parser)]
#[command(
    name = "qe",
    version,
    about = "Quasi-extremity reports for Drury-Arveson multipliers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verdict, Gleason tuple and construction of `a` for a polynomial `b`.
    Report {
        /// Poly JSON file, or `-` for stdin.
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        degree: usize,
        /// Node count of the first stage; stages double it.
        #[arg(long, default_value_t = 16)]
        nodes: usize,
        #[arg(long, default_value_t = 5)]
        stages: usize,
        #[arg(long, default_value_t = 0.9)]
        radius: f64,
        /// Node layout of the verdict schedule.
        #[arg(long, value_enum, default_value_t = Layout::Uniform)]
        layout: Layout,
        /// Taylor degree of the reported `a`.
        #[arg(long, default_value_t = 12)]
        a_degree: usize,
        /// Override one tolerance, e.g. `range_tol=1e-7`. Repeatable.
        #[arg(long = "tol", value_name = "KEY=VALUE")]
        tol: Vec<String>,
        /// Include wall-clock runtime (breaks byte-identical output).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Minimal-word shift of a free column `[B; A]`.
    FockShift {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Truncation length; defaults to the larger `L` of the inputs.
        #[arg(long = "length")]
        length: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Uniform,
    BoundaryLayers,
}

impl From<Layout> for NodeLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Uniform => NodeLayout::Uniform,
            Layout::BoundaryLayers => NodeLayout::BoundaryLayers,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn read_input(path: &Path) -> Result<String, String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(|e| e.to_string())?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), String> {
    match out {
        Some(p) => fs::write(p, body).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| e.to_string()),
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Report {
            input,
            degree,
            nodes,
            stages,
            radius,
            layout,
            a_degree,
            tol,
            timing,
            common,
        } => {
            let b = Poly::from_json_str(&read_input(&input)?).map_err(|e| e.to_string())?;
            let mut config = ReportConfig {
                degree,
                nodes,
                stages,
                seed: common.seed,
                radius,
                layout: layout.into(),
                a_degree,
                timing,
                ..Default::default()
            };
            for kv in &tol {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| format!("--tol expects key=value, got {kv:?}"))?;
                let v: f64 = v
                    .parse()
                    .map_err(|_| format!("--tol {k}: not a number: {v:?}"))?;
                config.tol.set(k, v).map_err(|e| e.to_string())?;
            }
            let report = cmd_report(&b, &config).map_err(|e| e.to_string())?;
            let body = match common.format {
                Format::Json => report.to_json_pretty() + "\n",
                Format::Text => render_text(&report),
            };
            emit(common.out.as_deref(), &body)?;
            Ok(report.exit_code() as u8)
        }
        Command::FockShift {
            a,
            b,
            length,
            common,
        } => {
            let a = FockCoeffs::from_json_str(&read_input(&a)?).map_err(|e| e.to_string())?;
            let b = FockCoeffs::from_json_str(&read_input(&b)?).map_err(|e| e.to_string())?;
            let report = cmd_fock_shift(&a, &b, length).map_err(|e| e.to_string())?;
            let body = match common.format {
                Format::Json => {
                    serde_json::to_string_pretty(&report).map_err(|e| e.to_string())? + "\n"
                }
                Format::Text => render_fock_text(&report),
            };
            emit(common.out.as_deref(), &body)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("qe: {e}");
            ExitCode::from(1)
        }
    }
}
