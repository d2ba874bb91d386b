//! Command-line front end: run scenarios, list them, and dump their
//! configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use conjlab::bifurcation::SignVariant;
use conjlab::report::{emit, EmitFormat};
use conjlab::scenario::{self, builtin_summaries};

#[derive(Parser)]
#[command(
    name = "labcli",
    version,
    about = "Conjugate-point and bifurcation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Derived,
    Printed,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    CsvBundle,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and emit its report.
    Run {
        /// Built-in scenario id or path to a scenario file.
        id: String,
        /// Output directory; without it the JSON report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Integrator tolerance knob (maps to rtol = 100*tol, atol = tol).
        #[arg(long)]
        tol: Option<f64>,
        /// Which sign variant drives the primary verdict. Conformal
        /// scenarios always include both variants in the report.
        #[arg(long, value_enum, default_value = "derived")]
        sign_variant: VariantArg,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
        /// Scenario overrides, repeatable: --set key=value.
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// List the built-in scenarios.
    List,
    /// Print a scenario's configuration in the scenario-file format.
    Describe { id: String },
}

fn run() -> conjlab::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            id,
            out,
            tol,
            sign_variant,
            format,
            set,
        } => {
            let mut sc = scenario::resolve(&id)?;
            if let Some(t) = tol {
                scenario::apply_overrides(&mut sc, &[format!("tol={t}")])?;
            }
            match sign_variant {
                VariantArg::Derived | VariantArg::Both => {
                    sc.sign_variant = SignVariant::Derived;
                }
                VariantArg::Printed => sc.sign_variant = SignVariant::Printed,
            }
            scenario::apply_overrides(&mut sc, &set)?;
            if out.is_none() && matches!(format, FormatArg::CsvBundle) {
                return Err(conjlab::Error::InvalidParameter {
                    msg: "--format csv-bundle needs --out DIR".into(),
                });
            }

            let artifacts = scenario::run_scenario(&sc)?;
            match out {
                Some(dir) => {
                    let fmt = match format {
                        FormatArg::Json => EmitFormat::Json,
                        FormatArg::CsvBundle => EmitFormat::CsvBundle,
                    };
                    let files = emit(&artifacts, fmt, &dir)?;
                    for f in files {
                        println!("{}", f.display());
                    }
                }
                None => print!("{}", artifacts.report.to_json()),
            }
            Ok(())
        }
        Command::List => {
            for (id, summary) in builtin_summaries() {
                println!("{id:16} {summary}");
            }
            Ok(())
        }
        Command::Describe { id } => {
            let sc = scenario::resolve(&id)?;
            print!("{}", scenario::describe(&sc));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
