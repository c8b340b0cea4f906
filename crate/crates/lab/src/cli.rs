//! Command-line interface.

use std::path::PathBuf;

use axisym_core::inequality::{Suite, SuiteSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{BoundaryName, RunConfig};
use crate::error::{LabError, Result};

/// Default seed of the randomized inequality suites.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "axisym-lab", version, about = "Axisymmetric swirl-free flow laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one configuration for each viscosity.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Strictly decreasing, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        nus: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verification suites.
    Verify {
        #[command(subcommand)]
        what: Verify,
    },
    /// Renormalized weak-form residuals of a finished run.
    RenormCheck {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        beta: Option<String>,
    },
    /// Diagnostics of a checkpoint, printed as JSON.
    Diag {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Take outer stream-function values from the free-space kernel.
        #[arg(long)]
        kernel_boundary: bool,
    },
    /// Same run on the configured domain and on one twice as large.
    DomainCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum Verify {
    /// Randomized inequality suite.
    Ineq(IneqArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Ap,
    Sobolev,
    Interp,
    Nash,
    Hardy,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Ap => Suite::Ap,
            SuiteArg::Sobolev => Suite::Sobolev,
            SuiteArg::Interp => Suite::Interp,
            SuiteArg::Nash => Suite::Nash,
            SuiteArg::Hardy => Suite::Hardy,
        }
    }
}

#[derive(Debug, Args)]
pub struct IneqArgs {
    #[arg(long, value_enum)]
    pub suite: SuiteArg,
    /// Exponent (`γ` for the Hardy suite).
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Weight exponent for the A_p suite (default `p`; 0 is the control).
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Executes a parsed command; the returned text goes to stdout.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let r = crate::run::execute_run(&cfg, &out)?;
            Ok(format!(
                "run finished: {} steps to t={}, {} rows in {}",
                r.summary.steps,
                r.summary.t_final,
                r.summary.records,
                out.join(crate::run::DIAGNOSTICS_FILE).display()
            ))
        }
        Command::Sweep { config, nus, out } => {
            let cfg = RunConfig::load(&config)?;
            let s = crate::sweep::sweep(&cfg, &nus, &out)?;
            Ok(crate::sweep::describe(&s))
        }
        Command::Verify { what: Verify::Ineq(a) } => {
            let suite: Suite = a.suite.into();
            let spec = SuiteSpec {
                suite,
                p: a.p.unwrap_or(crate::ineq::default_p(suite)),
                samples: a.samples.unwrap_or(crate::ineq::default_samples(suite)),
                seed: a.seed,
            };
            let (report, path) = crate::ineq::verify(&spec, a.weight, &a.out)?;
            if !report.empirical_sup.is_finite() || report.non_finite > 0 {
                return Err(LabError::Core(axisym_core::Error::NonFinite { step: 0 }));
            }
            Ok(format!(
                "{} p={} sup {:.6} -> {}",
                report.suite,
                report.p,
                report.empirical_sup,
                path.display()
            ))
        }
        Command::RenormCheck { run, beta } => {
            let r = crate::run::renorm_check(&run, beta.as_deref())?;
            let worst = r.betas.iter().map(|b| b.residual).fold(0.0, f64::max);
            Ok(format!(
                "worst residual {worst:.3e}, composition {:.3e}, jacobian {:.3e}",
                r.composition_defect, r.jacobian_defect
            ))
        }
        Command::Diag {
            checkpoint,
            kernel_boundary,
        } => {
            let b = if kernel_boundary {
                BoundaryName::KernelCorrected
            } else {
                BoundaryName::Homogeneous
            };
            let d = crate::run::diag_checkpoint(&checkpoint, b)?;
            Ok(serde_json::to_string_pretty(&d).expect("diagnostics serialize"))
        }
        Command::DomainCheck { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let d = crate::run::domain_check(&cfg, &out)?;
            Ok(format!(
                "energy change {:.3e}, impulse change {:.3e}, enstrophy change {:.3e}",
                d.energy_change, d.impulse_change, d.enstrophy_change
            ))
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 on invalid input, 2 on numerical failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            use std::io::Write;
            // A closed pipe on stdout is not a failure of the command.
            let _ = writeln!(std::io::stdout(), "{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
