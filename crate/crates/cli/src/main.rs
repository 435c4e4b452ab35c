//! `randgibbs`: command-line driver for the random weak Gibbs experiments.
//!
//! Settings come from `--config <file.toml>` (keys of `RunConfig`) and are then
//! overridden by flags. The output directory is `--out`, then the `out` config key,
//! then `$RANDGIBBS_OUT`, then `./out`.
//!
//! Exit codes: 0 success (a `spectrum` summary may still report FAIL lines),
//! 1 verification failure or failed numerical step,
//! 2 configuration or scenario error, 3 resource budget or fiber horizon exhausted.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use randgibbs::experiment::{
    cmd_diagnostics, cmd_ld, cmd_legendre, cmd_lq_empirical, cmd_pressure, cmd_spectrum, cmd_tq, ExtensionChoice,
    PotentialChoice, RunConfig, Written,
};
use randgibbs::output::Header;
use randgibbs::verify::{report_table, verify_all, verify_scenario, Tolerances};
use randgibbs::Error;

#[derive(Parser, Debug)]
#[command(name = "randgibbs", version, about = "Pressure, T(q) and multifractal spectra of random weak Gibbs measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Pressure trace per depth and replica, plus the extrapolated aggregate.
    Pressure,
    /// T(q) on the q grid.
    Tq,
    /// Legendre transform T*(d).
    Legendre,
    /// Empirical L^q spectrum from packings of the Gibbs measure.
    LqEmpirical,
    /// Lower and upper large-deviation spectra.
    Ld,
    /// All curves, level-set predictions and a pass/fail summary.
    Spectrum,
    /// Scenario constants: contraction margin, mixing times, truncations.
    Diagnostics,
    /// Acceptance checks; with --scenario, only the normalization and shape checks on it.
    Verify,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Potential {
    Phi,
    Zero,
    Psi,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Ext {
    Leftmost,
    Midpoint,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML file with `RunConfig` keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Builtin name, `name(key=a,b; ...)`, or path to a scenario TOML file [default: cookie_cutter].
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Base seed [default: the scenario's].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fiber horizon [default: the scenario's].
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Depth grid, comma separated [default: the scenario's].
    #[arg(long, global = true, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// q grid for T(q) [default: 41 points on -5..5].
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    q_grid: Option<Vec<f64>>,
    /// Extra q nodes for the Legendre domain [default: -16,16].
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    tail_q: Option<Vec<f64>>,
    /// d grid for T* and LD curves [default: 25 points over the slope range].
    #[arg(long, global = true, value_delimiter = ',')]
    d_grid: Option<Vec<f64>>,
    /// q grid of the empirical L^q estimator [default: 21 points on -2..3].
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    lq_q_grid: Option<Vec<f64>>,
    /// Ball radii, increasing [default: derived from the largest cell].
    #[arg(long, global = true, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Half-width of the LD window [default: 0.002].
    #[arg(long, global = true)]
    ld_eps: Option<f64>,
    /// Independent fiber realizations [default: 1].
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Worker threads [default: all cores]; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Largest word table enumerated [default: 4000000].
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Potential of the `pressure` command [default: phi].
    #[arg(long, global = true, value_enum)]
    potential: Option<Potential>,
    /// Extension of finite words [default: leftmost].
    #[arg(long, global = true, value_enum)]
    extension: Option<Ext>,
    /// Replaces every verification tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { cfg.$f = v.clone(); } )* };
        }
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { cfg.$f = self.$f.clone(); } )* };
        }
        set!(scenario, q_grid, tail_q, lq_q_grid, ld_eps, replicas, budget);
        set_opt!(seed, horizon, depths, d_grid, radii, threads, out, tolerance);
        if let Some(p) = self.potential {
            cfg.potential = match p {
                Potential::Phi => PotentialChoice::Phi,
                Potential::Zero => PotentialChoice::Zero,
                Potential::Psi => PotentialChoice::Psi,
            };
        }
        if let Some(e) = self.extension {
            cfg.extension = match e {
                Ext::Leftmost => ExtensionChoice::Leftmost,
                Ext::Midpoint => ExtensionChoice::Midpoint,
            };
        }
        cfg
    }

    fn config(&self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let cfg = self.apply(base);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } | Error::HorizonExhausted { .. } => 3,
        Error::InvalidConfig(_)
        | Error::UnknownScenario(_)
        | Error::Schema { .. }
        | Error::Io(_)
        | Error::NonMonotoneBranch(_)
        | Error::InconsistentFiber(_)
        | Error::ContractionViolated { .. }
        | Error::DomainError { .. } => 2,
        _ => 1,
    }
}

fn print_written(w: &Written) {
    for f in &w.files {
        println!("wrote {}", f.display());
    }
}

fn run(command: Command, cfg: &RunConfig) -> Result<u8, Error> {
    match command {
        Command::Pressure => {
            let (run, w) = cmd_pressure(cfg)?;
            println!("pressure {} ± {}", run.aggregate.value, run.aggregate.diagnostic);
            print_written(&w);
        }
        Command::Tq => print_written(&cmd_tq(cfg)?.1),
        Command::Legendre => print_written(&cmd_legendre(cfg)?.1),
        Command::LqEmpirical => print_written(&cmd_lq_empirical(cfg)?.1),
        Command::Ld => print_written(&cmd_ld(cfg)?.1),
        Command::Diagnostics => {
            let (d, w) = cmd_diagnostics(cfg)?;
            for (k, v) in d.rows() {
                println!("{k}: {v}");
            }
            print_written(&w);
        }
        Command::Spectrum => {
            let (run, w) = cmd_spectrum(cfg)?;
            for c in &run.summary {
                println!("{} {}: measured {} tolerance {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.measured, c.tolerance);
            }
            print_written(&w);
        }
        Command::Verify => unreachable!("handled by verify"),
    }
    Ok(0)
}

fn verify(opts: &Overrides, cfg: &RunConfig) -> Result<u8, Error> {
    let tol = Tolerances(cfg.tolerance);
    let criteria = match &opts.scenario {
        Some(s) => verify_scenario(s, tol),
        None => cfg.install(|| verify_all(tol))?,
    };
    for c in &criteria {
        println!("{}", c.line());
    }
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)?;
    let mut header = Header::new("verify");
    header.push("scenario", opts.scenario.as_deref().unwrap_or("builtins"));
    let path = report_table(&criteria).write(&dir, "verify.csv", &header)?;
    println!("wrote {}", path.display());
    match criteria.iter().find(|c| !c.passed) {
        Some(c) => {
            eprintln!("verification failed at criterion {} ({}): {}", c.id, c.name, c.detail);
            Ok(1)
        }
        None => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.opts.config().and_then(|cfg| match cli.command {
        Command::Verify => verify(&cli.opts, &cfg),
        c => run(c, &cfg),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.tag());
            ExitCode::from(exit_code(&e))
        }
    }
}
