//! Command-line driver for the `neuralmep` experiments.
//!
//! Every run resolves its settings (defaults, then an optional `key=value`
//! file, then flags), records them in `manifest.txt`, and writes CSV
//! artifacts plus SVG figures into its output directory. Passing that
//! manifest back through `--config` reproduces the CSVs byte for byte.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure,
//! 3 non-convergence (artifacts are still written).

pub mod gen;
pub mod plot;
pub mod settings;
pub mod solve;
pub mod sweep;

use std::ffi::OsString;
use std::path::Path;

use anyhow::Result;
use clap::{Arg, ArgMatches, Command};

use settings::{usage, with_keys, Settings, UsageError};
use solve::Method;

/// How a run that produced its artifacts ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
    NumericalFailure,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::NumericalFailure => 2,
            Status::NotConverged => 3,
        }
    }
}

pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| anyhow::anyhow!("writing {}: {e}", p.display()))
}

pub fn command() -> Command {
    Command::new("neuralmep")
        .about("Minimum energy paths and transition states on analytic 2D surfaces")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_keys(
            Command::new("solve").about("Find a path and TS with a path network or NEB"),
            &solve::solve_keys(true),
            "runs/solve",
        ))
        .subcommand(with_keys(
            Command::new("neb").about("Climbing-image NEB baseline"),
            &solve::solve_keys(false),
            "runs/neb",
        ))
        .subcommand(with_keys(
            Command::new("sweep").about("Loss-kind and coefficient sweep"),
            &sweep::sweep_keys(),
            "runs/sweep",
        ))
        .subcommand(
            Command::new("generalize")
                .about("Wells path generalization")
                .subcommand_required(true)
                .subcommand(with_keys(
                    Command::new("gen-data").about("Build train and test systems"),
                    gen::GEN_DATA_KEYS,
                    "runs/wells",
                ))
                .subcommand(with_keys(
                    Command::new("train").about("Train the conditioned network"),
                    gen::TRAIN_KEYS,
                    "auto",
                ))
                .subcommand(with_keys(
                    Command::new("eval").about("Mean test TS error per predictor"),
                    gen::EVAL_KEYS,
                    "auto",
                )),
        )
        .subcommand(
            Command::new("plot")
                .about("Redraw SVG figures from the CSVs in a run directory")
                .arg(
                    Arg::new("input")
                        .long("input")
                        .value_name("DIR")
                        .required(true),
                ),
        )
}

fn no_potential_params(s: &Settings) -> Result<()> {
    match s.potential_params().first() {
        Some((k, _)) => Err(usage(format!("`{k}` does not apply to `{}`", s.command))),
        None => Ok(()),
    }
}

fn dispatch(m: &ArgMatches) -> Result<Status> {
    match m.subcommand().expect("subcommand required") {
        ("solve", sm) => {
            let mut s = Settings::resolve("solve", &solve::solve_keys(true), sm)?;
            let method = Method::parse(s.get("method"))?;
            let r = solve::run_solve(&mut s, method)?;
            print_solve(&r);
            Ok(r.status)
        }
        ("neb", sm) => {
            let mut s = Settings::resolve("neb", &solve::solve_keys(false), sm)?;
            let r = solve::run_solve(&mut s, Method::Neb)?;
            print_solve(&r);
            Ok(r.status)
        }
        ("sweep", sm) => {
            let mut s = Settings::resolve("sweep", &sweep::sweep_keys(), sm)?;
            let (rows, status) = sweep::run_sweep(&mut s)?;
            for r in rows {
                println!(
                    "{} lambda_s={} lambda_cl={} max_sep_pct={:.2} ts_error={:.3e}",
                    r.cell.kind.name(),
                    r.cell.lambda_s,
                    r.cell.lambda_cl,
                    r.max_sep_pct,
                    r.ts_error
                );
            }
            Ok(status)
        }
        ("generalize", gm) => match gm.subcommand().expect("subcommand required") {
            ("gen-data", sm) => {
                let s = Settings::resolve("generalize gen-data", gen::GEN_DATA_KEYS, sm)?;
                no_potential_params(&s)?;
                let (ds, status) = gen::run_gen_data(&s)?;
                println!(
                    "{} train, {} test systems, {} resampled",
                    ds.train.len(),
                    ds.test.len(),
                    ds.rejected.len()
                );
                Ok(status)
            }
            ("train", sm) => {
                let s = Settings::resolve("generalize train", gen::TRAIN_KEYS, sm)?;
                no_potential_params(&s)?;
                let (errors, status) = gen::run_train(&s)?;
                println!(
                    "final mean test TS error {:.4e}",
                    errors.last().copied().unwrap_or(f64::NAN)
                );
                Ok(status)
            }
            ("eval", sm) => {
                let s = Settings::resolve("generalize eval", gen::EVAL_KEYS, sm)?;
                no_potential_params(&s)?;
                let (results, status) = gen::run_eval(&s)?;
                for (name, err) in results {
                    println!("{name}: mean test TS error {err:.4e}");
                }
                Ok(status)
            }
            _ => unreachable!("clap rejects unknown subcommands"),
        },
        ("plot", sm) => {
            let dir = sm.get_one::<String>("input").expect("required");
            for f in plot::plot_dir(Path::new(dir))? {
                println!("wrote {f}");
            }
            Ok(Status::Success)
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn print_solve(r: &solve::SolveReport) {
    println!(
        "{}: TS at t={:.4} ({:.6}, {:.6}) energy {:.6} barrier {:.6} after {} iterations",
        r.method.name(),
        r.t,
        r.point.x,
        r.point.y,
        r.energy,
        r.barrier(),
        r.iterations
    );
    if let (Some((p, e)), Some(b)) = (r.refined, r.refined_barrier()) {
        println!(
            "refined: ({:.6}, {:.6}) energy {:.6} barrier {:.6}",
            p.x, p.y, e, b
        );
    }
    if r.status == Status::NotConverged {
        eprintln!("warning: not converged within the iteration budget");
    }
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    match dispatch(&m) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}
