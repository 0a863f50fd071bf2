//! Command-line front end: synthetic data generation, validation,
//! featurization, training with evaluation, prediction and report
//! rendering.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use weedmap_core::eval::ReportFormat;

use crate::config::{load_config_file, RawConfig, RunConfig, KEYS};
use crate::error::{CliError, Result, EXIT_CONFIG, EXIT_OK};

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("key=value settings file; flags take precedence")];
    for k in KEYS {
        let mut arg = Arg::new(k.name).long(k.name).value_name("VALUE").help(k.help);
        if k.name == "orchard-feature" {
            arg = arg.num_args(0..=1).default_missing_value("true");
        }
        args.push(arg);
    }
    args
}

pub fn command() -> Command {
    Command::new("weedmap")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Orchard weed-management classification from multispectral time series")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .args_override_self(true)
        .subcommand(
            Command::new("synth")
                .about("Write a synthetic labelled observation file and parcel manifest")
                .args(config_args()),
        )
        .subcommand(
            Command::new("validate")
                .about("Check an observation file against its parcel manifest")
                .args(config_args()),
        )
        .subcommand(
            Command::new("featurize")
                .about("Write parcel feature vectors")
                .args(config_args()),
        )
        .subcommand(
            Command::new("run")
                .about("Train, tune and evaluate a classifier end to end")
                .args(config_args()),
        )
        .subcommand(
            Command::new("predict")
                .about("Label parcels with a trained model")
                .args(config_args())
                .arg(
                    Arg::new("model-path")
                        .long("model-path")
                        .value_name("FILE")
                        .required(true)
                        .help("model file written by `run`"),
                ),
        )
        .subcommand(
            Command::new("report")
                .about("Render a saved evaluation report")
                .arg(
                    Arg::new("input")
                        .long("input")
                        .value_name("FILE")
                        .required(true)
                        .help("report JSON written by `run`"),
                )
                .arg(
                    Arg::new("format")
                        .long("format")
                        .value_name("FORMAT")
                        .default_value("text")
                        .help("text, json or csv"),
                )
                .arg(
                    Arg::new("output")
                        .long("output")
                        .value_name("FILE")
                        .action(ArgAction::Set)
                        .help("write here instead of standard output"),
                ),
        )
}

/// File settings first, then every flag given on the command line.
pub fn run_config(matches: &ArgMatches) -> Result<RunConfig> {
    let mut raw = match matches.get_one::<String>("config") {
        Some(path) => load_config_file(&PathBuf::from(path))?,
        None => RawConfig::new(),
    };
    for k in KEYS {
        if matches.value_source(k.name) == Some(ValueSource::CommandLine) {
            if let Some(v) = matches.get_one::<String>(k.name) {
                raw.insert(k.name.to_string(), v.clone());
            }
        }
    }
    RunConfig::from_raw(&raw)
}

fn dispatch(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand() {
        Some(("synth", m)) => {
            let out = commands::cmd_synth(&run_config(m)?)?;
            println!(
                "wrote {} parcels and {} observations: {}, {}",
                out.n_parcels,
                out.n_observations,
                out.observations.display(),
                out.parcels.display()
            );
        }
        Some(("validate", m)) => {
            let s = commands::cmd_validate(&run_config(m)?)?;
            println!(
                "ok: {} observations, {} pixels, {} parcels ({} labelled), sensor {}, {} above the cloud threshold",
                s.observations, s.pixels, s.parcels, s.labelled, s.sensor, s.cloudy
            );
        }
        Some(("featurize", m)) => {
            let path = commands::cmd_featurize(&run_config(m)?)?;
            println!("wrote {}", path.display());
        }
        Some(("run", m)) => {
            let outcome = commands::cmd_run(&run_config(m)?)?;
            print!(
                "{}",
                weedmap_core::eval::render_report(&outcome.report, ReportFormat::Text)?
            );
            println!("outputs in {}", outcome.out_dir.display());
        }
        Some(("predict", m)) => {
            let cfg = run_config(m)?;
            let model = PathBuf::from(m.get_one::<String>("model-path").expect("required"));
            let predictions = commands::cmd_predict(&cfg, &model)?;
            println!("predicted {} parcels", predictions.len());
        }
        Some(("report", m)) => {
            let input = PathBuf::from(m.get_one::<String>("input").expect("required"));
            let format: ReportFormat = m
                .get_one::<String>("format")
                .expect("defaulted")
                .parse()?;
            let text = commands::cmd_report(&input, format)?;
            match m.get_one::<String>("output") {
                Some(out) => io::write_text(&PathBuf::from(out), &text)?,
                None => print!("{text}"),
            }
        }
        _ => return Err(CliError::config("unknown command")),
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&matches) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
