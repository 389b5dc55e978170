mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{Origin, RunConfig, KEYS};
use error::CliError;

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("fit", "train a model snapshot from a point cloud (--in, --out)"),
    ("update", "fold more samples into a snapshot (--model, --in, optional --out)"),
    ("query", "print distance and gradient at points (--model, --point ...)"),
    ("reconstruct", "evaluate a grid and export the level set (--model, --out, optional --grid-out)"),
    ("eval", "score a snapshot against a mesh or sphere (--model, --mesh | --sphere, optional --out)"),
    ("simulate", "run a 2D surface-following survey (--out directory)"),
];

fn cli() -> Command {
    let mut cmd = Command::new("polysdf")
        .about("Incremental piecewise-polynomial signed distance fields")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help("Every option can also be set in a key = value config file (key names use underscores).")
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value configuration file; flags override it"),
        );
    for &(key, help) in KEYS {
        let mut arg = Arg::new(key).long(key.replace('_', "-")).global(true).help(help).value_name("VALUE");
        arg = match key {
            "point" => arg.action(ArgAction::Append),
            "stream" => arg.num_args(0..=1).default_missing_value("true"),
            _ => arg,
        };
        cmd = cmd.arg(arg);
    }
    for &(name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(name).about(about));
    }
    cmd
}

fn build_config(matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = matches.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    for &(key, _) in KEYS {
        if let Some(values) = matches.get_many::<String>(key) {
            for v in values {
                cfg.set(key, v, &Origin::Flag)?;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let cfg = build_config(matches)?;
    let text = match matches.subcommand_name().expect("subcommand required") {
        "fit" => commands::fit(&cfg).map(|_| String::new())?,
        "update" => commands::update(&cfg).map(|_| String::new())?,
        "query" => commands::query(&cfg)?,
        "reconstruct" => commands::reconstruct(&cfg)?,
        "eval" => commands::eval(&cfg)?,
        "simulate" => commands::simulate(&cfg)?,
        other => unreachable!("unknown subcommand {other}"),
    };
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| CliError::Io { path: "<stdout>".into(), source: e })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
