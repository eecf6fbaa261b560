//! `cr5`: split a multilingual corpus, train crosslingual embeddings, embed text and
//! evaluate retrieval.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{normalize_key, read_config_file, ConfigError, RunConfig, KEYS};

#[derive(Debug)]
pub enum CliError {
    Core(cr5::Error),
    Config(ConfigError),
    Usage(String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config(_) => "E_CONFIG",
            CliError::Usage(_) => "E_USAGE",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<cr5::Error> for CliError {
    fn from(e: cr5::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn key_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .global(true)
        .help("flat `key = value` config file; flags override it")];
    for (key, default, help) in KEYS {
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        args.push(
            Arg::new(*key)
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .global(true)
                .action(ArgAction::Set)
                .help(help),
        );
    }
    args
}

fn cli() -> Command {
    Command::new("cr5")
        .about("Crosslingual document embeddings from reduced-rank ridge regression")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .args(key_args())
        .subcommand(Command::new("split").about("Sample test, validation, candidate and training concepts"))
        .subcommand(Command::new("train").about("Fit models for a split; pairwise mode writes one model per pair"))
        .subcommand(Command::new("embed").about("Embed a TSV of (language, id, text) rows"))
        .subcommand(Command::new("eval").about("Report precision at k for every pair in both directions"))
        .subcommand(Command::new("cv").about("Cross-validate λ on the validation queries"))
}

/// Defaults, then the config file, then flags.
fn resolve_values(matches: &ArgMatches) -> Result<BTreeMap<String, String>, CliError> {
    let mut values = match matches.get_one::<String>("config") {
        Some(path) => read_config_file(&PathBuf::from(path))?,
        None => BTreeMap::new(),
    };
    for (key, _, _) in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            values.insert(normalize_key(key), v.clone());
        }
    }
    Ok(values)
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let values = resolve_values(matches)?;
    let cfg = RunConfig::from_values(&values)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    match matches.subcommand_name() {
        Some("split") => commands::split(&cfg),
        Some("train") => commands::train(&cfg, &values),
        Some("embed") => commands::embed(&cfg),
        Some("eval") => commands::eval(&cfg),
        Some("cv") => commands::cv(&cfg),
        _ => Err(CliError::Usage("missing subcommand".into())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid usage")
                .trim_start_matches("error: ");
            eprintln!("E_USAGE: {first}");
            return ExitCode::from(2);
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}
