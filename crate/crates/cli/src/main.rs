mod args;
mod commands;
mod config;

use std::fmt::Display;
use std::path::Path;
use std::process::ExitCode;

use args::{Cli, Command};

pub enum CliError {
    /// Bad flags or parameter combinations; exit code 1.
    Usage(String),
    Clap(clap::Error),
    /// Unreadable or malformed input files; exit code 2.
    Data(String),
}

impl CliError {
    pub fn usage(e: impl Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn data(path: &Path, e: impl Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(CliError::usage)?;
    }
    match &cli.command {
        Command::AnalyzeParams(a) => commands::analyze(a),
        Command::Detect(a) => commands::detect(a),
        Command::Match(a) => commands::match_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::Probe(a) => commands::probe(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let result = config::parse_layered(std::env::args_os().collect()).and_then(run);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use hamloop_core::lcd::LcdConfig;
    use hamloop_core::sparsematch::MatchParams;

    fn parse(args: &[&str]) -> Cli {
        match config::parse_layered(args.iter().map(|s| s.into()).collect()) {
            Ok(cli) => cli,
            Err(_) => panic!("failed to parse {args:?}"),
        }
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flag_defaults_match_library_defaults() {
        let Command::Detect(d) = parse(&["hamloop", "detect", "--input", "x"]).command else {
            panic!()
        };
        assert_eq!(d.config(256).ok(), Some(LcdConfig::default()));
        let Command::Match(m) = parse(&["hamloop", "match", "--frame-a", "a", "--frame-b", "b"]).command else {
            panic!()
        };
        assert_eq!(m.params(256).ok(), Some(MatchParams::default()));
    }

    #[test]
    fn help_lists_every_default() {
        let root = Cli::command();
        for sub in root.get_subcommands() {
            let help = sub.clone().render_long_help().to_string();
            for arg in sub.get_arguments() {
                let Some(long) = arg.get_long() else { continue };
                if long == "help" {
                    continue;
                }
                assert!(help.contains(&format!("--{long}")), "{}: --{long} missing", sub.get_name());
                let defaults: Vec<String> = arg
                    .get_default_values()
                    .iter()
                    .map(|v| v.to_string_lossy().into_owned())
                    .collect();
                if defaults.is_empty() {
                    // inputs without a meaningful default must say what they are
                    assert!(arg.get_help().is_some(), "{}: --{long} undocumented", sub.get_name());
                } else {
                    let shown = format!("[default: {}]", defaults.join(","));
                    assert!(help.contains(&shown), "{}: --{long} lacks {shown}", sub.get_name());
                }
            }
        }
    }
}
