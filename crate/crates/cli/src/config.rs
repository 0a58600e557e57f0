//! Argument layering: built-in defaults, then the config file, then the
//! `synth --spec` pairs, then flags typed on the command line.
//!
//! File and spec values are turned into flags inserted right after the
//! subcommand name; since every flag overrides earlier occurrences of itself,
//! anything typed by the user still wins.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{ArgAction, CommandFactory, FromArgMatches};

use crate::args::Cli;
use crate::CliError;

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--threads", "--seed", "--config"];

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Long flag names a subcommand accepts, with whether each takes a value.
fn accepted(cmd: &clap::Command) -> Vec<(String, bool)> {
    cmd.get_arguments()
        .filter_map(|a| {
            let long = a.get_long()?;
            let takes_value = !matches!(a.get_action(), ArgAction::SetTrue | ArgAction::SetFalse | ArgAction::Count);
            Some((long.to_string(), takes_value))
        })
        .collect()
}

fn toml_scalar(key: &str, v: &toml::Value) -> Result<String, CliError> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        _ => return Err(CliError::Usage(format!("config key `{key}` must be a scalar"))),
    })
}

/// Flags contributed by the config file for subcommand `sub`.
fn config_flags(path: &PathBuf, sub: &clap::Command) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let root = Cli::command();
    let sub_names: Vec<&str> = root.get_subcommands().map(|c| c.get_name()).collect();
    let own: Vec<String> = accepted(sub).into_iter().map(|a| a.0).collect();
    let any: Vec<String> = root
        .get_subcommands()
        .flat_map(|c| accepted(c).into_iter().map(|a| a.0))
        .chain(accepted(&root).into_iter().map(|a| a.0))
        .collect();

    let mut shared = Vec::new();
    let mut specific = Vec::new();
    for (key, value) in &table {
        if let toml::Value::Table(section) = value {
            if !sub_names.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{}: unknown section [{key}]", path.display())));
            }
            if key != sub.get_name() {
                continue;
            }
            for (k, v) in section {
                let k = normalize(k);
                if !own.contains(&k) {
                    return Err(CliError::Usage(format!(
                        "{}: `{k}` is not an option of `{key}`",
                        path.display()
                    )));
                }
                specific.push((k.clone(), toml_scalar(&k, v)?));
            }
        } else {
            let k = normalize(key);
            if !any.contains(&k) {
                return Err(CliError::Usage(format!("{}: unknown option `{k}`", path.display())));
            }
            if own.contains(&k) {
                shared.push((k.clone(), toml_scalar(&k, value)?));
            }
        }
    }
    shared.extend(specific);
    Ok(shared)
}

/// `key=value` pairs separated by commas or whitespace.
fn spec_flags(spec: &str, sub: &clap::Command) -> Result<Vec<(String, String)>, CliError> {
    let own: Vec<String> = accepted(sub).into_iter().map(|a| a.0).collect();
    spec.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--spec entry `{pair}` is not key=value")))?;
            let k = normalize(k);
            if k == "spec" || !own.contains(&k) {
                return Err(CliError::Usage(format!("--spec key `{k}` is not an option of synth")));
            }
            Ok((k, v.trim().to_string()))
        })
        .collect()
}

/// Position of the subcommand token in `argv`.
fn subcommand_position(argv: &[OsString], name: &str) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if GLOBAL_VALUE_FLAGS.contains(&a.as_ref()) {
            i += 2;
            continue;
        }
        if a == name {
            return Some(i);
        }
        i += 1;
    }
    None
}

pub fn parse_layered(argv: Vec<OsString>) -> Result<Cli, CliError> {
    let lenient = Cli::command().ignore_errors(true).try_get_matches_from(&argv);
    let Ok(pre) = lenient else {
        // help, version and the like: let the strict pass report them
        return strict(argv);
    };
    let Some((name, sub_matches)) = pre.subcommand() else {
        return strict(argv);
    };
    let root = Cli::command();
    let sub = root
        .get_subcommands()
        .find(|c| c.get_name() == name)
        .expect("subcommand exists")
        .clone();

    let mut inserted: Vec<(String, String)> = Vec::new();
    if let Some(path) = pre.get_one::<PathBuf>("config") {
        inserted.extend(config_flags(path, &sub)?);
    }
    if name == "synth" {
        if let Ok(Some(spec)) = sub_matches.try_get_one::<String>("spec") {
            inserted.extend(spec_flags(spec, &sub)?);
        }
    }
    if inserted.is_empty() {
        return strict(argv);
    }
    let pos = subcommand_position(&argv, name).ok_or_else(|| CliError::Usage("cannot locate subcommand".into()))?;
    let mut full: Vec<OsString> = argv[..=pos].to_vec();
    for (k, v) in inserted {
        full.push(format!("--{k}={v}").into());
    }
    full.extend_from_slice(&argv[pos + 1..]);
    strict(full)
}

fn strict(argv: Vec<OsString>) -> Result<Cli, CliError> {
    let matches = Cli::command().try_get_matches_from(argv).map_err(CliError::Clap)?;
    Cli::from_arg_matches(&matches).map_err(CliError::Clap)
}
