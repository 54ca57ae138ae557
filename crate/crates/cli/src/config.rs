//! `key=value` config files. Each key is a long flag of the chosen
//! subcommand (or a global flag); `command` names the subcommand. Flags on
//! the command line take precedence.

use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::{Cli, SUBCOMMANDS};
use crate::error::{CliError, CliResult};

/// Parsed `key=value` lines in file order. Keys are normalized to kebab case.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected key=value", i + 1)));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        if out.iter().any(|(seen, _)| *seen == key) {
            return Err(CliError::Usage(format!("config line {}: duplicate key {key}", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Removes `--config PATH` from `argv` and returns the path.
fn take_config_flag(argv: &mut Vec<String>) -> CliResult<Option<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(None);
    };
    let flag = argv.remove(pos);
    if let Some(path) = flag.strip_prefix("--config=") {
        return Ok(Some(path.to_string()));
    }
    if pos >= argv.len() {
        return Err(CliError::Usage("--config needs a path".into()));
    }
    Ok(Some(argv.remove(pos)))
}

fn flag_given(argv: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let with_eq = format!("--{key}=");
    argv.iter().any(|a| *a == long || a.starts_with(&with_eq))
}

/// Whether `key` is a boolean switch of `sub`, or `None` if unknown.
fn switch_kind(sub: &str, key: &str) -> Option<bool> {
    let root = Cli::command();
    let found = root
        .find_subcommand(sub)
        .into_iter()
        .flat_map(|c| c.get_arguments())
        .chain(root.get_arguments().filter(|a| a.is_global_set()))
        .find(|a| a.get_long() == Some(key))
        .map(|a| matches!(a.get_action(), ArgAction::SetTrue));
    found
}

/// Splices config file entries into `argv` ahead of parsing.
pub fn expand_config(mut argv: Vec<String>) -> CliResult<Vec<String>> {
    let Some(path) = take_config_flag(&mut argv)? else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|source| CliError::File {
        path: path.clone().into(),
        source,
    })?;
    let entries = parse_config(&text).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;

    let given = argv.iter().skip(1).find(|a| SUBCOMMANDS.contains(&a.as_str())).cloned();
    let from_file = entries.iter().find(|(k, _)| k == "command").map(|(_, v)| v.clone());
    let sub = match (given, from_file) {
        (Some(g), Some(f)) if g != f => {
            return Err(CliError::Usage(format!(
                "{path}: command = {f} conflicts with subcommand {g}"
            )));
        }
        (Some(g), _) => g,
        (None, Some(f)) => {
            if !SUBCOMMANDS.contains(&f.as_str()) {
                return Err(CliError::Usage(format!("{path}: unknown command {f}")));
            }
            argv.insert(1.min(argv.len()), f.clone());
            f
        }
        (None, None) => return Err(CliError::Usage(format!("{path}: no subcommand given"))),
    };

    for (key, value) in entries {
        if key == "command" || flag_given(&argv, &key) {
            continue;
        }
        match switch_kind(&sub, &key) {
            None => return Err(CliError::Usage(format!("{path}: unknown key {key} for {sub}"))),
            Some(true) => match value.as_str() {
                "true" => argv.push(format!("--{key}")),
                "false" => {}
                _ => {
                    return Err(CliError::Usage(format!(
                        "{path}: {key} expects true or false, got {value}"
                    )))
                }
            },
            Some(false) => {
                argv.push(format!("--{key}"));
                argv.push(value);
            }
        }
    }
    Ok(argv)
}
