//! `--config <file>` support: `key=value` lines become flags placed ahead of
//! the real command line, skipping keys that the command line already sets.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgMatches, CommandFactory};

use crate::args::Cli;
use crate::UsageError;

/// Manifest bookkeeping keys that are not flags.
const META_PREFIXES: [&str; 3] = ["run.", "input.", "output."];

/// Flags that switch the same setting; setting one on the command line
/// suppresses the other from the file.
const EXCLUSIVE: [(&str, &str); 1] = [("schedule-k", "no-schedule-k")];

pub fn parse_config_lines(text: &str, origin: &Path) -> Result<Vec<(String, String)>, UsageError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("{}:{}: expected key=value", origin.display(), no + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn flag_name(arg: &OsString) -> Option<String> {
    let s = arg.to_str()?;
    let name = s.strip_prefix("--")?;
    Some(name.split_once('=').map_or(name, |(n, _)| n).to_string())
}

/// Removes `--config FILE` from `argv` and splices in the file's settings.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, UsageError> {
    let Some(pos) = argv.iter().position(|a| flag_name(a).as_deref() == Some("config")) else {
        return Ok(argv);
    };
    let mut argv = argv;
    let path: OsString = match argv[pos].to_str().and_then(|s| s.split_once('=')) {
        Some((_, p)) => {
            let p = p.into();
            argv.remove(pos);
            p
        }
        None => {
            if pos + 1 >= argv.len() {
                return Err(UsageError("--config needs a file".into()));
            }
            let p = argv.remove(pos + 1);
            argv.remove(pos);
            p
        }
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config_lines(&text, path)?;

    let sub_name = argv.get(1).and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let root = Cli::command();
    let sub = root
        .find_subcommand(&sub_name)
        .ok_or_else(|| UsageError(format!("--config needs a subcommand, got `{sub_name}`")))?;

    let given: Vec<String> = argv[2..].iter().filter_map(flag_name).collect();
    let is_given = |key: &str| {
        given.iter().any(|g| g == key)
            || EXCLUSIVE
                .iter()
                .any(|&(a, b)| (key == a && given.iter().any(|g| g == b)) || (key == b && given.iter().any(|g| g == a)))
    };

    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        if META_PREFIXES.iter().any(|p| key.starts_with(p)) || is_given(&key) {
            continue;
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| UsageError(format!("{}: unknown key `{key}` for `{sub_name}`", path.display())))?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{key}").into()),
                "false" => {}
                other => {
                    return Err(UsageError(format!(
                        "{}: `{key}` is a switch, expected true or false, got `{other}`",
                        path.display()
                    )))
                }
            }
        }
    }
    argv.splice(2..2, injected);
    Ok(argv)
}

/// Every flag of the chosen subcommand with its resolved value, defaults
/// included, in definition order. Absent optional flags are left out.
pub fn resolved_flags(matches: &ArgMatches) -> Vec<(String, String)> {
    let Some((name, sub_matches)) = matches.subcommand() else {
        return Vec::new();
    };
    let root = Cli::command();
    let Some(sub) = root.find_subcommand(name) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if matches!(long, "config" | "help" | "version") {
            continue;
        }
        let id = arg.get_id().as_str();
        if let Ok(Some(values)) = sub_matches.try_get_raw(id) {
            let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
            out.push((long.to_string(), joined.join(",")));
        }
    }
    out
}
