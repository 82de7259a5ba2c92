//! `key = value` config files merged under the command line.
//!
//! Keys are long option names (`n-random`, or `n_random`). A key is applied
//! only when the user did not pass the same option, so flags always win. Keys
//! belonging to other subcommands are skipped, so one file can drive a study.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::CommandFactory;

use crate::args::Cli;
use crate::error::CliError;

pub const THREADS_ENV: &str = "BAE_OED_THREADS";

pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected key = value, got {raw:?}", path.display(), no + 1))
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("{}:{}: empty key", path.display(), no + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Value of `--config` in raw argv, if any.
pub fn find_config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Long option names the user spelled out on the command line.
fn given_longs(argv: &[OsString]) -> Vec<String> {
    argv.iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .take_while(|s| s != "--")
        .filter_map(|s| s.strip_prefix("--").map(|r| r.split('=').next().unwrap_or("").to_string()))
        .collect()
}

/// Appends config entries to `argv` for every option the user left unset.
pub fn merge(argv: Vec<OsString>, cfg: &BTreeMap<String, String>) -> Result<Vec<OsString>, CliError> {
    let root = Cli::command();
    let sub_name = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|s| root.find_subcommand(s).is_some());
    let Some(sub_name) = sub_name else {
        // nothing to merge into; let clap report the missing subcommand
        return Ok(argv);
    };
    let sub = root.find_subcommand(&sub_name).expect("subcommand exists");
    let given = given_longs(&argv);
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in cfg {
        if key == "config" {
            continue;
        }
        let Some(arg) = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            // one file may serve several subcommands; only unknown keys are errors
            let elsewhere = root
                .get_subcommands()
                .any(|c| c.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
            if elsewhere {
                continue;
            }
            return Err(CliError::Usage(format!("config key {key:?} is not an option of any subcommand")));
        };
        if given.iter().any(|g| g == key) {
            continue;
        }
        if key == "threads" && std::env::var_os(THREADS_ENV).is_some() {
            continue;
        }
        if arg.get_action().takes_values() {
            extra.push(format!("--{key}").into());
            let multi = arg.get_num_args().is_some_and(|n| n.max_values() > 1);
            if multi {
                extra.extend(value.split_whitespace().map(OsString::from));
            } else {
                extra.push(value.into());
            }
        } else {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => extra.push(format!("--{key}").into()),
                "false" | "no" | "0" | "off" => {}
                _ => return Err(CliError::Usage(format!("config key {key:?} expects a boolean, got {value:?}"))),
            }
        }
    }
    // keep a trailing `--` (if any) at the end
    let split = argv.iter().position(|a| a == "--").unwrap_or(argv.len());
    let mut merged = argv[..split].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[split..]);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let cfg = parse_config("# header\nn_random = 7  # inline\n\nk=3\n", Path::new("c")).unwrap();
        assert_eq!(cfg["n-random"], "7");
        assert_eq!(cfg["k"], "3");
        assert!(parse_config("oops\n", Path::new("c")).is_err());
    }

    #[test]
    fn flags_beat_config() {
        let cfg = parse_config("k = 3\nenhanced = true\nsurrogate = fd\n", Path::new("c")).unwrap();
        let merged = merge(os(&["bae-oed", "design", "--k", "5"]), &cfg).unwrap();
        let s: Vec<_> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s, ["bae-oed", "design", "--k", "5", "--enhanced", "--surrogate", "fd"]);
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let cfg = parse_config("bogus = 1\n", Path::new("c")).unwrap();
        assert!(matches!(merge(os(&["bae-oed", "design"]), &cfg), Err(CliError::Usage(_))));
        let cfg = parse_config("n-random = 4\n", Path::new("c")).unwrap();
        assert_eq!(merge(os(&["bae-oed", "design"]), &cfg).unwrap().len(), 2);
    }

    #[test]
    fn finds_config_path() {
        assert_eq!(find_config_path(&os(&["x", "design", "--config", "a.cfg"])), Some("a.cfg".into()));
        assert_eq!(find_config_path(&os(&["x", "--config=b.cfg", "design"])), Some("b.cfg".into()));
        assert_eq!(find_config_path(&os(&["x", "design"])), None);
    }
}
