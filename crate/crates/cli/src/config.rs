//! `key=value` config files, merged into the argument list before parsing.
//!
//! Keys are long flag names without the leading dashes. Entries whose flag
//! also appears on the command line are dropped, so flags win over the file
//! and the file wins over built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::CliError;

/// One `key=value` entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str, origin: &Path) -> Result<Vec<Entry>, CliError> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected key=value, found {line:?}",
                origin.display(),
                n + 1
            )));
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(CliError::Usage(format!("{}:{}: empty key", origin.display(), n + 1)));
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

/// Removes `--config FILE` from `args` and splices the file's entries in
/// right after the subcommand name.
pub fn expand(mut args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut config = None;
    let mut k = 1;
    while k < args.len() {
        let arg = args[k].to_string_lossy().into_owned();
        if arg == "--config" {
            if k + 1 >= args.len() {
                return Err(CliError::Usage("--config needs a file argument".into()));
            }
            config = Some(args.remove(k + 1));
            args.remove(k);
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(OsString::from(path));
            args.remove(k);
        } else {
            k += 1;
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let entries = parse(&text, path)?;

    let Some(sub) = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
    else {
        return Ok(args);
    };
    let given = |key: &str| {
        let flag = format!("--{key}");
        let with_value = format!("--{key}=");
        args[sub + 1..].iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&with_value)
        })
    };
    let mut injected: Vec<OsString> = Vec::new();
    for Entry { key, value } in &entries {
        if given(key) {
            continue;
        }
        match value.as_str() {
            "true" => injected.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
        }
    }
    args.splice(sub + 1..sub + 1, injected);
    Ok(args)
}
