//! Flat `key = value` files whose entries act as default flags.

use std::ffi::OsString;
use std::path::Path;

/// Turn file entries into `--key value` arguments. `true`/`false` values
/// toggle switches.
pub fn file_args(text: &str) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        if key == "config" {
            return Err(format!("line {}: config files cannot nest", n + 1));
        }
        match value.trim() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => out.push(format!("--{key}={v}").into()),
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Splice config-file flags in right after the subcommand so that flags on
/// the command line, which come later, override them.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let extra = file_args(&text)?;

    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            break;
        }
    }
    if i >= args.len() {
        return Ok(args);
    }
    let mut out = args[..=i].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[i + 1..]);
    Ok(out)
}
