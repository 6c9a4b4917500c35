//! Merges a JSON config file into the argument list before parsing.
//!
//! The file holds global keys (`seed`, `jobs`, `json`) plus one object per
//! subcommand, e.g. `{"seed": 7, "synth": {"stride": 8}, "dataset": {"mix":
//! {...}}}`. Keys use flag names with `-` or `_`. Flags given on the command
//! line always win.

use std::ffi::OsString;
use std::path::PathBuf;

use serde_json::{Map, Value};

use crate::CliError;

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--seed", "--jobs", "--config"];
const NESTED: [&str; 1] = ["dataset"];

fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn is_given(args: &[OsString], flag: &str) -> bool {
    let prefix = format!("{flag}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&prefix)
    })
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Positions just after the subcommand token and, for nested commands,
/// after the action token.
fn command_positions(args: &[OsString]) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if GLOBAL_VALUE_FLAGS.contains(&s.as_ref()) {
            i += 2;
            continue;
        }
        if s.starts_with('-') {
            i += 1;
            continue;
        }
        out.push((i + 1, s.to_string()));
        if out.len() == 1 && NESTED.contains(&s.as_ref()) {
            i += 1;
            continue;
        }
        break;
    }
    out
}

fn render(key: &str, value: &Value, args: &[OsString]) -> Result<Vec<OsString>, CliError> {
    let flag = flag_name(key);
    if is_given(args, &flag) {
        return Ok(Vec::new());
    }
    let scalar = |v: &Value| -> Result<String, CliError> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(CliError::Usage(format!("config key '{key}': unsupported value {other}"))),
        }
    };
    let mut out = Vec::new();
    match value {
        Value::Null | Value::Bool(false) => {}
        Value::Bool(true) => out.push(flag.into()),
        Value::Array(items) => {
            for v in items {
                out.push(flag.clone().into());
                out.push(scalar(v)?.into());
            }
        }
        v => {
            out.push(flag.into());
            out.push(scalar(v)?.into());
        }
    }
    Ok(out)
}

fn section<'a>(obj: &'a Map<String, Value>, name: &str) -> Option<&'a Map<String, Value>> {
    obj.get(name).and_then(Value::as_object)
}

fn flags_of(
    obj: &Map<String, Value>,
    args: &[OsString],
    skip_objects: bool,
) -> Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (k, v) in obj {
        if v.is_object() {
            if skip_objects {
                continue;
            }
            return Err(CliError::Usage(format!("config key '{k}': unexpected object")));
        }
        out.extend(render(k, v, args)?);
    }
    Ok(out)
}

/// Returns `args` with config-file values inserted as flags.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
    let obj = root
        .as_object()
        .ok_or_else(|| CliError::Usage(format!("config {} must be a JSON object", path.display())))?;

    let positions = command_positions(&args);
    let mut inserts: Vec<(usize, Vec<OsString>)> = Vec::new();
    let mut current = Some(obj);
    for (pos, name) in &positions {
        current = current.and_then(|o| section(o, name));
        if let Some(sec) = current {
            inserts.push((*pos, flags_of(sec, &args, true)?));
        }
    }
    let mut globals = Map::new();
    for key in ["seed", "jobs", "json"] {
        if let Some(v) = obj.get(key) {
            globals.insert(key.to_string(), v.clone());
        }
    }
    inserts.push((1, flags_of(&globals, &args, false)?));

    // insert from the back so earlier positions stay valid
    inserts.sort_by_key(|(pos, _)| std::cmp::Reverse(*pos));
    let mut out = args;
    for (pos, flags) in inserts {
        let pos = pos.min(out.len());
        out.splice(pos..pos, flags);
    }
    Ok(out)
}
