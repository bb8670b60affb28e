//! `--config` files: line-oriented `key = value` pairs whose keys are long
//! option names (plus `command`). Options given on the command line win.

use std::fs;
use std::path::Path;

use ssmt::measures::catalog::parse_key_values;

use crate::Command;

const SUBCOMMANDS: [&str; 8] = ["alpha-c", "flow-check", "simulate", "tree", "nested", "grow", "divfield", "catalog"];

/// Command-line arguments with the options of a `--config` file merged in.
pub fn merged_args(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].split_once('=') {
        Some((_, p)) => p.to_string(),
        None => args.get(pos + 1).cloned().ok_or("--config needs a file")?,
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config '{path}': {e}"))?;
    let kv = parse_key_values(&text).map_err(|e| format!("config '{path}': {e}"))?;
    let mut out = args.clone();
    let has_command = args.iter().any(|a| SUBCOMMANDS.contains(&a.as_str()));
    if !has_command {
        match kv.get("command") {
            Some(c) if SUBCOMMANDS.contains(&c.as_str()) => out.insert(1, c.clone()),
            Some(c) => return Err(format!("config '{path}': unknown command '{c}'")),
            None => {}
        }
    }
    for (k, v) in &kv {
        if k == "command" || k == "config" || k == "save-config" {
            continue;
        }
        let flag = format!("--{k}");
        let given = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        match v.as_str() {
            "true" => out.push(flag),
            "false" => {}
            _ => {
                out.push(flag);
                out.push(v.clone());
            }
        }
    }
    Ok(out)
}

/// Writes the effective options of a run; the seed is always included.
pub fn save(path: &Path, args: &[String], command: &Command) -> Result<(), String> {
    let mut lines = vec![format!("command = {}", command.name())];
    let mut seen_seed = false;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        i += 1;
        let Some(name) = a.strip_prefix("--") else { continue };
        let (key, value) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match args.get(i) {
                Some(v) if !v.starts_with("--") => {
                    i += 1;
                    (name.to_string(), v.clone())
                }
                _ => (name.to_string(), "true".to_string()),
            },
        };
        if key == "config" || key == "save-config" {
            continue;
        }
        seen_seed |= key == "seed";
        lines.push(format!("{key} = {value}"));
    }
    if let (false, Some(seed)) = (seen_seed, command.seed()) {
        lines.push(format!("seed = {seed}"));
    }
    lines.push(String::new());
    fs::write(path, lines.join("\n")).map_err(|e| format!("cannot write '{}': {e}", path.display()))
}
