//! `--config FILE`: TOML whose keys mirror the long flag names.
//!
//! Top-level keys apply to every subcommand that has a flag of that name;
//! a `[subcommand]` table applies to that subcommand only. Flags given on
//! the command line win over the file.

use std::ffi::OsString;

use anyhow::{bail, Context};
use clap::CommandFactory;

use super::Cli;

pub fn expand(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&strs) else {
        return Ok(args);
    };
    let Some(sub_pos) = strs.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let sub = strs[sub_pos].clone();
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| crate::StegoError::Malformed(format!("config {path}: {e}")))?;

    let cmd = Cli::command();
    let Some(subcmd) = cmd.find_subcommand(&sub) else {
        return Ok(args);
    };
    let known: Vec<String> = subcmd
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();

    let mut inserted = Vec::new();
    for (key, value) in &table {
        if let toml::Value::Table(section) = value {
            if *key == sub {
                for (k, v) in section {
                    push_flag(&mut inserted, &k.replace('_', "-"), v, &strs)?;
                }
            }
            continue;
        }
        let flag = key.replace('_', "-");
        if flag != "config" && known.contains(&flag) {
            push_flag(&mut inserted, &flag, value, &strs)?;
        }
    }
    let mut out = args;
    out.splice(sub_pos + 1..sub_pos + 1, inserted.into_iter().map(OsString::from));
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn given(flag: &str, args: &[String]) -> bool {
    let long = format!("--{flag}");
    args.iter()
        .any(|a| *a == long || a.starts_with(&format!("{long}=")))
}

fn push_flag(out: &mut Vec<String>, flag: &str, value: &toml::Value, args: &[String]) -> anyhow::Result<()> {
    if given(flag, args) {
        return Ok(());
    }
    let scalar = |v: &toml::Value| -> anyhow::Result<String> {
        Ok(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => bail!("config key {flag}: unsupported value {other}"),
        })
    };
    match value {
        toml::Value::Boolean(true) => out.push(format!("--{flag}")),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<anyhow::Result<Vec<_>>>()?;
            out.push(format!("--{flag}={}", parts.join(",")));
        }
        v => out.push(format!("--{flag}={}", scalar(v)?)),
    }
    Ok(())
}
