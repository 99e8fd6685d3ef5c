//! JSON config loading with `--a.b value` overrides on key paths.

use std::path::Path;

use pdesift::error::{Error, Result};
use pdesift::pipeline::PipelineConfig;
use serde_json::{Map, Value};

/// A `--key.path value` pair pulled out of the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

/// Subcommand flags that share a name with a config section; these only
/// override when written as a dotted path.
const ARTIFACT_FLAGS: [&str; 3] = ["library", "screen", "rfe"];

/// Top-level config keys; a flag whose first path segment is one of these is an override.
fn config_keys() -> Vec<String> {
    match serde_json::to_value(PipelineConfig::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().chain(["denoise".into(), "ground_truth".into()]).collect(),
        _ => Vec::new(),
    }
}

fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Split argv into override pairs and the remaining arguments for clap.
pub fn extract(args: Vec<String>) -> Result<(Vec<String>, Vec<Override>)> {
    let keys = config_keys();
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        let path: Vec<String> = name.split('.').map(str::to_string).collect();
        if !keys.contains(&path[0]) || (path.len() == 1 && ARTIFACT_FLAGS.contains(&path[0].as_str())) {
            rest.push(arg);
            continue;
        }
        if path.iter().any(String::is_empty) {
            return Err(Error::Config(format!("malformed override `--{name}`")));
        }
        let text = match inline {
            Some(v) => v,
            None => iter.next().ok_or_else(|| Error::Config(format!("override `--{name}` needs a value")))?,
        };
        overrides.push(Override { path, value: parse_value(&text) });
    }
    Ok((rest, overrides))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = root;
    for key in parents {
        let map = node.as_object_mut().ok_or_else(|| Error::Config(format!("`{}` is not an object", path.join("."))))?;
        node = map.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
    }
    let map = node.as_object_mut().ok_or_else(|| Error::Config(format!("`{}` is not an object", path.join("."))))?;
    map.insert(last.clone(), value);
    Ok(())
}

/// Config from an optional file with overrides applied; unknown keys are rejected.
pub fn load_config(file: Option<&Path>, overrides: &[Override]) -> Result<PipelineConfig> {
    let base: PipelineConfig = match file {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => PipelineConfig::default(),
    };
    let mut value = serde_json::to_value(base)?;
    for o in overrides {
        set_path(&mut value, &o.path, o.value.clone())?;
    }
    let config: PipelineConfig = serde_json::from_value(value)?;
    config.validate()?;
    Ok(config)
}
