//! Flat `key = value` configuration.
//!
//! Structured configs are flattened to dotted keys (`model.vocab.size`).
//! Values are typed by the default they replace, so numbers stay numbers and
//! lists are comma separated.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub type Flat = BTreeMap<String, String>;

pub fn parse_flat(text: &str) -> CliResult<Flat> {
    let mut out = Flat::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(line).map_err(|m| CliError::Usage(format!("config line {}: {m}", i + 1)))?;
        if out.insert(k.clone(), v).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {k}", i + 1)));
        }
    }
    Ok(out)
}

fn split_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Parses a `--param key=value` argument.
pub fn parse_param(s: &str) -> Result<(String, String), String> {
    split_assignment(s)
}

/// Reads a key=value file, or the resolved config of a run manifest when the
/// file is JSON.
pub fn read_config(path: &Path) -> CliResult<Flat> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cfg = v
            .get("config")
            .and_then(Value::as_object)
            .ok_or_else(|| CliError::Usage(format!("{}: no config object", path.display())))?;
        return cfg
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                other => Err(CliError::Usage(format!("{}: config value {k} = {other} is not a string", path.display()))),
            })
            .collect();
    }
    parse_flat(&text)
}

/// Config file (if any) overlaid with command-line params.
pub fn gather(path: Option<&Path>, params: &[(String, String)]) -> CliResult<Flat> {
    let mut flat = match path {
        Some(p) => read_config(p)?,
        None => Flat::new(),
    };
    for (k, v) in params {
        flat.insert(k.clone(), v.clone());
    }
    Ok(flat)
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Flat) {
    match v {
        Value::Object(m) => {
            for (k, inner) in m {
                flatten_into(&join(prefix, k), inner, out);
            }
        }
        Value::Array(items) => {
            out.insert(prefix.to_string(), items.iter().map(scalar_text).collect::<Vec<_>>().join(","));
        }
        other => {
            out.insert(prefix.to_string(), scalar_text(other));
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

pub fn flatten<T: Serialize>(prefix: &str, value: &T) -> Flat {
    let mut out = Flat::new();
    flatten_into(prefix, &serde_json::to_value(value).expect("configs serialize"), &mut out);
    out
}

fn typed(key: &str, text: &str, like: &Value) -> CliResult<Value> {
    let bad = || CliError::Usage(format!("{key}: cannot read {text:?} as {}", kind(like)));
    Ok(match like {
        Value::Bool(_) => Value::Bool(text.parse().map_err(|_| bad())?),
        Value::Number(n) if n.is_u64() => Value::from(text.parse::<u64>().map_err(|_| bad())?),
        Value::Number(n) if n.is_i64() => Value::from(text.parse::<i64>().map_err(|_| bad())?),
        Value::Number(_) => {
            let x: f64 = text.parse().map_err(|_| bad())?;
            serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(bad)?
        }
        Value::String(_) => Value::String(text.to_string()),
        Value::Array(items) => {
            let elem = items.first().cloned().unwrap_or(Value::Null);
            let parts = text.split(',').map(str::trim).filter(|p| !p.is_empty());
            Value::Array(parts.map(|p| typed(key, p, &elem)).collect::<CliResult<_>>()?)
        }
        Value::Null => guess(text),
        Value::Object(_) => return Err(CliError::Usage(format!("{key} names a group, not a value"))),
    })
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Bool(_) => "a boolean",
        Value::Number(n) if n.is_u64() => "a non-negative integer",
        Value::Number(n) if n.is_i64() => "an integer",
        Value::Number(_) => "a number",
        Value::Array(_) => "a list",
        _ => "a value",
    }
}

fn guess(text: &str) -> Value {
    if let Ok(b) = text.parse::<bool>() {
        return Value::Bool(b);
    }
    if let Ok(u) = text.parse::<u64>() {
        return Value::from(u);
    }
    if let Some(n) = text.parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
        return Value::Number(n);
    }
    Value::String(text.to_string())
}

/// Takes every `prefix.*` key out of `flat` and applies it on top of `base`.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, prefix: &str, flat: &mut Flat) -> CliResult<T> {
    let mut root = serde_json::to_value(base).expect("configs serialize");
    let head = if prefix.is_empty() { String::new() } else { format!("{prefix}.") };
    let keys: Vec<String> = flat.keys().filter(|k| k.starts_with(&head)).cloned().collect();
    for key in keys {
        let text = flat.remove(&key).expect("listed");
        let path: Vec<&str> = key[head.len()..].split('.').collect();
        let slot = locate(&mut root, &path).ok_or_else(|| CliError::Usage(format!("unknown config key {key}")))?;
        *slot = typed(&key, &text, slot)?;
    }
    serde_json::from_value(root).map_err(|e| CliError::Usage(format!("{prefix} config: {e}")))
}

fn locate<'a>(root: &'a mut Value, path: &[&str]) -> Option<&'a mut Value> {
    let mut cur = root;
    for part in path {
        let map: &mut Map<String, Value> = cur.as_object_mut()?;
        cur = map.get_mut(*part)?;
    }
    Some(cur)
}

/// Fails on keys no section consumed.
pub fn reject_leftovers(flat: &Flat) -> CliResult<()> {
    match flat.keys().next() {
        None => Ok(()),
        Some(_) => Err(CliError::Usage(format!(
            "unknown config keys: {}",
            flat.keys().cloned().collect::<Vec<_>>().join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hiertag_core::model::ModelConfig;
    use hiertag_core::training::TrainConfig;

    #[test]
    fn parses_comments_and_spacing() {
        let f = parse_flat("# c\n\n a = 1   # trailing\nb=x=y\n").unwrap();
        assert_eq!(f["a"], "1");
        assert_eq!(f["b"], "x=y");
        assert!(parse_flat("a=1\na=2").is_err());
        assert!(parse_flat("novalue").is_err());
    }

    #[test]
    fn flatten_overlay_round_trip() {
        let cfg = TrainConfig {
            lr_rest: 3e-3,
            epochs: 7,
            ..TrainConfig::default()
        };
        let mut flat = flatten("train", &cfg);
        assert_eq!(flat["train.epochs"], "7");
        let back: TrainConfig = overlay(&TrainConfig::default(), "train", &mut flat).unwrap();
        assert_eq!(back, cfg);
        assert!(flat.is_empty());
    }

    #[test]
    fn nested_keys_and_type_errors() {
        let mut flat = Flat::from([("model.vocab.size".to_string(), "99".to_string())]);
        let m: ModelConfig = overlay(&ModelConfig::tiny(), "model", &mut flat).unwrap();
        assert_eq!(m.vocab.size, 99);
        let mut flat = Flat::from([("train.epochs".to_string(), "many".to_string())]);
        assert!(overlay(&TrainConfig::default(), "train", &mut flat).is_err());
        let mut flat = Flat::from([("train.nope".to_string(), "1".to_string())]);
        assert!(overlay(&TrainConfig::default(), "train", &mut flat).is_err());
    }
}
