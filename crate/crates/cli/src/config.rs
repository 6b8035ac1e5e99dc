//! Layered settings: built-in defaults, then a JSON file, then flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Overlays the JSON object in `path` on `defaults`.
///
/// Objects merge key by key, so a file can set a single trainer field.
/// Single-key objects are externally tagged enums (`{"constant": 0.1}`) and
/// are replaced whole. Keys absent from the defaults are rejected.
pub fn load_layered<T: Serialize + DeserializeOwned>(defaults: &T, path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(clone_via_json(defaults)?);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let mut base = serde_json::to_value(defaults).map_err(|e| CliError::Usage(e.to_string()))?;
    merge(&mut base, file, "")?;
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn clone_via_json<T: Serialize + DeserializeOwned>(x: &T) -> Result<T, CliError> {
    serde_json::to_value(x)
        .and_then(serde_json::from_value)
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn merge(base: &mut Value, overlay: Value, at: &str) -> Result<(), CliError> {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) if b.len() > 1 => merge_objects(b, o, at),
        (slot, value) => {
            *slot = value;
            Ok(())
        }
    }
}

fn merge_objects(base: &mut Map<String, Value>, overlay: Map<String, Value>, at: &str) -> Result<(), CliError> {
    for (key, value) in overlay {
        let path = if at.is_empty() { key.clone() } else { format!("{at}.{key}") };
        if !base.contains_key(&key) {
            let mut known: Vec<&str> = base.keys().map(String::as_str).collect();
            known.sort_unstable();
            return Err(CliError::Usage(format!(
                "unknown config key {path:?}; known keys: {}",
                known.join(", ")
            )));
        }
        merge(base.get_mut(&key).expect("checked above"), value, &path)?;
    }
    Ok(())
}
