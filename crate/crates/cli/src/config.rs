//! Layered run configuration: defaults < JSON file < `TOOLDAG_*` environment
//! < command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "TOOLDAG_";
const MODE_TAG: &str = "mode";

/// Merge `src` into `dst`. Keys must already exist in `dst` unless the slot
/// there is `null` (an unset optional), which accepts any value. Objects
/// tagged with a `mode` key select an enum variant and replace the slot whole.
fn merge(dst: &mut Value, src: Value, path: &str, origin: &str) -> CliResult<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) if !s.contains_key(MODE_TAG) => {
            for (k, v) in s {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v, &p, origin)?,
                    None => return Err(CliError::Usage(format!("unknown config key `{p}` in {origin}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Environment overrides: `TOOLDAG_N_PERMS=200`, nested keys joined by `__`
/// (`TOOLDAG_PROBE__C=0.1`). Values parse as JSON, else as a plain string.
/// Variables that name no key of this command are ignored.
fn env_overrides(base: &Value, vars: impl Iterator<Item = (String, String)>) -> Value {
    let mut out = Map::new();
    let mut pairs: Vec<(String, String)> = vars.filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    pairs.sort();
    for (key, raw) in pairs {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if base_lookup(base, &path).is_none() {
            continue;
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut slot = &mut out;
        for p in &path[..path.len() - 1] {
            slot = slot
                .entry(p.clone())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("built as objects");
        }
        slot.insert(path[path.len() - 1].clone(), value);
    }
    Value::Object(out)
}

fn base_lookup<'a>(base: &'a Value, path: &[String]) -> Option<&'a Value> {
    path.iter().try_fold(base, |v, k| v.as_object()?.get(k))
}

/// Flag values destined for the top layer; unset flags leave no key.
#[derive(Debug, Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    /// Set a dotted key (`probe.c`) when `value` is present.
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            let parts: Vec<&str> = key.split('.').collect();
            let mut slot = &mut self.0;
            for p in &parts[..parts.len() - 1] {
                slot = slot
                    .entry(p.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("built as objects");
            }
            slot.insert(parts[parts.len() - 1].to_string(), v);
        }
        self
    }

    /// Set a boolean key only when the switch was given.
    pub fn switch(&mut self, key: &str, on: bool) -> &mut Self {
        self.set(key, on.then_some(true))
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

/// Resolve a command configuration from its defaults, an optional JSON
/// file, the process environment and flag overrides.
pub fn resolve<C: Serialize + DeserializeOwned + Default>(file: Option<&Path>, flags: &impl Serialize) -> CliResult<C> {
    resolve_with_env(file, flags, std::env::vars())
}

pub fn resolve_with_env<C: Serialize + DeserializeOwned + Default>(
    file: Option<&Path>,
    flags: &impl Serialize,
    vars: impl Iterator<Item = (String, String)>,
) -> CliResult<C> {
    let mut value = serde_json::to_value(C::default())?;
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        if !parsed.is_object() {
            return Err(CliError::Usage(format!("config {} must hold a JSON object", path.display())));
        }
        merge(&mut value, parsed, "", &path.display().to_string())?;
    }
    let env = env_overrides(&value, vars);
    merge(&mut value, env, "", "environment")?;
    merge(&mut value, serde_json::to_value(flags)?, "", "flags")?;
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

/// First 16 hex digits of the SHA-256 of the canonical config JSON.
pub fn run_id(resolved: &impl Serialize) -> CliResult<String> {
    let text = serde_json::to_string(resolved)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Create `<out>/<command>-<run id>/` and write the resolved config there.
pub fn run_dir(out: &Path, command: &str, resolved: &impl Serialize) -> CliResult<PathBuf> {
    let id = run_id(resolved)?;
    let dir = out.join(format!("{command}-{id}"));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let echo = serde_json::json!({ "command": command, "run_id": id, "config": resolved });
    crate::output::write_json(&dir.join("config.json"), &echo)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default)]
    struct Inner {
        c: f64,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(default)]
    struct Demo {
        n_perms: usize,
        name: String,
        path: Option<PathBuf>,
        probe: Inner,
    }

    impl Default for Demo {
        fn default() -> Self {
            Demo {
                n_perms: 0,
                name: "a".into(),
                path: None,
                probe: Inner { c: 0.01 },
            }
        }
    }

    #[derive(Serialize)]
    struct Flags {
        #[serde(skip_serializing_if = "Option::is_none")]
        n_perms: Option<usize>,
    }

    fn env(pairs: &[(&str, &str)]) -> impl Iterator<Item = (String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<Vec<_>>()
            .into_iter()
    }

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        fs::write(&file, r#"{"n_perms": 5, "name": "file", "probe": {"c": 1.0}}"#).unwrap();
        let none = Flags { n_perms: None };
        let c: Demo = resolve_with_env(Some(&file), &none, env(&[])).unwrap();
        assert_eq!((c.n_perms, c.name.as_str(), c.probe.c), (5, "file", 1.0));

        let vars = [("TOOLDAG_N_PERMS", "7"), ("TOOLDAG_NAME", "env"), ("TOOLDAG_PROBE__C", "0.5"), ("TOOLDAG_OTHER", "x")];
        let c: Demo = resolve_with_env(Some(&file), &none, env(&vars)).unwrap();
        assert_eq!((c.n_perms, c.name.as_str(), c.probe.c), (7, "env", 0.5));

        let c: Demo = resolve_with_env(Some(&file), &Flags { n_perms: Some(9) }, env(&vars)).unwrap();
        assert_eq!(c.n_perms, 9);

        let c: Demo = resolve_with_env(None, &none, env(&[("TOOLDAG_PATH", "/x/y")])).unwrap();
        assert_eq!(c.path, Some(PathBuf::from("/x/y")));

        let mut dst = serde_json::json!({"signal": {"mode": "a"}, "probe": {"c": 1}});
        let src = serde_json::json!({"signal": {"mode": "b", "layer": 3}});
        merge(&mut dst, src, "", "test").unwrap();
        assert_eq!(dst["signal"], serde_json::json!({"mode": "b", "layer": 3}));
        assert!(merge(&mut dst, serde_json::json!({"probe": {"cc": 1}}), "", "test").is_err());
    }

    #[test]
    fn bad_files_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let none = Flags { n_perms: None };
        for (name, text) in [("a.json", r#"{"bogus": 1}"#), ("b.json", "[1]"), ("c.json", "{"), ("d.json", r#"{"n_perms": "many"}"#)] {
            let p = dir.path().join(name);
            fs::write(&p, text).unwrap();
            let r: CliResult<Demo> = resolve_with_env(Some(&p), &none, env(&[]));
            assert!(matches!(r, Err(CliError::Usage(_))), "{name}");
        }
    }

    #[test]
    fn overrides_nest_dotted_keys() {
        let mut o = Overrides::default();
        o.set("n_perms", Some(3)).set("probe.c", Some(0.5)).set("name", None::<String>).switch("x", false);
        assert_eq!(o.into_value(), serde_json::json!({"n_perms": 3, "probe": {"c": 0.5}}));
    }

    #[test]
    fn run_id_tracks_config() {
        let a = Demo::default();
        let b = Demo { n_perms: 1, ..Demo::default() };
        assert_eq!(run_id(&a).unwrap(), run_id(&Demo::default()).unwrap());
        assert_ne!(run_id(&a).unwrap(), run_id(&b).unwrap());
        assert_eq!(run_id(&a).unwrap().len(), 16);
    }
}
