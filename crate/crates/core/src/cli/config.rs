use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CliError;

/// Settings shared by all subcommands. Values come from, in rising
/// priority: built-in defaults, a TOML file, `FLOWSMITH_*` environment
/// variables and command-line flags. Credentials are not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// offline, script, replay or http.
    pub llm: String,
    pub llm_url: String,
    pub model: String,
    pub judge_model: String,
    /// hash or http.
    pub embedder: String,
    pub embed_url: String,
    pub embed_model: String,
    /// simulated or live.
    pub backend: String,
    pub server_url: String,
    pub poll_budget_secs: u64,
    pub step_budget: u32,
    pub refine_attempts: u32,
    pub retrieval_k: usize,
    pub demonstrations: usize,
    pub parallelism: usize,
    pub judge_votes: u32,
    pub retries: u32,
    pub seed: u64,
    pub registry: PathBuf,
    pub corpus: PathBuf,
    pub tasks: Option<PathBuf>,
    pub output: PathBuf,
    pub script_file: Option<PathBuf>,
    pub replay_dir: Option<PathBuf>,
    pub record_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = Path::new(crate::DATA_DIR);
        RunConfig {
            llm: "offline".into(),
            llm_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            judge_model: "gpt-4o".into(),
            embedder: "hash".into(),
            embed_url: "https://api.openai.com/v1".into(),
            embed_model: "text-embedding-3-small".into(),
            backend: "simulated".into(),
            server_url: "http://127.0.0.1:8188".into(),
            poll_budget_secs: 600,
            step_budget: 5,
            refine_attempts: 2,
            retrieval_k: 5,
            demonstrations: 3,
            parallelism: 4,
            judge_votes: 1,
            retries: 3,
            seed: 0,
            registry: data.join("nodes"),
            corpus: data.join("curriculum"),
            tasks: None,
            output: PathBuf::from("flowsmith-out"),
            script_file: None,
            replay_dir: None,
            record_dir: None,
        }
    }
}

/// Credentials, read from the environment only and never serialized.
#[derive(Clone, Default)]
pub struct Secrets {
    pub api_key: Option<String>,
    pub judge_api_key: Option<String>,
    pub embed_api_key: Option<String>,
}

impl std::fmt::Debug for Secrets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mask = |s: &Option<String>| if s.is_some() { "set" } else { "unset" };
        f.debug_struct("Secrets")
            .field("api_key", &mask(&self.api_key))
            .field("judge_api_key", &mask(&self.judge_api_key))
            .field("embed_api_key", &mask(&self.embed_api_key))
            .finish()
    }
}

impl Secrets {
    pub fn from_env(env: &dyn Fn(&str) -> Option<String>) -> Self {
        let get = |k: &str| env(k).filter(|v| !v.is_empty());
        let api_key = get("FLOWSMITH_API_KEY");
        Secrets {
            judge_api_key: get("FLOWSMITH_JUDGE_API_KEY").or_else(|| api_key.clone()),
            embed_api_key: get("FLOWSMITH_EMBED_API_KEY").or_else(|| api_key.clone()),
            api_key,
        }
    }
}

pub const ENV_PREFIX: &str = "FLOWSMITH_";

/// Parse an environment string into the JSON type of `default`.
fn env_value(key: &str, raw: &str, default: &Value) -> Result<Value, CliError> {
    let bad = || CliError::Usage(format!("{ENV_PREFIX}{}: cannot use {raw:?} here", key.to_uppercase()));
    match default {
        Value::Number(_) => raw.trim().parse::<u64>().map(Value::from).map_err(|_| bad()),
        Value::Bool(_) => raw.trim().parse::<bool>().map(Value::from).map_err(|_| bad()),
        _ => Ok(Value::String(raw.to_string())),
    }
}

fn overlay(base: &mut Map<String, Value>, layer: Map<String, Value>, source: &str) -> Result<(), CliError> {
    for (k, v) in layer {
        if !base.contains_key(&k) {
            return Err(CliError::Usage(format!("{source}: unknown setting {k:?}")));
        }
        base.insert(k, v);
    }
    Ok(())
}

/// Resolve the configuration. `flags` holds only the settings given on
/// the command line.
pub fn resolve(
    file: Option<&Path>,
    env: &dyn Fn(&str) -> Option<String>,
    flags: Map<String, Value>,
) -> Result<RunConfig, CliError> {
    let Value::Object(mut merged) = serde_json::to_value(RunConfig::default()).expect("config serializes") else {
        unreachable!("config is a struct")
    };
    let defaults = merged.clone();

    let file = file
        .map(Path::to_path_buf)
        .or_else(|| env("FLOWSMITH_CONFIG").filter(|s| !s.is_empty()).map(PathBuf::from));
    if let Some(path) = file {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let Value::Object(layer) = serde_json::to_value(table).expect("toml maps to json") else {
            unreachable!("a table is an object")
        };
        overlay(&mut merged, layer, &path.display().to_string())?;
    }

    let mut from_env = Map::new();
    for (key, default) in &defaults {
        if let Some(raw) = env(&format!("{ENV_PREFIX}{}", key.to_uppercase())) {
            from_env.insert(key.clone(), env_value(key, &raw, default)?);
        }
    }
    overlay(&mut merged, from_env, "environment")?;
    overlay(&mut merged, flags, "command line")?;

    let config: RunConfig =
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("configuration: {e}")))?;
    config.check()?;
    Ok(config)
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        let knobs = [
            ("step_budget", self.step_budget as u64),
            ("refine_attempts", self.refine_attempts as u64),
            ("retrieval_k", self.retrieval_k as u64),
            ("demonstrations", self.demonstrations as u64),
            ("parallelism", self.parallelism as u64),
            ("judge_votes", self.judge_votes as u64),
            ("retries", self.retries as u64),
            ("poll_budget_secs", self.poll_budget_secs),
        ];
        if let Some((name, _)) = knobs.iter().find(|(_, v)| *v < 1) {
            return Err(CliError::Usage(format!("{name} must be at least 1")));
        }
        let choice = |name: &str, value: &str, allowed: &[&str]| {
            if allowed.contains(&value) {
                Ok(())
            } else {
                Err(CliError::Usage(format!("{name} must be one of {}, not {value:?}", allowed.join(", "))))
            }
        };
        choice("llm", &self.llm, &["offline", "script", "replay", "http"])?;
        choice("embedder", &self.embedder, &["hash", "http"])?;
        choice("backend", &self.backend, &["simulated", "live"])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("flowsmith.toml");
        fs::write(&file, "model = \"from-file\"\nstep_budget = 7\nseed = 3\n").unwrap();
        let env = env_of(&[("FLOWSMITH_STEP_BUDGET", "9"), ("FLOWSMITH_SEED", "4")]);
        let mut flags = Map::new();
        flags.insert("seed".into(), Value::from(5));
        let c = resolve(Some(&file), &env, flags).unwrap();
        assert_eq!(c.model, "from-file");
        assert_eq!(c.step_budget, 9);
        assert_eq!(c.seed, 5);
        assert_eq!(c.refine_attempts, 2);
    }

    #[test]
    fn secrets_not_accepted_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        fs::write(&file, "api_key = \"sk-123\"\n").unwrap();
        assert!(matches!(resolve(Some(&file), &env_of(&[]), Map::new()), Err(CliError::Usage(_))));
    }

    #[test]
    fn knobs_must_be_positive() {
        let env = env_of(&[("FLOWSMITH_PARALLELISM", "0")]);
        assert!(matches!(resolve(None, &env, Map::new()), Err(CliError::Usage(_))));
        let env = env_of(&[("FLOWSMITH_STEP_BUDGET", "many")]);
        assert!(matches!(resolve(None, &env, Map::new()), Err(CliError::Usage(_))));
    }

    #[test]
    fn secrets_fall_back_and_hide() {
        let s = Secrets::from_env(&env_of(&[("FLOWSMITH_API_KEY", "sk-secret")]));
        assert_eq!(s.judge_api_key.as_deref(), Some("sk-secret"));
        assert!(!format!("{s:?}").contains("sk-secret"));
    }
}
