// Loads a pipeline configuration and shows that inline secrets are
// refused.

use reasforge::config::{ConfigError, PipelineConfig};

const CONFIG: &str = r#"
log_level = "info"

[paths]
samples = "data/samples.jsonl"
traces = "data/traces.jsonl"

[generation]
mock_error_rate = 0.33
seed = 11

[generation.endpoint]
base_url = "http://127.0.0.1:8000/v1"
api_key_env_var = "REASFORGE_API_KEY"

[build]
mode = "mtl-all"
cr_fraction = 0.5

[train]
epochs = 5
"#;

pub fn run_example() {
    let config = PipelineConfig::from_toml_str(CONFIG).unwrap();
    config.validate().unwrap();
    println!("mode {:?}, cr fraction {}", config.build.mode, config.build.cr_fraction);
    println!("key read from ${}", config.generation.endpoint.api_key_env_var);

    let inline = "[generation.endpoint]\napi_key = \"sk-do-not-store\"\n";
    let err = PipelineConfig::from_toml_str(inline).unwrap_err();
    println!("rejected: {err}");
    assert!(matches!(err, ConfigError::Credential(_)));
    assert!(!err.to_string().contains("sk-do-not-store"));
}

fn main() {
    run_example();
}
