#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyc_cli::bundle::{Bundle, CriticModel, BUNDLE_FORMAT};
use polyc_cli::config::RunConfig;
use polyc_core::lyapunov::LyapunovCritic;
use polyc_core::nn::{Activation, GaussianPolicy, Mlp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn polyc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyc"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        stderr(out)
    );
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

/// Untrained policy, value network and critic for the environment in `toml`.
pub fn random_bundle(toml: &str, seed: u64) -> Bundle {
    let config = RunConfig::from_toml_str(toml).unwrap();
    let env = config.env.build().unwrap();
    let spec = env.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = GaussianPolicy::new(spec.state_dim, spec.action_dim, &[32, 32], Activation::Tanh, &mut rng).unwrap();
    let value_net = Mlp::new(&[spec.state_dim, 32, 1], Activation::Tanh, &mut rng).unwrap();
    let critic = LyapunovCritic::new(spec.equilibrium.clone(), &[32, 32], Activation::Tanh, &mut rng).unwrap();
    Bundle {
        format: BUNDLE_FORMAT,
        config,
        policy,
        value_net,
        critic: CriticModel::Network(critic),
        iter: 0,
        seed,
    }
}

pub fn schema(name: &str) -> Value {
    read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json")))
}

/// Validates `doc` against `schema(name)` and panics with every violation.
pub fn assert_schema(name: &str, doc: &Value) {
    let errors = schema_errors(&schema(name), doc);
    assert!(errors.is_empty(), "{name} schema violations:\n{}", errors.join("\n"));
}

pub fn schema_errors(schema: &Value, doc: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    check(schema, doc, "$", &mut errors);
    errors
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        other => panic!("unsupported schema type {other}"),
    }
}

/// Checks the keywords the bundled schemas use: type, enum, required,
/// properties, additionalProperties, items, minItems, maxItems, minimum,
/// maximum and exclusiveMinimum.
fn check(schema: &Value, v: &Value, at: &str, errors: &mut Vec<String>) {
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(t, v),
            Value::Array(ts) => ts.iter().any(|t| type_matches(t.as_str().unwrap(), v)),
            _ => panic!("bad type keyword at {at}"),
        };
        if !ok {
            errors.push(format!("{at}: expected type {ty}, got {v}"));
            return;
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            errors.push(format!("{at}: {v} not in {options:?}"));
        }
    }
    if let Some(x) = v.as_f64() {
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if x < min {
                errors.push(format!("{at}: {x} < minimum {min}"));
            }
        }
        if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
            if x > max {
                errors.push(format!("{at}: {x} > maximum {max}"));
            }
        }
        if let Some(min) = schema.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= min {
                errors.push(format!("{at}: {x} <= exclusiveMinimum {min}"));
            }
        }
    }
    if let Value::Object(map) = v {
        if let Some(Value::Array(required)) = schema.get("required") {
            for key in required {
                let key = key.as_str().unwrap();
                if !map.contains_key(key) {
                    errors.push(format!("{at}: missing required {key}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (key, value) in map {
            match props.and_then(|p| p.get(key)) {
                Some(sub) => check(sub, value, &format!("{at}.{key}"), errors),
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    errors.push(format!("{at}: unexpected property {key}"))
                }
                None => {}
            }
        }
    }
    if let Value::Array(items) = v {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                errors.push(format!("{at}: {} items < minItems {min}", items.len()));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max {
                errors.push(format!("{at}: {} items > maxItems {max}", items.len()));
            }
        }
        if let Some(sub) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(sub, item, &format!("{at}[{i}]"), errors);
            }
        }
    }
}
