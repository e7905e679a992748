//! Experiment configuration loading. A config file only needs the keys it
//! changes; everything else keeps the built-in defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use streamcast::experiment::ExperimentConfig;
use streamcast::types::HorizonConfig;

/// Recursively overlays `user` on `base`.
fn merge(base: &mut toml::Value, user: toml::Value) {
    match (base, user) {
        (toml::Value::Table(b), toml::Value::Table(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub struct Loaded {
    pub config: ExperimentConfig,
    /// The horizon was set explicitly by the file or the command line.
    pub explicit_horizon: bool,
}

pub fn load(base: ExperimentConfig, path: Option<&Path>, horizon: Option<&str>) -> Result<Loaded> {
    let mut value = toml::Value::try_from(base).context("serializing default config")?;
    let mut explicit_horizon = false;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let user: toml::Value = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        explicit_horizon = user.get("horizon").is_some();
        merge(&mut value, user);
    }
    let mut config: ExperimentConfig = value.try_into().context("invalid config")?;
    if let Some(h) = horizon {
        config.horizon = parse_horizon(h)?;
        explicit_horizon = true;
    }
    config.horizon.validate()?;
    config.generator.validate()?;
    Ok(Loaded { config, explicit_horizon })
}

/// `tau_h,tau_f,K`.
pub fn parse_horizon(s: &str) -> Result<HorizonConfig> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("--horizon expects tau_h,tau_f,K, got '{s}'");
    }
    let n = |i: usize| parts[i].parse::<usize>().with_context(|| format!("bad horizon value '{}'", parts[i]));
    Ok(HorizonConfig::new(n(0)?, n(1)?, n(2)?)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a value's canonical TOML rendering (fields in declaration order).
pub fn config_hash<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(toml::to_string(value)?.as_bytes()))
}
