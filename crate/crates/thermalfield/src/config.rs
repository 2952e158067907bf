//! JSON training configuration.
//!
//! A config file is one flat JSON object whose keys override a base
//! [`TrainConfig`]. Every key is checked before anything runs and all
//! problems are reported together.

use std::path::Path;

use serde_json::{Map, Value};
use thermalfield_core::train::TrainConfig;

use crate::error::{read, Error, Result};

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "iterations",
    "batch_rays",
    "learning_rate",
    "pose_learning_rate",
    "lr_final_ratio",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "pose_refinement",
    "structural_loss",
    "pose_warmup",
    "anneal_steps",
    "center_pose_corrections",
    "checkpoint_every",
    "fold_every",
    "samples_per_ray",
    "stratified",
    "kernel",
    "stride",
    "c2",
    "position_frequencies",
    "direction_frequencies",
    "include_input",
    "hidden_layers",
    "hidden_width",
    "thermal_width",
];

fn as_u64(v: &Value) -> std::result::Result<u64, &'static str> {
    v.as_u64().ok_or("expected a non-negative integer")
}

fn as_usize(v: &Value) -> std::result::Result<usize, &'static str> {
    as_u64(v).and_then(|n| usize::try_from(n).map_err(|_| "integer too large"))
}

fn as_f64(v: &Value) -> std::result::Result<f64, &'static str> {
    v.as_f64().ok_or("expected a number")
}

fn as_bool(v: &Value) -> std::result::Result<bool, &'static str> {
    v.as_bool().ok_or("expected true or false")
}

fn set(c: &mut TrainConfig, key: &str, v: &Value) -> std::result::Result<(), &'static str> {
    match key {
        "iterations" => c.iterations = as_u64(v)?,
        "batch_rays" => c.batch_rays = as_usize(v)?,
        "learning_rate" => c.learning_rate = as_f64(v)?,
        "pose_learning_rate" => c.pose_learning_rate = as_f64(v)?,
        "lr_final_ratio" => c.lr_final_ratio = as_f64(v)?,
        "adam_beta1" => c.adam_betas.0 = as_f64(v)?,
        "adam_beta2" => c.adam_betas.1 = as_f64(v)?,
        "adam_eps" => c.adam_eps = as_f64(v)?,
        "seed" => c.seed = as_u64(v)?,
        "pose_refinement" => c.pose_refinement = as_bool(v)?,
        "structural_loss" => c.structural_loss = as_bool(v)?,
        "pose_warmup" => c.pose_warmup = as_u64(v)?,
        "anneal_steps" => c.anneal_steps = as_u64(v)?,
        "center_pose_corrections" => c.center_pose_corrections = as_bool(v)?,
        "checkpoint_every" => c.checkpoint_every = as_u64(v)?,
        "fold_every" => c.fold_every = as_u64(v)?,
        "samples_per_ray" => c.sampling.samples_per_ray = as_usize(v)?,
        "stratified" => c.sampling.stratified = as_bool(v)?,
        "kernel" => c.window.kernel = as_usize(v)?,
        "stride" => c.window.stride = as_usize(v)?,
        "c2" => c.hssim.c2 = as_f64(v)?,
        "position_frequencies" => c.arch.encoding.position_frequencies = as_usize(v)?,
        "direction_frequencies" => c.arch.encoding.direction_frequencies = as_usize(v)?,
        "include_input" => c.arch.encoding.include_input = as_bool(v)?,
        "hidden_layers" => c.arch.hidden_layers = as_usize(v)?,
        "hidden_width" => c.arch.hidden_width = as_usize(v)?,
        "thermal_width" => c.arch.thermal_width = as_usize(v)?,
        _ => return Err("unknown key"),
    }
    Ok(())
}

/// Applies the keys of `object` on top of `base`.
///
/// Returns every unknown key, every ill-typed value and, if those are all
/// fine, the semantic validation failure.
pub fn apply_overrides(base: TrainConfig, object: &Map<String, Value>) -> std::result::Result<TrainConfig, Vec<String>> {
    let mut config = base;
    let mut problems = Vec::new();
    for (key, value) in object {
        if let Err(why) = set(&mut config, key, value) {
            problems.push(format!("'{key}': {why} (got {value})"));
        }
    }
    if problems.is_empty() {
        if let Err(e) = config.validate() {
            problems.push(e.to_string());
        }
    }
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(problems)
    }
}

pub fn parse_config(text: &str, base: TrainConfig) -> std::result::Result<TrainConfig, Vec<String>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => apply_overrides(base, &map),
        Ok(other) => Err(vec![format!("expected a JSON object, got {other}")]),
        Err(e) => Err(vec![format!("invalid JSON: {e}")]),
    }
}

pub fn load_config(path: &Path, base: TrainConfig) -> Result<TrainConfig> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    parse_config(text, base).map_err(|problems| Error::Config {
        problems: problems
            .into_iter()
            .map(|p| format!("{}: {p}", path.display()))
            .collect(),
    })
}

/// The config as a JSON object using the same keys the loader accepts.
pub fn config_to_json(c: &TrainConfig) -> Value {
    serde_json::json!({
        "iterations": c.iterations,
        "batch_rays": c.batch_rays,
        "learning_rate": c.learning_rate,
        "pose_learning_rate": c.pose_learning_rate,
        "lr_final_ratio": c.lr_final_ratio,
        "adam_beta1": c.adam_betas.0,
        "adam_beta2": c.adam_betas.1,
        "adam_eps": c.adam_eps,
        "seed": c.seed,
        "pose_refinement": c.pose_refinement,
        "structural_loss": c.structural_loss,
        "pose_warmup": c.pose_warmup,
        "anneal_steps": c.anneal_steps,
        "center_pose_corrections": c.center_pose_corrections,
        "checkpoint_every": c.checkpoint_every,
        "fold_every": c.fold_every,
        "samples_per_ray": c.sampling.samples_per_ray,
        "stratified": c.sampling.stratified,
        "kernel": c.window.kernel,
        "stride": c.window.stride,
        "c2": c.hssim.c2,
        "position_frequencies": c.arch.encoding.position_frequencies,
        "direction_frequencies": c.arch.encoding.direction_frequencies,
        "include_input": c.arch.encoding.include_input,
        "hidden_layers": c.arch.hidden_layers,
        "hidden_width": c.arch.hidden_width,
        "thermal_width": c.arch.thermal_width,
    })
}
