//! Loading experiment configs and expanding sweep files.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use dflsim_core::rng::{self, tags};
use dflsim_core::simulator::ExperimentConfig;
use toml::{Table, Value};

use crate::CliError;

/// The one array-valued field of a sweep file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    /// Dotted path, e.g. `topology.beta`.
    pub key: String,
    pub values: Vec<Value>,
}

/// A single expanded sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub value: Value,
    pub config: ExperimentConfig,
}

// Arrays that are ordinary config values rather than sweep axes.
const LIST_FIELDS: &[&str] = &["aggregator.geomed_weights"];

pub fn read_document(path: &Path) -> Result<Table, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn apply_seed(doc: &mut Table, seed: Option<u64>) -> Result<(), CliError> {
    if let Some(seed) = seed {
        let seed = i64::try_from(seed)
            .map_err(|_| CliError::Config(format!("--seed {seed} does not fit in 63 bits")))?;
        doc.insert("master_seed".into(), Value::Integer(seed));
    }
    Ok(())
}

/// Deserializes and validates a config document.
pub fn parse_config(doc: Table, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut doc = doc;
    apply_seed(&mut doc, seed)?;
    let cfg: ExperimentConfig = Value::Table(doc).try_into().map_err(|e| CliError::Config(format!("{e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let doc = read_document(path)?;
    parse_config(doc, seed).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn collect_axes(table: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => collect_axes(t, &key, out),
            Value::Array(_) if !LIST_FIELDS.contains(&key.as_str()) => out.push(key),
            _ => {}
        }
    }
}

/// Dotted keys of every array-valued field that is not a list field.
pub fn sweep_axes(doc: &Table) -> Vec<String> {
    let mut out = Vec::new();
    collect_axes(doc, "", &mut out);
    out
}

fn slot<'a>(doc: &'a mut Table, key: &str) -> &'a mut Value {
    let mut parts = key.split('.').peekable();
    let mut table = doc;
    loop {
        let part = parts.next().expect("axis keys are non-empty");
        let entry = table.get_mut(part).expect("axis key came from this document");
        if parts.peek().is_none() {
            return entry;
        }
        table = entry.as_table_mut().expect("intermediate keys are tables");
    }
}

/// Splits a sweep document into one config per value. Point `i` gets master
/// seed `derive_seed63(master, [SWEEP_POINT, i])`.
pub fn expand_sweep(doc: Table, seed: Option<u64>) -> Result<(SweepAxis, Vec<SweepPoint>), CliError> {
    let mut doc = doc;
    apply_seed(&mut doc, seed)?;
    let axes = sweep_axes(&doc);
    let key = match axes.as_slice() {
        [one] => one.clone(),
        [] => return Err(CliError::Config("sweep config has no array-valued field to sweep".into())),
        many => {
            return Err(CliError::Config(format!("sweep config has {} swept fields ({}); expected one", many.len(), many.join(", "))))
        }
    };
    let values = match slot(&mut doc, &key) {
        Value::Array(v) if !v.is_empty() => v.clone(),
        _ => return Err(CliError::Config(format!("sweep axis `{key}` is empty"))),
    };
    let base: ExperimentConfig = {
        let mut probe = doc.clone();
        *slot(&mut probe, &key) = values[0].clone();
        parse_config(probe, None)?
    };
    let master = base.master_seed;
    let mut points = Vec::with_capacity(values.len());
    for (index, value) in values.iter().enumerate() {
        let mut point = doc.clone();
        *slot(&mut point, &key) = value.clone();
        let mut config = parse_config(point, None)
            .map_err(|e| CliError::Config(format!("sweep point {index} ({key} = {value}): {e}")))?;
        config.master_seed = rng::derive_seed63(master, &[tags::SWEEP_POINT, index as u64]);
        points.push(SweepPoint { index, value: value.clone(), config });
    }
    Ok((SweepAxis { key, values }, points))
}

/// Orders sweep values numerically when both are numbers, else by their text.
pub fn compare_values(a: &Value, b: &Value) -> Ordering {
    fn num(v: &Value) -> Option<f64> {
        match v {
            Value::Integer(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }
    match (num(a), num(b)) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        _ => display_value(a).cmp(&display_value(b)),
    }
}

/// CSV rendering of a sweep value: bare strings, numbers as TOML writes them.
pub fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
