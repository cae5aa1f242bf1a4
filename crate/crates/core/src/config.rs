//! Flat-key experiment configuration.
//!
//! The config file is plain text: one `key = value` per line, `#` starts a
//! comment, and dotted keys form sections (`train.lr = 0.001`). Lists are
//! comma separated. `--set key=value` overrides on the command line use
//! the same keys. Every key is validated against the table below; the
//! resolved map (defaults included) is echoed into report.json so a run
//! can be reproduced from its own artifact.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::harness::{DatasetSource, RunConfig, SyntheticSpec, TrainParams};
use crate::scoring::{FusionConfig, LambdaMode, PwPlacement};
use crate::strategies::{StrategyKind, StrategySpec};

/// Known keys and their defaults; `None` means the key has no default and
/// is only present when given.
const KNOWN_KEYS: &[(&str, Option<&str>)] = &[
    ("dataset.path", None),
    ("dataset.test_path", None),
    ("synthetic.classes", None),
    ("synthetic.per_class", Some("50")),
    ("synthetic.dim", Some("32")),
    ("synthetic.spread", Some("10")),
    ("synthetic.noise", Some("1")),
    ("synthetic.overlap", Some("0")),
    ("synthetic.seed", Some("1")),
    ("strategy", Some("decern")),
    ("strategies", None),
    ("decern.R", Some("0.1")),
    ("decern.xi", Some("0.8")),
    ("decern.lambda", Some("dynamic")),
    ("decern.pw_term", Some("inside")),
    ("budget.k", Some("1")),
    ("cycles", Some("8")),
    ("seeds", Some("1,2,3,4,5")),
    ("train.lr", Some("0.001")),
    ("train.batch_size", Some("128")),
    ("train.epochs", Some("100")),
    ("train.cosine_decay", Some("true")),
    ("train.hidden", Some("0")),
    ("pool_subsample", Some("0")),
    ("score_dump", Some("false")),
    ("output.dir", None),
];

/// Whether the resolved config drives a single run or a strategy sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigMode {
    Run,
    Sweep,
}

fn check_known(key: &str) -> Result<()> {
    if KNOWN_KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("unknown config key {key:?}")))
    }
}

/// Parse config file text into a key/value map.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!(
                "config line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim();
        check_known(key)?;
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Apply `--set key=value` overrides on top of a parsed map.
pub fn apply_overrides(map: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("override {item:?} is not key=value"))
        })?;
        let key = key.trim();
        check_known(key)?;
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(())
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Option<&'a str> {
    if let Some(v) = map.get(key) {
        return Some(v.as_str());
    }
    KNOWN_KEYS
        .iter()
        .find(|(k, _)| *k == key)
        .and_then(|(_, d)| *d)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::InvalidInput(format!("config key {key}: bad value {value:?}")))
}

fn required<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = get(map, key)
        .ok_or_else(|| Error::InvalidInput(format!("config key {key} is required")))?;
    parse_value(key, v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidInput(format!(
            "config key {key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn strategy_spec(map: &BTreeMap<String, String>, name: &str) -> Result<StrategySpec> {
    let kind = StrategyKind::parse(name)?;
    let lambda_raw = get(map, "decern.lambda").unwrap();
    let lambda_mode = if lambda_raw.eq_ignore_ascii_case("dynamic") {
        LambdaMode::Dynamic
    } else {
        LambdaMode::Fixed(parse_value("decern.lambda", lambda_raw)?)
    };
    let pw_raw = get(map, "decern.pw_term").unwrap();
    let pw_placement = match pw_raw.to_ascii_lowercase().as_str() {
        "inside" => PwPlacement::InsideAverage,
        "outside" => PwPlacement::OutsideAverage,
        _ => {
            return Err(Error::InvalidInput(format!(
                "config key decern.pw_term: expected inside|outside, got {pw_raw:?}"
            )))
        }
    };
    let spec = StrategySpec {
        kind,
        fusion: FusionConfig {
            mask_fraction: required(map, "decern.R")?,
            lambda_mode,
            pw_placement,
        },
        xi: required(map, "decern.xi")?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Resolve a parsed map into a typed [`RunConfig`] plus the full echo map
/// (resolved values for every key in play, defaults included).
pub fn resolve(
    map: &BTreeMap<String, String>,
    mode: ConfigMode,
) -> Result<(RunConfig, BTreeMap<String, String>)> {
    let dataset = if let Some(path) = get(map, "dataset.path") {
        DatasetSource::File {
            path: PathBuf::from(path),
            test_path: get(map, "dataset.test_path").map(PathBuf::from),
        }
    } else if get(map, "synthetic.classes").is_some() {
        DatasetSource::Synthetic(SyntheticSpec {
            n_classes: required(map, "synthetic.classes")?,
            per_class: required(map, "synthetic.per_class")?,
            dim: required(map, "synthetic.dim")?,
            center_spread: required(map, "synthetic.spread")?,
            noise: required(map, "synthetic.noise")?,
            overlap: required(map, "synthetic.overlap")?,
            seed: required(map, "synthetic.seed")?,
        })
    } else {
        return Err(Error::InvalidInput(
            "config needs dataset.path or synthetic.classes".into(),
        ));
    };

    let strategies: Vec<StrategySpec> = match mode {
        ConfigMode::Run => {
            let name = get(map, "strategy").unwrap();
            vec![strategy_spec(map, name)?]
        }
        ConfigMode::Sweep => {
            let raw = get(map, "strategies").unwrap_or("");
            let names: Vec<&str> = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            if names.len() < 2 {
                return Err(Error::InvalidInput(
                    "sweep needs `strategies` with at least 2 entries".into(),
                ));
            }
            names
                .into_iter()
                .map(|n| strategy_spec(map, n))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let seeds_raw = get(map, "seeds").unwrap();
    let seeds: Vec<u64> = seeds_raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value::<u64>("seeds", s))
        .collect::<Result<Vec<_>>>()?;

    let hidden: usize = required(map, "train.hidden")?;
    let subsample: usize = required(map, "pool_subsample")?;
    let output_dir: String = required(map, "output.dir")?;

    let cfg = RunConfig {
        dataset,
        strategies,
        budget_multiplier: required(map, "budget.k")?,
        cycles: required(map, "cycles")?,
        seeds,
        train: TrainParams {
            lr: required(map, "train.lr")?,
            batch_size: required(map, "train.batch_size")?,
            epochs: required(map, "train.epochs")?,
            cosine_decay: parse_bool(
                "train.cosine_decay",
                get(map, "train.cosine_decay").unwrap(),
            )?,
            hidden: (hidden > 0).then_some(hidden),
        },
        pool_subsample: (subsample > 0).then_some(subsample),
        score_dump: parse_bool("score_dump", get(map, "score_dump").unwrap())?,
        output_dir: PathBuf::from(output_dir),
        record_timing: false,
        jobs: None,
    };
    cfg.validate()?;

    // Echo map: every known key that resolved to a value.
    let mut echo = BTreeMap::new();
    for (key, _) in KNOWN_KEYS {
        if let Some(v) = get(map, key) {
            echo.insert(key.to_string(), v.to_string());
        }
    }
    Ok((cfg, echo))
}
