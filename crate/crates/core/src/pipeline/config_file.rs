//! Sectioned `key = value` configuration text.
//!
//! ```text
//! # comment to end of line
//! [section]
//! key = value        # numbers, true/false, bare or "quoted" strings
//! list = 128, 64     # comma-separated
//! ```
//!
//! Sections are `[data]`, `[model]`, `[stage1]`, `[stage2]`, `[eval]` and `[mi]`.
//! Every key is optional and overrides the desk-scale default. Overrides of the
//! form `section.key=value` are applied on top with the same rules.

use std::path::{Path, PathBuf};

use super::config::TrainConfig;
use crate::contrastive::Negatives;
use crate::error::{Error, Result};

/// Accepted keys, by section.
pub const KEYS: &[(&str, &[&str])] = &[
    (
        "data",
        &[
            "dir",
            "source",
            "targets",
            "shared_dim",
            "source_private_dim",
            "target_private_dim",
            "source_classes",
            "target_classes",
            "train_samples",
            "test_samples",
            "noise_std",
            "source_shared_weight",
            "target_private_overlap",
            "seed",
        ],
    ),
    ("model", &["hidden", "rep_dim", "batch_size", "seed"]),
    (
        "stage1",
        &[
            "epochs",
            "lr",
            "lr_min",
            "momentum",
            "weight_decay",
            "augment",
            "horizon",
            "alpha",
            "tau",
            "bank_momentum",
            "negatives",
        ],
    ),
    (
        "stage2",
        &["epochs", "lr", "lr_min", "momentum", "weight_decay", "augment", "horizon", "beta", "tau"],
    ),
    (
        "eval",
        &[
            "every",
            "checkpoint_every",
            "kmeans_seed",
            "probe_steps",
            "probe_batch",
            "probe_lr",
            "probe_decay_factor",
            "probe_decay_steps",
            "probe_momentum",
            "probe_weight_decay",
            "probe_standardize",
            "probe_seed",
        ],
    ),
    (
        "mi",
        &[
            "every",
            "hidden",
            "layers",
            "steps",
            "ema_decay",
            "ixt_batch",
            "ixt_lr",
            "ity_batch",
            "ity_lr",
        ],
    ),
];

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn parse<T: std::str::FromStr>(value: &str, what: &str) -> std::result::Result<T, String> {
    unquote(value)
        .parse()
        .map_err(|_| format!("invalid {what} '{}'", value.trim()))
}

fn parse_list<T: std::str::FromStr>(value: &str, what: &str) -> std::result::Result<Vec<T>, String> {
    let v = unquote(value);
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(s, what)).collect()
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match unquote(value) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("invalid boolean '{other}'")),
    }
}

/// Sets one key; returns `Ok(false)` for an unknown key.
fn set(config: &mut TrainConfig, section: &str, key: &str, value: &str) -> std::result::Result<bool, String> {
    let c = config;
    match (section, key) {
        ("data", "dir") => {
            let v = unquote(value);
            c.data.dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        }
        ("data", "source") => c.data.source = unquote(value).to_string(),
        ("data", "targets") => {
            c.data.targets = unquote(value)
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        }
        ("data", "shared_dim") => c.data.synthetic.shared_dim = parse(value, "count")?,
        ("data", "source_private_dim") => c.data.synthetic.source_private_dim = parse(value, "count")?,
        ("data", "target_private_dim") => c.data.synthetic.target_private_dim = parse(value, "count")?,
        ("data", "source_classes") => c.data.synthetic.source_classes = parse(value, "count")?,
        ("data", "target_classes") => c.data.synthetic.target_classes = parse(value, "count")?,
        ("data", "train_samples") => c.data.synthetic.train_samples = parse(value, "count")?,
        ("data", "test_samples") => c.data.synthetic.test_samples = parse(value, "count")?,
        ("data", "noise_std") => c.data.synthetic.noise_std = parse(value, "number")?,
        ("data", "source_shared_weight") => c.data.synthetic.source_shared_weight = parse(value, "number")?,
        ("data", "target_private_overlap") => c.data.synthetic.target_private_overlap = parse(value, "number")?,
        ("data", "seed") => c.data.synthetic.seed = parse(value, "seed")?,

        ("model", "hidden") => c.model.hidden = parse_list(value, "width")?,
        ("model", "rep_dim") => c.model.rep_dim = parse(value, "count")?,
        ("model", "batch_size") => c.batch_size = parse(value, "count")?,
        ("model", "seed") => c.seed = parse(value, "seed")?,

        ("stage1", "alpha") => c.loss.alpha = parse(value, "number")?,
        ("stage1", "tau") => c.loss.tau_stage1 = parse(value, "number")?,
        ("stage1", "bank_momentum") => c.bank_momentum = parse(value, "number")?,
        ("stage1", "negatives") => c.loss.negatives = parse::<Negatives>(value, "negatives policy")?,
        ("stage2", "beta") => c.loss.beta = parse(value, "number")?,
        ("stage2", "tau") => c.loss.tau_stage2 = parse(value, "number")?,
        ("stage1" | "stage2", k) => {
            let s = if section == "stage1" { &mut c.stage1 } else { &mut c.stage2 };
            match k {
                "epochs" => s.epochs = parse(value, "count")?,
                "lr" => s.lr = parse(value, "number")?,
                "lr_min" => s.lr_min = parse(value, "number")?,
                "momentum" => s.momentum = parse(value, "number")?,
                "weight_decay" => s.weight_decay = parse(value, "number")?,
                "augment" => s.augment = parse(value, "number")?,
                "horizon" => {
                    let v = unquote(value);
                    s.horizon = if v.is_empty() || v == "none" { None } else { Some(parse(v, "count")?) };
                }
                _ => return Ok(false),
            }
        }

        ("eval", "every") => c.eval.every = parse(value, "count")?,
        ("eval", "checkpoint_every") => c.eval.checkpoint_every = parse(value, "count")?,
        ("eval", "kmeans_seed") => c.eval.kmeans_seed = parse(value, "seed")?,
        ("eval", "probe_steps") => c.eval.probe.steps = parse(value, "count")?,
        ("eval", "probe_batch") => c.eval.probe.batch_size = parse(value, "count")?,
        ("eval", "probe_lr") => c.eval.probe.lr_init = parse(value, "number")?,
        ("eval", "probe_decay_factor") => c.eval.probe.lr_decay_factor = parse(value, "number")?,
        ("eval", "probe_decay_steps") => c.eval.probe.decay_steps = parse_list(value, "step")?,
        ("eval", "probe_momentum") => c.eval.probe.momentum = parse(value, "number")?,
        ("eval", "probe_weight_decay") => c.eval.probe.weight_decay = parse(value, "number")?,
        ("eval", "probe_standardize") => c.eval.probe.standardize = parse_bool(value)?,
        ("eval", "probe_seed") => c.eval.probe.seed = parse(value, "seed")?,

        ("mi", "every") => c.mi.every = parse(value, "count")?,
        ("mi", "hidden") => {
            let h = parse(value, "count")?;
            c.mi.ixt.hidden_dim = h;
            c.mi.ity.hidden_dim = h;
        }
        ("mi", "layers") => {
            let l = parse(value, "count")?;
            c.mi.ixt.layer_count = l;
            c.mi.ity.layer_count = l;
        }
        ("mi", "steps") => {
            let s = parse(value, "count")?;
            c.mi.ixt.train_steps = s;
            c.mi.ity.train_steps = s;
        }
        ("mi", "ema_decay") => {
            let d = parse(value, "number")?;
            c.mi.ixt.ema_decay = d;
            c.mi.ity.ema_decay = d;
        }
        ("mi", "ixt_batch") => c.mi.ixt.batch_size = parse(value, "count")?,
        ("mi", "ixt_lr") => c.mi.ixt.learning_rate = parse(value, "number")?,
        ("mi", "ity_batch") => c.mi.ity.batch_size = parse(value, "count")?,
        ("mi", "ity_lr") => c.mi.ity.learning_rate = parse(value, "number")?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn section_known(name: &str) -> bool {
    KEYS.iter().any(|(s, _)| *s == name)
}

/// Applies config text on top of `base`. `source_name` labels errors.
pub fn apply_config_text(base: TrainConfig, text: &str, source_name: &str) -> Result<TrainConfig> {
    let mut config = base;
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message,
        };
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("unterminated section header '{line}'")))?
                .trim();
            if !section_known(name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', found '{line}'")))?;
        let key = key.trim();
        let sec = section
            .as_deref()
            .ok_or_else(|| err(format!("key '{key}' appears before any section header")))?;
        match set(&mut config, sec, key, value) {
            Ok(true) => {}
            Ok(false) => return Err(err(format!("unknown key '{key}' in section [{sec}]"))),
            Err(message) => return Err(err(format!("{sec}.{key}: {message}"))),
        }
    }
    Ok(config)
}

/// Reads a config file on top of the desk-scale defaults.
pub fn load_config_file(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    apply_config_text(TrainConfig::default(), &text, &path.display().to_string())
}

/// Applies one `section.key=value` override.
pub fn apply_override(config: &mut TrainConfig, assignment: &str) -> Result<()> {
    let err = |message: String| Error::Parse {
        source_name: "--set".into(),
        line: 1,
        message,
    };
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| err(format!("expected section.key=value, found '{assignment}'")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| err(format!("expected section.key, found '{path}'")))?;
    if !section_known(section) {
        return Err(err(format!("unknown section [{section}]")));
    }
    match set(config, section, key, value) {
        Ok(true) => Ok(()),
        Ok(false) => Err(err(format!("unknown key '{key}' in section [{section}]"))),
        Err(message) => Err(err(format!("{section}.{key}: {message}"))),
    }
}
