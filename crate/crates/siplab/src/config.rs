//! Flat `key = value` run configuration. `#` starts a comment; unknown or
//! repeated keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sipcore::eval::Scheme;
use sipcore::presets::{self, Preset};

use crate::error::{LabError, Result};

/// Sweep settings not covered by the preset.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub rho_uniform: f64,
    pub icedd_iterations: usize,
    pub window: (usize, usize),
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            snr_db: vec![10.0, 12.0, 14.0],
            trials: 1,
            rho_uniform: 0.3,
            icedd_iterations: 3,
            window: (3, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub dataset: Option<PathBuf>,
    pub sweep: SweepSettings,
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let sweep = SweepSettings {
            snr_db: preset.sweep_snr_db.clone(),
            ..SweepSettings::default()
        };
        Self {
            preset,
            dataset: None,
            sweep,
        }
    }
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "preset",
    "dataset",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "snr_db_min",
    "snr_db_max",
    "seed",
    "lambda_ce",
    "rho0",
    "samples",
    "velocity_kmh",
    "delay_spread_ns_min",
    "delay_spread_ns_max",
    "distance_classes",
    "sweep_snr_db",
    "trials",
    "rho_uniform",
    "icedd_iterations",
    "window",
    "schemes",
];

fn as_config(e: sipcore::Error) -> LabError {
    match e {
        sipcore::Error::Config(m) => LabError::Config(m),
        other => LabError::Config(other.to_string()),
    }
}

/// `(line, key, value)` triples of a config text.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| LabError::config(format!("line {line_no}: expected key = value")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(LabError::config(format!("line {line_no}: unknown key {k:?}")));
        }
        if let Some((first, ..)) = out.iter().find(|(_, key, _)| key == k) {
            return Err(LabError::config(format!("line {line_no}: {k} already set on line {first}")));
        }
        out.push((line_no, k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| LabError::config(format!("line {line}: cannot parse {key} = {v:?}")))
}

fn list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(line, key, s))
        .collect()
}

/// Build a run configuration from `text`. The preset is `preset_override`
/// if given, else the file's `preset` key, else `desk`.
pub fn parse(text: &str, preset_override: Option<&str>) -> Result<RunConfig> {
    let pairs = parse_pairs(text)?;
    let file_preset = pairs.iter().find(|(_, k, _)| k == "preset").map(|(_, _, v)| v.as_str());
    let name = preset_override.or(file_preset).unwrap_or("desk");
    let mut cfg = RunConfig::from_preset(presets::by_name(name).map_err(as_config)?);
    for (line, key, v) in &pairs {
        let (line, v) = (*line, v.as_str());
        let p = &mut cfg.preset;
        match key.as_str() {
            "preset" => {}
            "dataset" => cfg.dataset = Some(PathBuf::from(v)),
            "epochs" => p.train.epochs = value(line, key, v)?,
            "batch_size" => p.train.batch_size = value(line, key, v)?,
            "lr" => p.train.lr = value(line, key, v)?,
            "beta1" => p.train.betas.0 = value(line, key, v)?,
            "beta2" => p.train.betas.1 = value(line, key, v)?,
            "adam_eps" => p.train.adam_eps = value(line, key, v)?,
            "snr_db_min" => p.train.snr_db.0 = value(line, key, v)?,
            "snr_db_max" => p.train.snr_db.1 = value(line, key, v)?,
            "seed" => p.train.seed = value(line, key, v)?,
            "lambda_ce" => p.train.lambda_ce = value(line, key, v)?,
            "rho0" => p.train.rho0 = value(line, key, v)?,
            "samples" => p.sim.samples = value(line, key, v)?,
            "velocity_kmh" => p.sim.velocity_kmh = value(line, key, v)?,
            "delay_spread_ns_min" => p.sim.delay_spread_ns.0 = value(line, key, v)?,
            "delay_spread_ns_max" => p.sim.delay_spread_ns.1 = value(line, key, v)?,
            "distance_classes" => p.sim.distance_classes = value(line, key, v)?,
            "sweep_snr_db" => cfg.sweep.snr_db = list(line, key, v)?,
            "trials" => cfg.sweep.trials = value(line, key, v)?,
            "rho_uniform" => cfg.sweep.rho_uniform = value(line, key, v)?,
            "icedd_iterations" => cfg.sweep.icedd_iterations = value(line, key, v)?,
            "window" => {
                let (a, b) = v
                    .split_once('x')
                    .ok_or_else(|| LabError::config(format!("line {line}: window must look like 3x3")))?;
                cfg.sweep.window = (value(line, key, a.trim())?, value(line, key, b.trim())?);
            }
            "schemes" => {
                cfg.sweep.schemes = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Scheme::parse(s).map_err(|e| LabError::config(format!("line {line}: {e}"))))
                    .collect::<Result<_>>()?;
            }
            _ => unreachable!("key list checked while parsing"),
        }
    }
    cfg.preset.train.validate().map_err(as_config)?;
    cfg.preset.sim.validate().map_err(as_config)?;
    Ok(cfg)
}

pub fn load(path: &Path, preset_override: Option<&str>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse(&text, preset_override).map_err(|e| match e {
        LabError::Config(msg) => LabError::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_on_top_of_the_preset() {
        let cfg = parse(
            "# comment\npreset = tiny\nepochs = 7\nlr = 2e-4 # trailing\nwindow = 1x5\nschemes = TP, CaSIP\nsweep_snr_db = 8,12\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.preset.name, "tiny");
        assert_eq!(cfg.preset.train.epochs, 7);
        assert_eq!(cfg.preset.train.lr, 2e-4);
        assert_eq!(cfg.sweep.window, (1, 5));
        assert_eq!(cfg.sweep.schemes, [Scheme::Tp, Scheme::Casip]);
        assert_eq!(cfg.sweep.snr_db, [8.0, 12.0]);
        assert_eq!(parse("preset = tiny", Some("desk")).unwrap().preset.name, "desk");
    }

    #[test]
    fn rejects_bad_input_with_line_numbers() {
        let err = |t: &str| match parse(t, None) {
            Err(LabError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert!(err("epochs = 3\nlearning_rate = 1").contains("line 2"));
        assert!(err("epochs = three").contains("line 1"));
        assert!(err("epochs").contains("key = value"));
        assert!(err("seed = 1\nseed = 2").contains("already set on line 1"));
        assert!(err("schemes = TP, LMMSE").contains("line 1"));
        assert!(err("epochs = 0").contains("epochs"));
        assert!(err("preset = huge").contains("huge"));
    }
}
