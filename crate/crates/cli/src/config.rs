//! `key=value` run configuration. Command line flags are merged on top of
//! the file, so every command reads its settings from one place.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sdbe_core::{Mode, NormalizationFlags, WorldSpec};

use crate::error::{CliError, CliResult};

pub const KNOWN_KEYS: &[&str] = &[
    // paths
    "cd",
    "oed",
    "model",
    "queries",
    "out",
    // estimator
    "mode",
    "modes",
    "lambda",
    "lambda_grid",
    "normalize_columns",
    "normalize_query",
    "normalize_output",
    "max_iters",
    "kkt_tol",
    "obj_tol",
    // analysis
    "tau",
    "bins",
    "energies",
    "best_only",
    // world
    "preset",
    "seed",
    "m",
    "k_classes",
    "class_dim",
    "k_patterns",
    "pattern_dim",
    "train_per_class",
    "queries_per_class",
    "pairs_per_pattern",
    "occlusion_energy",
    "noise_sigma",
    "nonneg_features",
    "overlap",
    "distractor_tilt",
    "shared_mean_weight",
    "spread",
    "orthogonalize",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", i + 1)))?;
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key '{key}'",
                    i + 1
                )));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Sets `key` when a flag was given; flags win over the file.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> CliResult<()> {
        match value {
            Some(v) => self.set(key, &v.to_string()),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.get(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| CliError::Config(format!("bad value for '{key}': '{s}'")))
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| CliError::Config(format!("missing required setting '{key}'")))
    }

    pub fn switch(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => parse_switch(s)
                .ok_or_else(|| CliError::Config(format!("bad value for '{key}': '{s}'"))),
        }
    }

    pub fn list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        let Some(s) = self.get(key) else {
            return Ok(None);
        };
        let items: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
        match items {
            Ok(v) if !v.is_empty() => Ok(Some(v)),
            _ => Err(CliError::Config(format!("bad list for '{key}': '{s}'"))),
        }
    }

    pub fn mode(&self, default: Mode) -> CliResult<Mode> {
        match self.get("mode") {
            None => Ok(default),
            Some(s) => parse_mode(s),
        }
    }

    pub fn modes(&self, default: &[Mode]) -> CliResult<Vec<Mode>> {
        match self.get("modes").or(self.get("mode")) {
            None => Ok(default.to_vec()),
            Some(s) => s.split(',').map(|x| parse_mode(x.trim())).collect(),
        }
    }

    pub fn flags(&self) -> CliResult<NormalizationFlags> {
        let d = NormalizationFlags::default();
        Ok(NormalizationFlags {
            columns: self.switch("normalize_columns", d.columns)?,
            query: self.switch("normalize_query", d.query)?,
            output: self.switch("normalize_output", d.output)?,
        })
    }

    pub fn world_spec(&self) -> CliResult<WorldSpec> {
        let base = match self.get("preset").unwrap_or("default") {
            "default" => WorldSpec::default(),
            "benchmark" => WorldSpec::benchmark(),
            "orthogonal" => WorldSpec::orthogonal_benchmark(),
            other => return Err(CliError::Config(format!("unknown preset '{other}'"))),
        };
        Ok(WorldSpec {
            m: self.parsed_or("m", base.m)?,
            k_classes: self.parsed_or("k_classes", base.k_classes)?,
            class_dim: self.parsed_or("class_dim", base.class_dim)?,
            k_patterns: self.parsed_or("k_patterns", base.k_patterns)?,
            pattern_dim: self.parsed_or("pattern_dim", base.pattern_dim)?,
            train_per_class: self.parsed_or("train_per_class", base.train_per_class)?,
            queries_per_class: self.parsed_or("queries_per_class", base.queries_per_class)?,
            pairs_per_pattern: self.parsed_or("pairs_per_pattern", base.pairs_per_pattern)?,
            occlusion_energy: self.parsed_or("occlusion_energy", base.occlusion_energy)?,
            noise_sigma: self.parsed_or("noise_sigma", base.noise_sigma)?,
            nonneg_features: self.switch("nonneg_features", base.nonneg_features)?,
            seed: self.parsed_or("seed", base.seed)?,
            overlap: self.parsed_or("overlap", base.overlap)?,
            distractor_tilt: self.parsed_or("distractor_tilt", base.distractor_tilt)?,
            shared_mean_weight: self.parsed_or("shared_mean_weight", base.shared_mean_weight)?,
            spread: self.parsed_or("spread", base.spread)?,
            orthogonalize: self.switch("orthogonalize", base.orthogonalize)?,
        })
    }
}

pub fn parse_switch(s: &str) -> Option<bool> {
    match s {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        _ => None,
    }
}

pub fn parse_mode(s: &str) -> CliResult<Mode> {
    match s {
        "l1" => Ok(Mode::L1),
        "l2" => Ok(Mode::L2),
        _ => Err(CliError::Config(format!(
            "unknown mode '{s}' (expected l1 or l2)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let cfg = RunConfig::parse("# world\nm = 32\n\nmode=l1 # trailing\nlambda=0.1\n").unwrap();
        assert_eq!(cfg.parsed::<usize>("m").unwrap(), Some(32));
        assert_eq!(cfg.mode(Mode::L2).unwrap(), Mode::L1);
        assert_eq!(cfg.parsed::<f64>("lambda").unwrap(), Some(0.1));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = RunConfig::parse("lamda=0.1\n").unwrap_err();
        assert_eq!(err.category(), "config");
        assert!(err.to_string().contains("lamda"));
    }

    #[test]
    fn rejects_duplicates_and_missing_equals() {
        assert!(RunConfig::parse("m=3\nm=4\n").is_err());
        assert!(RunConfig::parse("m 3\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::parse("lambda=0.1\n").unwrap();
        cfg.set_opt("lambda", Some(0.5)).unwrap();
        cfg.set_opt::<f64>("tau", None).unwrap();
        assert_eq!(cfg.parsed::<f64>("lambda").unwrap(), Some(0.5));
        assert_eq!(cfg.get("tau"), None);
    }

    #[test]
    fn world_spec_from_preset() {
        let cfg = RunConfig::parse("preset=benchmark\nseed=7\nnonneg_features=on\n").unwrap();
        let spec = cfg.world_spec().unwrap();
        assert_eq!(spec.m, WorldSpec::benchmark().m);
        assert_eq!(spec.seed, 7);
        assert!(spec.nonneg_features);
        assert!(RunConfig::parse("preset=huge\n")
            .unwrap()
            .world_spec()
            .is_err());
    }

    #[test]
    fn lists_and_flags() {
        let cfg =
            RunConfig::parse("lambda_grid=1e-3, 0.1\nnormalize_query=off\nmodes=l1,l2\n").unwrap();
        assert_eq!(cfg.list("lambda_grid").unwrap(), Some(vec![1e-3, 0.1]));
        let flags = cfg.flags().unwrap();
        assert!(flags.columns && !flags.query && flags.output);
        assert_eq!(cfg.modes(&[]).unwrap(), vec![Mode::L1, Mode::L2]);
        assert!(RunConfig::parse("lambda_grid=a,b\n")
            .unwrap()
            .list("lambda_grid")
            .is_err());
    }
}
