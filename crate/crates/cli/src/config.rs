//! Run configuration files in the case-file syntax: `[section]` headers,
//! `key = value` lines and `#` comments. Section names only group keys;
//! a key may appear once per file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, (usize, String)>,
    source: String,
}

/// Keys a config file may set.
pub const KEYS: [&str; 18] = [
    "case",
    "data",
    "scenarios",
    "output_dir",
    "k",
    "seed",
    "n_values",
    "replications",
    "ground_truth_n",
    "eval_n",
    "threads",
    "mip_gap",
    "time_limit",
    "budget",
    "shed_price",
    "gap_policy",
    "polygon_sides",
    "sqrt_breakpoints",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.split('#').next().unwrap_or("").trim();
            if t.is_empty() || (t.starts_with('[') && t.ends_with(']')) {
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("{source}:{line}: expected `key = value`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::Input(format!("{source}:{line}: unknown key `{k}`")));
            }
            if values.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(CliError::Input(format!("{source}:{line}: duplicate key `{k}`")));
            }
        }
        Ok(Self { values, source: source.to_string() })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    /// `flag` when given, else the config value, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Input(format!("{}:{line}: cannot parse `{key}` value `{v}`", self.source))),
        }
    }

    pub fn pick_list(&self, flag: Option<Vec<usize>>, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<usize>, _>>()
                .map(Some)
                .map_err(|_| CliError::Input(format!("{}:{line}: `{key}` must be a comma-separated list of counts", self.source))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let cfg = RunConfig::parse("# run\n[run]\nk = 10\nseed = 3 # inline\n[saa]\nn_values = 10, 50\n", "t").unwrap();
        assert_eq!(cfg.pick::<usize>(None, "k").unwrap(), Some(10));
        assert_eq!(cfg.pick(Some(4usize), "k").unwrap(), Some(4));
        assert_eq!(cfg.pick::<u64>(None, "seed").unwrap(), Some(3));
        assert_eq!(cfg.pick::<f64>(None, "budget").unwrap(), None);
        assert_eq!(cfg.pick_list(None, "n_values").unwrap(), Some(vec![10, 50]));
    }

    #[test]
    fn rejects_bad_files() {
        for text in ["k 10", "colour = red", "k = 1\nk = 2"] {
            assert!(matches!(RunConfig::parse(text, "t"), Err(CliError::Input(_))), "{text}");
        }
        let cfg = RunConfig::parse("k = ten", "t").unwrap();
        assert!(cfg.pick::<usize>(None, "k").is_err());
    }
}
