//! `key = value` solver configuration files.
//!
//! Keys are the [`SolverConfig`] field names plus `seed` for random
//! initialization. Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;

use cpcp::solvers::{Init, Method, SolverConfig};

use crate::error::{CliError, Result};

/// Settings collected from a file and from flags, later flags winning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    entries: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "method",
    "init",
    "seed",
    "rank",
    "max_iters",
    "tol_residual",
    "tol_stall",
    "rals_alpha0",
    "rals_decay",
    "rals_alpha_floor",
    "ls_interval",
    "symmetric",
    "keep_history",
];

impl ConfigOverrides {
    pub fn parse(path: &str, text: &str) -> Result<Self> {
        let mut out = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Parse {
                path: path.to_string(),
                line: n + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found `{line}`")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            out.entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key));
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    /// Builds a validated solver configuration. `seed` falls back to
    /// `default_seed`, and `rank` must be present.
    pub fn build(&self, default_seed: u64) -> Result<SolverConfig> {
        let method: Method = self.get("method").unwrap_or("als").parse()?;
        let seed = self.parsed::<u64>("seed")?.unwrap_or(default_seed);
        let init = Init::parse(self.get("init").unwrap_or("centroid"), seed)?;
        let rank = self
            .parsed::<usize>("rank")?
            .ok_or_else(|| CliError::Usage("rank is required".into()))?;
        let mut cfg = SolverConfig::new(method, init, rank);
        if let Some(v) = self.parsed("max_iters")? {
            cfg.max_iters = v;
        }
        if let Some(v) = self.parsed("tol_residual")? {
            cfg.tol_residual = v;
        }
        if let Some(v) = self.parsed("tol_stall")? {
            cfg.tol_stall = v;
        }
        if let Some(v) = self.parsed("rals_alpha0")? {
            cfg.rals_alpha0 = v;
        }
        if let Some(v) = self.parsed("rals_decay")? {
            cfg.rals_decay = v;
        }
        if let Some(v) = self.parsed("rals_alpha_floor")? {
            cfg.rals_alpha_floor = v;
        }
        if let Some(v) = self.parsed("ls_interval")? {
            cfg.ls_interval = v;
        }
        if let Some(v) = self.parsed("symmetric")? {
            cfg.symmetric = v;
        }
        if let Some(v) = self.parsed("keep_history")? {
            cfg.keep_history = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let text = "# run\nmethod = lsals\nrank=3\nmax_iters = 20 # short\ninit = random\nseed = 9\n";
        let mut o = ConfigOverrides::parse("c", text).unwrap();
        o.set("max_iters", 7);
        let cfg = o.build(1).unwrap();
        assert_eq!(cfg.method, Method::Lsals);
        assert_eq!(cfg.rank, 3);
        assert_eq!(cfg.max_iters, 7);
        assert_eq!(cfg.init, Init::Random { seed: 9 });
    }

    #[test]
    fn bad_entries() {
        assert!(ConfigOverrides::parse("c", "colour = red\n").is_err());
        assert!(ConfigOverrides::parse("c", "rank 3\n").is_err());
        let o = ConfigOverrides::parse("c", "rank = x\n").unwrap();
        assert!(matches!(o.build(0), Err(CliError::Usage(_))));
        let o = ConfigOverrides::parse("c", "rank = 2\nrals_decay = 1.5\n").unwrap();
        assert_eq!(o.build(0).unwrap_err().exit_code(), crate::error::EXIT_USAGE);
        assert!(ConfigOverrides::default().build(0).is_err());
    }
}
