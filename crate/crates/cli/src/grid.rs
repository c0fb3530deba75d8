//! Bench grid files: one `key = value` per line, `#` comments, list-valued
//! keys given by repeating the key.
//!
//! ```text
//! structure = ar2
//! structure = random
//! p = 20
//! n = 100
//! n = 1000
//! replicates = 10
//! seed = 1
//! prob_threshold = 0.1
//! ```

use std::path::Path;

use covsel::generate::{GraphSpec, Structure};
use covsel::pipeline::{FitConfig, MethodChoice};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Generator settings shared by every cell; `None` means the structure's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub rho: Option<f64>,
    pub lag1: Option<f64>,
    pub lag2: Option<f64>,
    pub edge_prob: Option<f64>,
    pub df: Option<usize>,
}

impl GeneratorParams {
    pub fn spec(&self, structure: Structure, p: usize, seed: u64) -> GraphSpec {
        let mut s = GraphSpec::new(structure, p, seed);
        if let Some(v) = self.rho {
            s.rho = v;
        }
        if let Some(v) = self.lag1 {
            s.lag1 = v;
        }
        if let Some(v) = self.lag2 {
            s.lag2 = v;
        }
        if let Some(v) = self.edge_prob {
            s.edge_prob = v;
        }
        if let Some(v) = self.df {
            s.df = v;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub structures: Vec<Structure>,
    pub p_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// Replicates run concurrently; 0 uses the global pool.
    pub workers: usize,
    pub generator: GeneratorParams,
    pub config: FitConfig,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("grid line {line}: invalid value `{value}` for `{key}`")))
}

impl BenchGrid {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut structures = Vec::new();
        let mut p_values = Vec::new();
        let mut n_values = Vec::new();
        let mut replicates = None;
        let mut seed = 0;
        let mut workers = 0;
        let mut generator = GeneratorParams::default();
        let mut config = FitConfig::default();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Usage(format!("grid line {line}: expected `key = value`")))?;
            match key {
                "structure" => structures.push(
                    value
                        .parse::<Structure>()
                        .map_err(|e| CliError::Usage(format!("grid line {line}: {e}")))?,
                ),
                "p" => p_values.push(parse(key, value, line)?),
                "n" => n_values.push(parse(key, value, line)?),
                "replicates" => replicates = Some(parse(key, value, line)?),
                "seed" => seed = parse(key, value, line)?,
                "workers" => workers = parse(key, value, line)?,
                "rho" => generator.rho = Some(parse(key, value, line)?),
                "lag1" => generator.lag1 = Some(parse(key, value, line)?),
                "lag2" => generator.lag2 = Some(parse(key, value, line)?),
                "edge_prob" => generator.edge_prob = Some(parse(key, value, line)?),
                "df" => generator.df = Some(parse(key, value, line)?),
                "method" => {
                    config.method = value
                        .parse::<MethodChoice>()
                        .map_err(|e| CliError::Usage(format!("grid line {line}: {e}")))?
                }
                "tau0" => config.tau0 = parse(key, value, line)?,
                "p0" => config.p0 = Some(parse(key, value, line)?),
                "warmup" => config.warmup = parse(key, value, line)?,
                "draws" => config.draws = parse(key, value, line)?,
                "delta_u_frac" => config.rule.delta_u_frac = parse(key, value, line)?,
                "prob_threshold" => config.rule.prob_threshold = parse(key, value, line)?,
                "bootstrap" => config.rule.bootstrap = parse(key, value, line)?,
                "max_size" => config.max_size = Some(parse(key, value, line)?),
                "eps_pd" => config.eps_pd = parse(key, value, line)?,
                "exact_loo" => config.exact_loo = parse(key, value, line)?,
                "threads" => config.threads = parse(key, value, line)?,
                "standardize" => config.standardize = parse(key, value, line)?,
                _ => return Err(CliError::Usage(format!("grid line {line}: unknown key `{key}`"))),
            }
        }

        let grid = Self {
            structures,
            p_values,
            n_values,
            replicates: replicates.unwrap_or(1),
            seed,
            workers,
            generator,
            config,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read grid file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let missing = |what: &str| CliError::Usage(format!("grid has no `{what}` entries"));
        if self.structures.is_empty() {
            return Err(missing("structure"));
        }
        if self.p_values.is_empty() {
            return Err(missing("p"));
        }
        if self.n_values.is_empty() {
            return Err(missing("n"));
        }
        if self.replicates == 0 {
            return Err(CliError::Usage("replicates must be at least 1".into()));
        }
        if let Some(&p) = self.p_values.iter().find(|&&p| p < 2) {
            return Err(CliError::Usage(format!("p = {p} is too small")));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 5) {
            return Err(CliError::Usage(format!("n = {n} is too small")));
        }
        self.config.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    /// `(structure, p, n)` in file order, structures outermost.
    pub fn cells(&self) -> Vec<(Structure, usize, usize)> {
        let mut out = Vec::new();
        for &s in &self.structures {
            for &p in &self.p_values {
                for &n in &self.n_values {
                    out.push((s, p, n));
                }
            }
        }
        out
    }
}
