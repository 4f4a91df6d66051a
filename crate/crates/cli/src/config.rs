//! Run configuration: defaults, then a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use dyadflow_core::field::params_from;
use dyadflow_core::{FieldParams, Mode, StepPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub k: u32,
    pub alpha: f64,
    pub delta: f64,
    pub n_stages: u32,
    pub sample_count: usize,
    pub depth: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub base_steps: usize,
    pub resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Hoelder,
            k: 0,
            alpha: 0.5,
            delta: 0.2,
            n_stages: 4,
            sample_count: 10_000,
            depth: 4,
            seed: 1,
            output_dir: PathBuf::from("dyadflow-out"),
            base_steps: 4096,
            resolution: 128,
        }
    }
}

/// Keys accepted in config files.
pub const KEYS: [&str; 11] =
    ["mode", "k", "alpha", "delta", "n_stages", "sample_count", "depth", "seed", "output_dir", "base_steps", "resolution"];

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`, got `{line}`", i + 1);
        };
        let k = k.trim();
        if !KEYS.contains(&k) {
            bail!("config line {}: unknown key `{k}` (known: {})", i + 1, KEYS.join(", "));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let ctx = || format!("bad value `{value}` for `{key}`");
        match key {
            "mode" => self.mode = value.parse().with_context(ctx)?,
            "k" => self.k = value.parse().with_context(ctx)?,
            "alpha" => self.alpha = value.parse().with_context(ctx)?,
            "delta" => self.delta = value.parse().with_context(ctx)?,
            "n_stages" => self.n_stages = value.parse().with_context(ctx)?,
            "sample_count" => self.sample_count = value.parse().with_context(ctx)?,
            "depth" => self.depth = value.parse().with_context(ctx)?,
            "seed" => self.seed = value.parse().with_context(ctx)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "base_steps" => self.base_steps = value.parse().with_context(ctx)?,
            "resolution" => self.resolution = value.parse().with_context(ctx)?,
            _ => bail!("unknown key `{key}`"),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            bail!("sample_count must be at least 1");
        }
        if self.depth == 0 || self.depth > 12 {
            bail!("depth must lie in 1..=12");
        }
        if self.base_steps == 0 {
            bail!("base_steps must be positive");
        }
        if self.resolution < 8 || !self.resolution.is_multiple_of(8) {
            bail!("resolution must be a positive multiple of 8");
        }
        self.params()?;
        Ok(())
    }

    pub fn params(&self) -> Result<FieldParams> {
        Ok(params_from(self.k, self.alpha, self.delta, self.mode, self.n_stages)?)
    }

    pub fn policy(&self) -> StepPolicy {
        StepPolicy::with_base(self.base_steps)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("manifest.txt")
    }
}
