//! Flat `key = value` run configuration: every run writes its effective
//! settings next to its outputs, and the same file can seed a later run via
//! `--config` (explicit command-line flags win). Unknown keys are rejected
//! so stale files fail loudly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use glomap::affinity::EmbedKernelParams;
use glomap::transductive::FitConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<String>,
    pub n: Option<usize>,
    pub input: Option<String>,
    pub method: String,
    pub out: Option<String>,
    pub checkpoint_every: usize,
    pub fit: FitConfig,
    pub metrics: Option<String>,
    pub knn_grid: Option<String>,
    pub sigma_grid: Option<String>,
    pub trust_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            n: None,
            input: None,
            method: "glomap".into(),
            out: None,
            checkpoint_every: 25,
            fit: FitConfig::default(),
            metrics: None,
            knn_grid: None,
            sigma_grid: None,
            trust_k: 5,
        }
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "none".into(),
    }
}

impl RunConfig {
    /// Serialize as sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut pairs: BTreeMap<&str, String> = BTreeMap::new();
        pairs.insert("dataset", fmt_opt(&self.dataset));
        pairs.insert("n", fmt_opt(&self.n));
        pairs.insert("input", fmt_opt(&self.input));
        pairs.insert("method", self.method.clone());
        pairs.insert("out", fmt_opt(&self.out));
        pairs.insert("checkpoint_every", self.checkpoint_every.to_string());
        pairs.insert("lambda_e", self.fit.lambda_e.to_string());
        pairs.insert("epochs", self.fit.n_epoch.to_string());
        pairs.insert("batch", self.fit.batch.to_string());
        pairs.insert("k", self.fit.k.to_string());
        pairs.insert("clip", self.fit.clip.to_string());
        pairs.insert("alpha0", self.fit.alpha0.to_string());
        pairs.insert("alpha_decay", self.fit.alpha_decay.to_string());
        pairs.insert("tau_start", self.fit.tau_start.to_string());
        pairs.insert("tau_end", self.fit.tau_end.to_string());
        pairs.insert("fixed_tau", fmt_opt(&self.fit.fixed_tau));
        pairs.insert("k_tilde", fmt_opt(&self.fit.k_tilde));
        pairs.insert("neg_approx", self.fit.neg_approx.to_string());
        pairs.insert("seed", self.fit.seed.to_string());
        pairs.insert("dim", self.fit.dim.to_string());
        pairs.insert("kernel_a", self.fit.kernel.a.to_string());
        pairs.insert("kernel_b", self.fit.kernel.b.to_string());
        pairs.insert("metrics", fmt_opt(&self.metrics));
        pairs.insert("knn_grid", fmt_opt(&self.knn_grid));
        pairs.insert("sigma_grid", fmt_opt(&self.sigma_grid));
        pairs.insert("trust_k", self.trust_k.to_string());
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Parse a config file, starting from defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are an error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read config {}", path.as_ref().display()))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {} is not `key = value`: {raw:?}", lineno + 1);
            };
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("config line {}", lineno + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn opt<T: std::str::FromStr>(v: &str) -> Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            if v == "none" {
                return Ok(None);
            }
            v.parse::<T>().map(Some).map_err(|e| anyhow::anyhow!("bad value {v:?}: {e}"))
        }
        fn req<T: std::str::FromStr>(v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| anyhow::anyhow!("bad value {v:?}: {e}"))
        }
        match key {
            "dataset" => self.dataset = opt(value)?,
            "n" => self.n = opt(value)?,
            "input" => self.input = opt(value)?,
            "method" => self.method = req(value)?,
            "out" => self.out = opt(value)?,
            "checkpoint_every" => self.checkpoint_every = req(value)?,
            "lambda_e" => self.fit.lambda_e = req(value)?,
            "epochs" => self.fit.n_epoch = req(value)?,
            "batch" => self.fit.batch = req(value)?,
            "k" => self.fit.k = req(value)?,
            "clip" => self.fit.clip = req(value)?,
            "alpha0" => self.fit.alpha0 = req(value)?,
            "alpha_decay" => self.fit.alpha_decay = req(value)?,
            "tau_start" => self.fit.tau_start = req(value)?,
            "tau_end" => self.fit.tau_end = req(value)?,
            "fixed_tau" => self.fit.fixed_tau = opt(value)?,
            "k_tilde" => self.fit.k_tilde = opt(value)?,
            "neg_approx" => self.fit.neg_approx = req(value)?,
            "seed" => self.fit.seed = req(value)?,
            "dim" => self.fit.dim = req(value)?,
            "kernel_a" => self.fit.kernel = EmbedKernelParams { a: req(value)?, ..self.fit.kernel },
            "kernel_b" => self.fit.kernel = EmbedKernelParams { b: req(value)?, ..self.fit.kernel },
            "metrics" => self.metrics = opt(value)?,
            "knn_grid" => self.knn_grid = opt(value)?,
            "sigma_grid" => self.sigma_grid = opt(value)?,
            "trust_k" => self.trust_k = req(value)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }
}

/// Parse a grid spec: either a comma list (`1,5,10`) or an inclusive integer
/// range `lo:hi`.
pub fn parse_int_grid(spec: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = spec.split_once(':') {
        let (lo, hi): (usize, usize) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo == 0 || hi < lo {
            bail!("bad integer grid {spec:?}");
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(Into::into))
        .collect::<Result<Vec<_>>>()
}

/// Parse a length-scale grid: a comma list or `lo:hi:count` spaced
/// logarithmically.
pub fn parse_sigma_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse()?;
        let hi: f64 = parts[1].trim().parse()?;
        let count: usize = parts[2].trim().parse()?;
        if !(lo > 0.0 && hi > lo && count >= 2) {
            bail!("bad sigma grid {spec:?}");
        }
        let ratio = hi / lo;
        return Ok((0..count)
            .map(|t| lo * ratio.powf(t as f64 / (count - 1) as f64))
            .collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(Into::into))
        .collect::<Result<Vec<_>>>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run_config.txt");
        let mut cfg = RunConfig::default();
        cfg.dataset = Some("spheres".into());
        cfg.n = Some(10000);
        cfg.fit.k_tilde = Some(300);
        cfg.fit.fixed_tau = Some(0.1);
        cfg.fit.seed = 42;
        cfg.save(&path).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "epochs = 10\nwombat = 3\n").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert!(format!("{err:#}").contains("wombat"));
    }

    #[test]
    fn grids_parse() {
        assert_eq!(parse_int_grid("1:4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_int_grid("1,5,10").unwrap(), vec![1, 5, 10]);
        let s = parse_sigma_grid("0.001:10:5").unwrap();
        assert_eq!(s.len(), 5);
        assert!((s[0] - 0.001).abs() < 1e-12);
        assert!((s[4] - 10.0).abs() < 1e-9);
        assert_eq!(parse_sigma_grid("0.5,1.0").unwrap(), vec![0.5, 1.0]);
    }
}
