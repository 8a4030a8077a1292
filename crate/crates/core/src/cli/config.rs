use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;
use crate::gibbs::{McmcConfig, PriorScalars, SamplerTuning};
use crate::model::{LinkKind, ModelConfig};
use crate::spline::KnotStrategy;

/// Everything a fit needs, resolved from a config file and flag overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Measurements file.
    pub long: Option<PathBuf>,
    /// Subjects file.
    pub surv: Option<PathBuf>,
    pub out: PathBuf,
    /// Label used in comparison tables; defaults to `<kind>-q<q>`.
    pub model_id: Option<String>,
    pub model: ModelConfig,
    /// Follow-up horizon; defaults to the latest time in the data.
    pub horizon: Option<f64>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Upper bound on chains run at once.
    pub jobs: usize,
    /// Credible-interval level of the summary.
    pub level: f64,
    pub prior: PriorScalars,
    pub tuning: SamplerTuning,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            long: None,
            surv: None,
            out: PathBuf::from("fit"),
            model_id: None,
            model: ModelConfig::default(),
            horizon: None,
            iterations: 20_000,
            burn_in: 2_000,
            thin: 10,
            chains: 2,
            seed: 1,
            jobs: 1,
            level: 0.95,
            prior: PriorScalars::default(),
            tuning: SamplerTuning::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, raw: &str, what: &str) -> Result<T, CliError> {
    raw.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("configuration key `{key}`: cannot read `{raw}` as {what}")))
}

fn parse_with<T>(key: &str, raw: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, CliError> {
    f(raw.trim()).map_err(|m| CliError::Config(format!("configuration key `{key}`: {m}")))
}

/// Reads a flat `key = value` file. Blank lines and `#` comments are
/// skipped; a repeated key is an error.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("{}, line {}: expected `key = value`", path.display(), n + 1))
        })?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("{}, line {}: key `{key}` repeated", path.display(), n + 1)));
        }
    }
    Ok(map)
}

impl RunConfig {
    /// Defaults overlaid with `pairs`; unknown keys are rejected by name.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut c = RunConfig::default();
        for (key, raw) in pairs {
            c.set(key, raw)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Config file (if any) with `overrides` taking precedence.
    pub fn resolve(file: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut pairs = match file {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        pairs.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_pairs(&pairs)
    }

    fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let real = "a number";
        let count = "a non-negative integer";
        let p = &mut self.prior;
        match key {
            "long" => self.long = Some(PathBuf::from(raw.trim())),
            "surv" => self.surv = Some(PathBuf::from(raw.trim())),
            "out" => self.out = PathBuf::from(raw.trim()),
            "model_id" => self.model_id = Some(raw.trim().to_string()),
            "kind" => self.model.kind = parse_with(key, raw, LinkKind::from_str)?,
            "q" => self.model.q = parse(key, raw, count)?,
            "knots" => self.model.knots = parse_with(key, raw, KnotStrategy::from_str)?,
            "quad" => self.model.quad_order = parse(key, raw, count)?,
            "events_per_interval" => self.model.events_per_interval = parse(key, raw, count)?,
            "horizon" => self.horizon = Some(parse(key, raw, real)?),
            "iters" => self.iterations = parse(key, raw, count)?,
            "burnin" => self.burn_in = parse(key, raw, count)?,
            "thin" => self.thin = parse(key, raw, count)?,
            "chains" => self.chains = parse(key, raw, count)?,
            "seed" => self.seed = parse(key, raw, count)?,
            "jobs" => self.jobs = parse(key, raw, count)?,
            "level" => self.level = parse(key, raw, real)?,
            "beta_width" => self.tuning.beta_width = parse(key, raw, real)?,
            "link_width" => self.tuning.link_width = parse(key, raw, real)?,
            "max_steps" => self.tuning.max_steps = parse(key, raw, count)?,
            "prior.link_mean" => p.link_mean = parse(key, raw, real)?,
            "prior.link_var" => p.link_var = parse(key, raw, real)?,
            "prior.zeta_mean" => p.zeta_mean = parse(key, raw, real)?,
            "prior.zeta_var" => p.zeta_var = parse(key, raw, real)?,
            "prior.hazard_shape" => p.hazard_shape = parse(key, raw, real)?,
            "prior.hazard_rate" => p.hazard_rate = parse(key, raw, real)?,
            "prior.b0_mean" => p.b0_mean = parse(key, raw, real)?,
            "prior.b0_var" => p.b0_var = parse(key, raw, real)?,
            "prior.alpha_mean" => p.alpha_mean = parse(key, raw, real)?,
            "prior.alpha_var" => p.alpha_var = parse(key, raw, real)?,
            "prior.nu_sigma" => p.nu_sigma = Some(parse(key, raw, real)?),
            "prior.s_sigma" => p.s_sigma = parse(key, raw, real)?,
            "prior.nu_v0" => p.nu_v0 = Some(parse(key, raw, real)?),
            "prior.s_v0" => p.s_v0 = parse(key, raw, real)?,
            other => return Err(CliError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, m: String| Err(CliError::Config(format!("configuration key `{key}`: {m}")));
        if self.model.q < 5 {
            return bad(
                "q",
                format!(
                    "basis dimension q = {} is below 5; a cubic B-spline basis has q = interior knots + 4, so q >= 5",
                    self.model.q
                ),
            );
        }
        if self.model.quad_order < 2 {
            return bad("quad", format!("{} quadrature points; need at least 2", self.model.quad_order));
        }
        if self.model.events_per_interval == 0 {
            return bad("events_per_interval", "must be at least 1".into());
        }
        if self.chains == 0 {
            return bad("chains", "must be at least 1".into());
        }
        if self.jobs == 0 {
            return bad("jobs", "must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level", format!("{} is outside (0, 1)", self.level));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return bad("horizon", format!("{h} is not a positive time"));
            }
        }
        if !(self.tuning.beta_width > 0.0) {
            return bad("beta_width", "must be positive".into());
        }
        if self.thin == 0 {
            return bad("thin", "must be at least 1".into());
        }
        if self.burn_in >= self.iterations {
            return bad("burnin", format!("{} must be below iters = {}", self.burn_in, self.iterations));
        }
        if (self.iterations - self.burn_in) % self.thin != 0 {
            return bad("thin", format!("iters - burnin = {} is not a multiple of {}", self.iterations - self.burn_in, self.thin));
        }
        let p = &self.prior;
        for (key, v) in [
            ("prior.link_var", p.link_var),
            ("prior.zeta_var", p.zeta_var),
            ("prior.hazard_shape", p.hazard_shape),
            ("prior.hazard_rate", p.hazard_rate),
            ("prior.b0_var", p.b0_var),
            ("prior.alpha_var", p.alpha_var),
            ("prior.s_sigma", p.s_sigma),
            ("prior.s_v0", p.s_v0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("{v} must be positive"));
            }
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        self.model_id.clone().unwrap_or_else(|| format!("{}-q{}", self.model.kind, self.model.q))
    }

    pub fn mcmc(&self, chain: u64) -> McmcConfig {
        McmcConfig { iterations: self.iterations, burn_in: self.burn_in, thin: self.thin, seed: self.seed, chain }
    }

    /// Every setting that influences the draws, defaults included. Output
    /// location and parallelism are left out so reruns elsewhere produce
    /// identical files.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let p = &self.prior;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        let entries: Vec<(&str, String)> = vec![
            ("long", path(&self.long)),
            ("surv", path(&self.surv)),
            ("model_id", self.model_id()),
            ("kind", self.model.kind.to_string()),
            ("q", self.model.q.to_string()),
            ("knots", self.model.knots.to_string()),
            ("quad", self.model.quad_order.to_string()),
            ("events_per_interval", self.model.events_per_interval.to_string()),
            ("horizon", opt(self.horizon)),
            ("iters", self.iterations.to_string()),
            ("burnin", self.burn_in.to_string()),
            ("thin", self.thin.to_string()),
            ("chains", self.chains.to_string()),
            ("seed", self.seed.to_string()),
            ("level", format!("{:?}", self.level)),
            ("beta_width", format!("{:?}", self.tuning.beta_width)),
            ("link_width", format!("{:?}", self.tuning.link_width)),
            ("max_steps", self.tuning.max_steps.to_string()),
            ("prior.link_mean", format!("{:?}", p.link_mean)),
            ("prior.link_var", format!("{:?}", p.link_var)),
            ("prior.zeta_mean", format!("{:?}", p.zeta_mean)),
            ("prior.zeta_var", format!("{:?}", p.zeta_var)),
            ("prior.hazard_shape", format!("{:?}", p.hazard_shape)),
            ("prior.hazard_rate", format!("{:?}", p.hazard_rate)),
            ("prior.b0_mean", format!("{:?}", p.b0_mean)),
            ("prior.b0_var", format!("{:?}", p.b0_var)),
            ("prior.alpha_mean", format!("{:?}", p.alpha_mean)),
            ("prior.alpha_var", format!("{:?}", p.alpha_var)),
            ("prior.nu_sigma", opt(p.nu_sigma)),
            ("prior.s_sigma", format!("{:?}", p.s_sigma)),
            ("prior.nu_v0", opt(p.nu_v0)),
            ("prior.s_v0", format!("{:?}", p.s_v0)),
        ];
        entries.into_iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// `key = value` lines, sorted by key.
pub fn render_config(pairs: &BTreeMap<String, String>) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
