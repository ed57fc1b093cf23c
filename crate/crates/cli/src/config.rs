//! Experiment configuration: the TOML file, command-line overrides and the
//! per-command defaults that turn them into a fully resolved run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phidiv::divergence::DivergenceConfig;
use phidiv::model::{ComponentConfig, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::Command;

/// Evenly spaced points `start, start + step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if !(self.step > 0.0) || !(self.stop >= self.start) {
            bail!("grid needs step > 0 and stop >= start, got {self:?}");
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        // Rounded to 1e-9 so that 0.2 + 8 × 0.1 prints and compares as 1.
        Ok((0..=count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `θ̂ = arg inf_θ sup_α`.
    MinDual,
    /// `α̂(θ₀) = arg sup_α` at the fixed `theta0`.
    Dual,
}

/// Every key of the config file. Keys a command does not use are ignored;
/// keys it needs but the file omits take the command's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// Sample size of single-run commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_sizes: Option<Vec<usize>>,
    /// Parameter generating simulated data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_t: Option<Vec<f64>>,
    /// Null parameter of simple hypotheses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    /// Composite null: coordinates held at fixed values, `[[index, value], …]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix: Option<Vec<(usize, f64)>>,
    /// Mixture test: number of leading components kept under the null.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_components: Option<usize>,
    /// Bounds on every weight of the signed extension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_search: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    /// Target power of `power-plan`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    /// Observations instead of simulated data: one per line, coordinates
    /// separated by commas, optional header.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceConfig>,
}

/// Flags that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub reps: Option<usize>,
}

/// Reads a config file or a manifest written by an earlier run. A manifest
/// must come from the same command.
pub fn load(path: &Path, command: Command) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut cfg: ExperimentConfig = match (value.get("command"), value.get("config")) {
        (Some(cmd), Some(inner)) => {
            if cmd.as_str() != Some(command.name()) {
                bail!("{} is a manifest of `{cmd}`, not `{}`", path.display(), command.name());
            }
            inner.clone().try_into().context("manifest config table")?
        }
        _ => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
    };
    if let Some(d) = &cfg.data {
        if d.is_relative() {
            cfg.data = Some(path.parent().unwrap_or(Path::new(".")).join(d));
        }
    }
    Ok(cfg)
}

fn normal(mean: f64) -> ComponentConfig {
    ComponentConfig::Normal {
        mean,
        sd: 1.0,
        free: false,
    }
}

fn two_gaussians() -> ModelConfig {
    ModelConfig::TwoMixture {
        p0: normal(0.0),
        p1: normal(0.5),
        regime: Default::default(),
        weight_box: None,
    }
}

fn exponential() -> ModelConfig {
    ModelConfig::Exponential { rate_box: [1e-6, 1e6] }
}

fn kl_m() -> DivergenceConfig {
    DivergenceConfig::Power { gamma: 0.0 }
}

/// Fills every key `command` reads, so the result can be written to the
/// manifest and replayed verbatim.
pub fn resolve(command: Command, mut c: ExperimentConfig, o: &Overrides) -> Result<ExperimentConfig> {
    c.seed = o.seed.or(c.seed).or(Some(0));
    c.level = o.level.or(c.level).or(Some(0.05));
    c.reps = o.reps.or(c.reps);
    if let Some(d) = &c.data {
        c.data = Some(fs::canonicalize(d).with_context(|| format!("data file {}", d.display()))?);
    }
    let single = c.data.is_none();
    match command {
        Command::Estimate => {
            c.model.get_or_insert_with(exponential);
            c.divergence.get_or_insert_with(kl_m);
            c.estimator.get_or_insert(Estimator::MinDual);
            if single {
                c.theta_t.get_or_insert_with(|| vec![2.0]);
                c.n.get_or_insert(100);
            }
            if c.estimator == Some(Estimator::Dual) && c.theta0.is_none() {
                bail!("estimator = \"dual\" needs theta0");
            }
        }
        Command::TestSimple => {
            c.model.get_or_insert_with(exponential);
            c.divergence.get_or_insert_with(kl_m);
            let t0 = c.theta0.get_or_insert_with(|| vec![1.0]).clone();
            if single {
                c.theta_t.get_or_insert(t0);
                c.n.get_or_insert(100);
            }
        }
        Command::TestComposite => {
            c.model.get_or_insert(ModelConfig::GaussianMeanVector { dim: 2, mean_box: None });
            c.divergence.get_or_insert_with(kl_m);
            c.fix.get_or_insert_with(|| vec![(1, 0.0)]);
            if single {
                c.theta_t.get_or_insert_with(|| vec![0.3, 0.0]);
                c.n.get_or_insert(200);
            }
        }
        Command::PowerPlan => {
            c.model.get_or_insert_with(exponential);
            c.divergence.get_or_insert_with(kl_m);
            if c.fix.is_none() {
                c.theta0.get_or_insert_with(|| vec![1.0]);
            }
            c.theta_t.get_or_insert_with(|| vec![2.0]);
            if c.n.is_none() {
                c.power.get_or_insert(0.9);
            }
        }
        Command::PowerCurve => {
            c.model.get_or_insert_with(exponential);
            c.divergence.get_or_insert_with(kl_m);
            c.theta0.get_or_insert_with(|| vec![1.0]);
            c.sample_sizes.get_or_insert_with(|| vec![50, 100, 300, 500]);
            c.reps.get_or_insert(1000);
            c.grid.get_or_insert(Grid {
                start: 0.2,
                stop: 3.0,
                step: 0.1,
            });
        }
        Command::GlrEcdf | Command::DualChi2Ecdf => {
            c.model.get_or_insert_with(two_gaussians);
            let t0 = c.theta0.get_or_insert_with(|| vec![0.0]).clone();
            c.theta_t.get_or_insert(t0);
            c.sample_sizes.get_or_insert_with(|| vec![200, 500, 1000]);
            c.reps.get_or_insert(1000);
            if command == Command::DualChi2Ecdf {
                c.divergence.get_or_insert(DivergenceConfig::Chi2);
            }
        }
        Command::ConfReg => {
            c.model.get_or_insert_with(two_gaussians);
            c.divergence.get_or_insert(DivergenceConfig::Chi2);
            c.grid.get_or_insert(Grid {
                start: -0.5,
                stop: 1.5,
                step: 0.01,
            });
            if single {
                c.theta_t.get_or_insert_with(|| vec![0.0]);
                c.n.get_or_insert(500);
            }
        }
        Command::MixtureTest => {
            c.model.get_or_insert_with(two_gaussians);
            c.divergence.get_or_insert(DivergenceConfig::Chi2);
            if c.theta0.is_none() {
                c.null_components.get_or_insert(1);
            }
            if single {
                c.theta_t.get_or_insert_with(|| vec![0.0]);
                c.n.get_or_insert(1000);
            }
        }
        Command::PlotScript => unreachable!("plot-script reads no experiment config"),
    }
    validate(&c)?;
    Ok(c)
}

fn validate(c: &ExperimentConfig) -> Result<()> {
    if let Some(l) = c.level {
        if !(l > 0.0 && l < 1.0) {
            bail!("level must lie in (0, 1), got {l}");
        }
    }
    if c.reps == Some(0) {
        bail!("reps must be at least 1");
    }
    if c.n == Some(0) || c.sample_sizes.as_ref().is_some_and(|s| s.is_empty() || s.contains(&0)) {
        bail!("sample sizes must be positive");
    }
    if let Some(p) = c.power {
        if !(p > 0.0 && p < 1.0) {
            bail!("power must lie in (0, 1), got {p}");
        }
    }
    let model = c.model.as_ref().expect("resolved").build()?;
    for (key, theta) in [("theta_t", &c.theta_t), ("theta0", &c.theta0)] {
        if let Some(t) = theta {
            if t.len() != model.dim() || !model.param_box().contains(t) {
                bail!("{key} = {t:?} is not a point of the parameter box of {}", model.name());
            }
        }
    }
    if let Some(g) = &c.grid {
        g.points()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_hits_round_values() {
        let g = Grid {
            start: 0.2,
            stop: 3.0,
            step: 0.1,
        };
        let p = g.points().unwrap();
        assert_eq!(p.len(), 29);
        assert!(p.contains(&1.0));
        assert_eq!(*p.last().unwrap(), 3.0);
    }

    #[test]
    fn resolution_fills_defaults_and_rejects_bad_values() {
        let c = resolve(Command::PowerCurve, ExperimentConfig::default(), &Overrides::default()).unwrap();
        assert_eq!(c.sample_sizes, Some(vec![50, 100, 300, 500]));
        assert_eq!(c.reps, Some(1000));
        let o = Overrides {
            level: Some(1.5),
            ..Default::default()
        };
        assert!(resolve(Command::TestSimple, ExperimentConfig::default(), &o).is_err());
        let bad = ExperimentConfig {
            theta0: Some(vec![-1.0]),
            ..Default::default()
        };
        assert!(resolve(Command::TestSimple, bad, &Overrides::default()).is_err());
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let c = resolve(Command::TestComposite, ExperimentConfig::default(), &Overrides::default()).unwrap();
        let text = toml::to_string(&c).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
