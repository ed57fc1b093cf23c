use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    Component, ComponentFamily, Exponential, GaussianMean, GaussianMeanVector, Mixture, ParamBox,
    ParametricModel, Regime,
};
use crate::error::{Error, Result};

/// Mixture component as written in configuration files, e.g.
/// `{ family = "normal", mean = 0.0, sd = 1.0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentConfig {
    Normal {
        mean: f64,
        sd: f64,
        /// Estimate `(mean, sd)` instead of freezing them.
        #[serde(default)]
        free: bool,
    },
    NormalMean {
        mean: f64,
        sd: f64,
        #[serde(default)]
        free: bool,
    },
    Exponential {
        rate: f64,
        #[serde(default)]
        free: bool,
    },
}

impl ComponentConfig {
    pub fn build(&self) -> Component {
        match *self {
            ComponentConfig::Normal { mean, sd, free } => Component {
                family: ComponentFamily::Normal,
                params: vec![mean, sd],
                free,
            },
            ComponentConfig::NormalMean { mean, sd, free } => Component {
                family: ComponentFamily::NormalMean { sd },
                params: vec![mean],
                free,
            },
            ComponentConfig::Exponential { rate, free } => Component {
                family: ComponentFamily::Exponential,
                params: vec![rate],
                free,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeConfig {
    #[default]
    Probability,
    Extended,
}

impl From<RegimeConfig> for Regime {
    fn from(r: RegimeConfig) -> Self {
        match r {
            RegimeConfig::Probability => Regime::Probability,
            RegimeConfig::Extended => Regime::Signed,
        }
    }
}

/// Built-in model selection, e.g.
/// `model = { name = "exponential", rate_box = [1e-6, 1e6] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    GaussianMean {
        #[serde(default)]
        mean_box: Option<[f64; 2]>,
    },
    Exponential {
        #[serde(default = "default_rate_box")]
        rate_box: [f64; 2],
    },
    GaussianMeanVector {
        dim: usize,
        #[serde(default)]
        mean_box: Option<[f64; 2]>,
    },
    TwoMixture {
        p0: ComponentConfig,
        p1: ComponentConfig,
        #[serde(default)]
        regime: RegimeConfig,
        #[serde(default)]
        weight_box: Option<[f64; 2]>,
    },
    KMixture {
        components: Vec<ComponentConfig>,
        #[serde(default)]
        regime: RegimeConfig,
        #[serde(default)]
        weight_box: Option<[f64; 2]>,
    },
}

fn default_rate_box() -> [f64; 2] {
    [1e-6, 1e6]
}

fn mean_box(b: Option<[f64; 2]>, dim: usize) -> Result<ParamBox> {
    match b {
        Some([l, u]) => ParamBox::new(vec![l; dim], vec![u; dim]),
        None => Ok(ParamBox::unbounded(dim)),
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<Arc<dyn ParametricModel>> {
        Ok(match self {
            ModelConfig::GaussianMean { mean_box: b } => Arc::new(GaussianMean::new(mean_box(*b, 1)?)),
            ModelConfig::Exponential { rate_box } => {
                Arc::new(Exponential::new(rate_box[0], rate_box[1])?)
            }
            ModelConfig::GaussianMeanVector { dim, mean_box: b } => {
                if *dim == 0 {
                    return Err(Error::InvalidConfig("dim must be positive".into()));
                }
                Arc::new(GaussianMeanVector::new(mean_box(*b, *dim)?))
            }
            ModelConfig::TwoMixture {
                p0,
                p1,
                regime,
                weight_box,
            } => Arc::new(build_mixture(&[p0.clone(), p1.clone()], *regime, *weight_box, true)?),
            ModelConfig::KMixture {
                components,
                regime,
                weight_box,
            } => Arc::new(build_mixture(components, *regime, *weight_box, false)?),
        })
    }

    /// The mixture behind a `two_mixture` / `k_mixture` configuration.
    pub fn build_mixture(&self) -> Result<Mixture> {
        match self {
            ModelConfig::TwoMixture {
                p0,
                p1,
                regime,
                weight_box,
            } => build_mixture(&[p0.clone(), p1.clone()], *regime, *weight_box, true),
            ModelConfig::KMixture {
                components,
                regime,
                weight_box,
            } => build_mixture(components, *regime, *weight_box, false),
            _ => Err(Error::InvalidConfig(format!("{self:?} is not a mixture"))),
        }
    }
}

fn build_mixture(
    components: &[ComponentConfig],
    regime: RegimeConfig,
    weight_box: Option<[f64; 2]>,
    known: bool,
) -> Result<Mixture> {
    let mut comps: Vec<Component> = components.iter().map(ComponentConfig::build).collect();
    if known {
        comps.iter_mut().for_each(|c| c.free = false);
    }
    let bounds = match (weight_box, regime) {
        (Some([l, u]), _) => Some((l, u)),
        (None, RegimeConfig::Extended) => Some((-0.5, 1.5)),
        (None, RegimeConfig::Probability) => None,
    };
    Mixture::new(comps, regime.into(), bounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_each_builtin() {
        let cfgs = [
            ModelConfig::GaussianMean { mean_box: None },
            ModelConfig::Exponential {
                rate_box: default_rate_box(),
            },
            ModelConfig::GaussianMeanVector {
                dim: 2,
                mean_box: Some([-10.0, 10.0]),
            },
            ModelConfig::TwoMixture {
                p0: ComponentConfig::Normal { mean: 0.0, sd: 1.0, free: false },
                p1: ComponentConfig::Normal { mean: 0.5, sd: 1.0, free: false },
                regime: RegimeConfig::Extended,
                weight_box: None,
            },
        ];
        let dims: Vec<usize> = cfgs.iter().map(|c| c.build().unwrap().dim()).collect();
        assert_eq!(dims, vec![1, 1, 2, 1]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ModelConfig::Exponential { rate_box: [-1.0, 2.0] }.build().is_err());
        assert!(ModelConfig::GaussianMeanVector { dim: 0, mean_box: None }.build().is_err());
        let bad_weights = ModelConfig::TwoMixture {
            p0: ComponentConfig::Normal { mean: 0.0, sd: 1.0, free: false },
            p1: ComponentConfig::Normal { mean: 0.5, sd: 1.0, free: false },
            regime: RegimeConfig::Probability,
            weight_box: Some([-0.2, 1.0]),
        };
        assert!(bad_weights.build().is_err());
    }
}
