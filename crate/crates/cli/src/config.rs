//! Run configuration: a TOML file merged with command-line overrides.

use std::path::Path;

use boro_core::experiments::{ExperimentName, ProximityKind, VarianceConvention};
use boro_core::learners::Formulation;
use boro_core::smoothers::Smoother;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A single value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Training seeds: a count (starting at the base seed) or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn resolve(&self, base: u64) -> Vec<u64> {
        match self {
            Seeds::Count(c) => (0..*c).map(|i| base.wrapping_add(i)).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// Loss of the decision problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Newsvendor,
    Portfolio,
}

/// Every configurable key; absent keys take command-specific defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<ExperimentName>,
    pub loss: Option<LossKind>,
    pub formulation: Option<Formulation>,
    pub smoother: Option<Smoother>,
    pub bandwidth: Option<f64>,
    pub k: Option<usize>,
    pub proximity: Option<ProximityKind>,
    pub distance: Option<String>,
    pub context: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub r_grid: Option<Vec<f64>>,
    pub target_b: Option<OneOrMany<f64>>,
    pub n_grid: Option<Vec<usize>>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Seeds>,
    pub variance_convention: Option<VarianceConvention>,
    pub folds: Option<usize>,
    pub test_sets: Option<usize>,
    pub test_size: Option<usize>,
    pub max_iter: Option<usize>,
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Keys set in `top` replace those of `self`.
    pub fn merged(mut self, top: RunConfig) -> Self {
        overlay!(
            self,
            top,
            experiment,
            loss,
            formulation,
            smoother,
            bandwidth,
            k,
            proximity,
            distance,
            context,
            radius,
            r_grid,
            target_b,
            n_grid,
            m,
            seed,
            seeds,
            variance_convention,
            folds,
            test_sets,
            test_size,
            max_iter,
            threads,
        );
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unprintable config: {e}\n"))
    }
}

/// Parses a lowercase enum keyword with the same spelling as the config file.
pub fn parse_keyword<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    toml::Value::String(s.to_string())
        .try_into()
        .map_err(|e: toml::de::Error| e.to_string().trim_end().to_string())
}

pub fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if s.contains(',') {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|e| format!("bad seed '{v}': {e}")))
            .collect::<Result<_, _>>()
            .map(Seeds::List)
    } else {
        s.trim()
            .parse()
            .map(Seeds::Count)
            .map_err(|e| format!("bad seed count '{s}': {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml("bogus = 1"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn keys_parse() {
        let c = RunConfig::from_toml(
            "experiment = \"portfolio\"\nn_grid = [20, 50]\ntarget_b = 0.01\nm = 100\nseeds = 2\nvariance_convention = \"std\"\nformulation = \"nn\"\n",
        )
        .unwrap();
        assert_eq!(c.experiment, Some(ExperimentName::Portfolio));
        assert_eq!(c.target_b.unwrap().to_vec(), vec![0.01]);
        assert_eq!(c.seeds.unwrap().resolve(5), vec![5, 6]);
        assert_eq!(c.variance_convention, Some(VarianceConvention::Std));
        let c = RunConfig::from_toml("seeds = [3, 9]\ntarget_b = [0.1, 0.01]").unwrap();
        assert_eq!(c.seeds.unwrap().resolve(0), vec![3, 9]);
        assert_eq!(c.target_b.unwrap().to_vec().len(), 2);
    }

    #[test]
    fn overrides_win() {
        let file = RunConfig {
            m: Some(10),
            k: Some(3),
            ..Default::default()
        };
        let flags = RunConfig {
            m: Some(20),
            ..Default::default()
        };
        let c = file.merged(flags);
        assert_eq!((c.m, c.k), (Some(20), Some(3)));
    }

    #[test]
    fn keywords() {
        assert_eq!(parse_keyword::<Formulation>("nn"), Ok(Formulation::Nn));
        assert!(parse_keyword::<Formulation>("knn").is_err());
        assert_eq!(parse_seeds("4"), Ok(Seeds::Count(4)));
        assert_eq!(parse_seeds("1,2"), Ok(Seeds::List(vec![1, 2])));
    }
}
