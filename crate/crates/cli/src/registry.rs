//! The benchmark experiments and their default settings.

use std::fmt;
use std::str::FromStr;

use bfvi::models::{
    bundled, BernoulliBeta, BnnRegression, CauchyLocation, Dataset, Diamonds, EightSchools, Model, Parameterization,
    ToyLinReg,
};
use serde::{Deserialize, Serialize};

use crate::ingest::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Bernoulli,
    Cauchy,
    ToyLinreg,
    EightSchoolsCp,
    EightSchoolsNcp,
    BnnRegression,
    Diamonds,
}

/// Training and sampling settings used when neither a flag nor a config
/// file overrides them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    pub order: usize,
    pub samples: usize,
    pub epochs: usize,
    pub batch: Option<usize>,
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub thin: usize,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Bernoulli,
        Experiment::Cauchy,
        Experiment::ToyLinreg,
        Experiment::EightSchoolsCp,
        Experiment::EightSchoolsNcp,
        Experiment::BnnRegression,
        Experiment::Diamonds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bernoulli => "bernoulli",
            Experiment::Cauchy => "cauchy",
            Experiment::ToyLinreg => "toy_linreg",
            Experiment::EightSchoolsCp => "eight_schools_cp",
            Experiment::EightSchoolsNcp => "eight_schools_ncp",
            Experiment::BnnRegression => "bnn_regression",
            Experiment::Diamonds => "diamonds",
        }
    }

    pub fn registry_names() -> String {
        Self::ALL.map(Experiment::name).join(", ")
    }

    pub fn defaults(self) -> Defaults {
        let d = |order, samples, epochs| Defaults {
            order,
            samples,
            epochs,
            batch: None,
            chains: 4,
            warmup: 20_000,
            iters: 20_000,
            thin: 1,
        };
        match self {
            Experiment::Bernoulli => d(10, 1000, 1000),
            Experiment::Cauchy => d(50, 10_000, 1000),
            Experiment::ToyLinreg => Defaults { thin: 20, ..d(10, 600, 15_000) },
            // Long thinned chains: the funnel mixes slowly even after the
            // non-centered reparameterization.
            Experiment::EightSchoolsCp | Experiment::EightSchoolsNcp => Defaults {
                warmup: 50_000,
                thin: 10,
                ..d(50, 10, 15_000)
            },
            Experiment::BnnRegression => Defaults {
                warmup: 100_000,
                thin: 20,
                ..d(50, 600, 20_000)
            },
            Experiment::Diamonds => Defaults {
                batch: Some(512),
                warmup: 50_000,
                iters: 5000,
                thin: 20,
                ..d(50, 10, 30_000)
            },
        }
    }

    /// Bundled file holding this experiment's data.
    pub fn data_file(self) -> &'static str {
        match self {
            Experiment::Bernoulli => "bernoulli.csv",
            Experiment::Cauchy => "cauchy.csv",
            Experiment::ToyLinreg => "toy_linreg.csv",
            Experiment::EightSchoolsCp | Experiment::EightSchoolsNcp => "eight_schools.json",
            Experiment::BnnRegression => "bnn_regression.csv",
            Experiment::Diamonds => "diamonds.csv",
        }
    }

    pub fn schema(self) -> Schema {
        match self {
            Experiment::Bernoulli | Experiment::Cauchy => Schema::Csv(&["y"]),
            Experiment::ToyLinreg => Schema::Csv(&["x1", "x2", "y"]),
            Experiment::EightSchoolsCp | Experiment::EightSchoolsNcp => Schema::EightSchoolsJson,
            Experiment::BnnRegression => Schema::Csv(&["x", "y"]),
            Experiment::Diamonds => Schema::Design { response: Diamonds::RESPONSE },
        }
    }

    /// Log evidence available in closed form or by quadrature.
    pub fn has_evidence(self) -> bool {
        matches!(self, Experiment::Bernoulli | Experiment::Cauchy)
    }

    pub fn bundled_dataset(self) -> Dataset {
        match self {
            Experiment::Bernoulli => bundled::bernoulli(),
            Experiment::Cauchy => bundled::cauchy(),
            Experiment::ToyLinreg => bundled::toy_linreg(),
            Experiment::EightSchoolsCp | Experiment::EightSchoolsNcp => bundled::eight_schools(),
            Experiment::BnnRegression => bundled::bnn_regression(),
            Experiment::Diamonds => bundled::diamonds(),
        }
    }

    pub fn build_model(self, data: &Dataset, bnn_sigma: f64) -> bfvi::Result<Model> {
        Ok(match self {
            Experiment::Bernoulli => Model::Bernoulli(BernoulliBeta::from_dataset(data)?),
            Experiment::Cauchy => Model::Cauchy(CauchyLocation::from_dataset(data)?),
            Experiment::ToyLinreg => Model::ToyLinReg(ToyLinReg::from_dataset(data)?),
            Experiment::EightSchoolsCp => {
                Model::EightSchools(EightSchools::from_dataset(data, Parameterization::Centered)?)
            }
            Experiment::EightSchoolsNcp => {
                Model::EightSchools(EightSchools::from_dataset(data, Parameterization::NonCentered)?)
            }
            Experiment::BnnRegression => Model::Bnn(BnnRegression::from_dataset(data, bnn_sigma)?),
            Experiment::Diamonds => Model::Diamonds(Diamonds::from_dataset(data)?),
        })
    }

    /// The model the MCMC chains target, and the map from its unconstrained
    /// space to this experiment's. Centered 8-schools is sampled in the
    /// non-centered form and mapped back.
    pub fn mcmc_target(self, data: &Dataset, bnn_sigma: f64) -> bfvi::Result<(Model, fn(&[f64]) -> Vec<f64>)> {
        match self {
            Experiment::EightSchoolsCp => Ok((Experiment::EightSchoolsNcp.build_model(data, bnn_sigma)?, ncp_to_cp)),
            _ => Ok((self.build_model(data, bnn_sigma)?, <[f64]>::to_vec)),
        }
    }
}

/// `(μ, log τ, θ̃) ↦ (μ, log τ, μ + τ θ̃)`.
pub fn ncp_to_cp(u: &[f64]) -> Vec<f64> {
    let tau = u[1].exp();
    let mut out = u.to_vec();
    out[2..].iter_mut().for_each(|t| *t = u[0] + tau * *t);
    out
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown experiment '{0}'; valid experiments: {names}", names = Experiment::registry_names())]
pub struct UnknownExperiment(pub String);

impl FromStr for Experiment {
    type Err = UnknownExperiment;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| UnknownExperiment(s.to_string()))
    }
}

/// How the posterior is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bfvi,
    Mfgauss,
    Mcmc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bfvi => "bfvi",
            Method::Mfgauss => "mfgauss",
            Method::Mcmc => "mcmc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bfvi" => Ok(Method::Bfvi),
            "mfgauss" => Ok(Method::Mfgauss),
            "mcmc" => Ok(Method::Mcmc),
            _ => Err(format!("unknown method '{s}'; valid methods: bfvi, mfgauss, mcmc")),
        }
    }
}
