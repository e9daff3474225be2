//! Maps from the flow parameter to POD coefficients.

pub mod ann;
pub mod rbf;

use serde::{Deserialize, Serialize};

pub use ann::{ann_train, logsigmoid, silu, Activation, AnnModel, TrainingConfig, TrainingReport};
pub use rbf::{rbf_fit, Kernel, RbfModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rbf,
    Ann,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rbf => "rbf",
            Method::Ann => "ann",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rbf" => Ok(Method::Rbf),
            "ann" => Ok(Method::Ann),
            other => Err(format!("unknown method `{other}` (expected rbf or ann)")),
        }
    }
}

/// A trained regressor of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorModel {
    Rbf(RbfModel),
    Ann(AnnModel),
}

impl RegressorModel {
    pub fn method(&self) -> Method {
        match self {
            RegressorModel::Rbf(_) => Method::Rbf,
            RegressorModel::Ann(_) => Method::Ann,
        }
    }

    pub fn predict(&self, mu: f64) -> Vec<f64> {
        match self {
            RegressorModel::Rbf(m) => m.eval(mu),
            RegressorModel::Ann(m) => m.forward(&[mu]),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            RegressorModel::Rbf(m) => m.n_outputs(),
            RegressorModel::Ann(m) => m.n_outputs(),
        }
    }
}
