//! Model specifications, fitting dispatch and the model file format.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSpace, Rows};
use crate::learners::{
    fit_bdm, fit_lasso_cv, fit_logit, fit_logit_surplus, fit_random_forest, prob_buy_predict, BdmBaseline,
    FittedForest, FittedLinearModel, ForestConfig, LassoConfig, ProbBuy,
};

pub const MODEL_FORMAT: &str = "demandml-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bdm,
    ProbBuy,
    Logit,
    LogitSurplus,
    Lasso,
    Rf,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bdm => "bdm",
            ModelKind::ProbBuy => "probbuy",
            ModelKind::Logit => "logit",
            ModelKind::LogitSurplus => "logit_surplus",
            ModelKind::Lasso => "lasso",
            ModelKind::Rf => "rf",
        }
    }

    /// Whether the model reads a feature space (as opposed to row meta only).
    pub fn uses_space(self) -> bool {
        matches!(self, ModelKind::Logit | ModelKind::Lasso | ModelKind::Rf)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "bdm" => ModelKind::Bdm,
            "probbuy" | "prob_buy" => ModelKind::ProbBuy,
            "logit" => ModelKind::Logit,
            "logit_surplus" => ModelKind::LogitSurplus,
            "lasso" => ModelKind::Lasso,
            "rf" => ModelKind::Rf,
            other => return Err(Error::Config(format!("unknown model '{other}'"))),
        })
    }
}

/// A learner paired with its feature space, written like `rf(WOA)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub space: Option<FeatureSpace>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, space: Option<FeatureSpace>) -> Result<ModelSpec> {
        match (kind.uses_space(), space) {
            (true, None) => Err(Error::Config(format!("{} needs a feature space", kind.as_str()))),
            (false, Some(_)) => Err(Error::Config(format!("{} takes no feature space", kind.as_str()))),
            _ => Ok(ModelSpec { kind, space }),
        }
    }

    pub fn bdm() -> ModelSpec {
        ModelSpec { kind: ModelKind::Bdm, space: None }
    }

    pub fn prob_buy() -> ModelSpec {
        ModelSpec { kind: ModelKind::ProbBuy, space: None }
    }

    pub fn logit_surplus() -> ModelSpec {
        ModelSpec { kind: ModelKind::LogitSurplus, space: None }
    }

    pub fn logit(space: FeatureSpace) -> ModelSpec {
        ModelSpec { kind: ModelKind::Logit, space: Some(space) }
    }

    pub fn lasso(space: FeatureSpace) -> ModelSpec {
        ModelSpec { kind: ModelKind::Lasso, space: Some(space) }
    }

    pub fn rf(space: FeatureSpace) -> ModelSpec {
        ModelSpec { kind: ModelKind::Rf, space: Some(space) }
    }

    /// Feature space whose matrix the model is fit and scored on; meta-only
    /// models use the core space.
    pub fn matrix_space(&self) -> FeatureSpace {
        self.space.unwrap_or(FeatureSpace::C)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.space {
            Some(s) => write!(f, "{}({})", self.kind.as_str(), s),
            None => f.write_str(self.kind.as_str()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once('(') {
            Some((kind, rest)) => {
                let space = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Config(format!("malformed model label '{s}'")))?;
                ModelSpec::new(kind.parse()?, Some(space.parse()?))
            }
            None => ModelSpec::new(s.parse()?, None),
        }
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

/// Expands `models` × `spaces`; entries already written as `kind(SPACE)` and
/// space-less models are kept as they are. Order follows the inputs and
/// duplicates are preserved.
pub fn expand_specs(models: &[String], spaces: &[FeatureSpace]) -> Result<Vec<ModelSpec>> {
    let mut out = Vec::new();
    for m in models {
        if m.contains('(') {
            out.push(m.parse()?);
            continue;
        }
        let kind: ModelKind = m.parse()?;
        if kind.uses_space() {
            if spaces.is_empty() {
                return Err(Error::Config(format!("{} needs at least one feature space", kind.as_str())));
            }
            out.extend(spaces.iter().map(|&s| ModelSpec { kind, space: Some(s) }));
        } else {
            out.push(ModelSpec { kind, space: None });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub seed: u64,
    pub forest: ForestConfig,
    pub lasso: LassoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedModel {
    Bdm(BdmBaseline),
    ProbBuy(ProbBuy),
    Linear(FittedLinearModel),
    Forest(FittedForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    /// The feature matrix was assembled without item-indexed columns.
    pub item_fe_dropped: bool,
    pub model: FittedModel,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

/// Fits `spec` on `rows`, which must come from a matrix of `spec.matrix_space()`.
pub fn fit_model(spec: ModelSpec, rows: &Rows<'_>, item_fe_dropped: bool, opts: &FitOptions) -> Result<TrainedModel> {
    let model = match spec.kind {
        ModelKind::Bdm => {
            if rows.is_empty() {
                return Err(Error::TooFewRows { needed: 1, have: 0 });
            }
            FittedModel::Bdm(fit_bdm(rows))
        }
        ModelKind::ProbBuy => FittedModel::ProbBuy(prob_buy_predict(rows)?),
        ModelKind::Logit => FittedModel::Linear(fit_logit(rows)?),
        ModelKind::LogitSurplus => FittedModel::Linear(fit_logit_surplus(rows)?),
        ModelKind::Lasso => FittedModel::Linear(fit_lasso_cv(rows, &opts.lasso, opts.seed)?),
        ModelKind::Rf => FittedModel::Forest(fit_random_forest(rows, &opts.forest, opts.seed)?),
    };
    Ok(TrainedModel {
        spec,
        item_fe_dropped,
        model,
    })
}

impl TrainedModel {
    /// Purchase probabilities for `rows`; columns are matched by name.
    pub fn predict(&self, rows: &Rows<'_>) -> Result<Vec<f64>> {
        match &self.model {
            FittedModel::Bdm(b) => Ok(b.predict(rows)),
            FittedModel::ProbBuy(p) => Ok(vec![p.r; rows.len()]),
            FittedModel::Linear(m) => m.predict(rows),
            FittedModel::Forest(f) => f.predict(rows),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<TrainedModel> {
        let f: ModelFile = serde_json::from_str(s)?;
        if f.format != MODEL_FORMAT {
            return Err(Error::Config(format!("not a model file (format '{}')", f.format)));
        }
        if f.version != MODEL_VERSION {
            return Err(Error::Config(format!("unsupported model file version {}", f.version)));
        }
        Ok(f.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for s in ["bdm", "probbuy", "logit_surplus", "logit(W)", "lasso(WOA)", "rf(WOAR)"] {
            let m: ModelSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("RF(woa)".parse::<ModelSpec>().unwrap(), ModelSpec::rf(FeatureSpace::WOA));
        assert!("rf".parse::<ModelSpec>().is_err());
        assert!("bdm(W)".parse::<ModelSpec>().is_err());
        assert!("rf(WX)".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn expansion_keeps_order() {
        let specs = expand_specs(
            &["bdm".into(), "rf".into(), "logit(A)".into()],
            &[FeatureSpace::W, FeatureSpace::WO],
        )
        .unwrap();
        let labels: Vec<String> = specs.iter().map(|s| s.to_string()).collect();
        assert_eq!(labels, ["bdm", "rf(W)", "rf(WO)", "logit(A)"]);
    }
}
