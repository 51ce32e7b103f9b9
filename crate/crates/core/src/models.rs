//! The compared models behind one interface: identifiers, hyperparameter
//! grids, fitting on a dataset and prediction for new records.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{BayesModel, BayesSpec, HmcSettings, McmcSettings, Parameterization, Variant};
use crate::rng::stream;
use crate::schema::{Dataset, EncodeOptions, Encoder, FeatureStage, PassengerRecord};
use crate::smooth::{GamModel, GamParams, NnModel, NnParams};
use crate::trees::{CustomGbm, CustomGbmParams, Forest, ForestParams, Gbm, GbmParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Gam,
    RfCaret,
    GbmCustom,
    GbmCaret,
    NnCaret,
    BayesNormal,
    BayesLasso,
    /// Uniform random scores; a screening control.
    RandomScore,
    /// Training base rate for everyone.
    ConstantRate,
    /// The generating probabilities, when known.
    Oracle,
}

impl ModelId {
    /// The seven compared models.
    pub const COMPARED: [ModelId; 7] = [
        ModelId::Gam,
        ModelId::RfCaret,
        ModelId::GbmCustom,
        ModelId::GbmCaret,
        ModelId::NnCaret,
        ModelId::BayesNormal,
        ModelId::BayesLasso,
    ];

    pub const ALL: [ModelId; 10] = [
        ModelId::Gam,
        ModelId::RfCaret,
        ModelId::GbmCustom,
        ModelId::GbmCaret,
        ModelId::NnCaret,
        ModelId::BayesNormal,
        ModelId::BayesLasso,
        ModelId::RandomScore,
        ModelId::ConstantRate,
        ModelId::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Gam => "gam",
            ModelId::RfCaret => "rf_caret",
            ModelId::GbmCustom => "gbm_custom",
            ModelId::GbmCaret => "gbm_caret",
            ModelId::NnCaret => "nn_caret",
            ModelId::BayesNormal => "bayes_normal",
            ModelId::BayesLasso => "bayes_lasso",
            ModelId::RandomScore => "random_score",
            ModelId::ConstantRate => "constant_rate",
            ModelId::Oracle => "oracle",
        }
    }

    pub fn encoding(self, knots: usize) -> EncodeOptions {
        match self {
            ModelId::Gam => EncodeOptions::with_spline(knots),
            ModelId::BayesNormal | ModelId::BayesLasso => EncodeOptions::hierarchical(knots),
            _ => EncodeOptions::plain(),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model {s}")))
    }
}

/// One point of a tuning grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    None,
    Rf { mtry: usize },
    Gbm { shrinkage: f64, n_trees: usize, depth: usize },
    Nn { hidden: usize, decay: f64 },
}

impl Hyper {
    /// Sort key putting smaller models first: fewer trees, lower depth,
    /// fewer hidden units, heavier decay, fewer split candidates.
    pub fn size_key(&self) -> (f64, f64, f64) {
        match *self {
            Hyper::None => (0.0, 0.0, 0.0),
            Hyper::Rf { mtry } => (mtry as f64, 0.0, 0.0),
            Hyper::Gbm { shrinkage, n_trees, depth } => (n_trees as f64, depth as f64, shrinkage),
            Hyper::Nn { hidden, decay } => (hidden as f64, -decay, 0.0),
        }
    }
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyper::None => f.write_str("-"),
            Hyper::Rf { mtry } => write!(f, "mtry={mtry}"),
            Hyper::Gbm { shrinkage, n_trees, depth } => write!(f, "shrinkage={shrinkage};n_trees={n_trees};depth={depth}"),
            Hyper::Nn { hidden, decay } => write!(f, "size={hidden};decay={decay}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmGrid {
    pub shrinkage: Vec<f64>,
    pub n_trees: Vec<usize>,
    pub depth: Vec<usize>,
    pub min_node_weight: f64,
}

impl Default for GbmGrid {
    fn default() -> Self {
        GbmGrid { shrinkage: vec![0.1, 0.01, 0.005], n_trees: vec![700, 850, 1000], depth: vec![1, 2, 3], min_node_weight: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfGrid {
    pub n_trees: usize,
    pub mtry: Vec<usize>,
}

impl Default for RfGrid {
    fn default() -> Self {
        RfGrid { n_trees: 500, mtry: vec![2, 12, 23] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnGrid {
    pub hidden: Vec<usize>,
    pub decay: Vec<f64>,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for NnGrid {
    fn default() -> Self {
        NnGrid { hidden: vec![1, 3, 5], decay: vec![0.0, 0.1, 0.0001], restarts: 5, max_iter: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesSettings {
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub parameterization: Parameterization,
    pub fixed_shared_sd: Option<f64>,
}

impl Default for BayesSettings {
    fn default() -> Self {
        BayesSettings { chains: 4, warmup: 500, iterations: 1000, parameterization: Parameterization::Centered, fixed_shared_sd: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningSettings {
    pub folds: usize,
    pub repeats: usize,
}

impl Default for TuningSettings {
    fn default() -> Self {
        TuningSettings { folds: 10, repeats: 5 }
    }
}

/// Everything that controls how each model is tuned and fitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub spline_knots: Knots,
    pub tuning: TuningSettings,
    pub gbm: GbmGrid,
    pub rf: RfGrid,
    pub nn: NnGrid,
    pub gam: GamParams,
    pub gbm_custom: CustomGbmParams,
    pub bayes: BayesSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Knots(pub usize);

impl Default for Knots {
    fn default() -> Self {
        Knots(10)
    }
}

impl ModelSettings {
    /// Tuning grid for `id`, duplicates removed, in declaration order.
    pub fn grid(&self, id: ModelId) -> Vec<Hyper> {
        let mut g = Vec::new();
        match id {
            ModelId::GbmCaret => {
                for &shrinkage in &self.gbm.shrinkage {
                    for &n_trees in &self.gbm.n_trees {
                        for &depth in &self.gbm.depth {
                            g.push(Hyper::Gbm { shrinkage, n_trees, depth });
                        }
                    }
                }
            }
            ModelId::RfCaret => g.extend(self.rf.mtry.iter().map(|&mtry| Hyper::Rf { mtry })),
            ModelId::NnCaret => {
                for &hidden in &self.nn.hidden {
                    for &decay in &self.nn.decay {
                        g.push(Hyper::Nn { hidden, decay });
                    }
                }
            }
            _ => g.push(Hyper::None),
        }
        let mut out: Vec<Hyper> = Vec::with_capacity(g.len());
        for h in g {
            if !out.contains(&h) {
                out.push(h);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum FittedKind {
    Gam(GamModel),
    Forest(Forest),
    Gbm(Gbm),
    CustomGbm(CustomGbm),
    Nn(NnModel),
    Bayes(Box<BayesModel>),
    Random { seed: u64 },
    Constant { rate: f64 },
}

/// A model fitted on a training dataset, with the encoder it was fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub id: ModelId,
    pub stage: FeatureStage,
    pub hyper: Hyper,
    pub encoder: Encoder,
    pub kind: FittedKind,
}

pub fn fit_model(
    id: ModelId,
    train: &Dataset,
    stage: FeatureStage,
    hyper: &Hyper,
    settings: &ModelSettings,
    seed: u64,
) -> Result<FittedModel> {
    let encoder = Encoder::fit(train, stage, id.encoding(settings.spline_knots.0))?;
    let x = encoder.transform(train.records());
    let y = train.labels();
    let kind = match (id, hyper) {
        (ModelId::Gam, Hyper::None) => FittedKind::Gam(GamModel::fit(&x, &y, &settings.gam, seed)?),
        (ModelId::RfCaret, Hyper::Rf { mtry }) => {
            FittedKind::Forest(Forest::fit(&x, &y, &ForestParams::new(settings.rf.n_trees, *mtry, seed))?)
        }
        (ModelId::GbmCaret, Hyper::Gbm { shrinkage, n_trees, depth }) => {
            let params = GbmParams { min_node_weight: settings.gbm.min_node_weight, ..GbmParams::new(*n_trees, *shrinkage, *depth) };
            FittedKind::Gbm(Gbm::fit(&x, &y, None, &params)?)
        }
        (ModelId::GbmCustom, Hyper::None) => FittedKind::CustomGbm(CustomGbm::fit(&x, &y, &settings.gbm_custom, seed)?),
        (ModelId::NnCaret, Hyper::Nn { hidden, decay }) => {
            let params = NnParams { restarts: settings.nn.restarts, max_iter: settings.nn.max_iter, ..NnParams::new(*hidden, *decay) };
            FittedKind::Nn(NnModel::fit(&x, &y, &params, seed)?)
        }
        (ModelId::BayesNormal | ModelId::BayesLasso, Hyper::None) => {
            let variant = if id == ModelId::BayesNormal { Variant::Normal } else { Variant::Lasso };
            let b = &settings.bayes;
            let mut spec = BayesSpec::new(variant);
            spec.parameterization = b.parameterization;
            spec.priors.fixed_shared_sd = b.fixed_shared_sd;
            let mcmc = McmcSettings {
                chains: b.chains,
                hmc: HmcSettings { warmup: b.warmup, iterations: b.iterations, ..HmcSettings::default() },
                seed,
            };
            FittedKind::Bayes(Box::new(BayesModel::fit(&x, &y, &spec, &mcmc)?))
        }
        (ModelId::RandomScore, Hyper::None) => FittedKind::Random { seed },
        (ModelId::ConstantRate, Hyper::None) => {
            train.require_both_classes()?;
            FittedKind::Constant { rate: train.positives() as f64 / train.len() as f64 }
        }
        (ModelId::Oracle, _) => {
            return Err(Error::InvalidParameter("the oracle predicts from generator truth, not a fit".into()))
        }
        (id, h) => return Err(Error::InvalidParameter(format!("{h} is not a setting of {id}"))),
    };
    Ok(FittedModel { id, stage, hyper: hyper.clone(), encoder, kind })
}

impl FittedModel {
    pub fn predict(&self, records: &[PassengerRecord]) -> Result<Vec<f64>> {
        let x = self.encoder.transform(records);
        match &self.kind {
            FittedKind::Gam(m) => m.predict(&x),
            FittedKind::Forest(m) => {
                x.check_columns(m.n_features)?;
                Ok(m.predict(&x))
            }
            FittedKind::Gbm(m) => {
                x.check_columns(m.n_features)?;
                Ok(m.predict(&x, None))
            }
            FittedKind::CustomGbm(m) => m.predict(&x),
            FittedKind::Nn(m) => m.predict(&x),
            FittedKind::Bayes(m) => m.predict(&x),
            FittedKind::Random { seed } => {
                let mut rng = stream(*seed, &[records.len() as u64]);
                Ok((0..records.len()).map(|_| rng.random::<f64>()).collect())
            }
            FittedKind::Constant { rate } => Ok(vec![*rate; records.len()]),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<FittedModel> {
        let mut m: FittedModel = serde_json::from_str(text)?;
        m.encoder = m.encoder.restore();
        Ok(m)
    }
}
