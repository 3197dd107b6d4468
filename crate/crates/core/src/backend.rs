//! A scoring backend: one fitted model per affect dimension.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asp::AffectSubspace;
use crate::error::{Error, Result};
use crate::krr::KrrModel;
use crate::lexicon::AffectDimension;

/// Scores keyed by dimension; serializes as `{"power": .., "sentiment": .., "agency": ..}`.
pub type DimScores = BTreeMap<AffectDimension, f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Krr,
    Asp,
}

impl BackendKind {
    pub fn id(self) -> &'static str {
        match self {
            BackendKind::Krr => "krr",
            BackendKind::Asp => "asp",
        }
    }

    /// File name a fitted model for `dim` is stored under inside a model directory.
    pub fn model_file_name(self, dim: AffectDimension) -> String {
        format!("{}-{}.json", self.id(), dim.name())
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "krr" => Ok(BackendKind::Krr),
            "asp" => Ok(BackendKind::Asp),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Scorer {
    Krr(KrrModel),
    Asp(AffectSubspace),
}

impl Scorer {
    pub fn dimension(&self) -> AffectDimension {
        match self {
            Scorer::Krr(m) => m.dimension(),
            Scorer::Asp(s) => s.dimension,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Scorer::Krr(m) => m.input_dim(),
            Scorer::Asp(s) => s.input_dim(),
        }
    }

    pub fn score(&self, v: &[f64]) -> Result<f64> {
        match self {
            Scorer::Krr(m) => m.predict(v),
            Scorer::Asp(s) => s.project(v),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Backend {
    kind: BackendKind,
    scorers: BTreeMap<AffectDimension, Scorer>,
}

impl Backend {
    pub fn new(kind: BackendKind, scorers: Vec<Scorer>) -> Result<Self> {
        if scorers.is_empty() {
            return Err(Error::Config("backend has no models".into()));
        }
        let input_dim = scorers[0].input_dim();
        let mut map = BTreeMap::new();
        for s in scorers {
            let matches_kind = matches!(
                (&s, kind),
                (Scorer::Krr(_), BackendKind::Krr) | (Scorer::Asp(_), BackendKind::Asp)
            );
            if !matches_kind {
                return Err(Error::Config(format!("model for {} is not a {kind} model", s.dimension())));
            }
            if s.input_dim() != input_dim {
                return Err(Error::dimension(input_dim, s.input_dim(), format!("{} model", s.dimension())));
            }
            if map.insert(s.dimension(), s).is_some() {
                return Err(Error::Config("two models for the same dimension".into()));
            }
        }
        Ok(Backend { kind, scorers: map })
    }

    /// Load `<kind>-<dimension>.json` files from a model directory.
    pub fn load_dir(kind: BackendKind, dir: &Path, dims: &[AffectDimension]) -> Result<Self> {
        let mut scorers = Vec::new();
        for &dim in dims {
            let path: PathBuf = dir.join(kind.model_file_name(dim));
            let scorer = match kind {
                BackendKind::Krr => Scorer::Krr(KrrModel::load(&path)?),
                BackendKind::Asp => Scorer::Asp(AffectSubspace::load(&path)?),
            };
            if scorer.dimension() != dim {
                return Err(Error::Format(format!(
                    "{} holds a {} model",
                    path.display(),
                    scorer.dimension()
                )));
            }
            scorers.push(scorer);
        }
        Backend::new(kind, scorers)
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn dimensions(&self) -> Vec<AffectDimension> {
        self.scorers.keys().copied().collect()
    }

    pub fn input_dim(&self) -> usize {
        self.scorers.values().next().map(Scorer::input_dim).unwrap_or(0)
    }

    pub fn scorer(&self, dim: AffectDimension) -> Option<&Scorer> {
        self.scorers.get(&dim)
    }

    /// Whether every model is a linear projection.
    pub fn is_linear(&self) -> bool {
        self.kind == BackendKind::Asp
    }

    pub fn score(&self, v: &[f64]) -> Result<DimScores> {
        self.scorers
            .iter()
            .map(|(&d, s)| Ok((d, s.score(v)?)))
            .collect()
    }
}
