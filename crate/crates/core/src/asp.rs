//! Affect subspace projection.
//!
//! For one affect dimension: take the `n_high` highest- and `n_low`
//! lowest-scored training words, pair each high word with its most similar
//! low word (cosine over features, every word used at most once), keep the
//! `n_pairs` most similar pairs, and stack the pair-centered vectors
//! `e_h - mu` and `e_l - mu` (with `mu = (e_h + e_l) / 2`) as the `2N x d`
//! rows of a matrix. Its first right singular vector is the affect direction;
//! a word or entity is scored by projecting onto it.
//!
//! Pairing is a global greedy pass: all `(high, low)` candidates are sorted
//! by cosine (descending, ties by `(high, low)`), and a candidate is accepted
//! when neither word is already used. This is order independent, and the
//! accepted pairs are exactly the `n_pairs` most similar disjoint pairs in
//! the lexicographic sense.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embeddings::{dot, norm2, FeatureTable};
use crate::error::{Error, Result};
use crate::lexicon::AffectDimension;

pub const ASP_FORMAT: &str = "affect-asp/1";

/// Number of leading components whose explained variance is recorded.
pub const SPECTRUM_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspConfig {
    pub n_low: usize,
    pub n_high: usize,
    pub n_pairs: usize,
}

impl AspConfig {
    /// Defaults tuned on the NRC VAD dev split with ELMo features.
    pub fn for_dimension(dim: AffectDimension) -> Self {
        match dim {
            AffectDimension::Power | AffectDimension::Agency => AspConfig {
                n_low: 400,
                n_high: 300,
                n_pairs: 200,
            },
            AffectDimension::Sentiment => AspConfig {
                n_low: 900,
                n_high: 200,
                n_pairs: 100,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_low == 0 || self.n_high == 0 || self.n_pairs == 0 {
            return Err(Error::Config(format!("ASP sizes must be positive: {self:?}")));
        }
        if self.n_pairs > self.n_low.min(self.n_high) {
            return Err(Error::Config(format!(
                "n_pairs {} exceeds min(n_low {}, n_high {})",
                self.n_pairs, self.n_low, self.n_high
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarPair {
    pub high: String,
    pub low: String,
    #[serde(rename = "cos")]
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolarSets {
    pub high: Vec<String>,
    pub low: Vec<String>,
}

/// Pick the extreme words for one dimension among candidates that have
/// features.
///
/// `candidates` are `(word, score)` pairs, normally the training split.
/// High words are the top `n_high` by score; ties prefer the lexicographically
/// smaller word. Low words are then the bottom `n_low` of the remaining
/// candidates under the same tie rule.
pub fn select_polar_sets(candidates: &[(String, f64)], features: &FeatureTable, cfg: &AspConfig) -> Result<PolarSets> {
    cfg.validate()?;
    let mut pool: Vec<(&str, f64)> = candidates
        .iter()
        .filter(|(w, _)| features.contains(w))
        .map(|(w, s)| (w.as_str(), *s))
        .collect();
    let needed = cfg.n_high + cfg.n_low;
    if pool.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} words with features, but n_high + n_low = {} (short by {})",
            pool.len(),
            needed,
            needed - pool.len()
        )));
    }
    pool.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let high: Vec<String> = pool[..cfg.n_high].iter().map(|(w, _)| w.to_string()).collect();
    let mut rest = pool[cfg.n_high..].to_vec();
    rest.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let low: Vec<String> = rest[..cfg.n_low].iter().map(|(w, _)| w.to_string()).collect();
    Ok(PolarSets { high, low })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm2(a) * norm2(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

fn feature<'a>(features: &'a FeatureTable, word: &str) -> Result<&'a [f64]> {
    features
        .get(word)
        .ok_or_else(|| Error::InsufficientData(format!("no feature vector for `{word}`")))
}

/// Greedy one-to-one matching of high to low words; returns `n_pairs` pairs
/// sorted by cosine, most similar first.
pub fn match_pairs(sets: &PolarSets, features: &FeatureTable, n_pairs: usize) -> Result<Vec<PolarPair>> {
    if sets.high.is_empty() || sets.low.is_empty() {
        return Err(Error::Empty("polar word sets".into()));
    }
    let high: Vec<(&str, &[f64])> = sets
        .high
        .iter()
        .map(|w| Ok((w.as_str(), feature(features, w)?)))
        .collect::<Result<_>>()?;
    let low: Vec<(&str, &[f64])> = sets
        .low
        .iter()
        .map(|w| Ok((w.as_str(), feature(features, w)?)))
        .collect::<Result<_>>()?;

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(high.len() * low.len());
    for (hi, (_, hv)) in high.iter().enumerate() {
        for (li, (_, lv)) in low.iter().enumerate() {
            candidates.push((cosine(hv, lv), hi, li));
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| high[a.1].0.cmp(high[b.1].0))
            .then_with(|| low[a.2].0.cmp(low[b.2].0))
    });

    let mut used_high = vec![false; high.len()];
    let mut used_low = vec![false; low.len()];
    let mut pairs = Vec::with_capacity(n_pairs);
    for (cos, hi, li) in candidates {
        if pairs.len() == n_pairs {
            break;
        }
        if used_high[hi] || used_low[li] {
            continue;
        }
        used_high[hi] = true;
        used_low[li] = true;
        pairs.push(PolarPair {
            high: high[hi].0.to_string(),
            low: low[li].0.to_string(),
            cosine: cos,
        });
    }
    if pairs.len() < n_pairs {
        return Err(Error::InsufficientData(format!(
            "only {} disjoint pairs can be formed, {} requested",
            pairs.len(),
            n_pairs
        )));
    }
    Ok(pairs)
}

/// The `2N x d` matrix of pair-centered vectors, rows ordered
/// `e_h - mu, e_l - mu` for each pair.
pub fn difference_matrix(pairs: &[PolarPair], features: &FeatureTable) -> Result<DMatrix<f64>> {
    if pairs.is_empty() {
        return Err(Error::Empty("polar pairs".into()));
    }
    let d = features.dim;
    let mut m = DMatrix::zeros(2 * pairs.len(), d);
    for (p, pair) in pairs.iter().enumerate() {
        let eh = feature(features, &pair.high)?;
        let el = feature(features, &pair.low)?;
        if eh.len() != d || el.len() != d {
            return Err(Error::dimension(d, eh.len().max(el.len()), "pair feature"));
        }
        for j in 0..d {
            let mu = (eh[j] + el[j]) / 2.0;
            m[(2 * p, j)] = eh[j] - mu;
            m[(2 * p + 1, j)] = el[j] - mu;
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffectSubspace {
    pub dimension: AffectDimension,
    pub direction: Vec<f64>,
    pub pairs: Vec<PolarPair>,
    pub variance_spectrum: Vec<f64>,
    /// False when the high and low projections tie and the sign fell back
    /// to the largest-magnitude component.
    pub orientation_checked: bool,
}

/// First principal component of the pair-centered matrix, oriented so high
/// words project above low words.
pub fn build_subspace(pairs: &[PolarPair], features: &FeatureTable, dimension: AffectDimension) -> Result<AffectSubspace> {
    let m = difference_matrix(pairs, features)?;
    if m.iter().all(|x| *x == 0.0) {
        return Err(Error::Degenerate("every polar pair has identical vectors".into()));
    }
    let (singular, right) = principal_axes(&m);
    let total: f64 = singular.iter().map(|s| s * s).sum();
    let variance_spectrum: Vec<f64> = singular
        .iter()
        .take(SPECTRUM_LEN)
        .map(|s| s * s / total)
        .collect();

    let mut direction = right[0].clone();
    let norm = norm2(&direction);
    direction.iter_mut().for_each(|x| *x /= norm);

    let margin = orientation_margin(&direction, pairs, features)?;
    let orientation_checked = margin != 0.0;
    let flip = if orientation_checked {
        margin < 0.0
    } else {
        let (_, pivot) = direction
            .iter()
            .enumerate()
            .fold((0.0f64, 0.0f64), |(best, val), (_, &x)| {
                if x.abs() > best {
                    (x.abs(), x)
                } else {
                    (best, val)
                }
            });
        pivot < 0.0
    };
    if flip {
        direction.iter_mut().for_each(|x| *x = -*x);
    }

    Ok(AffectSubspace {
        dimension,
        direction,
        pairs: pairs.to_vec(),
        variance_spectrum,
        orientation_checked,
    })
}

/// Mean projection of the high words minus mean projection of the low words.
pub fn orientation_margin(direction: &[f64], pairs: &[PolarPair], features: &FeatureTable) -> Result<f64> {
    let mut high = 0.0;
    let mut low = 0.0;
    for p in pairs {
        high += dot(feature(features, &p.high)?, direction);
        low += dot(feature(features, &p.low)?, direction);
    }
    let n = pairs.len() as f64;
    Ok(high / n - low / n)
}

/// Singular values (descending) and the matching right singular vectors.
fn principal_axes(m: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let singular = order.iter().map(|&i| svd.singular_values[i]).collect();
    let right = order
        .iter()
        .map(|&i| v_t.row(i).iter().copied().collect())
        .collect();
    (singular, right)
}

/// Select polar sets, match pairs and build the subspace in one step.
pub fn fit_subspace(
    candidates: &[(String, f64)],
    features: &FeatureTable,
    dimension: AffectDimension,
    cfg: &AspConfig,
) -> Result<AffectSubspace> {
    let sets = select_polar_sets(candidates, features, cfg)?;
    let pairs = match_pairs(&sets, features, cfg.n_pairs)?;
    build_subspace(&pairs, features, dimension)
}

impl AffectSubspace {
    pub fn input_dim(&self) -> usize {
        self.direction.len()
    }

    pub fn project(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.direction.len() {
            return Err(Error::dimension(self.direction.len(), v.len(), "query vector"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("query vector".into()));
        }
        Ok(dot(v, &self.direction))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let raw = AspFile {
            format: ASP_FORMAT.to_string(),
            dim_tag: self.dimension,
            d: self.direction.len(),
            direction: self.direction.clone(),
            pairs: self.pairs.clone(),
            variance_spectrum: self.variance_spectrum.clone(),
            orientation_checked: self.orientation_checked,
        };
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let raw: AspFile = serde_json::from_reader(BufReader::new(file))?;
        if raw.format != ASP_FORMAT {
            return Err(Error::Format(format!("unsupported subspace format `{}`", raw.format)));
        }
        if raw.direction.len() != raw.d || raw.d == 0 {
            return Err(Error::dimension(raw.d, raw.direction.len(), "subspace direction"));
        }
        if raw.direction.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("subspace direction".into()));
        }
        let norm = norm2(&raw.direction);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Format(format!("subspace direction has norm {norm}, expected 1")));
        }
        Ok(AffectSubspace {
            dimension: raw.dim_tag,
            direction: raw.direction,
            pairs: raw.pairs,
            variance_spectrum: raw.variance_spectrum,
            orientation_checked: raw.orientation_checked,
        })
    }

    /// Words used by the kept pairs.
    pub fn anchor_words(&self) -> BTreeSet<&str> {
        self.pairs
            .iter()
            .flat_map(|p| [p.high.as_str(), p.low.as_str()])
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct AspFile {
    format: String,
    dim_tag: AffectDimension,
    d: usize,
    direction: Vec<f64>,
    pairs: Vec<PolarPair>,
    variance_spectrum: Vec<f64>,
    #[serde(default = "default_true")]
    orientation_checked: bool,
}

fn default_true() -> bool {
    true
}
