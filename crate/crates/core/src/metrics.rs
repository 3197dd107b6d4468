//! Correlation and ranking metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::dimension(x.len(), y.len(), "paired samples"));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// Sample Pearson correlation, computed from centered sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in correlation input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end, averaged.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
        .map_err(|_| Error::Degenerate("all values tied in rank correlation input".into()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankAnnotation {
    pub entity: String,
    /// One rank per annotator; 1 is the most powerful.
    pub ranks: Vec<i64>,
}

impl RankAnnotation {
    pub fn spread(&self) -> i64 {
        let max = self.ranks.iter().max().copied().unwrap_or(0);
        let min = self.ranks.iter().min().copied().unwrap_or(0);
        max - min
    }

    pub fn mean_rank(&self) -> f64 {
        self.ranks.iter().sum::<i64>() as f64 / self.ranks.len() as f64
    }
}

pub fn load_annotations(path: &Path) -> Result<Vec<RankAnnotation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let anns: Vec<RankAnnotation> = serde_json::from_reader(BufReader::new(file))?;
    let mut seen = BTreeSet::new();
    for a in &anns {
        if a.ranks.is_empty() {
            return Err(Error::Format(format!("annotation for `{}` has no ranks", a.entity)));
        }
        if !seen.insert(a.entity.as_str()) {
            return Err(Error::Format(format!("entity `{}` annotated twice", a.entity)));
        }
    }
    Ok(anns)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAccuracy {
    pub accuracy: f64,
    pub correct: usize,
    pub pairs_used: usize,
    /// Entities dropped because annotators disagreed too much.
    pub excluded_disagreement: Vec<String>,
    /// Annotated entities without a score.
    pub excluded_unscored: Vec<String>,
    /// Pairs skipped because their mean annotated ranks tie.
    pub tied_gold_pairs: usize,
}

/// Accuracy of "is A more powerful than B" over annotated entity pairs.
///
/// Entities whose annotator ranks span more than `max_disagreement` are
/// dropped. Pairs with equal mean annotated rank are skipped. A pair is
/// correct when the higher-scored entity has the better (smaller) mean rank;
/// equal scores count as incorrect.
pub fn pairwise_power_accuracy(
    annotations: &[RankAnnotation],
    scores: &BTreeMap<String, f64>,
    max_disagreement: i64,
) -> Result<PairwiseAccuracy> {
    let mut kept: Vec<(&str, f64, f64)> = Vec::new();
    let mut excluded_disagreement = Vec::new();
    let mut excluded_unscored = Vec::new();
    for a in annotations {
        if a.ranks.is_empty() {
            return Err(Error::Format(format!("annotation for `{}` has no ranks", a.entity)));
        }
        if a.spread() > max_disagreement {
            excluded_disagreement.push(a.entity.clone());
            continue;
        }
        match scores.get(&a.entity) {
            Some(&s) => kept.push((&a.entity, a.mean_rank(), s)),
            None => excluded_unscored.push(a.entity.clone()),
        }
    }
    let mut correct = 0;
    let mut used = 0;
    let mut tied = 0;
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            let (_, rank_i, score_i) = kept[i];
            let (_, rank_j, score_j) = kept[j];
            if rank_i == rank_j {
                tied += 1;
                continue;
            }
            used += 1;
            let gold_i_stronger = rank_i < rank_j;
            if score_i != score_j && (score_i > score_j) == gold_i_stronger {
                correct += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::InsufficientData("no usable entity pairs for pairwise accuracy".into()));
    }
    Ok(PairwiseAccuracy {
        accuracy: correct as f64 / used as f64,
        correct,
        pairs_used: used,
        excluded_disagreement,
        excluded_unscored,
        tied_gold_pairs: tied,
    })
}

/// Two-sided permutation p-value for a correlation statistic: `y` is
/// shuffled `n_permutations` times with [`SplitMix64`] and the p-value is
/// `(1 + #{|r_perm| >= |r_obs|}) / (1 + n_permutations)`.
pub fn permutation_p_value<F>(x: &[f64], y: &[f64], n_permutations: usize, seed: u64, stat: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let observed = stat(x, y)?.abs();
    let mut rng = SplitMix64::new(seed);
    let mut shuffled = y.to_vec();
    let mut extreme = 0usize;
    for _ in 0..n_permutations {
        rng.shuffle(&mut shuffled);
        // Tolerance so permutations that reproduce the statistic up to
        // rounding count as at least as extreme.
        if stat(x, &shuffled)?.abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (1 + n_permutations) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_note: Option<String>,
}
