//! Entity mentions in tokenized narrative text and their affect profiles.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendKind, DimScores};
use crate::embeddings::{mean_vector, normalize_unit, EmbeddingSet};
use crate::error::{Error, Result};

/// Lowercase, split on whitespace, and emit every punctuation character as a
/// token of its own. Extractors must tokenize the same way so mention indices
/// line up with embedding records.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_ascii() && is_unicode_punct(ch)) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_lowercase().collect());
        } else {
            current.extend(ch.to_lowercase());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn is_unicode_punct(ch: char) -> bool {
    matches!(ch,
        '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00A7}' | '\u{00AB}'
        | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}' | '\u{3001}'..='\u{3003}' | '\u{3008}'..='\u{3011}')
}

/// One corpus line: `{"doc": .., "sent": .., "text": ..}` with optional
/// pre-tokenized `"tokens"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub doc: String,
    pub sent: u64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub doc: String,
    pub sent: u64,
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn from_records(records: Vec<SentenceRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut sentences = Vec::with_capacity(records.len());
        for r in records {
            if !seen.insert((r.doc.clone(), r.sent)) {
                return Err(Error::Format(format!("duplicate sentence {} in doc `{}`", r.sent, r.doc)));
            }
            let tokens = match r.tokens {
                Some(t) => t.into_iter().map(|t| t.to_lowercase()).collect(),
                None => tokenize(&r.text),
            };
            sentences.push(Sentence {
                doc: r.doc,
                sent: r.sent,
                text: r.text,
                tokens,
            });
        }
        Ok(Corpus { sentences })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::parse(&name, i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::parse(&name, i + 1, e.to_string()))?);
        }
        Corpus::from_records(records)
    }

    /// Rebuild sentences from the token fields of an embedding set. Token
    /// positions without a record are left empty and never match an alias.
    pub fn from_embeddings(set: &EmbeddingSet) -> Self {
        let mut grouped: BTreeMap<(&str, u64), Vec<(u64, &str)>> = BTreeMap::new();
        let mut order: Vec<(&str, u64)> = Vec::new();
        for r in set.records() {
            let key = (r.doc_id.as_str(), r.sent_id);
            let slot = grouped.entry(key).or_insert_with(|| {
                order.push(key);
                Vec::new()
            });
            slot.push((r.token_index, r.token.as_str()));
        }
        let sentences = order
            .into_iter()
            .map(|key| {
                let toks = &grouped[&key];
                let len = toks.iter().map(|(i, _)| *i as usize + 1).max().unwrap_or(0);
                let mut tokens = vec![String::new(); len];
                for &(i, t) in toks {
                    tokens[i as usize] = t.to_lowercase();
                }
                Sentence {
                    doc: key.0.to_string(),
                    sent: key.1,
                    text: tokens.iter().filter(|t| !t.is_empty()).cloned().collect::<Vec<_>>().join(" "),
                    tokens,
                }
            })
            .collect();
        Corpus { sentences }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn documents(&self) -> Vec<&str> {
        let mut docs: Vec<&str> = Vec::new();
        for s in &self.sentences {
            if docs.last() != Some(&s.doc.as_str()) && !docs.contains(&s.doc.as_str()) {
                docs.push(&s.doc);
            }
        }
        docs
    }

    pub fn document(&self, doc: &str) -> Corpus {
        Corpus {
            sentences: self.sentences.iter().filter(|s| s.doc == doc).cloned().collect(),
        }
    }

    pub fn sentence(&self, doc: &str, sent: u64) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.doc == doc && s.sent == sent)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub name: String,
    pub aliases: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl EntitySpec {
    pub fn new(name: &str, aliases: &[&[&str]]) -> Result<Self> {
        let spec = EntitySpec {
            name: name.to_string(),
            aliases: aliases
                .iter()
                .map(|a| a.iter().map(|t| t.to_string()).collect())
                .collect(),
            group: None,
        };
        spec.normalized()
    }

    pub fn with_group(mut self, group: &str) -> Self {
        self.group = Some(group.to_string());
        self
    }

    /// Lowercase aliases and check that none is empty.
    pub fn normalized(mut self) -> Result<Self> {
        if self.aliases.is_empty() {
            return Err(Error::Format(format!("entity `{}` has no aliases", self.name)));
        }
        for alias in &mut self.aliases {
            for t in alias.iter_mut() {
                *t = t.trim().to_lowercase();
            }
            if alias.is_empty() || alias.iter().any(String::is_empty) {
                return Err(Error::Format(format!("entity `{}` has an empty alias", self.name)));
            }
        }
        Ok(self)
    }
}

pub fn load_entities(path: &Path) -> Result<Vec<EntitySpec>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let raw: Vec<EntitySpec> = serde_json::from_reader(BufReader::new(file))?;
    let mut names = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for e in raw {
        if !names.insert(e.name.clone()) {
            return Err(Error::Format(format!("entity `{}` listed twice", e.name)));
        }
        out.push(e.normalized()?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub doc: String,
    pub sent: u64,
    /// Index of the first token of the matched alias.
    pub token_index: u64,
    pub length: usize,
}

/// Every non-overlapping alias match, scanning left to right and trying
/// longer aliases first at each position.
pub fn find_mentions(corpus: &Corpus, entity: &EntitySpec) -> Vec<Mention> {
    let mut aliases: Vec<&Vec<String>> = entity.aliases.iter().collect();
    aliases.sort_by_key(|a| std::cmp::Reverse(a.len()));
    let mut out = Vec::new();
    for s in corpus.sentences() {
        let mut i = 0;
        while i < s.tokens.len() {
            let hit = aliases.iter().find(|alias| {
                let end = i + alias.len();
                end <= s.tokens.len() && s.tokens[i..end].iter().zip(alias.iter()).all(|(t, a)| t == a)
            });
            match hit {
                Some(alias) => {
                    out.push(Mention {
                        doc: s.doc.clone(),
                        sent: s.sent,
                        token_index: i as u64,
                        length: alias.len(),
                    });
                    i += alias.len();
                }
                None => i += 1,
            }
        }
    }
    out
}

/// Number of mentions: the frequency baseline.
pub fn frequency_score(corpus: &Corpus, entity: &EntitySpec) -> usize {
    find_mentions(corpus, entity).len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringMode {
    /// Score the mean of the mention embeddings.
    #[serde(rename = "avg-embedding")]
    AveragedEmbedding,
    /// Score every mention and average the scores.
    #[serde(rename = "avg-score")]
    PerInstanceAveraged,
}

impl std::str::FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg-embedding" => Ok(ScoringMode::AveragedEmbedding),
            "avg-score" => Ok(ScoringMode::PerInstanceAveraged),
            other => Err(Error::Config(format!("unknown scoring mode `{other}`"))),
        }
    }
}

impl ScoringMode {
    pub fn other(self) -> Self {
        match self {
            ScoringMode::AveragedEmbedding => ScoringMode::PerInstanceAveraged,
            ScoringMode::PerInstanceAveraged => ScoringMode::AveragedEmbedding,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Unit-normalize each mention vector before it is scored or averaged.
    pub normalize_instances: bool,
    /// Unit-normalize the averaged mention vector.
    pub normalize_average: bool,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            normalize_instances: true,
            normalize_average: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MentionScore {
    pub doc: String,
    pub sent: u64,
    pub idx: u64,
    pub scores: DimScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileDiagnostics {
    /// Scores under the mode that was not selected.
    pub alternate_mode: ScoringMode,
    pub alternate_scores: DimScores,
    /// Largest absolute difference between the two modes over dimensions.
    pub max_mode_gap: f64,
    /// Mentions found in the text without an embedding record.
    pub unembedded_mentions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityProfile {
    pub entity: EntitySpec,
    pub mode: ScoringMode,
    pub backend: BackendKind,
    pub scores: DimScores,
    pub frequency: usize,
    pub mentions: Vec<MentionScore>,
    pub diagnostics: ProfileDiagnostics,
}

fn mention_vector<'a>(set: &'a EmbeddingSet, corpus: &Corpus, m: &Mention) -> Result<Option<&'a [f64]>> {
    let Some(record) = set.get(&m.doc, m.sent, m.token_index) else {
        return Ok(None);
    };
    let expected = corpus
        .sentence(&m.doc, m.sent)
        .and_then(|s| s.tokens.get(m.token_index as usize));
    if let Some(tok) = expected {
        if record.token.to_lowercase() != *tok {
            return Err(Error::Format(format!(
                "embedding record at doc `{}` sent {} idx {} has token `{}`, corpus has `{}`",
                m.doc, m.sent, m.token_index, record.token, tok
            )));
        }
    }
    Ok(Some(&record.vector))
}

/// Score an entity under `backend`.
///
/// Both averaging modes are computed; the one not selected is kept in the
/// profile diagnostics.
pub fn score_entity(
    entity: &EntitySpec,
    corpus: &Corpus,
    set: &EmbeddingSet,
    backend: &Backend,
    mode: ScoringMode,
    opts: &ScoringOptions,
) -> Result<EntityProfile> {
    if set.dim() != backend.input_dim() {
        return Err(Error::dimension(backend.input_dim(), set.dim(), "embedding set vs backend"));
    }
    let mentions = find_mentions(corpus, entity);
    let frequency = mentions.len();

    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut located: Vec<&Mention> = Vec::new();
    for m in &mentions {
        if let Some(v) = mention_vector(set, corpus, m)? {
            let v = if opts.normalize_instances {
                normalize_unit(v)?
            } else {
                v.to_vec()
            };
            vectors.push(v);
            located.push(m);
        }
    }
    if vectors.is_empty() {
        return Err(Error::EntityNotFound(entity.name.clone()));
    }

    let mention_scores: Vec<MentionScore> = located
        .iter()
        .zip(&vectors)
        .map(|(m, v)| {
            Ok(MentionScore {
                doc: m.doc.clone(),
                sent: m.sent,
                idx: m.token_index,
                scores: backend.score(v)?,
            })
        })
        .collect::<Result<_>>()?;

    let per_instance: DimScores = backend
        .dimensions()
        .into_iter()
        .map(|d| {
            let sum: f64 = mention_scores.iter().map(|m| m.scores[&d]).sum();
            (d, sum / mention_scores.len() as f64)
        })
        .collect();

    let mean = mean_vector(vectors.iter().map(Vec::as_slice), set.dim()).expect("at least one vector");
    let mean = if opts.normalize_average {
        normalize_unit(&mean)?
    } else {
        mean
    };
    let averaged = backend.score(&mean)?;

    let (scores, alternate_scores) = match mode {
        ScoringMode::AveragedEmbedding => (averaged, per_instance),
        ScoringMode::PerInstanceAveraged => (per_instance, averaged),
    };
    let max_mode_gap = scores
        .iter()
        .map(|(d, s)| (s - alternate_scores[d]).abs())
        .fold(0.0, f64::max);

    Ok(EntityProfile {
        entity: entity.clone(),
        mode,
        backend: backend.kind(),
        scores,
        frequency,
        mentions: mention_scores,
        diagnostics: ProfileDiagnostics {
            alternate_mode: mode.other(),
            alternate_scores,
            max_mode_gap,
            unembedded_mentions: frequency - located.len(),
        },
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Rescale to [0, 1] over the entity set; a constant input maps to 0.5.
    #[default]
    MinMax,
    /// Subtract the mean and divide by the population standard deviation;
    /// a constant input maps to 0.
    ZScore,
}

pub fn normalize_scores(values: &BTreeMap<String, f64>, method: Normalization) -> BTreeMap<String, f64> {
    let n = values.len() as f64;
    match method {
        Normalization::MinMax => {
            let min = values.values().copied().fold(f64::INFINITY, f64::min);
            let max = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
            values
                .iter()
                .map(|(k, v)| {
                    let x = if max > min { (v - min) / (max - min) } else { 0.5 };
                    (k.clone(), x)
                })
                .collect()
        }
        Normalization::ZScore => {
            let mean = values.values().sum::<f64>() / n;
            let var = values.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            values
                .iter()
                .map(|(k, v)| (k.clone(), if sd > 0.0 { (v - mean) / sd } else { 0.0 }))
                .collect()
        }
    }
}

/// Normalize model scores and mention frequencies over the entity set and
/// add them.
pub fn combined_score(
    model_scores: &BTreeMap<String, f64>,
    freq_scores: &BTreeMap<String, usize>,
    method: Normalization,
) -> Result<BTreeMap<String, f64>> {
    if model_scores.len() < 2 {
        return Err(Error::InsufficientData(
            "combined scores need at least 2 entities".into(),
        ));
    }
    if !model_scores.keys().eq(freq_scores.keys()) {
        return Err(Error::Format("model and frequency scores cover different entities".into()));
    }
    if let Some((k, _)) = model_scores.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("model score for `{k}`")));
    }
    let freq: BTreeMap<String, f64> = freq_scores.iter().map(|(k, &v)| (k.clone(), v as f64)).collect();
    let a = normalize_scores(model_scores, method);
    let b = normalize_scores(&freq, method);
    Ok(a.into_iter().map(|(k, v)| {
        let f = b[&k];
        (k, v + f)
    }).collect())
}
