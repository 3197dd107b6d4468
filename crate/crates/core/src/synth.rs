//! Synthetic data with known affect directions.
//!
//! [`planted_lexicon`] builds an in-memory lexicon whose scores are linear in
//! the word features along one hidden unit direction per dimension.
//! [`write_toy_corpus`] writes a small end-to-end fixture: a lexicon, its
//! occurrence embeddings, a short story with five entities, and the story's
//! token embeddings.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::embeddings::{dot, normalize_unit, write_embeddings, EmbeddingHeader, EmbeddingRecord, FeatureTable};
use crate::entities::{tokenize, EntitySpec, SentenceRecord};
use crate::error::{Error, Result};
use crate::lexicon::{split_lexicon, AffectDimension, AffectLexicon, AffectScore, SplitSizes};
use crate::metrics::RankAnnotation;

fn gaussian(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

/// `k` orthonormal vectors in `d` dimensions by Gram-Schmidt on Gaussian draws.
pub fn random_orthonormal<R: Rng>(rng: &mut R, d: usize, k: usize) -> Vec<Vec<f64>> {
    assert!(k <= d, "cannot draw {k} orthonormal vectors in {d} dimensions");
    let n = gaussian(1.0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| n.sample(rng)).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        if let Ok(u) = normalize_unit(&v) {
            if crate::embeddings::norm2(&v) > 1e-6 {
                basis.push(u);
            }
        }
    }
    basis
}

#[derive(Clone, Copy, Debug)]
pub struct PlantedConfig {
    pub n_words: usize,
    pub dim: usize,
    pub sizes: SplitSizes,
    /// Standard deviation of the additive score noise.
    pub score_noise: f64,
    /// Per-component standard deviation of isotropic feature noise.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_words: 2000,
            dim: 50,
            sizes: SplitSizes {
                train: 1600,
                dev: 200,
                test: 200,
            },
            score_noise: 0.1,
            feature_noise: 0.03,
            seed: 20_190_601,
        }
    }
}

pub struct PlantedData {
    /// Split lexicon; scores are `(u·x + noise + 1.5) / 3` so they fall in [0, 1].
    pub lexicon: AffectLexicon,
    /// Unit feature vector for every word.
    pub features: FeatureTable,
    pub directions: BTreeMap<AffectDimension, Vec<f64>>,
    /// Scores before the affine map into the lexicon range.
    pub raw_scores: BTreeMap<AffectDimension, BTreeMap<String, f64>>,
}

/// Map a raw planted score into [0, 1]. Affine, so correlations are unchanged.
pub fn to_lexicon_range(raw: f64) -> f64 {
    ((raw + 1.5) / 3.0).clamp(0.0, 1.0)
}

pub fn planted_lexicon(cfg: &PlantedConfig) -> Result<PlantedData> {
    if cfg.sizes.total() != cfg.n_words {
        return Err(Error::Config("planted split sizes must sum to n_words".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = random_orthonormal(&mut rng, cfg.dim, AffectDimension::ALL.len());
    let directions: BTreeMap<AffectDimension, Vec<f64>> =
        AffectDimension::ALL.iter().copied().zip(basis.iter().cloned()).collect();
    let feat_noise = gaussian(cfg.feature_noise);
    let score_noise = gaussian(cfg.score_noise);

    let mut vectors = Vec::with_capacity(cfg.n_words);
    let mut entries = Vec::with_capacity(cfg.n_words);
    let mut raw_scores: BTreeMap<AffectDimension, BTreeMap<String, f64>> = BTreeMap::new();
    for i in 0..cfg.n_words {
        let word = format!("w{i:05}");
        let mut x: Vec<f64> = (0..cfg.dim).map(|_| feat_noise.sample(&mut rng)).collect();
        for u in &basis {
            let c: f64 = rng.random_range(-1.0..1.0);
            x.iter_mut().zip(u).for_each(|(xi, ui)| *xi += c * ui);
        }
        let x = normalize_unit(&x)?;
        let mut s = BTreeMap::new();
        for (&dim, u) in &directions {
            let raw = dot(u, &x) + score_noise.sample(&mut rng);
            raw_scores.entry(dim).or_default().insert(word.clone(), raw);
            s.insert(dim, to_lexicon_range(raw));
        }
        let score = AffectScore::new(
            s[&AffectDimension::Sentiment],
            s[&AffectDimension::Agency],
            s[&AffectDimension::Power],
        )?;
        entries.push((word.clone(), score));
        vectors.push((word, x));
    }
    let lexicon = split_lexicon(&AffectLexicon::from_entries(entries)?, cfg.sizes, cfg.seed)?;
    let features = FeatureTable::from_vectors(cfg.dim, vectors)?;
    Ok(PlantedData {
        lexicon,
        features,
        directions,
        raw_scores,
    })
}

/// An entity in the toy story with its designed frequency and planted
/// (power, sentiment, agency).
#[derive(Clone, Copy, Debug)]
pub struct ToyEntity {
    pub name: &'static str,
    pub aliases: &'static [&'static [&'static str]],
    pub group: &'static str,
    pub frequency: usize,
    pub planted: [f64; 3],
    /// Ground-truth power rank, 1 = most powerful.
    pub power_rank: i64,
}

pub const TOY_ENTITIES: [ToyEntity; 5] = [
    ToyEntity {
        name: "Batman",
        aliases: &[&["batman"], &["bruce", "wayne"]],
        group: "male",
        frequency: 30,
        planted: [0.85, 0.80, 0.70],
        power_rank: 1,
    },
    ToyEntity {
        name: "Joker",
        aliases: &[&["joker"]],
        group: "male",
        frequency: 24,
        planted: [0.55, 0.08, 0.90],
        power_rank: 2,
    },
    ToyEntity {
        name: "Gordon",
        aliases: &[&["jim", "gordon"], &["gordon"]],
        group: "male",
        frequency: 16,
        planted: [0.60, 0.70, 0.50],
        power_rank: 3,
    },
    ToyEntity {
        name: "Dent",
        aliases: &[&["harvey", "dent"], &["dent"]],
        group: "male",
        frequency: 11,
        planted: [0.45, 0.45, 0.40],
        power_rank: 4,
    },
    ToyEntity {
        name: "Rachel",
        aliases: &[&["rachel", "dawes"], &["rachel"]],
        group: "female",
        frequency: 6,
        planted: [0.20, 0.65, 0.30],
        power_rank: 5,
    },
];

/// Name of the entity planted with the lowest sentiment.
pub const TOY_LOW_SENTIMENT: &str = "Joker";
/// Name of the entity with the most mentions.
pub const TOY_MOST_FREQUENT: &str = "Batman";

#[derive(Clone, Copy, Debug)]
pub struct ToyConfig {
    pub seed: u64,
    pub dim: usize,
    pub n_words: usize,
    pub instances_per_word: usize,
    pub n_sentences: usize,
    pub feature_noise: f64,
    pub instance_noise: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seed: 2008,
            dim: 16,
            n_words: 600,
            instances_per_word: 2,
            n_sentences: 100,
            feature_noise: 0.15,
            instance_noise: 0.1,
        }
    }
}

pub const TOY_DOC: &str = "dark-knight";
pub const TOY_FILES: [&str; 6] = [
    "lexicon.tsv",
    "lexicon-embeddings.jsonl.gz",
    "corpus.jsonl",
    "story-embeddings.jsonl.gz",
    "entities.json",
    "reference.json",
];

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pu", "da", "fe", "gi", "ho", "ju", "be", "co", "wy", "xa", "qe",
];
const VERBS: [&str; 8] = ["watches", "meets", "follows", "questions", "visits", "calls", "passes", "finds"];
const PLACES: [&str; 6] = ["the harbor", "the tower", "the bank", "city hall", "the street", "the station"];
const FILLER: [&str; 8] = [
    "rain falls over the city .",
    "the night is quiet .",
    "sirens sound far away .",
    "a train crosses the river .",
    "lights go out downtown .",
    "the crowd waits outside .",
    "smoke rises from the docks .",
    "news spreads quickly .",
];

fn pseudo_word(i: usize) -> String {
    let n = SYLLABLES.len();
    format!("{}{}{}", SYLLABLES[i % n], SYLLABLES[(i / n) % n], SYLLABLES[(i / (n * n)) % n])
}

fn affect_vector<R: Rng>(rng: &mut R, basis: &[Vec<f64>], targets: [f64; 3], noise: &Normal<f64>) -> Vec<f64> {
    let d = basis[0].len();
    let mut v: Vec<f64> = (0..d).map(|_| noise.sample(rng)).collect();
    for (u, t) in basis.iter().zip(targets) {
        v.iter_mut().zip(u).for_each(|(x, ui)| *x += (2.0 * t - 1.0) * ui);
    }
    v
}

fn capitalize(token: &str) -> String {
    let mut c = token.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write the toy fixture into `dir` and return the written paths. Output is
/// a pure function of `cfg`.
pub fn write_toy_corpus(dir: &Path, cfg: &ToyConfig) -> Result<Vec<PathBuf>> {
    if cfg.n_words > SYLLABLES.len().pow(3) {
        return Err(Error::Config(format!("at most {} toy words", SYLLABLES.len().pow(3))));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Basis order follows the planted triple: power, sentiment, agency.
    let basis = random_orthonormal(&mut rng, cfg.dim, 3);
    let feat_noise = gaussian(cfg.feature_noise);
    let inst_noise = gaussian(cfg.instance_noise);
    let paths: Vec<PathBuf> = TOY_FILES.iter().map(|f| dir.join(f)).collect();

    // Lexicon and its occurrence embeddings.
    let mut tsv = String::from("word\tvalence\tarousal\tdominance\n");
    let mut lex_records = Vec::new();
    for i in 0..cfg.n_words {
        let word = pseudo_word(i);
        let t: [f64; 3] = std::array::from_fn(|_| (rng.random_range(20..=980) as f64) / 1000.0);
        tsv.push_str(&format!("{word}\t{:.3}\t{:.3}\t{:.3}\n", t[1], t[2], t[0]));
        let base = affect_vector(&mut rng, &basis, t, &feat_noise);
        for _ in 0..cfg.instances_per_word {
            let sent = lex_records.len() as u64;
            lex_records.push(EmbeddingRecord {
                token: word.clone(),
                doc_id: "lexicon".into(),
                sent_id: sent,
                token_index: 0,
                vector: base.iter().map(|x| x + inst_noise.sample(&mut rng)).collect(),
            });
        }
    }
    fs::write(&paths[0], tsv).map_err(|e| Error::io(&paths[0], e))?;
    let header = EmbeddingHeader::new(cfg.dim, "toy-planted", false, "none");
    write_embeddings(&paths[1], &header, &lex_records)?;

    // Story: shuffled mention slots, one or two entities per sentence, padded
    // with entity-free filler sentences.
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (e, ent) in TOY_ENTITIES.iter().enumerate() {
        for k in 0..ent.frequency {
            slots.push((e, k % ent.aliases.len()));
        }
    }
    slots.shuffle(&mut rng);
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut it = slots.into_iter().peekable();
    while let Some(first) = it.next() {
        let pair = rng.random_bool(0.2) && it.peek().is_some_and(|next| next.0 != first.0);
        let mut g = vec![first];
        if pair {
            g.push(it.next().expect("peeked"));
        }
        groups.push(g);
    }
    if groups.len() > cfg.n_sentences {
        return Err(Error::Config(format!("toy story needs at least {} sentences", groups.len())));
    }
    let mut layout: Vec<Option<Vec<(usize, usize)>>> = groups.into_iter().map(Some).collect();
    layout.resize(cfg.n_sentences, None);
    layout[1..].shuffle(&mut rng);

    let mut corpus = String::new();
    let mut story_records = Vec::new();
    for (sent, slot) in layout.into_iter().enumerate() {
        let mut words: Vec<String> = Vec::new();
        let mut anchors: BTreeMap<usize, usize> = BTreeMap::new();
        let push_alias = |words: &mut Vec<String>, anchors: &mut BTreeMap<usize, usize>, (e, a): (usize, usize)| {
            if TOY_ENTITIES[e].name == "Joker" {
                words.push("the".into());
            }
            anchors.insert(words.len(), e);
            words.extend(TOY_ENTITIES[e].aliases[a].iter().map(|t| capitalize(t)));
        };
        match slot {
            Some(g) => {
                push_alias(&mut words, &mut anchors, g[0]);
                words.push(VERBS[rng.random_range(0..VERBS.len())].into());
                if let Some(&second) = g.get(1) {
                    push_alias(&mut words, &mut anchors, second);
                    words.push("near".into());
                }
                words.extend(PLACES[rng.random_range(0..PLACES.len())].split(' ').map(String::from));
                words.push(".".into());
            }
            None => words.extend(FILLER[rng.random_range(0..FILLER.len())].split(' ').map(String::from)),
        }
        let text = words.join(" ");
        let record = SentenceRecord {
            doc: TOY_DOC.into(),
            sent: sent as u64,
            text,
            tokens: None,
        };
        corpus.push_str(&serde_json::to_string(&record)?);
        corpus.push('\n');
        for (idx, token) in tokenize(&record.text).into_iter().enumerate() {
            let vector = match anchors.get(&idx) {
                Some(&e) => affect_vector(&mut rng, &basis, TOY_ENTITIES[e].planted, &feat_noise),
                None => (0..cfg.dim).map(|_| 2.0 * feat_noise.sample(&mut rng)).collect(),
            };
            story_records.push(EmbeddingRecord {
                token,
                doc_id: TOY_DOC.into(),
                sent_id: sent as u64,
                token_index: idx as u64,
                vector,
            });
        }
    }
    fs::write(&paths[2], corpus).map_err(|e| Error::io(&paths[2], e))?;
    write_embeddings(&paths[3], &header, &story_records)?;

    let entities: Vec<EntitySpec> = TOY_ENTITIES
        .iter()
        .map(|e| {
            EntitySpec::new(e.name, e.aliases).map(|s| s.with_group(e.group))
        })
        .collect::<Result<_>>()?;
    write_json(&paths[4], &entities)?;
    let reference: Vec<RankAnnotation> = TOY_ENTITIES
        .iter()
        .map(|e| RankAnnotation {
            entity: e.name.into(),
            ranks: vec![e.power_rank],
        })
        .collect();
    write_json(&paths[5], &reference)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entities::{find_mentions, Corpus};
    use crate::lexicon::SplitLabel;

    #[test]
    fn orthonormal_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_orthonormal(&mut rng, 7, 4);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&b[i], &b[j]) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn planted_lexicon_shape() {
        let cfg = PlantedConfig {
            n_words: 100,
            dim: 8,
            sizes: SplitSizes::proportional(100),
            ..Default::default()
        };
        let data = planted_lexicon(&cfg).unwrap();
        assert_eq!(data.lexicon.len(), 100);
        assert_eq!(data.lexicon.words_in(SplitLabel::Test).len(), 10);
        assert_eq!(data.features.features.len(), 100);
        for (w, f) in &data.features.features {
            assert!((crate::embeddings::norm2(&f.mean_vector) - 1.0).abs() < 1e-12);
            let raw = data.raw_scores[&AffectDimension::Power][w];
            assert!((data.lexicon.get(w).unwrap().get(AffectDimension::Power) - to_lexicon_range(raw)).abs() < 1e-15);
        }
        let again = planted_lexicon(&cfg).unwrap();
        assert_eq!(again.features, data.features);
    }

    #[test]
    fn toy_corpus_has_designed_frequencies() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_toy_corpus(dir.path(), &ToyConfig::default()).unwrap();
        let corpus = Corpus::load(&paths[2]).unwrap();
        assert_eq!(corpus.sentences().len(), 100);
        for e in TOY_ENTITIES {
            let spec = EntitySpec::new(e.name, e.aliases).unwrap();
            assert_eq!(find_mentions(&corpus, &spec).len(), e.frequency, "{}", e.name);
        }
        let set = crate::embeddings::load_embeddings(&paths[3]).unwrap();
        let n_tokens: usize = corpus.sentences().iter().map(|s| s.tokens.len()).sum();
        assert_eq!(set.len(), n_tokens);
    }
}
