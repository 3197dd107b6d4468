//! Affect lexicons: words scored for valence, arousal and dominance.
//!
//! The three lexicon columns map onto the toolkit's affect dimensions as
//! dominance → power, valence → sentiment and arousal → agency.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectDimension {
    Power,
    Sentiment,
    Agency,
}

impl AffectDimension {
    pub const ALL: [AffectDimension; 3] = [
        AffectDimension::Power,
        AffectDimension::Sentiment,
        AffectDimension::Agency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AffectDimension::Power => "power",
            AffectDimension::Sentiment => "sentiment",
            AffectDimension::Agency => "agency",
        }
    }

    /// Name of the lexicon column that carries this dimension.
    pub fn lexicon_column(self) -> &'static str {
        match self {
            AffectDimension::Power => "dominance",
            AffectDimension::Sentiment => "valence",
            AffectDimension::Agency => "arousal",
        }
    }
}

impl fmt::Display for AffectDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AffectDimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" | "dominance" => Ok(AffectDimension::Power),
            "sentiment" | "valence" => Ok(AffectDimension::Sentiment),
            "agency" | "arousal" => Ok(AffectDimension::Agency),
            other => Err(Error::Config(format!("unknown affect dimension `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffectScore {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl AffectScore {
    pub fn new(valence: f64, arousal: f64, dominance: f64) -> Result<Self> {
        for (name, value) in [
            ("valence", valence),
            ("arousal", arousal),
            ("dominance", dominance),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Format(format!("{name} {value} outside [0, 1]")));
            }
        }
        Ok(AffectScore {
            valence,
            arousal,
            dominance,
        })
    }

    pub fn get(&self, dim: AffectDimension) -> f64 {
        match dim {
            AffectDimension::Power => self.dominance,
            AffectDimension::Sentiment => self.valence,
            AffectDimension::Agency => self.arousal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Dev,
    Test,
}

impl FromStr for SplitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitLabel::Train),
            "dev" => Ok(SplitLabel::Dev),
            "test" => Ok(SplitLabel::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    /// Sizes used for the 20,007-word NRC VAD lexicon.
    pub const NRC_VAD: SplitSizes = SplitSizes {
        train: 16_007,
        dev: 2_000,
        test: 2_000,
    };

    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }

    /// 80/10/10 split of `n` words; rounding leftovers go to train.
    pub fn proportional(n: usize) -> Self {
        let dev = n / 10;
        let test = n / 10;
        SplitSizes {
            train: n - dev - test,
            dev,
            test,
        }
    }
}

/// Split assignment serialized as `{"seed": n, "train": [...], "dev": [...], "test": [...]}`.
/// Word lists are sorted so the manifest does not depend on shuffle order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffectLexicon {
    entries: BTreeMap<String, AffectScore>,
    split: Option<BTreeMap<String, SplitLabel>>,
    seed: Option<u64>,
}

pub fn normalize_word(raw: &str) -> String {
    raw.trim().to_lowercase()
}

impl AffectLexicon {
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, AffectScore)>,
    {
        let mut map = BTreeMap::new();
        for (i, (word, score)) in entries.into_iter().enumerate() {
            let word = normalize_word(&word);
            if word.is_empty() {
                return Err(Error::Format(format!("entry {} has an empty word", i + 1)));
            }
            if map.insert(word.clone(), score).is_some() {
                return Err(Error::DuplicateWord { word, line: i + 1 });
            }
        }
        Ok(AffectLexicon {
            entries: map,
            split: None,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&AffectScore> {
        self.entries.get(word)
    }

    pub fn entries(&self) -> &BTreeMap<String, AffectScore> {
        &self.entries
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn is_split(&self) -> bool {
        self.split.is_some()
    }

    pub fn split_of(&self, word: &str) -> Option<SplitLabel> {
        self.split.as_ref()?.get(word).copied()
    }

    /// Words in one split, in lexicographic order. Empty when unsplit.
    pub fn words_in(&self, label: SplitLabel) -> Vec<&str> {
        match &self.split {
            Some(split) => split
                .iter()
                .filter(|(_, l)| **l == label)
                .map(|(w, _)| w.as_str())
                .collect(),
            None => Vec::new(),
        }
    }

    /// Multi-word entries ("give up"). They are kept; embedding lookup for
    /// them goes through the records the extractor anchors on their first word.
    pub fn multiword_entries(&self) -> Vec<&str> {
        self.entries
            .keys()
            .filter(|w| w.split_whitespace().nth(1).is_some())
            .map(String::as_str)
            .collect()
    }

    /// `(word, score)` pairs for one dimension within one split.
    pub fn scored(&self, label: SplitLabel, dim: AffectDimension) -> Vec<(String, f64)> {
        self.words_in(label)
            .into_iter()
            .map(|w| (w.to_string(), self.entries[w].get(dim)))
            .collect()
    }

    pub fn split_manifest(&self) -> Option<SplitManifest> {
        let seed = self.seed?;
        let mut manifest = SplitManifest {
            seed,
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
        };
        for (word, label) in self.split.as_ref()? {
            match label {
                SplitLabel::Train => manifest.train.push(word.clone()),
                SplitLabel::Dev => manifest.dev.push(word.clone()),
                SplitLabel::Test => manifest.test.push(word.clone()),
            }
        }
        Some(manifest)
    }

    /// Attach a previously written split. The manifest must partition the
    /// word set exactly.
    pub fn with_split(mut self, manifest: &SplitManifest) -> Result<Self> {
        let mut split = BTreeMap::new();
        for (label, words) in [
            (SplitLabel::Train, &manifest.train),
            (SplitLabel::Dev, &manifest.dev),
            (SplitLabel::Test, &manifest.test),
        ] {
            for w in words {
                if !self.entries.contains_key(w) {
                    return Err(Error::Format(format!(
                        "split manifest word `{w}` is not in the lexicon"
                    )));
                }
                if split.insert(w.clone(), label).is_some() {
                    return Err(Error::Format(format!(
                        "split manifest assigns `{w}` more than once"
                    )));
                }
            }
        }
        if split.len() != self.entries.len() {
            return Err(Error::Format(format!(
                "split manifest covers {} of {} lexicon words",
                split.len(),
                self.entries.len()
            )));
        }
        self.split = Some(split);
        self.seed = Some(manifest.seed);
        Ok(self)
    }

    /// Write the lexicon back out as headerless TSV.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_tsv(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_tsv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (word, s) in &self.entries {
            writeln!(out, "{word}\t{}\t{}\t{}", s.valence, s.arousal, s.dominance)?;
        }
        Ok(())
    }
}

/// Load a `word<TAB>valence<TAB>arousal<TAB>dominance` file.
pub fn load_lexicon(path: &Path, has_header: bool) -> Result<AffectLexicon> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(file, &path.display().to_string(), has_header)
}

pub fn parse_lexicon<R: Read>(reader: R, source_name: &str, has_header: bool) -> Result<AffectLexicon> {
    let mut entries = BTreeMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        if has_header && i == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let word = normalize_word(fields[0]);
        if word.is_empty() {
            return Err(Error::parse(source_name, lineno, "empty word"));
        }
        let mut values = [0.0f64; 3];
        for (slot, (name, raw)) in values.iter_mut().zip(
            ["valence", "arousal", "dominance"]
                .iter()
                .zip(&fields[1..]),
        ) {
            let v: f64 = raw.trim().parse().map_err(|_| {
                Error::parse(source_name, lineno, format!("{name} `{raw}` is not a number"))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("{name} {v} outside [0, 1]"),
                ));
            }
            *slot = v;
        }
        let score = AffectScore {
            valence: values[0],
            arousal: values[1],
            dominance: values[2],
        };
        if entries.insert(word.clone(), score).is_some() {
            return Err(Error::DuplicateWord { word, line: lineno });
        }
    }
    Ok(AffectLexicon {
        entries,
        split: None,
        seed: None,
    })
}

/// Shuffle the lexicographically sorted word list with [`SplitMix64`] and cut
/// it into train, dev and test blocks of the requested sizes.
pub fn split_lexicon(lex: &AffectLexicon, sizes: SplitSizes, seed: u64) -> Result<AffectLexicon> {
    if sizes.total() != lex.len() {
        return Err(Error::Config(format!(
            "split sizes {}+{}+{} = {} do not match the {} lexicon entries",
            sizes.train,
            sizes.dev,
            sizes.test,
            sizes.total(),
            lex.len()
        )));
    }
    let mut words: Vec<&String> = lex.entries.keys().collect();
    SplitMix64::new(seed).shuffle(&mut words);

    let mut split = BTreeMap::new();
    for (i, w) in words.into_iter().enumerate() {
        let label = if i < sizes.train {
            SplitLabel::Train
        } else if i < sizes.train + sizes.dev {
            SplitLabel::Dev
        } else {
            SplitLabel::Test
        };
        split.insert(w.clone(), label);
    }
    Ok(AffectLexicon {
        entries: lex.entries.clone(),
        split: Some(split),
        seed: Some(seed),
    })
}
