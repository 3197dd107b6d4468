//! Embedding files and per-word feature vectors.
//!
//! An embedding file is UTF-8 JSON Lines. The first line is a header
//!
//! ```text
//! {"format":"affect-embeddings/1","dim":4,"model":"elmo","masked":false,"layer_rule":"middle-layer"}
//! ```
//!
//! and every following line is one token occurrence
//!
//! ```text
//! {"token":"batman","doc":"plot-17","sent":3,"idx":0,"vec":[0.1,0.2,0.3,0.4]}
//! ```
//!
//! Files may be gzip-compressed; compression is detected from the magic bytes,
//! not the file name. Vectors are stored as extracted and are only normalized
//! when features are built.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDING_FORMAT: &str = "affect-embeddings/1";
pub const FEATURE_FORMAT: &str = "affect-features/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub format: String,
    pub dim: usize,
    pub model: String,
    pub masked: bool,
    pub layer_rule: String,
}

impl EmbeddingHeader {
    pub fn new(dim: usize, model: impl Into<String>, masked: bool, layer_rule: impl Into<String>) -> Self {
        EmbeddingHeader {
            format: EMBEDDING_FORMAT.to_string(),
            dim,
            model: model.into(),
            masked,
            layer_rule: layer_rule.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub token: String,
    #[serde(rename = "doc")]
    pub doc_id: String,
    #[serde(rename = "sent")]
    pub sent_id: u64,
    #[serde(rename = "idx")]
    pub token_index: u64,
    #[serde(rename = "vec")]
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    fn describe(&self) -> String {
        format!(
            "token `{}` at doc `{}` sent {} idx {}",
            self.token, self.doc_id, self.sent_id, self.token_index
        )
    }
}

/// Key of an occurrence: `(doc, sentence, token index)`.
pub type OccurrenceKey = (String, u64, u64);

#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    header: EmbeddingHeader,
    records: Vec<EmbeddingRecord>,
    index: HashMap<OccurrenceKey, usize>,
}

impl EmbeddingSet {
    pub fn new(header: EmbeddingHeader, records: Vec<EmbeddingRecord>) -> Result<Self> {
        if header.dim == 0 {
            return Err(Error::Format("embedding dim must be positive".into()));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            validate_record(r, header.dim)?;
            let key = (r.doc_id.clone(), r.sent_id, r.token_index);
            if index.insert(key, i).is_some() {
                return Err(Error::Format(format!("duplicate occurrence: {}", r.describe())));
            }
        }
        Ok(EmbeddingSet {
            header,
            records,
            index,
        })
    }

    pub fn header(&self) -> &EmbeddingHeader {
        &self.header
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, doc: &str, sent: u64, idx: u64) -> Option<&EmbeddingRecord> {
        self.index
            .get(&(doc.to_string(), sent, idx))
            .map(|&i| &self.records[i])
    }
}

fn validate_record(r: &EmbeddingRecord, dim: usize) -> Result<()> {
    if r.vector.len() != dim {
        return Err(Error::dimension(dim, r.vector.len(), r.describe()));
    }
    if r.vector.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(r.describe()));
    }
    Ok(())
}

fn open_maybe_gzip(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = read_up_to(&mut file, &mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

fn create_maybe_gzip(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    if gz {
        Ok(Box::new(BufWriter::new(GzEncoder::new(file, Compression::default()))))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Streaming reader over an embedding file. The header is parsed eagerly;
/// records are validated against it as they are read.
pub struct EmbeddingReader {
    header: EmbeddingHeader,
    lines: std::io::Lines<Box<dyn BufRead>>,
    lineno: usize,
    source_name: String,
}

impl EmbeddingReader {
    pub fn open(path: &Path) -> Result<Self> {
        let reader = open_maybe_gzip(path)?;
        Self::from_reader(reader, &path.display().to_string())
    }

    pub fn from_reader(reader: Box<dyn BufRead>, source_name: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "missing header line"))?
            .map_err(|e| Error::parse(source_name, 1, e.to_string()))?;
        let header: EmbeddingHeader = serde_json::from_str(&first)
            .map_err(|e| Error::parse(source_name, 1, format!("bad header: {e}")))?;
        if header.format != EMBEDDING_FORMAT {
            return Err(Error::parse(
                source_name,
                1,
                format!("unsupported format `{}`", header.format),
            ));
        }
        if header.dim == 0 {
            return Err(Error::parse(source_name, 1, "dim must be positive"));
        }
        Ok(EmbeddingReader {
            header,
            lines,
            lineno: 1,
            source_name: source_name.to_string(),
        })
    }

    pub fn header(&self) -> &EmbeddingHeader {
        &self.header
    }
}

impl Iterator for EmbeddingReader {
    type Item = Result<EmbeddingRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.lineno += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::parse(&self.source_name, self.lineno, e.to_string()))),
            };
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => return Some(Err(Error::parse(&self.source_name, self.lineno, e.to_string()))),
            };
            if let Err(e) = validate_record(&record, self.header.dim) {
                return Some(Err(Error::parse(&self.source_name, self.lineno, e.to_string())));
            }
            return Some(Ok(record));
        }
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let reader = EmbeddingReader::open(path)?;
    let header = reader.header().clone();
    let records = reader.collect::<Result<Vec<_>>>()?;
    EmbeddingSet::new(header, records)
}

/// Write an embedding file; a `.gz` extension selects gzip output.
pub fn write_embeddings(path: &Path, header: &EmbeddingHeader, records: &[EmbeddingRecord]) -> Result<()> {
    let mut out = create_maybe_gzip(path)?;
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n").map_err(io)?;
    for r in records {
        validate_record(r, header.dim)?;
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Scale `v` to unit Euclidean length.
pub fn normalize_unit(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("vector to normalize".into()));
    }
    let norm = norm2(v);
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if !norm.is_finite() {
        // Rescale first so the squared sum does not overflow.
        let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scaled: Vec<f64> = v.iter().map(|x| x / max).collect();
        return normalize_unit(&scaled);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Componentwise mean of equally sized vectors, summed in iteration order.
pub fn mean_vector<'a, I>(vectors: I, dim: usize) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let n = count as f64;
    Some(sum.into_iter().map(|s| s / n).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordFeature {
    pub word: String,
    #[serde(rename = "vec")]
    pub mean_vector: Vec<f64>,
    #[serde(rename = "count")]
    pub instance_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Normalize each occurrence before averaging instead of only the mean.
    pub normalize_instances: bool,
    /// Words with fewer occurrences are reported, not featurized.
    pub min_count: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            normalize_instances: false,
            min_count: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub requested: usize,
    pub covered: usize,
    pub missing: usize,
    pub below_min_count: usize,
    pub degenerate: usize,
}

/// Unit-length averaged features for a set of words, plus the words that
/// could not be featurized and why.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub features: BTreeMap<String, WordFeature>,
    /// Requested words with no occurrence at all.
    pub missing: BTreeSet<String>,
    pub below_min_count: BTreeSet<String>,
    /// Words whose mean vector is zero.
    pub degenerate: BTreeSet<String>,
}

impl FeatureTable {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.features.get(word).map(|f| f.mean_vector.as_slice())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.features.contains_key(word)
    }

    pub fn coverage(&self) -> Coverage {
        let covered = self.features.len();
        Coverage {
            requested: covered + self.missing.len() + self.below_min_count.len() + self.degenerate.len(),
            covered,
            missing: self.missing.len(),
            below_min_count: self.below_min_count.len(),
            degenerate: self.degenerate.len(),
        }
    }

    /// Build a table from already unit-normalized vectors.
    pub fn from_vectors<I>(dim: usize, vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = FeatureTable {
            dim,
            ..Default::default()
        };
        for (word, v) in vectors {
            if v.len() != dim {
                return Err(Error::dimension(dim, v.len(), format!("feature `{word}`")));
            }
            let mean_vector = normalize_unit(&v)?;
            table.features.insert(
                word.clone(),
                WordFeature {
                    word,
                    mean_vector,
                    instance_count: 1,
                },
            );
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path, header: &EmbeddingHeader, opts: &FeatureOptions) -> Result<()> {
        let mut out = create_maybe_gzip(path)?;
        let io = |e| Error::io(path, e);
        let head = FeatureHeader {
            format: FEATURE_FORMAT.to_string(),
            dim: self.dim,
            model: header.model.clone(),
            masked: header.masked,
            layer_rule: header.layer_rule.clone(),
            normalize_instances: opts.normalize_instances,
            min_count: opts.min_count,
        };
        serde_json::to_writer(&mut out, &head)?;
        out.write_all(b"\n").map_err(io)?;
        for f in self.features.values() {
            serde_json::to_writer(&mut out, f)?;
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut lines = open_maybe_gzip(path)?.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse(&name, 1, "missing header line"))?
            .map_err(|e| Error::parse(&name, 1, e.to_string()))?;
        let head: FeatureHeader =
            serde_json::from_str(&first).map_err(|e| Error::parse(&name, 1, format!("bad header: {e}")))?;
        if head.format != FEATURE_FORMAT {
            return Err(Error::parse(&name, 1, format!("unsupported format `{}`", head.format)));
        }
        let mut table = FeatureTable {
            dim: head.dim,
            ..Default::default()
        };
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::parse(&name, lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: WordFeature =
                serde_json::from_str(&line).map_err(|e| Error::parse(&name, lineno, e.to_string()))?;
            if f.mean_vector.len() != head.dim {
                return Err(Error::parse(
                    &name,
                    lineno,
                    format!("feature `{}` has {} components, expected {}", f.word, f.mean_vector.len(), head.dim),
                ));
            }
            if f.mean_vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::parse(&name, lineno, format!("feature `{}` is not finite", f.word)));
            }
            table.features.insert(f.word.clone(), f);
        }
        Ok(table)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureHeader {
    format: String,
    dim: usize,
    model: String,
    masked: bool,
    layer_rule: String,
    normalize_instances: bool,
    min_count: usize,
}

/// Average the occurrences of each requested word and scale the mean to
/// unit length.
///
/// Records are consumed in order and each word's sum is accumulated in that
/// order, so an in-memory set and a streamed file give bit-identical results.
/// A multi-word lexicon entry matches records whose `token` is the full
/// entry; the extractor anchors such records on the entry's first word.
pub fn average_word_features<'a, I>(
    records: I,
    dim: usize,
    words: &[&str],
    opts: &FeatureOptions,
) -> Result<FeatureTable>
where
    I: IntoIterator<Item = Result<std::borrow::Cow<'a, EmbeddingRecord>>>,
{
    let wanted: BTreeSet<&str> = words.iter().copied().collect();
    let mut sums: HashMap<String, (Vec<f64>, usize)> = HashMap::new();

    for record in records {
        let record = record?;
        if record.vector.len() != dim {
            return Err(Error::dimension(dim, record.vector.len(), record.describe()));
        }
        let token = record.token.to_lowercase();
        if !wanted.contains(token.as_str()) {
            continue;
        }
        let normalized;
        let v: &[f64] = if opts.normalize_instances {
            normalized = match normalize_unit(&record.vector) {
                Ok(n) => n,
                Err(Error::ZeroVector) => continue,
                Err(e) => return Err(e),
            };
            &normalized
        } else {
            &record.vector
        };
        let entry = sums.entry(token).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, x) in entry.0.iter_mut().zip(v) {
            *s += x;
        }
        entry.1 += 1;
    }

    let mut table = FeatureTable {
        dim,
        ..Default::default()
    };
    for &word in &wanted {
        let Some((sum, count)) = sums.remove(word) else {
            table.missing.insert(word.to_string());
            continue;
        };
        if count < opts.min_count.max(1) {
            table.below_min_count.insert(word.to_string());
            continue;
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
        match normalize_unit(&mean) {
            Ok(mean_vector) => {
                table.features.insert(
                    word.to_string(),
                    WordFeature {
                        word: word.to_string(),
                        mean_vector,
                        instance_count: count,
                    },
                );
            }
            Err(Error::ZeroVector) => {
                table.degenerate.insert(word.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

/// [`average_word_features`] over an in-memory set.
pub fn average_set_features(set: &EmbeddingSet, words: &[&str], opts: &FeatureOptions) -> Result<FeatureTable> {
    average_word_features(
        set.records().iter().map(|r| Ok(std::borrow::Cow::Borrowed(r))),
        set.dim(),
        words,
        opts,
    )
}

/// [`average_word_features`] streamed from a file without loading it whole.
pub fn average_file_features(path: &Path, words: &[&str], opts: &FeatureOptions) -> Result<(EmbeddingHeader, FeatureTable)> {
    let reader = EmbeddingReader::open(path)?;
    let header = reader.header().clone();
    let table = average_word_features(
        reader.map(|r| r.map(std::borrow::Cow::Owned)),
        header.dim,
        words,
        opts,
    )?;
    Ok((header, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(token: &str, sent: u64, idx: u64, v: &[f64]) -> EmbeddingRecord {
        EmbeddingRecord {
            token: token.into(),
            doc_id: "d".into(),
            sent_id: sent,
            token_index: idx,
            vector: v.to_vec(),
        }
    }

    fn set(dim: usize, records: Vec<EmbeddingRecord>) -> EmbeddingSet {
        EmbeddingSet::new(EmbeddingHeader::new(dim, "toy", false, "none"), records).unwrap()
    }

    fn load_str(text: &str) -> Result<EmbeddingSet> {
        let cursor = std::io::Cursor::new(text.as_bytes().to_vec());
        let reader = EmbeddingReader::from_reader(Box::new(BufReader::new(cursor)), "mem")?;
        let header = reader.header().clone();
        let records = reader.collect::<Result<Vec<_>>>()?;
        EmbeddingSet::new(header, records)
    }

    const HEADER4: &str = r#"{"format":"affect-embeddings/1","dim":4,"model":"m","masked":false,"layer_rule":"middle-layer"}"#;

    #[test]
    fn parses_one_record() {
        let text = format!("{HEADER4}\n{}\n", r#"{"token":"a","doc":"x","sent":0,"idx":1,"vec":[1,2,3,4]}"#);
        let s = load_str(&text).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.get("x", 0, 1).unwrap().vector, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn short_vector_is_a_dimension_error() {
        let text = format!("{HEADER4}\n{}\n", r#"{"token":"a","doc":"x","sent":0,"idx":1,"vec":[1,2,3]}"#);
        let err = load_str(&text).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("expected 4, got 3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_record_section_is_valid() {
        let s = load_str(&format!("{HEADER4}\n")).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.dim(), 4);
    }

    #[test]
    fn rejects_unknown_format_and_non_finite() {
        assert!(load_str(r#"{"format":"other","dim":2,"model":"m","masked":false,"layer_rule":"x"}"#).is_err());
        let bad = EmbeddingSet::new(
            EmbeddingHeader::new(2, "m", false, "x"),
            vec![rec("a", 0, 0, &[f64::NAN, 1.0])],
        );
        assert!(matches!(bad, Err(Error::NonFinite(_))));
    }

    #[test]
    fn gzip_is_detected_by_magic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let header = EmbeddingHeader::new(2, "m", true, "mean-pool-all-layers");
        let records = vec![rec("a", 0, 0, &[0.1, 1.0 / 3.0]), rec("b", 0, 1, &[1e-300, -2.5])];
        // Compressed content under a name without a .gz suffix.
        let gz_path = dir.path().join("emb.gz");
        write_embeddings(&gz_path, &header, &records).unwrap();
        let renamed = dir.path().join("emb.jsonl");
        std::fs::rename(&gz_path, &renamed).unwrap();
        let loaded = load_embeddings(&renamed).unwrap();
        assert_eq!(loaded.header(), &header);
        assert_eq!(loaded.records(), records.as_slice());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_unit(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        let u = [0.6, 0.8];
        assert_eq!(normalize_unit(&u).unwrap(), u.to_vec());
        assert!(matches!(normalize_unit(&[0.0, 0.0]), Err(Error::ZeroVector)));
        let big = normalize_unit(&[1e300, 1e300]).unwrap();
        assert!((norm2(&big) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn averaging_examples() {
        let s = set(
            2,
            vec![
                rec("a", 0, 0, &[1.0, 0.0]),
                rec("a", 1, 0, &[0.0, 1.0]),
                rec("b", 2, 0, &[0.0, 3.0]),
            ],
        );
        let t = average_set_features(&s, &["a", "b", "zzz"], &FeatureOptions::default()).unwrap();
        let a = t.get("a").unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a[0] - h).abs() < 1e-15 && (a[1] - h).abs() < 1e-15);
        assert_eq!(t.features["a"].instance_count, 2);
        assert_eq!(t.get("b").unwrap(), &[0.0, 1.0]);
        assert!(t.missing.contains("zzz"));
        assert_eq!(
            t.coverage(),
            Coverage {
                requested: 3,
                covered: 2,
                missing: 1,
                below_min_count: 0,
                degenerate: 0
            }
        );
    }

    #[test]
    fn min_count_and_degenerate_words_are_reported() {
        let s = set(
            2,
            vec![
                rec("a", 0, 0, &[1.0, 0.0]),
                rec("b", 1, 0, &[1.0, 1.0]),
                rec("b", 2, 0, &[-1.0, -1.0]),
            ],
        );
        let opts = FeatureOptions {
            normalize_instances: false,
            min_count: 2,
        };
        let t = average_set_features(&s, &["a", "b"], &opts).unwrap();
        assert!(t.below_min_count.contains("a"));
        assert!(t.degenerate.contains("b"));
        assert!(t.features.is_empty());
    }

    #[test]
    fn instance_normalization_changes_weighting() {
        let s = set(2, vec![rec("a", 0, 0, &[10.0, 0.0]), rec("a", 1, 0, &[0.0, 1.0])]);
        let raw = average_set_features(&s, &["a"], &FeatureOptions::default()).unwrap();
        let per = average_set_features(
            &s,
            &["a"],
            &FeatureOptions {
                normalize_instances: true,
                min_count: 1,
            },
        )
        .unwrap();
        assert!(raw.get("a").unwrap()[0] > 0.99);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((per.get("a").unwrap()[0] - h).abs() < 1e-15);
    }

    #[test]
    fn feature_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = set(3, vec![rec("a", 0, 0, &[1.0, 2.0, 3.0]), rec("b", 0, 1, &[0.1, 0.2, 0.7])]);
        let opts = FeatureOptions::default();
        let t = average_set_features(&s, &["a", "b"], &opts).unwrap();
        let path = dir.path().join("f.jsonl");
        t.write(&path, s.header(), &opts).unwrap();
        let back = FeatureTable::load(&path).unwrap();
        assert_eq!(back.features, t.features);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(-1e3..1e3f64, 1..20)) {
            prop_assume!(norm2(&v) > 1e-9);
            let once = normalize_unit(&v).unwrap();
            let twice = normalize_unit(&once).unwrap();
            prop_assert!((norm2(&once) - 1.0).abs() <= 1e-12);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn averaging_ignores_record_order(
            vs in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 1..12),
            seed in any::<u64>(),
        ) {
            let records: Vec<_> = vs.iter().enumerate().map(|(i, v)| rec("w", i as u64, 0, v)).collect();
            let mut shuffled = records.clone();
            crate::rng::SplitMix64::new(seed).shuffle(&mut shuffled);
            let a = average_set_features(&set(4, records), &["w"], &FeatureOptions::default()).unwrap();
            let b = average_set_features(&set(4, shuffled), &["w"], &FeatureOptions::default()).unwrap();
            match (a.get("w"), b.get("w")) {
                (Some(x), Some(y)) => {
                    prop_assert!((norm2(x) - 1.0).abs() <= 1e-12);
                    for (p, q) in x.iter().zip(y) {
                        prop_assert!((p - q).abs() <= 1e-12);
                    }
                }
                (None, None) => {}
                _ => prop_assert!(false, "coverage depends on order"),
            }
        }
    }
}
