//! The pipeline commands behind the `affectlens` binary.
//!
//! Each command reads its inputs, writes its outputs and a `manifest.json`
//! into an output directory, and returns a [`RunSummary`]. Argument structs
//! serialize into the manifest's `config`; the output directory is left out
//! so reruns into different directories produce identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::asp::{fit_subspace, AffectSubspace, AspConfig, PolarPair};
use crate::backend::{Backend, BackendKind, DimScores};
use crate::embeddings::{average_file_features, load_embeddings, Coverage, FeatureOptions, FeatureTable};
use crate::entities::{
    combined_score, load_entities, score_entity, Corpus, EntityProfile, Normalization, ScoringMode,
    ScoringOptions,
};
use crate::error::{Error, Result};
use crate::krr::{KrrConfig, KrrModel};
use crate::lexicon::{load_lexicon, split_lexicon, AffectDimension, AffectLexicon, SplitLabel, SplitManifest, SplitSizes};
use crate::metrics::{load_annotations, pairwise_power_accuracy, pearson, permutation_p_value, spearman, EvalReport, PairwiseAccuracy, RankAnnotation};
use crate::report::{fmt_f64, Manifest, RunRecorder};
use crate::synth::{write_toy_corpus, ToyConfig, TOY_FILES};

#[derive(Debug)]
pub struct RunSummary {
    pub manifest: Manifest,
    /// Non-fatal problems, e.g. entities without mentions.
    pub warnings: Vec<String>,
}

fn finish<C: Serialize>(rec: RunRecorder, config: &C, warnings: Vec<String>) -> Result<RunSummary> {
    Ok(RunSummary {
        manifest: rec.finish(config)?,
        warnings,
    })
}

/// Lexicon path plus optional split manifest.
#[derive(Clone, Debug, Serialize)]
pub struct LexiconInput {
    pub path: PathBuf,
    /// First line is a column header.
    pub header: bool,
    pub split: Option<PathBuf>,
}

impl LexiconInput {
    fn load(&self, rec: &mut RunRecorder, need_split: bool) -> Result<AffectLexicon> {
        rec.input("lexicon", &self.path)?;
        let lex = load_lexicon(&self.path, self.header)?;
        match &self.split {
            Some(p) => {
                rec.input("split", p)?;
                lex.with_split(&SplitManifest::load(p)?)
            }
            None if need_split => Err(Error::Config("a split manifest (--split) is required".into())),
            None => Ok(lex),
        }
    }
}

fn load_features(rec: &mut RunRecorder, path: &Path) -> Result<FeatureTable> {
    rec.input("features", path)?;
    FeatureTable::load(path)
}

/// Scored words of one split that have features, in word order, and the
/// words that lack them.
fn covered_scored(
    lex: &AffectLexicon,
    label: SplitLabel,
    dim: AffectDimension,
    features: &FeatureTable,
) -> (Vec<(String, f64)>, Vec<String>) {
    let (covered, missing): (Vec<_>, Vec<_>) =
        lex.scored(label, dim).into_iter().partition(|(w, _)| features.contains(w));
    (covered, missing.into_iter().map(|(w, _)| w).collect())
}

fn require_dims(dims: &[AffectDimension]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::Config("no affect dimensions selected".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- split-lexicon

#[derive(Clone, Debug, Serialize)]
pub struct SplitArgs {
    pub lexicon: PathBuf,
    pub header: bool,
    pub seed: u64,
    /// (train, dev, test); defaults to the 20,007-entry layout when it fits,
    /// otherwise 80/10/10.
    pub sizes: Option<[usize; 3]>,
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn split_lexicon_cmd(args: &SplitArgs) -> Result<RunSummary> {
    let mut rec = RunRecorder::new("split-lexicon", args.seed, &args.out)?;
    rec.input("lexicon", &args.lexicon)?;
    let lex = load_lexicon(&args.lexicon, args.header)?;
    let sizes = match args.sizes {
        Some([train, dev, test]) => SplitSizes { train, dev, test },
        None if lex.len() == SplitSizes::NRC_VAD.total() => SplitSizes::NRC_VAD,
        None => SplitSizes::proportional(lex.len()),
    };
    let split = split_lexicon(&lex, sizes, args.seed)?;
    let manifest = split.split_manifest().expect("split lexicon has a manifest");
    rec.write_json("split.json", &manifest)?;
    finish(rec, args, vec![])
}

// ---------------------------------------------------------------- build-features

#[derive(Clone, Debug, Serialize)]
pub struct FeaturesArgs {
    pub lexicon: LexiconInput,
    pub embeddings: PathBuf,
    pub options: FeatureOptions,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct CoverageReport<'a> {
    seed: u64,
    coverage: Coverage,
    by_split: BTreeMap<SplitLabel, Coverage>,
    missing: &'a std::collections::BTreeSet<String>,
    below_min_count: &'a std::collections::BTreeSet<String>,
    degenerate: &'a std::collections::BTreeSet<String>,
}

pub fn build_features_cmd(args: &FeaturesArgs) -> Result<RunSummary> {
    let mut rec = RunRecorder::new("build-features", args.seed, &args.out)?;
    let lex = args.lexicon.load(&mut rec, false)?;
    rec.input("embeddings", &args.embeddings)?;
    let words: Vec<&str> = lex.words().collect();
    let (header, table) = average_file_features(&args.embeddings, &words, &args.options)?;
    let path = rec.output("features.jsonl");
    table.write(&path, &header, &args.options)?;

    let mut by_split = BTreeMap::new();
    if lex.is_split() {
        for label in [SplitLabel::Train, SplitLabel::Dev, SplitLabel::Test] {
            let in_split = lex.words_in(label);
            let c = |set: &std::collections::BTreeSet<String>| in_split.iter().filter(|w| set.contains(**w)).count();
            by_split.insert(
                label,
                Coverage {
                    requested: in_split.len(),
                    covered: in_split.iter().filter(|w| table.contains(w)).count(),
                    missing: c(&table.missing),
                    below_min_count: c(&table.below_min_count),
                    degenerate: c(&table.degenerate),
                },
            );
        }
    }
    let mut warnings = Vec::new();
    if table.coverage().covered == 0 {
        warnings.push("no lexicon word has an embedding record".to_string());
    }
    rec.write_json(
        "coverage.json",
        &CoverageReport {
            seed: args.seed,
            coverage: table.coverage(),
            by_split,
            missing: &table.missing,
            below_min_count: &table.below_min_count,
            degenerate: &table.degenerate,
        },
    )?;
    finish(rec, args, warnings)
}

// ---------------------------------------------------------------- fit-krr

#[derive(Clone, Debug, Serialize)]
pub struct FitKrrArgs {
    pub lexicon: LexiconInput,
    pub features: PathBuf,
    pub dims: Vec<AffectDimension>,
    pub config: KrrConfig,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct FitSummary {
    n_train: usize,
    missing_features: usize,
    gram_residual: f64,
}

pub fn fit_krr_cmd(args: &FitKrrArgs) -> Result<RunSummary> {
    require_dims(&args.dims)?;
    args.config.validate()?;
    let mut rec = RunRecorder::new("fit-krr", args.seed, &args.out)?;
    let lex = args.lexicon.load(&mut rec, true)?;
    let features = load_features(&mut rec, &args.features)?;
    let mut summary = BTreeMap::new();
    for &dim in &args.dims {
        let (train, missing) = covered_scored(&lex, SplitLabel::Train, dim, &features);
        let rows: Vec<&[f64]> = train.iter().map(|(w, _)| features.get(w).expect("covered")).collect();
        let y: Vec<f64> = train.iter().map(|(_, s)| *s).collect();
        let model = KrrModel::fit(&rows, &y, args.config, dim)?;
        let residual = model.gram_residual(&y);
        model.save(&rec.output(&BackendKind::Krr.model_file_name(dim)))?;
        summary.insert(
            dim,
            FitSummary {
                n_train: train.len(),
                missing_features: missing.len(),
                gram_residual: residual,
            },
        );
    }
    rec.write_json("fit-krr.json", &serde_json::json!({"seed": args.seed, "models": summary}))?;
    finish(rec, args, vec![])
}

// ---------------------------------------------------------------- build-asp

/// Per-dimension ASP sizes, each overridable for all dimensions at once.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct AspOverrides {
    pub n_low: Option<usize>,
    pub n_high: Option<usize>,
    pub n_pairs: Option<usize>,
}

impl AspOverrides {
    pub fn config(&self, dim: AffectDimension) -> AspConfig {
        let d = AspConfig::for_dimension(dim);
        AspConfig {
            n_low: self.n_low.unwrap_or(d.n_low),
            n_high: self.n_high.unwrap_or(d.n_high),
            n_pairs: self.n_pairs.unwrap_or(d.n_pairs),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BuildAspArgs {
    pub lexicon: LexiconInput,
    pub features: PathBuf,
    pub dims: Vec<AffectDimension>,
    pub sizes: AspOverrides,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct AspSummary {
    config: AspConfig,
    n_candidates: usize,
    variance_spectrum: Vec<f64>,
    orientation_checked: bool,
}

pub fn build_asp_cmd(args: &BuildAspArgs) -> Result<RunSummary> {
    require_dims(&args.dims)?;
    let mut rec = RunRecorder::new("build-asp", args.seed, &args.out)?;
    let lex = args.lexicon.load(&mut rec, true)?;
    let features = load_features(&mut rec, &args.features)?;
    let mut summary = BTreeMap::new();
    let mut warnings = Vec::new();
    for &dim in &args.dims {
        let cfg = args.sizes.config(dim);
        cfg.validate()?;
        let (train, _) = covered_scored(&lex, SplitLabel::Train, dim, &features);
        let sub = fit_subspace(&train, &features, dim, &cfg)?;
        if !sub.orientation_checked {
            warnings.push(format!("{dim}: polar sets do not separate along the direction; sign fixed by convention"));
        }
        sub.save(&rec.output(&BackendKind::Asp.model_file_name(dim)))?;
        summary.insert(
            dim,
            AspSummary {
                config: cfg,
                n_candidates: train.len(),
                variance_spectrum: sub.variance_spectrum.clone(),
                orientation_checked: sub.orientation_checked,
            },
        );
    }
    rec.write_json("build-asp.json", &serde_json::json!({"seed": args.seed, "subspaces": summary}))?;
    finish(rec, args, warnings)
}

// ---------------------------------------------------------------- eval-lexicon

#[derive(Clone, Debug, Serialize)]
pub struct EvalArgs {
    pub lexicon: LexiconInput,
    pub features: PathBuf,
    pub backend: BackendKind,
    pub models: PathBuf,
    pub dims: Vec<AffectDimension>,
    pub split: SplitLabel,
    /// Permutations for the significance note; 0 disables it.
    pub permutations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

fn record_models(rec: &mut RunRecorder, kind: BackendKind, dir: &Path, dims: &[AffectDimension]) -> Result<Backend> {
    for &d in dims {
        rec.input(&format!("model:{d}"), &dir.join(kind.model_file_name(d)))?;
    }
    Backend::load_dir(kind, dir, dims)
}

fn p_note(x: &[f64], y: &[f64], n: usize, seed: u64, stat: fn(&[f64], &[f64]) -> Result<f64>) -> Result<Option<String>> {
    if n == 0 {
        return Ok(None);
    }
    let p = permutation_p_value(x, y, n, seed, stat)?;
    Ok(Some(format!("permutation p = {p:.6} ({n} permutations, seed {seed})")))
}

pub fn eval_lexicon_cmd(args: &EvalArgs) -> Result<RunSummary> {
    require_dims(&args.dims)?;
    let mut rec = RunRecorder::new("eval-lexicon", args.seed, &args.out)?;
    let lex = args.lexicon.load(&mut rec, true)?;
    let features = load_features(&mut rec, &args.features)?;
    let backend = record_models(&mut rec, args.backend, &args.models, &args.dims)?;
    if backend.input_dim() != features.dim {
        return Err(Error::dimension(backend.input_dim(), features.dim, "features vs models"));
    }
    let mut reports = BTreeMap::new();
    let mut coverage = BTreeMap::new();
    for &dim in &args.dims {
        let (words, missing) = covered_scored(&lex, args.split, dim, &features);
        let gold: Vec<f64> = words.iter().map(|(_, s)| *s).collect();
        let scorer = backend.scorer(dim).expect("loaded");
        let pred: Vec<f64> = words
            .par_iter()
            .map(|(w, _)| scorer.score(features.get(w).expect("covered")))
            .collect::<Result<_>>()?;
        let r = pearson(&pred, &gold)?;
        reports.insert(
            dim,
            EvalReport {
                metric: "pearson".into(),
                value: r,
                n: words.len(),
                p_note: p_note(&pred, &gold, args.permutations, args.seed, pearson)?,
            },
        );
        coverage.insert(
            dim,
            serde_json::json!({"requested": words.len() + missing.len(), "covered": words.len(), "missing": missing}),
        );
    }
    rec.write_json(
        "eval-lexicon.json",
        &serde_json::json!({
            "seed": args.seed,
            "backend": args.backend,
            "split": args.split,
            "reports": reports,
            "coverage": coverage,
        }),
    )?;
    finish(rec, args, vec![])
}

// ---------------------------------------------------------------- entity commands

/// Inputs shared by the entity-level commands.
#[derive(Clone, Debug, Serialize)]
pub struct EntityInputs {
    pub embeddings: PathBuf,
    /// Sentence file; without it sentences are rebuilt from embedding tokens.
    pub corpus: Option<PathBuf>,
    pub entities: PathBuf,
    pub backend: BackendKind,
    pub models: PathBuf,
    pub mode: ScoringMode,
    pub options: ScoringOptions,
    pub dims: Vec<AffectDimension>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Omitted {
    pub entity: String,
    pub reason: String,
}

struct Scored {
    corpus: Corpus,
    profiles: Vec<EntityProfile>,
    omitted: Vec<Omitted>,
}

fn score_entities(inp: &EntityInputs, rec: &mut RunRecorder, doc: Option<&str>) -> Result<Scored> {
    require_dims(&inp.dims)?;
    rec.input("embeddings", &inp.embeddings)?;
    let set = load_embeddings(&inp.embeddings)?;
    let corpus = match &inp.corpus {
        Some(p) => {
            rec.input("corpus", p)?;
            Corpus::load(p)?
        }
        None => Corpus::from_embeddings(&set),
    };
    let corpus = match doc {
        Some(d) => {
            let c = corpus.document(d);
            if c.sentences().is_empty() {
                return Err(Error::Format(format!("document `{d}` not in corpus")));
            }
            c
        }
        None => corpus,
    };
    rec.input("entities", &inp.entities)?;
    let entities = load_entities(&inp.entities)?;
    let backend = record_models(rec, inp.backend, &inp.models, &inp.dims)?;

    let results: Vec<Result<EntityProfile>> = entities
        .par_iter()
        .map(|e| score_entity(e, &corpus, &set, &backend, inp.mode, &inp.options))
        .collect();
    let mut profiles = Vec::new();
    let mut omitted = Vec::new();
    for (e, r) in entities.iter().zip(results) {
        match r {
            Ok(p) => profiles.push(p),
            Err(Error::EntityNotFound(_)) => omitted.push(Omitted {
                entity: e.name.clone(),
                reason: "no mention with an embedding record".into(),
            }),
            Err(err) => return Err(err),
        }
    }
    Ok(Scored {
        corpus,
        profiles,
        omitted,
    })
}

fn omitted_warnings(omitted: &[Omitted]) -> Vec<String> {
    omitted.iter().map(|o| format!("entity `{}` omitted: {}", o.entity, o.reason)).collect()
}

/// Names ordered by descending value, ties by name.
fn ranking(values: &BTreeMap<String, f64>) -> Vec<String> {
    let mut v: Vec<(&String, f64)> = values.iter().map(|(k, &x)| (k, x)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(k, _)| k.clone()).collect()
}

fn positions(order: &[String]) -> BTreeMap<String, usize> {
    order.iter().enumerate().map(|(i, k)| (k.clone(), i + 1)).collect()
}

fn dim_header(dims: &[AffectDimension]) -> Vec<&'static str> {
    dims.iter().map(|d| d.name()).collect()
}

fn dim_cells(scores: &DimScores, dims: &[AffectDimension]) -> Vec<String> {
    dims.iter().map(|d| fmt_f64(scores[d])).collect()
}

// ---------------------------------------------------------------- rank-entities

#[derive(Clone, Debug, Serialize)]
pub struct RankArgs {
    pub inputs: EntityInputs,
    pub normalization: Normalization,
    /// Reference ranking in the annotation format (one rank per entity).
    pub reference: Option<PathBuf>,
    /// Human rank annotations for pairwise accuracy.
    pub annotations: Option<PathBuf>,
    pub max_disagreement: i64,
    pub permutations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankedEntity {
    pub entity: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub frequency: usize,
    pub scores: DimScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combined_power: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankingReport {
    pub seed: u64,
    pub backend: BackendKind,
    pub mode: ScoringMode,
    pub normalization: Normalization,
    pub entities: Vec<RankedEntity>,
    /// Entity names ordered from most to least, per score stream.
    pub rankings: BTreeMap<String, Vec<String>>,
    pub omitted: Vec<Omitted>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<EvalReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub pairwise: BTreeMap<String, PairwiseAccuracy>,
}

/// Score streams compared against power references and annotations.
pub const POWER_STREAMS: [&str; 3] = ["power", "frequency", "combined_power"];

/// Spearman between scores and a reference ranking; the reference's mean
/// ranks are negated so agreement is positive.
pub fn spearman_vs_reference(
    scores: &BTreeMap<String, f64>,
    reference: &[RankAnnotation],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (x, y): (Vec<f64>, Vec<f64>) = reference
        .iter()
        .filter_map(|a| scores.get(&a.entity).map(|&s| (s, -a.mean_rank())))
        .unzip();
    if x.len() < 2 {
        return Err(Error::InsufficientData("fewer than 2 scored reference entities".into()));
    }
    Ok((spearman(&x, &y)?, x, y))
}

pub fn rank_entities_cmd(args: &RankArgs) -> Result<RunSummary> {
    let mut rec = RunRecorder::new("rank-entities", args.seed, &args.out)?;
    let scored = score_entities(&args.inputs, &mut rec, None)?;
    let dims = &args.inputs.dims;

    let freq: BTreeMap<String, usize> = scored.profiles.iter().map(|p| (p.entity.name.clone(), p.frequency)).collect();
    let mut streams: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    streams.insert("frequency".into(), freq.iter().map(|(k, &v)| (k.clone(), v as f64)).collect());
    for &d in dims {
        streams.insert(
            d.name().into(),
            scored.profiles.iter().map(|p| (p.entity.name.clone(), p.scores[&d])).collect(),
        );
    }
    let mut warnings = omitted_warnings(&scored.omitted);
    let combined = match streams.get("power") {
        Some(power) if power.len() >= 2 => Some(combined_score(power, &freq, args.normalization)?),
        Some(_) => {
            warnings.push("combined power needs at least 2 scored entities".into());
            None
        }
        None => None,
    };
    if let Some(c) = &combined {
        streams.insert("combined_power".into(), c.clone());
    }

    let mut reference = Vec::new();
    if let Some(path) = &args.reference {
        rec.input("reference", path)?;
        let refs = load_annotations(path)?;
        for (name, values) in streams.iter().filter(|(k, _)| POWER_STREAMS.contains(&k.as_str())) {
            match spearman_vs_reference(values, &refs) {
                Ok((rho, x, y)) => reference.push(EvalReport {
                    metric: format!("spearman:{name}"),
                    value: rho,
                    n: x.len(),
                    p_note: p_note(&x, &y, args.permutations, args.seed, spearman)?,
                }),
                Err(e) => warnings.push(format!("spearman for {name} skipped: {e}")),
            }
        }
    }
    let mut pairwise = BTreeMap::new();
    if let Some(path) = &args.annotations {
        rec.input("annotations", path)?;
        let anns = load_annotations(path)?;
        for (name, values) in streams.iter().filter(|(k, _)| POWER_STREAMS.contains(&k.as_str())) {
            match pairwise_power_accuracy(&anns, values, args.max_disagreement) {
                Ok(acc) => {
                    pairwise.insert(name.clone(), acc);
                }
                Err(e) => warnings.push(format!("pairwise accuracy for {name} skipped: {e}")),
            }
        }
    }

    let entities: Vec<RankedEntity> = scored
        .profiles
        .iter()
        .map(|p| RankedEntity {
            entity: p.entity.name.clone(),
            group: p.entity.group.clone(),
            frequency: p.frequency,
            scores: p.scores.clone(),
            combined_power: combined.as_ref().map(|c| c[&p.entity.name]),
        })
        .collect();
    let report = RankingReport {
        seed: args.seed,
        backend: args.inputs.backend,
        mode: args.inputs.mode,
        normalization: args.normalization,
        rankings: streams.iter().map(|(k, v)| (k.clone(), ranking(v))).collect(),
        entities,
        omitted: scored.omitted,
        reference,
        pairwise,
    };
    rec.write_json("rankings.json", &report)?;

    let mut header = vec!["entity", "group", "frequency"];
    header.extend(dim_header(dims));
    if combined.is_some() {
        header.push("combined_power");
    }
    let rows: Vec<Vec<String>> = report
        .entities
        .iter()
        .map(|e| {
            let mut row = vec![e.entity.clone(), e.group.clone().unwrap_or_default(), e.frequency.to_string()];
            row.extend(dim_cells(&e.scores, dims));
            if let Some(c) = e.combined_power {
                row.push(fmt_f64(c));
            }
            row
        })
        .collect();
    rec.write_csv("rankings.csv", &header, &rows)?;
    finish(rec, args, warnings)
}

/// 1-based positions of every entity in each ranking stream of a report.
pub fn ranking_positions(report_rankings: &BTreeMap<String, Vec<String>>) -> BTreeMap<String, BTreeMap<String, usize>> {
    report_rankings.iter().map(|(k, v)| (k.clone(), positions(v))).collect()
}

// ---------------------------------------------------------------- profile-document

#[derive(Clone, Debug, Serialize)]
pub struct ProfileArgs {
    pub inputs: EntityInputs,
    /// Document to profile; may be omitted when the corpus has one document.
    pub doc: Option<String>,
    pub k_sentences: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepresentativeSentence {
    pub doc: String,
    pub sent: u64,
    pub idx: u64,
    pub score: f64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Representatives {
    pub entity: String,
    pub dimension: AffectDimension,
    pub max: Vec<RepresentativeSentence>,
    pub min: Vec<RepresentativeSentence>,
}

/// The `k` highest and lowest scoring sentences for one entity and
/// dimension, one entry per sentence (its most extreme mention). Ties are
/// broken by position in the corpus.
pub fn representative_sentences(profile: &EntityProfile, dim: AffectDimension, corpus: &Corpus, k: usize) -> Representatives {
    let mut mentions: Vec<_> = profile.mentions.iter().map(|m| (m.scores[&dim], m)).collect();
    let pick = |sorted: &[(f64, &crate::entities::MentionScore)]| {
        let mut seen = std::collections::BTreeSet::new();
        sorted
            .iter()
            .filter(|(_, m)| seen.insert((m.doc.clone(), m.sent)))
            .take(k)
            .map(|(s, m)| RepresentativeSentence {
                doc: m.doc.clone(),
                sent: m.sent,
                idx: m.idx,
                score: *s,
                text: corpus.sentence(&m.doc, m.sent).map(|s| s.text.clone()).unwrap_or_default(),
            })
            .collect::<Vec<_>>()
    };
    let pos = |m: &crate::entities::MentionScore| (m.doc.clone(), m.sent, m.idx);
    mentions.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| pos(a.1).cmp(&pos(b.1))));
    let max = pick(&mentions);
    mentions.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| pos(a.1).cmp(&pos(b.1))));
    let min = pick(&mentions);
    Representatives {
        entity: profile.entity.name.clone(),
        dimension: dim,
        max,
        min,
    }
}

pub fn profile_document_cmd(args: &ProfileArgs) -> Result<RunSummary> {
    if args.k_sentences == 0 {
        return Err(Error::Config("--k-sentences must be positive".into()));
    }
    let mut rec = RunRecorder::new("profile-document", args.seed, &args.out)?;
    let doc = match &args.doc {
        Some(d) => d.clone(),
        None => {
            // Resolve the single document before scoring.
            let corpus = match &args.inputs.corpus {
                Some(p) => Corpus::load(p)?,
                None => Corpus::from_embeddings(&load_embeddings(&args.inputs.embeddings)?),
            };
            let docs = corpus.documents();
            match docs.as_slice() {
                [one] => one.to_string(),
                _ => return Err(Error::Config(format!("corpus has {} documents; pass --doc", docs.len()))),
            }
        }
    };
    let scored = score_entities(&args.inputs, &mut rec, Some(&doc))?;
    let dims = &args.inputs.dims;

    let reps: Vec<Representatives> = scored
        .profiles
        .iter()
        .flat_map(|p| dims.iter().map(|&d| representative_sentences(p, d, &scored.corpus, args.k_sentences)))
        .collect();
    rec.write_json(
        "profiles.json",
        &serde_json::json!({
            "seed": args.seed,
            "doc": doc,
            "backend": args.inputs.backend,
            "mode": args.inputs.mode,
            "profiles": scored.profiles,
            "omitted": scored.omitted,
        }),
    )?;
    rec.write_json(
        "representative-sentences.json",
        &serde_json::json!({"seed": args.seed, "doc": doc, "k": args.k_sentences, "sentences": reps}),
    )?;

    let mut header = vec!["entity", "frequency"];
    header.extend(dim_header(dims));
    let rows: Vec<Vec<String>> = scored
        .profiles
        .iter()
        .map(|p| {
            let mut row = vec![p.entity.name.clone(), p.frequency.to_string()];
            row.extend(dim_cells(&p.scores, dims));
            row
        })
        .collect();
    rec.write_csv("scores.csv", &header, &rows)?;

    let mut header = vec!["entity", "doc", "sent", "idx"];
    header.extend(dim_header(dims));
    let rows: Vec<Vec<String>> = scored
        .profiles
        .iter()
        .flat_map(|p| {
            p.mentions.iter().map(move |m| {
                let mut row = vec![p.entity.name.clone(), m.doc.clone(), m.sent.to_string(), m.idx.to_string()];
                row.extend(dim_cells(&m.scores, dims));
                row
            })
        })
        .collect();
    rec.write_csv("mentions.csv", &header, &rows)?;
    finish(rec, args, omitted_warnings(&scored.omitted))
}

// ---------------------------------------------------------------- compare-groups

#[derive(Clone, Debug, Serialize)]
pub struct GroupArgs {
    pub inputs: EntityInputs,
    /// Groups to report, in order; defaults to every label present.
    pub groups: Option<Vec<String>>,
    pub normalization: Normalization,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupComparison {
    pub group: String,
    pub members: Vec<String>,
    pub means: DimScores,
}

/// Arithmetic means per group over member scores, summed in member order.
pub fn group_means(
    members: &[(String, String, DimScores)],
    groups: &[String],
    dims: &[AffectDimension],
) -> Result<Vec<GroupComparison>> {
    groups
        .iter()
        .map(|g| {
            let in_group: Vec<&(String, String, DimScores)> = members.iter().filter(|m| &m.1 == g).collect();
            if in_group.is_empty() {
                return Err(Error::InsufficientData(format!("group `{g}` has no scored entities")));
            }
            let means = dims
                .iter()
                .map(|&d| {
                    let sum: f64 = in_group.iter().map(|m| m.2[&d]).sum();
                    (d, sum / in_group.len() as f64)
                })
                .collect();
            Ok(GroupComparison {
                group: g.clone(),
                members: in_group.iter().map(|m| m.0.clone()).collect(),
                means,
            })
        })
        .collect()
}

pub fn compare_groups_cmd(args: &GroupArgs) -> Result<RunSummary> {
    let mut rec = RunRecorder::new("compare-groups", args.seed, &args.out)?;
    let scored = score_entities(&args.inputs, &mut rec, None)?;
    let dims = &args.inputs.dims;
    let mut members = Vec::new();
    for p in &scored.profiles {
        let group = p
            .entity
            .group
            .clone()
            .ok_or_else(|| Error::Format(format!("entity `{}` has no group label", p.entity.name)))?;
        members.push((p.entity.name.clone(), group, p.scores.clone()));
    }
    let groups = match &args.groups {
        Some(g) => g.clone(),
        None => {
            let mut g: Vec<String> = members.iter().map(|m| m.1.clone()).collect();
            g.sort();
            g.dedup();
            g
        }
    };
    let comparisons = group_means(&members, &groups, dims)?;

    let freq: BTreeMap<String, usize> = scored.profiles.iter().map(|p| (p.entity.name.clone(), p.frequency)).collect();
    let combined = if dims.contains(&AffectDimension::Power) && scored.profiles.len() >= 2 {
        let power: BTreeMap<String, f64> =
            members.iter().map(|m| (m.0.clone(), m.2[&AffectDimension::Power])).collect();
        Some(combined_score(&power, &freq, args.normalization)?)
    } else {
        None
    };

    let entities: Vec<serde_json::Value> = members
        .iter()
        .map(|(name, group, scores)| {
            let mut v = serde_json::json!({"entity": name, "group": group, "frequency": freq[name], "scores": scores});
            if let Some(c) = &combined {
                v["combined_power"] = serde_json::json!(c[name]);
            }
            v
        })
        .collect();
    rec.write_json(
        "groups.json",
        &serde_json::json!({
            "seed": args.seed,
            "backend": args.inputs.backend,
            "mode": args.inputs.mode,
            "groups": comparisons,
            "entities": entities,
            "omitted": scored.omitted,
        }),
    )?;
    let mut header = vec!["entity", "group", "frequency"];
    header.extend(dim_header(dims));
    if combined.is_some() {
        header.push("combined_power");
    }
    let rows: Vec<Vec<String>> = members
        .iter()
        .map(|(name, group, scores)| {
            let mut row = vec![name.clone(), group.clone(), freq[name].to_string()];
            row.extend(dim_cells(scores, dims));
            if let Some(c) = &combined {
                row.push(fmt_f64(c[name]));
            }
            row
        })
        .collect();
    rec.write_csv("groups.csv", &header, &rows)?;
    finish(rec, args, omitted_warnings(&scored.omitted))
}

// ---------------------------------------------------------------- diagnose-subspace

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseArgs {
    pub models: PathBuf,
    pub dims: Vec<AffectDimension>,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubspaceDiagnostics {
    pub variance_spectrum: Vec<f64>,
    /// PC1 explains strictly more variance than every other component.
    pub pc1_dominant: bool,
    pub n_pairs: usize,
    pub mean_pair_cosine: f64,
    pub orientation_checked: bool,
}

pub fn diagnose(sub: &AffectSubspace) -> SubspaceDiagnostics {
    let s = &sub.variance_spectrum;
    let n = sub.pairs.len();
    SubspaceDiagnostics {
        variance_spectrum: s.clone(),
        pc1_dominant: !s.is_empty() && s[1..].iter().all(|&v| s[0] > v),
        n_pairs: n,
        mean_pair_cosine: if n == 0 { 0.0 } else { sub.pairs.iter().map(|p| p.cosine).sum::<f64>() / n as f64 },
        orientation_checked: sub.orientation_checked,
    }
}

pub fn diagnose_subspace_cmd(args: &DiagnoseArgs) -> Result<RunSummary> {
    require_dims(&args.dims)?;
    let mut rec = RunRecorder::new("diagnose-subspace", args.seed, &args.out)?;
    let mut diags = BTreeMap::new();
    let mut tsv = String::from("dimension\thigh\tlow\tcos\n");
    for &dim in &args.dims {
        let path = args.models.join(BackendKind::Asp.model_file_name(dim));
        rec.input(&format!("model:{dim}"), &path)?;
        let sub = AffectSubspace::load(&path)?;
        for PolarPair { high, low, cosine } in &sub.pairs {
            tsv.push_str(&format!("{dim}\t{high}\t{low}\t{}\n", fmt_f64(*cosine)));
        }
        diags.insert(dim, diagnose(&sub));
    }
    rec.write_json("diagnostics.json", &serde_json::json!({"seed": args.seed, "subspaces": diags}))?;
    rec.write_text("pairs.tsv", &tsv)?;
    finish(rec, args, vec![])
}

// ---------------------------------------------------------------- sweep-asp

#[derive(Clone, Debug, Serialize)]
pub struct SweepArgs {
    pub lexicon: LexiconInput,
    pub features: PathBuf,
    pub dims: Vec<AffectDimension>,
    pub n_low: Vec<usize>,
    pub n_high: Vec<usize>,
    pub n_pairs: Vec<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub config: AspConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_pearson: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Highest dev Pearson; the earliest grid point wins ties.
    pub best: Option<SweepPoint>,
}

pub fn sweep_asp_cmd(args: &SweepArgs) -> Result<RunSummary> {
    require_dims(&args.dims)?;
    if args.n_low.is_empty() || args.n_high.is_empty() || args.n_pairs.is_empty() {
        return Err(Error::Config("every sweep grid needs at least one value".into()));
    }
    let mut rec = RunRecorder::new("sweep-asp", args.seed, &args.out)?;
    let lex = args.lexicon.load(&mut rec, true)?;
    let features = load_features(&mut rec, &args.features)?;
    let mut grid = Vec::new();
    for &n_low in &args.n_low {
        for &n_high in &args.n_high {
            for &n_pairs in &args.n_pairs {
                let cfg = AspConfig { n_low, n_high, n_pairs };
                if cfg.validate().is_ok() {
                    grid.push(cfg);
                }
            }
        }
    }
    if grid.is_empty() {
        return Err(Error::Config("no valid (n_low, n_high, n_pairs) combination in the grid".into()));
    }
    let mut results = BTreeMap::new();
    for &dim in &args.dims {
        let (train, _) = covered_scored(&lex, SplitLabel::Train, dim, &features);
        let (dev, _) = covered_scored(&lex, SplitLabel::Dev, dim, &features);
        let gold: Vec<f64> = dev.iter().map(|(_, s)| *s).collect();
        let points: Vec<SweepPoint> = grid
            .par_iter()
            .map(|cfg| {
                let outcome = fit_subspace(&train, &features, dim, cfg).and_then(|sub| {
                    let pred: Vec<f64> = dev
                        .iter()
                        .map(|(w, _)| sub.project(features.get(w).expect("covered")))
                        .collect::<Result<_>>()?;
                    pearson(&pred, &gold)
                });
                match outcome {
                    Ok(r) => SweepPoint { config: *cfg, dev_pearson: Some(r), error: None },
                    Err(e) => SweepPoint { config: *cfg, dev_pearson: None, error: Some(e.to_string()) },
                }
            })
            .collect();
        let best = points
            .iter()
            .filter(|p| p.dev_pearson.is_some())
            .fold(None::<&SweepPoint>, |best, p| match best {
                Some(b) if b.dev_pearson >= p.dev_pearson => Some(b),
                _ => Some(p),
            })
            .cloned();
        results.insert(dim, SweepResult { points, best });
    }
    rec.write_json("sweep.json", &serde_json::json!({"seed": args.seed, "results": results}))?;
    finish(rec, args, vec![])
}

// ---------------------------------------------------------------- synth-toy

#[derive(Clone, Debug, Serialize)]
pub struct SynthArgs {
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn synth_toy_cmd(args: &SynthArgs) -> Result<RunSummary> {
    let mut rec = RunRecorder::new("synth-toy", args.seed, &args.out)?;
    let cfg = ToyConfig {
        seed: args.seed,
        ..ToyConfig::default()
    };
    write_toy_corpus(rec.out_dir(), &cfg)?;
    for f in TOY_FILES {
        rec.output(f);
    }
    finish(rec, args, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entities::{EntitySpec, MentionScore};

    fn profile(name: &str, mentions: &[(u64, f64)]) -> EntityProfile {
        let ms: Vec<MentionScore> = mentions
            .iter()
            .map(|&(sent, s)| MentionScore {
                doc: "d".into(),
                sent,
                idx: 0,
                scores: [(AffectDimension::Sentiment, s)].into(),
            })
            .collect();
        EntityProfile {
            entity: EntitySpec::new(name, &[&[name]]).unwrap(),
            mode: ScoringMode::AveragedEmbedding,
            backend: BackendKind::Asp,
            scores: [(AffectDimension::Sentiment, 0.0)].into(),
            frequency: ms.len(),
            mentions: ms,
            diagnostics: crate::entities::ProfileDiagnostics {
                alternate_mode: ScoringMode::PerInstanceAveraged,
                alternate_scores: [(AffectDimension::Sentiment, 0.0)].into(),
                max_mode_gap: 0.0,
                unembedded_mentions: 0,
            },
        }
    }

    fn corpus3() -> Corpus {
        Corpus::from_records(
            (0..3)
                .map(|i| crate::entities::SentenceRecord {
                    doc: "d".into(),
                    sent: i,
                    text: format!("sentence {i}"),
                    tokens: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn representative_sentence_is_argmax() {
        let p = profile("x", &[(0, 0.2), (1, 0.9), (2, 0.5)]);
        let r = representative_sentences(&p, AffectDimension::Sentiment, &corpus3(), 1);
        assert_eq!(r.max[0].sent, 1);
        assert_eq!(r.max[0].text, "sentence 1");
        assert_eq!(r.min[0].sent, 0);
    }

    #[test]
    fn single_mention_is_both_extremes() {
        let p = profile("x", &[(2, 0.4)]);
        let r = representative_sentences(&p, AffectDimension::Sentiment, &corpus3(), 3);
        assert_eq!(r.max, r.min);
        assert_eq!(r.max.len(), 1);
    }

    fn member(name: &str, group: &str, s: f64) -> (String, String, DimScores) {
        (name.into(), group.into(), [(AffectDimension::Sentiment, s)].into())
    }

    #[test]
    fn group_means_hand_example() {
        let m = vec![member("A", "g1", 0.5), member("B", "g1", 0.7), member("C", "g2", 0.6)];
        let g = group_means(&m, &["g1".into(), "g2".into()], &[AffectDimension::Sentiment]).unwrap();
        assert!((g[0].means[&AffectDimension::Sentiment] - 0.6).abs() < 1e-15);
        assert_eq!(g[1].means[&AffectDimension::Sentiment], 0.6);
        assert_eq!(g[0].members, vec!["A", "B"]);
    }

    #[test]
    fn identical_groups_have_identical_means() {
        let m = vec![member("A", "g1", 0.3), member("B", "g2", 0.3)];
        let g = group_means(&m, &["g1".into(), "g2".into()], &[AffectDimension::Sentiment]).unwrap();
        assert_eq!(g[0].means, g[1].means);
    }

    #[test]
    fn empty_group_is_an_error() {
        let m = vec![member("A", "g1", 0.3)];
        assert!(group_means(&m, &["g1".into(), "g9".into()], &[AffectDimension::Sentiment]).is_err());
    }

    #[test]
    fn reference_spearman_is_positive_on_agreement() {
        let scores: BTreeMap<String, f64> = [("a".into(), 3.0), ("b".into(), 2.0), ("c".into(), 1.0)].into();
        let refs = vec![
            RankAnnotation { entity: "a".into(), ranks: vec![1] },
            RankAnnotation { entity: "b".into(), ranks: vec![2] },
            RankAnnotation { entity: "c".into(), ranks: vec![3] },
        ];
        assert!((spearman_vs_reference(&scores, &refs).unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_breaks_ties_by_name() {
        let v: BTreeMap<String, f64> = [("b".into(), 1.0), ("a".into(), 1.0), ("c".into(), 2.0)].into();
        assert_eq!(ranking(&v), vec!["c", "a", "b"]);
    }

    #[test]
    fn diagnostics_flag_dominant_pc1() {
        let sub = AffectSubspace {
            dimension: AffectDimension::Power,
            direction: vec![1.0, 0.0],
            pairs: vec![],
            variance_spectrum: vec![0.5, 0.5],
            orientation_checked: true,
        };
        assert!(!diagnose(&sub).pc1_dominant);
    }
}
