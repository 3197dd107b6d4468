use std::path::PathBuf;
use std::process::ExitCode;

use affectlens::commands::*;
use affectlens::embeddings::FeatureOptions;
use affectlens::entities::{Normalization, ScoringMode, ScoringOptions};
use affectlens::krr::{Kernel, KrrConfig};
use affectlens::lexicon::SplitLabel;
use affectlens::{AffectDimension, BackendKind, Error};
use clap::{Args, Parser, Subcommand};

const EXIT_INPUT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "affectlens", version, about = "Score power, sentiment and agency from contextual embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every random choice; recorded in all outputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct LexiconArgs {
    /// Tab-separated lexicon: word, valence, arousal, dominance.
    #[arg(long)]
    lexicon: PathBuf,
    /// The lexicon's first line is a column header.
    #[arg(long)]
    header: bool,
    /// Split manifest written by split-lexicon.
    #[arg(long)]
    split: Option<PathBuf>,
}

impl LexiconArgs {
    fn input(&self) -> LexiconInput {
        LexiconInput {
            path: self.lexicon.clone(),
            header: self.header,
            split: self.split.clone(),
        }
    }
}

#[derive(Args, Clone)]
struct DimArg {
    /// power, sentiment, agency or all.
    #[arg(long = "dimension", default_value = "all", value_parser = parse_dims)]
    selection: DimSelection,
}

#[derive(Clone)]
struct DimSelection(Vec<AffectDimension>);

impl DimArg {
    fn dims(&self) -> Vec<AffectDimension> {
        self.selection.0.clone()
    }
}

fn parse_dims(s: &str) -> Result<DimSelection, String> {
    if s == "all" {
        return Ok(DimSelection(AffectDimension::ALL.to_vec()));
    }
    s.parse::<AffectDimension>().map(|d| DimSelection(vec![d])).map_err(|e| e.to_string())
}

#[derive(Args, Clone)]
struct EntityArgs {
    /// Embedding file for the narrative text.
    #[arg(long)]
    embeddings: PathBuf,
    /// Sentence file (JSONL with doc, sent, text); defaults to the embedding tokens.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Entity list with alias token sequences.
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    backend: BackendKind,
    /// Directory holding <backend>-<dimension>.json models.
    #[arg(long)]
    models: PathBuf,
    /// avg-embedding or avg-score.
    #[arg(long, default_value = "avg-embedding")]
    mode: ScoringMode,
    /// Keep mention vectors at their original length.
    #[arg(long)]
    raw_instances: bool,
    /// Do not unit-normalize the averaged mention vector.
    #[arg(long)]
    raw_average: bool,
    #[command(flatten)]
    dims: DimArg,
}

impl EntityArgs {
    fn inputs(&self) -> EntityInputs {
        EntityInputs {
            embeddings: self.embeddings.clone(),
            corpus: self.corpus.clone(),
            entities: self.entities.clone(),
            backend: self.backend,
            models: self.models.clone(),
            mode: self.mode,
            options: ScoringOptions {
                normalize_instances: !self.raw_instances,
                normalize_average: !self.raw_average,
            },
            dims: self.dims.dims(),
        }
    }
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    match s {
        "min-max" => Ok(Normalization::MinMax),
        "z-score" => Ok(Normalization::ZScore),
        other => Err(format!("unknown normalization `{other}` (min-max or z-score)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split a lexicon into train/dev/test with a seeded shuffle.
    SplitLexicon {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        header: bool,
        /// Explicit train,dev,test sizes.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        sizes: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Average occurrence embeddings into one unit vector per lexicon word.
    BuildFeatures {
        #[command(flatten)]
        lexicon: LexiconArgs,
        #[arg(long)]
        embeddings: PathBuf,
        /// Unit-normalize every occurrence before averaging.
        #[arg(long)]
        normalize_instances: bool,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Fit kernel ridge regression on the train split.
    FitKrr {
        #[command(flatten)]
        lexicon: LexiconArgs,
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        dims: DimArg,
        #[arg(long, default_value_t = 0.6)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Build a polar-pair subspace per dimension from the train split.
    BuildAsp {
        #[command(flatten)]
        lexicon: LexiconArgs,
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        dims: DimArg,
        #[arg(long)]
        n_low: Option<usize>,
        #[arg(long)]
        n_high: Option<usize>,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Pearson correlation of model scores with held-out lexicon scores.
    EvalLexicon {
        #[command(flatten)]
        lexicon: LexiconArgs,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        backend: BackendKind,
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        dims: DimArg,
        /// Split to evaluate on.
        #[arg(long = "eval-split", default_value = "test")]
        eval_split: SplitLabel,
        /// Permutations for the significance note; 0 disables it.
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Rank entities by model, frequency and combined scores.
    RankEntities {
        #[command(flatten)]
        entity: EntityArgs,
        /// min-max or z-score.
        #[arg(long, default_value = "min-max", value_parser = parse_normalization)]
        normalization: Normalization,
        /// Reference ranking, one rank per entity.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Annotator rank lists for pairwise accuracy.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        max_disagreement: i64,
        #[arg(long, default_value_t = 0)]
        permutations: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Per-mention scores and representative sentences for one document.
    ProfileDocument {
        #[command(flatten)]
        entity: EntityArgs,
        #[arg(long)]
        doc: Option<String>,
        #[arg(long, default_value_t = 3)]
        k_sentences: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Mean scores per entity group label.
    CompareGroups {
        #[command(flatten)]
        entity: EntityArgs,
        /// Comma-separated groups to report.
        #[arg(long, value_delimiter = ',')]
        groups: Option<Vec<String>>,
        #[arg(long, default_value = "min-max", value_parser = parse_normalization)]
        normalization: Normalization,
        #[command(flatten)]
        common: Common,
    },
    /// Explained-variance spectrum and matched pairs of built subspaces.
    DiagnoseSubspace {
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        dims: DimArg,
        #[command(flatten)]
        common: Common,
    },
    /// Grid search over polar set sizes, scored by dev-split Pearson.
    SweepAsp {
        #[command(flatten)]
        lexicon: LexiconArgs,
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        dims: DimArg,
        #[arg(long, value_delimiter = ',', required = true)]
        n_low: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n_high: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n_pairs: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the synthetic toy corpus fixture.
    SynthToy {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cmd: Command) -> Result<RunSummary, Error> {
    match cmd {
        Command::SplitLexicon {
            lexicon,
            header,
            sizes,
            common,
        } => split_lexicon_cmd(&SplitArgs {
            lexicon,
            header,
            seed: common.seed,
            sizes: sizes.map(|s| [s[0], s[1], s[2]]),
            out: common.out,
        }),
        Command::BuildFeatures {
            lexicon,
            embeddings,
            normalize_instances,
            min_count,
            common,
        } => build_features_cmd(&FeaturesArgs {
            lexicon: lexicon.input(),
            embeddings,
            options: FeatureOptions {
                normalize_instances,
                min_count,
            },
            seed: common.seed,
            out: common.out,
        }),
        Command::FitKrr {
            lexicon,
            features,
            dims,
            alpha,
            gamma,
            common,
        } => fit_krr_cmd(&FitKrrArgs {
            lexicon: lexicon.input(),
            features,
            dims: dims.dims(),
            config: KrrConfig {
                alpha,
                gamma,
                kernel: Kernel::Rbf,
            },
            seed: common.seed,
            out: common.out,
        }),
        Command::BuildAsp {
            lexicon,
            features,
            dims,
            n_low,
            n_high,
            n_pairs,
            common,
        } => build_asp_cmd(&BuildAspArgs {
            lexicon: lexicon.input(),
            features,
            dims: dims.dims(),
            sizes: AspOverrides { n_low, n_high, n_pairs },
            seed: common.seed,
            out: common.out,
        }),
        Command::EvalLexicon {
            lexicon,
            features,
            backend,
            models,
            dims,
            eval_split,
            permutations,
            common,
        } => eval_lexicon_cmd(&EvalArgs {
            lexicon: lexicon.input(),
            features,
            backend,
            models,
            dims: dims.dims(),
            split: eval_split,
            permutations,
            seed: common.seed,
            out: common.out,
        }),
        Command::RankEntities {
            entity,
            normalization,
            reference,
            annotations,
            max_disagreement,
            permutations,
            common,
        } => rank_entities_cmd(&RankArgs {
            inputs: entity.inputs(),
            normalization,
            reference,
            annotations,
            max_disagreement,
            permutations,
            seed: common.seed,
            out: common.out,
        }),
        Command::ProfileDocument {
            entity,
            doc,
            k_sentences,
            common,
        } => profile_document_cmd(&ProfileArgs {
            inputs: entity.inputs(),
            doc,
            k_sentences,
            seed: common.seed,
            out: common.out,
        }),
        Command::CompareGroups {
            entity,
            groups,
            normalization,
            common,
        } => compare_groups_cmd(&GroupArgs {
            inputs: entity.inputs(),
            groups,
            normalization,
            seed: common.seed,
            out: common.out,
        }),
        Command::DiagnoseSubspace { models, dims, common } => diagnose_subspace_cmd(&DiagnoseArgs {
            models,
            dims: dims.dims(),
            seed: common.seed,
            out: common.out,
        }),
        Command::SweepAsp {
            lexicon,
            features,
            dims,
            n_low,
            n_high,
            n_pairs,
            common,
        } => sweep_asp_cmd(&SweepArgs {
            lexicon: lexicon.input(),
            features,
            dims: dims.dims(),
            n_low,
            n_high,
            n_pairs,
            seed: common.seed,
            out: common.out,
        }),
        Command::SynthToy { common } => synth_toy_cmd(&SynthArgs {
            seed: common.seed,
            out: common.out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_INPUT })
        }
    }
}
