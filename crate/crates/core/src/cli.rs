//! Command-line interface: a flat JSON run configuration whose keys are
//! mirrored one-to-one by flags, and one function per subcommand.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, AttentionKind, AttentionScope};
use crate::corpus::{load_corpus, load_split, Corpus, CorpusFormat, Fold};
use crate::embeddings::{load_embeddings, UnitInit};
use crate::encoders::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::fixtures::{demo_corpus, demo_lexicon};
use crate::gradcheck::gradcheck_all;
use crate::graph::{normalize_adjacency, GraphParams};
use crate::lexicon::{load_lexicon, ConceptLexicon};
use crate::model::{KnowCage, ModelConfig, Predictions};
use crate::numerics::{Activation, ParamStore};
use crate::pipeline::{cross_validate, lambda_sweep, sweep_tsv, Experiment, ExperimentConfig, DEFAULT_LAMBDAS};
use crate::training::{evaluate_rows, EpochRecord, MetricsReport, TrainConfig};

/// Every setting of a run. Unset paths fall back to the bundled demo data
/// (corpus) or to no lexicon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// `id \t train|test` lines fixing the evaluation split.
    pub split: Option<PathBuf>,
    /// Saved parameters read by `evaluate`.
    pub params: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub tweet_mode: bool,
    pub window_size: usize,
    pub min_word_freq: usize,
    pub init_wc: UnitInit,
    pub hashed_dim: usize,
    pub encoder: EncoderKind,
    pub hidden_dim: usize,
    pub layers: usize,
    pub activation: Activation,
    pub gat_heads: usize,
    pub gat_negative_slope: f64,
    pub sortpool_k: usize,
    pub attention: AttentionKind,
    pub scope: AttentionScope,
    pub attention_dim: Option<usize>,
    pub structured_hops: usize,
    pub structured_dim: usize,
    pub blocks: usize,
    pub lambda: f64,
    pub lr_graph: f64,
    pub lr_classifier: f64,
    pub lr_text_encoder: f64,
    pub epochs: usize,
    pub lr_gamma: f64,
    pub lr_milestone: usize,
    pub patience: Option<usize>,
    pub inverse_class_weights: bool,
    pub folds: usize,
    pub lambdas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let exp = ExperimentConfig::default();
        let enc = train.model.encoder.clone();
        let att = train.model.attention.clone();
        Self {
            corpus: None,
            lexicon: None,
            embeddings: None,
            split: None,
            params: None,
            out: PathBuf::from("out"),
            seed: train.seed,
            tweet_mode: exp.tweet_mode,
            window_size: exp.graph.window_size,
            min_word_freq: exp.graph.min_word_freq,
            init_wc: exp.unit_init,
            hashed_dim: exp.hashed_dim,
            encoder: enc.kind,
            hidden_dim: enc.hidden_dim,
            layers: enc.layers,
            activation: enc.activation,
            gat_heads: enc.gat_heads,
            gat_negative_slope: enc.gat_negative_slope,
            sortpool_k: enc.sortpool_k,
            attention: att.kind,
            scope: att.scope,
            attention_dim: att.dim,
            structured_hops: att.structured_hops,
            structured_dim: att.structured_dim,
            blocks: train.model.blocks,
            lambda: train.model.lambda,
            lr_graph: train.lr_graph,
            lr_classifier: train.lr_classifier,
            lr_text_encoder: train.lr_text_encoder,
            epochs: train.epochs,
            lr_gamma: train.lr_gamma,
            lr_milestone: train.lr_milestone,
            patience: train.patience,
            inverse_class_weights: train.inverse_class_weights,
            folds: 10,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                encoder: EncoderConfig {
                    kind: self.encoder,
                    hidden_dim: self.hidden_dim,
                    layers: self.layers,
                    activation: self.activation,
                    gat_heads: self.gat_heads,
                    gat_negative_slope: self.gat_negative_slope,
                    sortpool_k: self.sortpool_k,
                },
                attention: AttentionConfig {
                    kind: self.attention,
                    scope: self.scope,
                    dim: self.attention_dim,
                    structured_hops: self.structured_hops,
                    structured_dim: self.structured_dim,
                },
                blocks: self.blocks,
                lambda: self.lambda,
            },
            lr_graph: self.lr_graph,
            lr_classifier: self.lr_classifier,
            lr_text_encoder: self.lr_text_encoder,
            epochs: self.epochs,
            lr_gamma: self.lr_gamma,
            lr_milestone: self.lr_milestone,
            patience: self.patience,
            inverse_class_weights: self.inverse_class_weights,
            seed: self.seed,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            graph: GraphParams {
                window_size: self.window_size,
                min_word_freq: self.min_word_freq,
            },
            tweet_mode: self.tweet_mode,
            unit_init: self.init_wc,
            hashed_dim: self.hashed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.lr_gamma.is_nan() || self.lr_gamma > 1.0 {
            return Err(Error::Config(format!("lr_gamma must lie in (0, 1], got {}", self.lr_gamma)));
        }
        if self.window_size == 0 || self.hashed_dim == 0 {
            return Err(Error::Config("window_size and hashed_dim must be positive".into()));
        }
        for lambda in &self.lambdas {
            crate::classifier::validate_lambda(*lambda)?;
        }
        for (key, path) in [
            ("corpus", &self.corpus),
            ("lexicon", &self.lexicon),
            ("embeddings", &self.embeddings),
            ("split", &self.split),
            ("params", &self.params),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("{key} file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Flags overriding configuration keys of the same name.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// JSONL or TSV corpus; the bundled demo corpus if absent.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Concept lexicon TSV (term, CUI, preferred name).
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Document embeddings (KCEM or TSV); hashed bag-of-tokens if absent.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Split file of `id<TAB>train|test` lines.
    #[arg(long, global = true)]
    pub split: Option<PathBuf>,
    /// Saved parameters for `evaluate`.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for initialization, hashing and fold assignment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Strip URLs, mentions, emoji and retweet markers.
    #[arg(long, global = true)]
    pub tweet_mode: bool,
    /// Sliding window length in tokens.
    #[arg(long, global = true)]
    pub window_size: Option<usize>,
    /// Drop words rarer than this.
    #[arg(long, global = true)]
    pub min_word_freq: Option<usize>,
    /// Initial word and concept rows: zeros or hashed.
    #[arg(long, global = true, value_parser = parse_unit_init)]
    pub init_wc: Option<UnitInit>,
    /// Width of hashed document embeddings.
    #[arg(long, global = true)]
    pub hashed_dim: Option<usize>,
    /// gcn, gat or dgcnn.
    #[arg(long, global = true)]
    pub encoder: Option<EncoderKind>,
    /// Encoder width.
    #[arg(long, global = true)]
    pub hidden_dim: Option<usize>,
    /// Encoder layers.
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    /// Hidden-layer activation.
    #[arg(long, global = true)]
    pub activation: Option<Activation>,
    /// Attention heads per GAT layer.
    #[arg(long, global = true)]
    pub gat_heads: Option<usize>,
    /// LeakyReLU slope in GAT scores.
    #[arg(long, global = true)]
    pub gat_negative_slope: Option<f64>,
    /// Rows kept by the DGCNN sort-pooling diagnostic.
    #[arg(long, global = true)]
    pub sortpool_k: Option<usize>,
    /// concept, dot or structured.
    #[arg(long, global = true)]
    pub attention: Option<AttentionKind>,
    /// Concept attention scope: all_nodes or restricted.
    #[arg(long, global = true)]
    pub scope: Option<AttentionScope>,
    /// Query/key/value width; the encoder width if absent.
    #[arg(long, global = true)]
    pub attention_dim: Option<usize>,
    /// Hops of structured attention.
    #[arg(long, global = true)]
    pub structured_hops: Option<usize>,
    /// Hidden width of structured attention.
    #[arg(long, global = true)]
    pub structured_dim: Option<usize>,
    /// Encoder plus attention blocks.
    #[arg(long, global = true)]
    pub blocks: Option<usize>,
    /// Graph-branch weight in [0, 1).
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Learning rate of encoder and attention parameters.
    #[arg(long, global = true)]
    pub lr_graph: Option<f64>,
    /// Learning rate of both classifier heads.
    #[arg(long, global = true)]
    pub lr_classifier: Option<f64>,
    /// Recorded only; no text encoder is trained.
    #[arg(long, global = true)]
    pub lr_text_encoder: Option<f64>,
    /// Maximum training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Learning-rate factor applied at the milestone.
    #[arg(long, global = true)]
    pub lr_gamma: Option<f64>,
    /// Epoch at which the learning rate drops.
    #[arg(long, global = true)]
    pub lr_milestone: Option<usize>,
    /// Early-stopping patience; 0 disables early stopping.
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    /// Weight each class by the other class's share.
    #[arg(long, global = true)]
    pub inverse_class_weights: bool,
    /// Folds for `cross-validate`.
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Comma-separated interpolation weights for `sweep-lambda`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
}

fn parse_unit_init(s: &str) -> std::result::Result<UnitInit, String> {
    match s {
        "zeros" => Ok(UnitInit::Zeros),
        "hashed" => Ok(UnitInit::Hashed),
        other => Err(format!("unknown word/concept init `{other}` (zeros|hashed)")),
    }
}

impl Overrides {
    /// Loads the configuration file, if any, then applies the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(corpus, lexicon, embeddings, split, params);
        set!(out, seed, window_size, min_word_freq, init_wc, hashed_dim, encoder, hidden_dim, layers);
        set!(activation, gat_heads, gat_negative_slope, sortpool_k, attention, scope, attention_dim);
        set!(structured_hops, structured_dim, blocks, lambda, lr_graph, lr_classifier, lr_text_encoder);
        set!(epochs, lr_gamma, lr_milestone, folds, lambdas);
        if let Some(p) = self.patience {
            c.patience = (p > 0).then_some(p);
        }
        c.tweet_mode |= self.tweet_mode;
        c.inverse_class_weights |= self.inverse_class_weights;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Parser, Debug)]
#[command(name = "knowcage", version, about = "Knowledge-augmented graph text classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Build the graph; write its edge list and statistics.
    BuildGraph,
    /// Train on the split (or all documents) and report metrics.
    Train,
    /// Score saved parameters (`--params`) on the split.
    Evaluate,
    /// Stratified k-fold cross-validation.
    CrossValidate,
    /// Retrain for each interpolation weight.
    SweepLambda,
    /// Check analytic gradients against finite differences on the fixture.
    Gradcheck,
    /// Write raw and normalized edge lists plus the node table.
    ExportGraph,
}

/// Parses arguments and runs the chosen subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp
            | clap::error::ErrorKind::DisplayVersion
            | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                print!("{e}");
                return Ok(());
            }
            _ => return Err(Error::Config(e.to_string())),
        },
    };
    let config = cli.overrides.resolve()?;
    match cli.command {
        Command::BuildGraph => cmd_build_graph(&config),
        Command::ExportGraph => cmd_export_graph(&config),
        Command::Train => cmd_train(&config),
        Command::Evaluate => cmd_evaluate(&config),
        Command::CrossValidate => cmd_cross_validate(&config),
        Command::SweepLambda => cmd_sweep_lambda(&config),
        Command::Gradcheck => cmd_gradcheck(&config),
    }
}

fn load_inputs(config: &RunConfig) -> Result<(Corpus, ConceptLexicon)> {
    let corpus = match &config.corpus {
        Some(p) => load_corpus(p, CorpusFormat::from_path(p))?,
        None => {
            info!("no corpus given; using the bundled demo corpus");
            demo_corpus()?
        }
    };
    let lexicon = match (&config.lexicon, &config.corpus) {
        (Some(p), _) => load_lexicon(p)?,
        (None, None) => demo_lexicon()?,
        (None, Some(_)) => {
            warn!("no lexicon given; the graph has no concept nodes");
            ConceptLexicon::new()
        }
    };
    Ok((corpus, lexicon))
}

fn build_experiment(config: &RunConfig) -> Result<Experiment> {
    let (corpus, lexicon) = load_inputs(config)?;
    let embeddings = config.embeddings.as_ref().map(load_embeddings).transpose()?;
    let experiment = Experiment::build(corpus, &lexicon, embeddings, &config.experiment_config(), config.seed)?;
    if experiment.graph.n_concepts == 0 {
        info!("graph has n_c = 0 concept nodes");
    }
    Ok(experiment)
}

fn evaluation_fold(config: &RunConfig, corpus: &Corpus) -> Result<Fold> {
    match &config.split {
        Some(p) => load_split(p, corpus),
        None => {
            info!("no split given; training and scoring on all documents");
            Ok(Fold::all_train(corpus.len()))
        }
    }
}

fn out_dir(config: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    Ok(&config.out)
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

pub fn metrics_tsv(m: &MetricsReport) -> String {
    format!(
        "metric\tvalue\nprecision\t{:.6}\nrecall\t{:.6}\nf1\t{:.6}\ntrue_positives\t{}\nfalse_positives\t{}\nfalse_negatives\t{}\ntrue_negatives\t{}\n",
        m.precision, m.recall, m.f1, m.true_positives, m.false_positives, m.false_negatives, m.true_negatives
    )
}

fn metrics_table(m: &MetricsReport) -> String {
    format!("P {:.4}  R {:.4}  F1 {:.4}", m.precision, m.recall, m.f1)
}

pub fn loss_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,lr\n");
    for r in history {
        writeln!(out, "{},{},{}", r.epoch, r.loss, r.lr).expect("write to string");
    }
    out
}

fn predictions_tsv(experiment: &Experiment, fold: &Fold, pred: &Predictions) -> String {
    let mut split = vec!["-"; experiment.corpus.len()];
    for &r in &fold.train {
        split[r] = "train";
    }
    for &r in &fold.test {
        split[r] = "test";
    }
    let predicted = crate::classifier::predicted_labels(&pred.p);
    let mut out = String::from("id\tsplit\tlabel\tpredicted\tp_graph\tp_context\tp\n");
    for (i, doc) in experiment.corpus.documents().iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            doc.id,
            split[i],
            doc.label,
            predicted[i],
            pred.p_graph.get(i, 1),
            pred.p_context.get(i, 1),
            pred.p.get(i, 1)
        )
        .expect("write to string");
    }
    out
}

fn scored_rows(fold: &Fold) -> &[usize] {
    if fold.test.is_empty() {
        &fold.train
    } else {
        &fold.test
    }
}

pub fn cmd_build_graph(config: &RunConfig) -> Result<()> {
    let experiment = build_experiment(config)?;
    let dir = out_dir(config)?;
    let g = &experiment.graph;
    write(dir.join("graph_edges.tsv"), g.edge_list_tsv(&g.adjacency))?;
    let stats = g.stats();
    write(dir.join("graph_stats.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
    println!(
        "nodes {} = {} documents + {} words + {} concepts",
        stats.n, stats.n_docs, stats.n_words, stats.n_concepts
    );
    for (pair, count) in &stats.edges {
        println!("{pair}\t{count}");
    }
    Ok(())
}

pub fn cmd_export_graph(config: &RunConfig) -> Result<()> {
    let experiment = build_experiment(config)?;
    let dir = out_dir(config)?;
    let g = &experiment.graph;
    write(dir.join("graph_edges.tsv"), g.edge_list_tsv(&g.adjacency))?;
    write(
        dir.join("graph_normalized_edges.tsv"),
        g.edge_list_tsv(&normalize_adjacency(&g.adjacency)),
    )?;
    let mut nodes = String::from("index\tid\tkind\n");
    for (i, (id, kind)) in g.node_ids.iter().zip(&g.kinds).enumerate() {
        writeln!(nodes, "{i}\t{id}\t{}", kind.name()).expect("write to string");
    }
    write(dir.join("graph_nodes.tsv"), nodes)?;
    println!("exported {} nodes, {} stored entries", g.n(), g.adjacency.nnz());
    Ok(())
}

pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let experiment = build_experiment(config)?;
    let fold = evaluation_fold(config, &experiment.corpus)?;
    let (outcome, metrics) = experiment.run_fold(&fold, &config.train_config())?;
    let pred = outcome.model.predict(&outcome.store, &experiment.inputs)?;
    let dir = out_dir(config)?;
    write(dir.join("loss_history.csv"), loss_csv(&outcome.history))?;
    write(dir.join("metrics.tsv"), metrics_tsv(&metrics))?;
    write(dir.join("predictions.tsv"), predictions_tsv(&experiment, &fold, &pred))?;
    write(dir.join("params.json"), serde_json::to_string(&outcome.store)?)?;
    write(dir.join("config.json"), serde_json::to_string_pretty(config)? + "\n")?;
    println!("{} epochs; {}", outcome.history.len(), metrics_table(&metrics));
    Ok(())
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let path = config
        .params
        .as_ref()
        .ok_or_else(|| Error::Config("evaluate needs --params".into()))?;
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let saved: ParamStore = serde_json::from_str(&raw)?;
    let experiment = build_experiment(config)?;
    let fold = evaluation_fold(config, &experiment.corpus)?;
    let mut store = ParamStore::new();
    let model = KnowCage::new(
        &mut store,
        &config.train_config().model,
        experiment.inputs.features.cols(),
        experiment.inputs.doc_embeddings.cols(),
        config.seed,
    )?;
    store.load_values(&saved)?;
    let pred = model.predict(&store, &experiment.inputs)?;
    let metrics = evaluate_rows(&pred.p, &experiment.labels, scored_rows(&fold))?;
    let dir = out_dir(config)?;
    write(dir.join("metrics.tsv"), metrics_tsv(&metrics))?;
    write(dir.join("predictions.tsv"), predictions_tsv(&experiment, &fold, &pred))?;
    println!("{}", metrics_table(&metrics));
    Ok(())
}

pub fn cmd_cross_validate(config: &RunConfig) -> Result<()> {
    let experiment = build_experiment(config)?;
    let report = cross_validate(&experiment, config.folds, config.seed, &config.train_config())?;
    let tsv = report.to_tsv();
    write(out_dir(config)?.join("cv_metrics.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

pub fn cmd_sweep_lambda(config: &RunConfig) -> Result<()> {
    let experiment = build_experiment(config)?;
    let fold = evaluation_fold(config, &experiment.corpus)?;
    let rows = lambda_sweep(&experiment, &fold, &config.lambdas, &config.train_config())?;
    let tsv = sweep_tsv(&rows);
    write(out_dir(config)?.join("lambda_sweep.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

pub fn cmd_gradcheck(config: &RunConfig) -> Result<()> {
    let reports = gradcheck_all(config.seed)?;
    println!("encoder\tattention\tparams\tmax_rel_error\tworst\tresult");
    let mut worst: f64 = 0.0;
    for r in &reports {
        println!(
            "{}\t{}\t{}\t{:.3e}\t{}\t{}",
            r.encoder,
            r.attention,
            r.n_scalars,
            r.max_relative_error,
            r.worst.as_ref().map_or("-".to_string(), |(n, k)| format!("{n}[{k}]")),
            if r.passed() { "PASS" } else { "FAIL" }
        );
        worst = worst.max(r.max_relative_error);
    }
    println!("max relative error {worst:.3e}");
    if reports.iter().all(|r| r.passed()) {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Error::GradientCheck(worst))
    }
}
