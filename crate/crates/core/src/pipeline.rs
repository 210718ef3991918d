//! End-to-end runs: corpus and lexicon to graph, features and trained model,
//! plus k-fold cross-validation and interpolation-weight sweeps.

use log::info;
use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_kfold, Corpus, Fold, Label};
use crate::embeddings::{hashed_embeddings, initial_features, DocEmbeddingMatrix, UnitInit};
use crate::error::Result;
use crate::graph::{build_graph, GraphParams, HeteroTextGraph};
use crate::lexicon::ConceptLexicon;
use crate::model::ModelInputs;
use crate::training::{evaluate_rows, train, MetricsReport, TrainConfig, TrainOutcome};
use crate::model::KnowCage;

pub const DEFAULT_LAMBDAS: [f64; 6] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9];

/// A corpus with its graph and model inputs.
pub struct Experiment {
    pub corpus: Corpus,
    pub graph: HeteroTextGraph,
    pub inputs: ModelInputs,
    pub labels: Vec<Label>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub graph: GraphParams,
    pub tweet_mode: bool,
    pub unit_init: UnitInit,
    /// Width of hashed embeddings when no embedding file is given.
    pub hashed_dim: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: GraphParams::default(),
            tweet_mode: false,
            unit_init: UnitInit::Zeros,
            hashed_dim: 64,
        }
    }
}

impl Experiment {
    /// Builds the graph and inputs. Without `embeddings`, documents get
    /// hashed bag-of-token vectors.
    pub fn build(
        corpus: Corpus,
        lexicon: &ConceptLexicon,
        embeddings: Option<DocEmbeddingMatrix>,
        config: &ExperimentConfig,
        seed: u64,
    ) -> Result<Self> {
        let docs = corpus.tokenized(config.tweet_mode);
        let graph = build_graph(&docs, lexicon, &config.graph)?;
        let embeddings = match embeddings {
            Some(e) => e,
            None => hashed_embeddings(&docs, config.hashed_dim, seed)?,
        };
        embeddings.check_alignment(&corpus)?;
        let features = initial_features(&graph, embeddings.values(), config.unit_init, seed)?;
        let inputs = ModelInputs::new(&graph, features, embeddings.values().clone())?;
        let labels = corpus.labels();
        info!("graph: {:?}", graph.stats());
        Ok(Self {
            corpus,
            graph,
            inputs,
            labels,
        })
    }

    pub fn train(&self, fold: &Fold, config: &TrainConfig) -> Result<TrainOutcome<KnowCage>> {
        train(&self.inputs, &self.labels, &fold.train, config)
    }

    /// Trains on `fold.train` and scores `fold.test` (or the training rows
    /// when the fold has no test part).
    pub fn run_fold(&self, fold: &Fold, config: &TrainConfig) -> Result<(TrainOutcome<KnowCage>, MetricsReport)> {
        let outcome = self.train(fold, config)?;
        let probs = outcome.model.predict(&outcome.store, &self.inputs)?;
        let rows = if fold.test.is_empty() { &fold.train } else { &fold.test };
        let metrics = evaluate_rows(&probs.p, &self.labels, rows)?;
        Ok((outcome, metrics))
    }
}

/// Per-metric arithmetic means over folds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<MetricsReport>,
    pub mean: MeanMetrics,
}

impl CvReport {
    pub fn from_folds(folds: Vec<MetricsReport>) -> Self {
        let k = folds.len().max(1) as f64;
        let mean = MeanMetrics {
            precision: folds.iter().map(|m| m.precision).sum::<f64>() / k,
            recall: folds.iter().map(|m| m.recall).sum::<f64>() / k,
            f1: folds.iter().map(|m| m.f1).sum::<f64>() / k,
        };
        Self { folds, mean }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fold\tprecision\trecall\tf1\n");
        for (i, m) in self.folds.iter().enumerate() {
            out.push_str(&format!("{i}\t{:.6}\t{:.6}\t{:.6}\n", m.precision, m.recall, m.f1));
        }
        out.push_str(&format!(
            "mean\t{:.6}\t{:.6}\t{:.6}\n",
            self.mean.precision, self.mean.recall, self.mean.f1
        ));
        out
    }
}

/// Stratified k-fold cross-validation with folds drawn from `fold_seed`.
pub fn cross_validate(experiment: &Experiment, k: usize, fold_seed: u64, config: &TrainConfig) -> Result<CvReport> {
    let folds = stratified_kfold(&experiment.corpus, k, fold_seed)?;
    let mut reports = Vec::with_capacity(k);
    for (i, fold) in folds.iter().enumerate() {
        let (_, metrics) = experiment.run_fold(fold, config)?;
        info!("fold {i}: F1 {:.4}", metrics.f1);
        reports.push(metrics);
    }
    Ok(CvReport::from_folds(reports))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub metrics: MetricsReport,
}

/// Retrains for each interpolation weight on the same fold.
pub fn lambda_sweep(experiment: &Experiment, fold: &Fold, lambdas: &[f64], config: &TrainConfig) -> Result<Vec<SweepRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let mut c = config.clone();
            c.model.lambda = lambda;
            let (_, metrics) = experiment.run_fold(fold, &c)?;
            info!("lambda {lambda}: F1 {:.4}", metrics.f1);
            Ok(SweepRow { lambda, metrics })
        })
        .collect()
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda\tprecision\trecall\tf1\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\n",
            r.lambda, r.metrics.precision, r.metrics.recall, r.metrics.f1
        ));
    }
    out
}

/// Settings used for the planted-signal corpus: a GCN with concept-aware
/// attention on 256-wide hashed document embeddings, with hashed word and
/// concept rows so each concept node starts from its own vector.
pub fn planted_signal_config(seed: u64) -> (ExperimentConfig, TrainConfig) {
    let exp = ExperimentConfig {
        hashed_dim: 256,
        unit_init: UnitInit::Hashed,
        ..ExperimentConfig::default()
    };
    let mut train = TrainConfig {
        seed,
        lr_graph: 5e-3,
        lr_classifier: 1e-3,
        lr_milestone: 100,
        ..TrainConfig::default()
    };
    train.model.encoder.hidden_dim = 200;
    train.model.lambda = 0.9;
    (exp, train)
}
