//! Retrains on one split for each interpolation weight between the graph
//! branch and the context-only branch.
//!
//! cargo run --release --example lambda_sweep

use knowcage::corpus::stratified_kfold;
use knowcage::fixtures::{demo_corpus, demo_lexicon};
use knowcage::pipeline::{lambda_sweep, sweep_tsv, Experiment, ExperimentConfig, DEFAULT_LAMBDAS};
use knowcage::training::TrainConfig;

fn main() -> knowcage::Result<()> {
    let seed = 5;
    let corpus = demo_corpus()?;
    let fold = stratified_kfold(&corpus, 4, seed)?.remove(0);
    let experiment = Experiment::build(corpus, &demo_lexicon()?, None, &ExperimentConfig::default(), seed)?;
    let mut config = TrainConfig {
        seed,
        epochs: 100,
        lr_graph: 1e-2,
        lr_classifier: 1e-2,
        lr_milestone: 80,
        ..TrainConfig::default()
    };
    config.model.encoder.hidden_dim = 32;
    let rows = lambda_sweep(&experiment, &fold, &DEFAULT_LAMBDAS, &config)?;
    print!("{}", sweep_tsv(&rows));
    Ok(())
}
