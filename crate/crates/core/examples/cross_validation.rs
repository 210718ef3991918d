//! Stratified k-fold cross-validation on the demo corpus, printed as the
//! same table the CLI writes.
//!
//! cargo run --release --example cross_validation

use knowcage::corpus::stratified_kfold;
use knowcage::fixtures::{demo_corpus, demo_lexicon};
use knowcage::pipeline::{cross_validate, Experiment, ExperimentConfig};
use knowcage::training::TrainConfig;

fn main() -> knowcage::Result<()> {
    let seed = 1;
    let k = 5;
    let corpus = demo_corpus()?;
    for (i, fold) in stratified_kfold(&corpus, k, seed)?.iter().enumerate() {
        let positives = fold.test.iter().filter(|&&d| corpus.labels()[d] == 1).count();
        println!("fold {i}: {} train, {} test ({positives} positive)", fold.train.len(), fold.test.len());
    }
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
    let report = cross_validate(&experiment, k, seed, &config)?;
    print!("{}", report.to_tsv());
    Ok(())
}
