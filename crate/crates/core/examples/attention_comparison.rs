//! Trains each attention variant on the same demo split and compares
//! held-out scores. Also shows how the restricted scope changes which
//! node kinds a document attends to.
//!
//! cargo run --release --example attention_comparison

use knowcage::attention::{AttentionKind, AttentionScope};
use knowcage::corpus::stratified_kfold;
use knowcage::fixtures::{demo_corpus, demo_lexicon};
use knowcage::pipeline::{Experiment, ExperimentConfig};
use knowcage::training::TrainConfig;

fn main() -> knowcage::Result<()> {
    let seed = 3;
    let corpus = demo_corpus()?;
    let fold = stratified_kfold(&corpus, 4, seed)?.remove(0);
    let experiment = Experiment::build(corpus, &demo_lexicon()?, None, &ExperimentConfig::default(), seed)?;

    let variants = [
        (AttentionKind::Concept, AttentionScope::AllNodes),
        (AttentionKind::Concept, AttentionScope::Restricted),
        (AttentionKind::Dot, AttentionScope::AllNodes),
        (AttentionKind::Structured, AttentionScope::AllNodes),
    ];
    for (kind, scope) in variants {
        let mut config = TrainConfig {
            seed,
            epochs: 100,
        lr_graph: 1e-2,
        lr_classifier: 1e-2,
        lr_milestone: 80,
            ..TrainConfig::default()
        };
        config.model.encoder.hidden_dim = 32;
        config.model.attention.kind = kind;
        config.model.attention.scope = scope;
        let (outcome, m) = experiment.run_fold(&fold, &config)?;
        println!(
            "{:<10} {:<10} F1 {:.3}  P {:.3}  R {:.3}  final loss {:.4}",
            kind.to_string(),
            format!("{scope:?}"),
            m.f1,
            m.precision,
            m.recall,
            outcome.history.last().map_or(f64::NAN, |r| r.loss)
        );
    }
    Ok(())
}
