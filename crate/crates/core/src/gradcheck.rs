//! Finite-difference verification of the full model's loss gradient.

use serde::Serialize;

use crate::attention::{AttentionConfig, AttentionKind};
use crate::classifier::{class_weights, count_classes};
use crate::encoders::{EncoderConfig, EncoderKind};
use crate::error::Result;
use crate::fixtures::{gradcheck_corpus, gradcheck_lexicon};
use crate::model::{KnowCage, ModelConfig};
use crate::numerics::{finite_diff_grad, max_relative_error, ParamStore, Tape};
use crate::pipeline::{Experiment, ExperimentConfig};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub encoder: EncoderKind,
    pub attention: AttentionKind,
    pub n_scalars: usize,
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }
}

/// Model configuration used on the fixture: width 6, two layers, two GAT
/// heads so both head merges are exercised, `λ = 0.5`.
pub fn fixture_config(encoder: EncoderKind, attention: AttentionKind) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            kind: encoder,
            hidden_dim: 6,
            layers: 2,
            gat_heads: 2,
            sortpool_k: 4,
            ..EncoderConfig::default()
        },
        attention: AttentionConfig {
            kind: attention,
            structured_hops: 2,
            structured_dim: 4,
            ..AttentionConfig::default()
        },
        blocks: 1,
        lambda: 0.5,
    }
}

/// The fixture experiment: 3 documents, 5 words, 2 concepts, 8-wide
/// hashed embeddings.
pub fn fixture_experiment(seed: u64) -> Result<Experiment> {
    let config = ExperimentConfig {
        hashed_dim: 8,
        ..ExperimentConfig::default()
    };
    Experiment::build(gradcheck_corpus(), &gradcheck_lexicon(), None, &config, seed)
}

/// Compares backpropagated and central-difference gradients of the
/// weighted loss over all fixture documents.
pub fn gradcheck(experiment: &Experiment, config: &ModelConfig, seed: u64) -> Result<GradcheckReport> {
    let mut store = ParamStore::new();
    let inputs = &experiment.inputs;
    let model = KnowCage::new(
        &mut store,
        config,
        inputs.features.cols(),
        inputs.doc_embeddings.cols(),
        seed,
    )?;
    let rows: Vec<usize> = (0..inputs.n_docs()).collect();
    let (n0, n1) = count_classes(&experiment.labels, &rows);
    let weights = class_weights(n0, n1, false)?;
    let loss_of = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = model.loss(&mut tape, store, inputs, &rows, &experiment.labels, weights)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let (_, loss) = model.loss(&mut tape, &store, inputs, &rows, &experiment.labels, weights)?;
    let analytic = tape.backward(loss, &store)?;
    let numeric = finite_diff_grad(&store, GRADCHECK_STEP, loss_of)?;
    let (max_relative_error, worst) = max_relative_error(&store, &analytic, &numeric);
    Ok(GradcheckReport {
        encoder: config.encoder.kind,
        attention: config.attention.kind,
        n_scalars: store.num_scalars(),
        max_relative_error,
        worst,
    })
}

/// Runs every encoder against every attention on the fixture.
pub fn gradcheck_all(seed: u64) -> Result<Vec<GradcheckReport>> {
    let experiment = fixture_experiment(seed)?;
    let mut out = Vec::with_capacity(9);
    for encoder in [EncoderKind::Gcn, EncoderKind::Gat, EncoderKind::Dgcnn] {
        for attention in [AttentionKind::Concept, AttentionKind::Dot, AttentionKind::Structured] {
            out.push(gradcheck(&experiment, &fixture_config(encoder, attention), seed)?);
        }
    }
    Ok(out)
}
