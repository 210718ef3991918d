//! Full-batch training with Adam, a step learning-rate schedule, early
//! stopping on the training loss, and evaluation metrics.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::classifier::{class_weights, count_classes, predicted_labels, weighted_bce, ClassifierHead};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::model::{KnowCage, ModelConfig, ModelInputs};
use crate::numerics::{AdamConfig, ParamGroup, ParamStore, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Encoder and attention parameters.
    pub lr_graph: f64,
    /// Classifier heads.
    pub lr_classifier: f64,
    /// Kept for configuration compatibility; the context encoder is frozen
    /// and its embeddings are inputs, so nothing trains at this rate.
    pub lr_text_encoder: f64,
    pub epochs: usize,
    /// Both rates are multiplied by `lr_gamma` from epoch `lr_milestone` on.
    pub lr_gamma: f64,
    pub lr_milestone: usize,
    /// Stop after this many epochs without a lower training loss.
    pub patience: Option<usize>,
    pub inverse_class_weights: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lr_graph: 1e-3,
            lr_classifier: 1e-4,
            lr_text_encoder: 2e-5,
            epochs: 200,
            lr_gamma: 0.1,
            lr_milestone: 30,
            patience: Some(20),
            inverse_class_weights: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        crate::classifier::validate_lambda(self.model.lambda)?;
        for (name, v) in [
            ("lr_graph", self.lr_graph),
            ("lr_classifier", self.lr_classifier),
            ("lr_gamma", self.lr_gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Step schedule: `base` before `milestone`, `base · gamma` afterwards.
pub fn lr_schedule(base: f64, epoch: usize, milestone: usize, gamma: f64) -> f64 {
    if epoch < milestone {
        base
    } else {
        base * gamma
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Graph-group learning rate used for the step after this loss.
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub store: ParamStore,
    pub history: Vec<EpochRecord>,
    /// Epoch at which early stopping fired.
    pub stopped_at: Option<usize>,
}

/// Training loop shared by the full model and the context-only baseline.
fn fit<M>(
    model: M,
    mut store: ParamStore,
    config: &TrainConfig,
    mut loss_fn: impl FnMut(&M, &mut Tape, &ParamStore) -> Result<crate::numerics::Var>,
) -> Result<TrainOutcome<M>> {
    let adam = AdamConfig::default();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut stopped_at = None;
    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let loss = loss_fn(&model, &mut tape, &store)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Numeric {
                epoch,
                message: format!("loss became {value}"),
            });
        }
        let grads = tape.backward(loss, &store)?;
        if let Some((id, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Numeric {
                epoch,
                message: format!("non-finite gradient for {}", store.name(id)),
            });
        }
        let lr_graph = lr_schedule(config.lr_graph, epoch, config.lr_milestone, config.lr_gamma);
        let lr_classifier = lr_schedule(config.lr_classifier, epoch, config.lr_milestone, config.lr_gamma);
        store.adam_step(
            &grads,
            |group| match group {
                ParamGroup::Graph => lr_graph,
                ParamGroup::Classifier => lr_classifier,
            },
            adam,
        )?;
        debug!("epoch {epoch}: loss {value:.6}");
        history.push(EpochRecord {
            epoch,
            loss: value,
            lr: lr_graph,
        });
        if value < best {
            best = value;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if config.patience.is_some_and(|p| since_best >= p) {
            info!("early stopping at epoch {epoch}");
            stopped_at = Some(epoch);
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        store,
        history,
        stopped_at,
    })
}

fn check_rows(labels: &[Label], train_rows: &[usize], n_docs: usize) -> Result<()> {
    if labels.len() != n_docs {
        return Err(Error::Dimension(format!("{} labels for {n_docs} documents", labels.len())));
    }
    if train_rows.is_empty() {
        return Err(Error::Validation("no training documents".into()));
    }
    if let Some(&r) = train_rows.iter().find(|&&r| r >= n_docs) {
        return Err(Error::Dimension(format!("training row {r} beyond {n_docs} documents")));
    }
    Ok(())
}

/// Trains the two-branch model. `labels` covers every document but only the
/// entries at `train_rows` are read.
pub fn train(
    inputs: &ModelInputs,
    labels: &[Label],
    train_rows: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome<KnowCage>> {
    config.validate()?;
    inputs.validate()?;
    check_rows(labels, train_rows, inputs.n_docs())?;
    let (n0, n1) = count_classes(labels, train_rows);
    let weights = class_weights(n0, n1, config.inverse_class_weights)?;
    let mut store = ParamStore::new();
    let model = KnowCage::new(
        &mut store,
        &config.model,
        inputs.features.cols(),
        inputs.doc_embeddings.cols(),
        config.seed,
    )?;
    info!(
        "training {} parameters on {} documents ({n0} negative, {n1} positive)",
        store.num_scalars(),
        train_rows.len()
    );
    fit(model, store, config, |m, tape, store| {
        m.loss(tape, store, inputs, train_rows, labels, weights).map(|(_, l)| l)
    })
}

/// Trains the context head alone on the document embeddings, with the same
/// initialization, loss and schedule as the full model's context branch.
pub fn train_context_only(
    doc_embeddings: &Tensor,
    labels: &[Label],
    train_rows: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome<ClassifierHead>> {
    config.validate()?;
    check_rows(labels, train_rows, doc_embeddings.rows())?;
    let (n0, n1) = count_classes(labels, train_rows);
    let weights = class_weights(n0, n1, config.inverse_class_weights)?;
    let mut store = ParamStore::new();
    let head = ClassifierHead::new(&mut store, "context_head", doc_embeddings.cols(), config.seed);
    fit(head, store, config, |h, tape, store| {
        let x = tape.constant(doc_embeddings.clone());
        let p = h.forward(tape, store, x)?;
        weighted_bce(tape, p, train_rows, labels, weights)
    })
}

/// Positive-class precision, recall and F1 with zero for empty denominators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

pub fn precision_recall_f1(truth: &[Label], predicted: &[Label]) -> Result<MetricsReport> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, _) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsReport {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    })
}

/// Metrics of `probs` restricted to `rows`.
pub fn evaluate_rows(probs: &Tensor, labels: &[Label], rows: &[usize]) -> Result<MetricsReport> {
    let predicted = predicted_labels(probs);
    let pick = |v: &[Label]| -> Result<Vec<Label>> {
        rows.iter()
            .map(|&r| {
                v.get(r)
                    .copied()
                    .ok_or_else(|| Error::Dimension(format!("evaluation row {r} out of range")))
            })
            .collect()
    };
    precision_recall_f1(&pick(labels)?, &pick(&predicted)?)
}
