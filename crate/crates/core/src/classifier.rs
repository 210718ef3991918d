//! Two-layer classification heads, branch interpolation and the weighted
//! binary cross-entropy loss.

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::numerics::{ParamGroup, ParamId, ParamStore, Tape, Tensor, Var};

/// Clamp applied to probabilities inside the loss.
pub const BCE_EPS: f64 = 1e-12;

/// `softmax(W2 relu(W1 x + b1) + b2)` over two classes.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl ClassifierHead {
    /// Hidden width is `max(d_in / 2, 16)`.
    pub fn new(store: &mut ParamStore, prefix: &str, d_in: usize, seed: u64) -> Self {
        let d_mid = (d_in / 2).max(16);
        Self {
            w1: store.glorot(format!("{prefix}.w1"), ParamGroup::Classifier, d_in, d_mid, seed),
            b1: store.zeros(format!("{prefix}.b1"), ParamGroup::Classifier, 1, d_mid),
            w2: store.glorot(format!("{prefix}.w2"), ParamGroup::Classifier, d_mid, 2, seed),
            b2: store.zeros(format!("{prefix}.b2"), ParamGroup::Classifier, 1, 2),
        }
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.value(self.w1).rows()
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row_bias(h, b1)?;
        let h = tape.relu(h);
        let logits = tape.matmul(h, w2)?;
        let logits = tape.add_row_bias(logits, b2)?;
        tape.softmax_rows(logits, None)
    }
}

pub fn validate_lambda(lambda: f64) -> Result<()> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda must lie in [0, 1), got {lambda}")))
    }
}

/// `λ p_graph + (1 − λ) p_context` on the tape.
pub fn interpolate(tape: &mut Tape, p_graph: Var, p_context: Var, lambda: f64) -> Result<Var> {
    validate_lambda(lambda)?;
    let g = tape.scale(p_graph, lambda);
    let c = tape.scale(p_context, 1.0 - lambda);
    tape.add(g, c)
}

/// `λ p_graph + (1 − λ) p_context` on plain tensors.
pub fn interpolate_probs(p_graph: &Tensor, p_context: &Tensor, lambda: f64) -> Result<Tensor> {
    validate_lambda(lambda)?;
    p_graph.zip_map(p_context, |g, c| lambda * g + (1.0 - lambda) * c)
}

/// Positive and negative class weights `(w+, w−)` from class counts.
/// By default `w+ = N1 / (N0 + N1)`; `inverse` swaps the two.
pub fn class_weights(n0: usize, n1: usize, inverse: bool) -> Result<(f64, f64)> {
    let total = (n0 + n1) as f64;
    if n0 + n1 == 0 {
        return Err(Error::Validation("class weights from an empty training set".into()));
    }
    let pos = n1 as f64 / total;
    let neg = n0 as f64 / total;
    Ok(if inverse { (neg, pos) } else { (pos, neg) })
}

/// Class counts over the given rows.
pub fn count_classes(labels: &[Label], rows: &[usize]) -> (usize, usize) {
    rows.iter().fold((0, 0), |(n0, n1), &r| {
        if labels[r] == 1 {
            (n0, n1 + 1)
        } else {
            (n0 + 1, n1)
        }
    })
}

/// Weighted BCE summed over `rows`, reading labels only at those rows.
pub fn weighted_bce(
    tape: &mut Tape,
    probs: Var,
    rows: &[usize],
    labels: &[Label],
    weights: (f64, f64),
) -> Result<Var> {
    let picked: Vec<Label> = rows
        .iter()
        .map(|&r| {
            labels
                .get(r)
                .copied()
                .ok_or_else(|| Error::Dimension(format!("loss row {r} beyond {} labels", labels.len())))
        })
        .collect::<Result<_>>()?;
    tape.weighted_bce(probs, rows, &picked, weights.0, weights.1, BCE_EPS)
}

/// Predicted class per row: `1` when the positive probability is larger.
pub fn predicted_labels(probs: &Tensor) -> Vec<Label> {
    (0..probs.rows())
        .map(|i| u8::from(probs.get(i, 1) > probs.get(i, 0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_examples() {
        let pg = Tensor::from_rows(&[[0.2, 0.8]]).unwrap();
        let pc = Tensor::from_rows(&[[0.6, 0.4]]).unwrap();
        let p = interpolate_probs(&pg, &pc, 0.5).unwrap();
        assert!((p.get(0, 0) - 0.4).abs() < 1e-15 && (p.get(0, 1) - 0.6).abs() < 1e-15);
        assert_eq!(interpolate_probs(&pg, &pc, 0.0).unwrap(), pc);
        assert!(matches!(interpolate_probs(&pg, &pc, 1.0), Err(Error::Config(_))));
        assert!(matches!(interpolate_probs(&pg, &pc, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn tape_interpolation_at_zero_is_context_bitwise() {
        let mut tape = Tape::new();
        let pg = tape.constant(Tensor::from_rows(&[[0.123, 0.877], [0.5, 0.5]]).unwrap());
        let pc = tape.constant(Tensor::from_rows(&[[0.31, 0.69], [0.999, 0.001]]).unwrap());
        let p = interpolate(&mut tape, pg, pc, 0.0).unwrap();
        assert_eq!(tape.value(p), tape.value(pc));
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(class_weights(900, 100, false).unwrap(), (0.1, 0.9));
        assert_eq!(class_weights(900, 100, true).unwrap(), (0.9, 0.1));
        assert!(class_weights(0, 0, false).is_err());
    }

    #[test]
    fn bce_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(&[[0.1, 0.9], [0.5, 0.5]]).unwrap());
        let loss = weighted_bce(&mut tape, p, &[0], &[1, 0], (0.1, 0.9)).unwrap();
        let expected = -0.1 * 0.9f64.ln();
        assert!((tape.value(loss).item().unwrap() - expected).abs() < 1e-15);

        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        let loss = weighted_bce(&mut tape, p, &[0], &[1], (0.5, 0.5)).unwrap();
        let v = tape.value(loss).item().unwrap();
        assert!(v.is_finite());
        assert!((v - 0.5 * 12.0 * std::f64::consts::LN_10).abs() < 1e-9);
    }

    #[test]
    fn head_outputs_probabilities() {
        let mut store = ParamStore::new();
        let head = ClassifierHead::new(&mut store, "h", 10, 3);
        assert_eq!(store.value(head.w1).cols(), 16);
        let wide = ClassifierHead::new(&mut store, "wide", 300, 3);
        assert_eq!(store.value(wide.w1).cols(), 150);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(3, 10, 0.3));
        let p = head.forward(&mut tape, &store, x).unwrap();
        for i in 0..3 {
            let r = tape.value(p).row(i);
            assert!((r[0] + r[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn argmax_prediction() {
        let p = Tensor::from_rows(&[[0.2, 0.8], [0.7, 0.3], [0.5, 0.5]]).unwrap();
        assert_eq!(predicted_labels(&p), [1, 0, 0]);
    }
}
