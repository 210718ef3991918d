//! The full two-branch classifier: graph encoder, attention over the
//! encoded nodes, and separate heads for graph features and document
//! context embeddings, interpolated into one prediction.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionBlock, AttentionConfig};
use crate::classifier::{interpolate, validate_lambda, weighted_bce, ClassifierHead};
use crate::corpus::Label;
use crate::encoders::{EncoderConfig, EncoderInputs, GraphEncoder};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, HeteroTextGraph, NodeKind};
use crate::numerics::{Mask, ParamStore, SparseMatrix, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub attention: AttentionConfig,
    /// Encoder plus attention blocks stacked in sequence.
    pub blocks: usize,
    pub lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            attention: AttentionConfig::default(),
            blocks: 1,
            lambda: 0.5,
        }
    }
}

/// Everything a forward pass reads.
#[derive(Clone, Debug)]
pub struct ModelInputs {
    pub a_hat: Rc<SparseMatrix>,
    /// Adjacency pattern plus self-loops.
    pub neighborhood: Rc<Mask>,
    pub kinds: Vec<NodeKind>,
    /// Initial node features `H⁽⁰⁾`.
    pub features: Tensor,
    /// Context embeddings, one row per document node.
    pub doc_embeddings: Tensor,
    /// Node index of each document, in document order.
    pub doc_nodes: Rc<[usize]>,
}

impl ModelInputs {
    pub fn new(graph: &HeteroTextGraph, features: Tensor, doc_embeddings: Tensor) -> Result<Self> {
        let inputs = Self {
            a_hat: Rc::new(normalize_adjacency(&graph.adjacency)),
            neighborhood: Rc::new(Mask::neighborhood(&graph.adjacency)),
            kinds: graph.kinds.clone(),
            features,
            doc_embeddings,
            doc_nodes: graph.doc_nodes().into(),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kinds.len();
        if self.a_hat.shape() != [n, n] || self.neighborhood.shape() != [n, n] {
            return Err(Error::Dimension(format!(
                "graph matrices {:?} / {:?} for {n} nodes",
                self.a_hat.shape(),
                self.neighborhood.shape()
            )));
        }
        if self.features.rows() != n {
            return Err(Error::Dimension(format!(
                "{} feature rows for {n} nodes",
                self.features.rows()
            )));
        }
        if self.doc_embeddings.rows() != self.doc_nodes.len() {
            return Err(Error::Dimension(format!(
                "{} context rows for {} documents",
                self.doc_embeddings.rows(),
                self.doc_nodes.len()
            )));
        }
        if let Some(&bad) = self.doc_nodes.iter().find(|&&i| i >= n || self.kinds[i] != NodeKind::Document) {
            return Err(Error::Contract(format!("node {bad} listed as a document")));
        }
        Ok(())
    }

    pub fn n_docs(&self) -> usize {
        self.doc_nodes.len()
    }
}

/// Tape handles produced by one forward pass. Probability rows follow
/// document order.
pub struct ForwardPass {
    pub node_features: Var,
    pub p_graph: Var,
    pub p_context: Var,
    pub p: Var,
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct KnowCage {
    pub blocks: Vec<(GraphEncoder, AttentionBlock)>,
    pub graph_head: ClassifierHead,
    pub context_head: ClassifierHead,
    pub lambda: f64,
}

impl KnowCage {
    /// Registers every parameter in `store`. Initial values depend only on
    /// `seed` and parameter names.
    pub fn new(
        store: &mut ParamStore,
        config: &ModelConfig,
        feature_dim: usize,
        context_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        validate_lambda(config.lambda)?;
        if config.blocks == 0 {
            return Err(Error::Config("model needs at least one block".into()));
        }
        let mut blocks = Vec::with_capacity(config.blocks);
        let mut d = feature_dim;
        for b in 0..config.blocks {
            let encoder = GraphEncoder::new(store, &format!("block{b}.encoder"), d, &config.encoder, seed)?;
            let d_enc = encoder.output_dim(store);
            let attention = AttentionBlock::new(store, &format!("block{b}.attention"), d_enc, &config.attention, seed)?;
            d = attention.output_dim(store);
            blocks.push((encoder, attention));
        }
        Ok(Self {
            blocks,
            graph_head: ClassifierHead::new(store, "graph_head", d, seed),
            context_head: ClassifierHead::new(store, "context_head", context_dim, seed),
            lambda: config.lambda,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, inputs: &ModelInputs) -> Result<ForwardPass> {
        let enc_inputs = EncoderInputs {
            a_hat: &inputs.a_hat,
            neighborhood: &inputs.neighborhood,
        };
        let mut h = tape.constant(inputs.features.clone());
        let mut attention = Vec::new();
        for (encoder, block) in &self.blocks {
            let z = encoder.forward(tape, store, &enc_inputs, h)?;
            let out = block.forward(tape, store, z, &inputs.kinds, &inputs.neighborhood)?;
            attention.extend(out.weights);
            h = out.output;
        }
        let docs = tape.gather_rows(h, &inputs.doc_nodes)?;
        let p_graph = self.graph_head.forward(tape, store, docs)?;
        let context = tape.constant(inputs.doc_embeddings.clone());
        let p_context = self.context_head.forward(tape, store, context)?;
        let p = interpolate(tape, p_graph, p_context, self.lambda)?;
        Ok(ForwardPass {
            node_features: h,
            p_graph,
            p_context,
            p,
            attention,
        })
    }

    /// Forward pass plus the weighted loss over `train_rows` (document
    /// indices). Labels outside those rows are never read.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &ModelInputs,
        train_rows: &[usize],
        labels: &[Label],
        weights: (f64, f64),
    ) -> Result<(ForwardPass, Var)> {
        let pass = self.forward(tape, store, inputs)?;
        let loss = weighted_bce(tape, pass.p, train_rows, labels, weights)?;
        Ok((pass, loss))
    }
}

/// Probabilities from one forward pass, one row per document.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub p_graph: Tensor,
    pub p_context: Tensor,
    pub p: Tensor,
}

impl KnowCage {
    pub fn predict(&self, store: &ParamStore, inputs: &ModelInputs) -> Result<Predictions> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, store, inputs)?;
        Ok(Predictions {
            p_graph: tape.value(pass.p_graph).clone(),
            p_context: tape.value(pass.p_context).clone(),
            p: tape.value(pass.p).clone(),
        })
    }
}
