//! Interchangeable graph encoders: GCN, GAT and DGCNN.

use std::rc::Rc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Mask, ParamGroup, ParamId, ParamStore, SparseMatrix, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Gcn,
    Gat,
    Dgcnn,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(EncoderKind::Gcn),
            "gat" => Ok(EncoderKind::Gat),
            "dgcnn" => Ok(EncoderKind::Dgcnn),
            other => Err(Error::Config(format!("unknown encoder `{other}`"))),
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Gcn => "gcn",
            EncoderKind::Gat => "gat",
            EncoderKind::Dgcnn => "dgcnn",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub hidden_dim: usize,
    pub layers: usize,
    pub activation: Activation,
    pub gat_heads: usize,
    pub gat_negative_slope: f64,
    pub sortpool_k: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Gcn,
            hidden_dim: 300,
            layers: 2,
            activation: Activation::Relu,
            gat_heads: 1,
            gat_negative_slope: 0.2,
            sortpool_k: 30,
        }
    }
}

/// `H ← f(Â H W)`.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        Self {
            weight: store.glorot(format!("{name}.weight"), ParamGroup::Graph, d_in, d_out, seed),
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, a_hat: &Rc<SparseMatrix>, h: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let hw = tape.matmul(h, w)?;
        let mixed = tape.sparse_matmul(a_hat, hw)?;
        Ok(tape.activate(mixed, self.activation))
    }
}

pub fn gcn_forward(
    tape: &mut Tape,
    store: &ParamStore,
    a_hat: &Rc<SparseMatrix>,
    h: Var,
    layers: &[GcnLayer],
) -> Result<Var> {
    let [n, _] = tape.shape(h);
    if a_hat.shape() != [n, n] {
        return Err(Error::Dimension(format!(
            "adjacency {:?} for {n} node features",
            a_hat.shape()
        )));
    }
    layers
        .iter()
        .try_fold(h, |x, layer| layer.forward(tape, store, a_hat, x))
}

#[derive(Clone, Debug)]
pub struct GatHead {
    pub weight: ParamId,
    /// `d_out × 2`: column 0 scores the node itself, column 1 its neighbor.
    pub attention: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadMerge {
    Concat,
    Mean,
}

#[derive(Clone, Debug)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub negative_slope: f64,
    pub activation: Activation,
    pub merge: HeadMerge,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        heads: usize,
        negative_slope: f64,
        activation: Activation,
        merge: HeadMerge,
        seed: u64,
    ) -> Self {
        assert!(heads >= 1, "GAT layer needs at least one head");
        let heads = (0..heads)
            .map(|k| GatHead {
                weight: store.glorot(format!("{name}.head{k}.weight"), ParamGroup::Graph, d_in, d_out, seed),
                attention: store.glorot(format!("{name}.head{k}.attention"), ParamGroup::Graph, d_out, 2, seed),
            })
            .collect();
        Self {
            heads,
            negative_slope,
            activation,
            merge,
        }
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        let d = store.value(self.heads[0].weight).cols();
        match self.merge {
            HeadMerge::Concat => d * self.heads.len(),
            HeadMerge::Mean => d,
        }
    }

    /// Layer output together with each head's attention matrix.
    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        mask: &Rc<Mask>,
        h: Var,
    ) -> Result<(Var, Vec<Var>)> {
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut alphas = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let w = tape.param(store, head.weight);
            let a = tape.param(store, head.attention);
            let wh = tape.matmul(h, w)?;
            let scores = tape.matmul(wh, a)?;
            let own = tape.select_col(scores, 0)?;
            let neighbor = tape.select_col(scores, 1)?;
            let e = tape.pair_sum(own, neighbor)?;
            let e = tape.leaky_relu(e, self.negative_slope);
            let alpha = tape.softmax_rows(e, Some(mask))?;
            outs.push(tape.matmul(alpha, wh)?);
            alphas.push(alpha);
        }
        let merged = match self.merge {
            HeadMerge::Concat if outs.len() > 1 => tape.concat_cols(&outs)?,
            HeadMerge::Concat => outs[0],
            HeadMerge::Mean => tape.mean(&outs)?,
        };
        Ok((tape.activate(merged, self.activation), alphas))
    }
}

/// Stacked GAT layers over the masked neighborhoods (edges plus self-loops).
pub fn gat_forward(
    tape: &mut Tape,
    store: &ParamStore,
    mask: &Rc<Mask>,
    h: Var,
    layers: &[GatLayer],
) -> Result<Var> {
    let [n, _] = tape.shape(h);
    if mask.shape() != [n, n] {
        return Err(Error::Dimension(format!("mask {:?} for {n} nodes", mask.shape())));
    }
    for i in 0..n {
        if !mask.get(i, i) {
            return Err(Error::Contract(format!("GAT mask lacks the self-loop of node {i}")));
        }
    }
    layers.iter().try_fold(h, |x, layer| {
        layer.forward_with_attention(tape, store, mask, x).map(|(out, _)| out)
    })
}

/// Graph-convolution layers whose outputs are concatenated per node.
#[derive(Clone, Debug)]
pub struct DgcnnEncoder {
    pub layers: Vec<GcnLayer>,
    pub sortpool_k: usize,
}

/// Nodes sorted by their last feature channel, descending, truncated to `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SortPooling {
    pub order: Vec<usize>,
    pub features: Tensor,
}

pub struct DgcnnOutput {
    pub features: Var,
    pub sort_pooling: SortPooling,
}

pub fn dgcnn_forward(
    tape: &mut Tape,
    store: &ParamStore,
    a_hat: &Rc<SparseMatrix>,
    h: Var,
    encoder: &DgcnnEncoder,
) -> Result<DgcnnOutput> {
    let [n, _] = tape.shape(h);
    if a_hat.shape() != [n, n] {
        return Err(Error::Dimension(format!(
            "adjacency {:?} for {n} node features",
            a_hat.shape()
        )));
    }
    let mut x = h;
    let mut hidden = Vec::with_capacity(encoder.layers.len());
    for layer in &encoder.layers {
        x = layer.forward(tape, store, a_hat, x)?;
        hidden.push(x);
    }
    let features = if hidden.len() == 1 {
        hidden[0]
    } else {
        tape.concat_cols(&hidden)?
    };
    let sort_pooling = sort_pool(tape.value(features), encoder.sortpool_k)?;
    Ok(DgcnnOutput {
        features,
        sort_pooling,
    })
}

/// Orders nodes by the last channel (descending, ties broken by earlier
/// channels, then by node index) and keeps the first `k`. `k` larger than
/// the node count is clamped.
pub fn sort_pool(features: &Tensor, k: usize) -> Result<SortPooling> {
    let [n, c] = features.shape();
    if c == 0 {
        return Err(Error::Dimension("sort pooling over zero channels".into()));
    }
    let k = if k > n {
        warn!("sortpool k = {k} exceeds {n} nodes; clamped");
        n
    } else {
        k
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for ch in (0..c).rev() {
            let ord = features.get(b, ch).total_cmp(&features.get(a, ch));
            if ord.is_ne() {
                return ord;
            }
        }
        a.cmp(&b)
    });
    order.truncate(k);
    let features = features.gather_rows(&order)?;
    Ok(SortPooling { order, features })
}

/// One configured encoder of any kind.
#[derive(Clone, Debug)]
pub enum GraphEncoder {
    Gcn(Vec<GcnLayer>),
    Gat(Vec<GatLayer>),
    Dgcnn(DgcnnEncoder),
}

/// Graph inputs every encoder may need.
pub struct EncoderInputs<'a> {
    pub a_hat: &'a Rc<SparseMatrix>,
    pub neighborhood: &'a Rc<Mask>,
}

impl GraphEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, d_in: usize, config: &EncoderConfig, seed: u64) -> Result<Self> {
        if config.layers == 0 || config.hidden_dim == 0 {
            return Err(Error::Config("encoder needs at least one layer of positive width".into()));
        }
        let h = config.hidden_dim;
        Ok(match config.kind {
            EncoderKind::Gcn => GraphEncoder::Gcn(
                (0..config.layers)
                    .map(|i| {
                        let d = if i == 0 { d_in } else { h };
                        GcnLayer::new(store, &format!("{prefix}.gcn{i}"), d, h, config.activation, seed)
                    })
                    .collect(),
            ),
            EncoderKind::Gat => {
                if config.gat_heads == 0 {
                    return Err(Error::Config("GAT needs at least one head".into()));
                }
                let mut layers = Vec::with_capacity(config.layers);
                let mut d = d_in;
                for i in 0..config.layers {
                    let last = i + 1 == config.layers;
                    let merge = if last { HeadMerge::Mean } else { HeadMerge::Concat };
                    let layer = GatLayer::new(
                        store,
                        &format!("{prefix}.gat{i}"),
                        d,
                        h,
                        config.gat_heads,
                        config.gat_negative_slope,
                        config.activation,
                        merge,
                        seed,
                    );
                    d = layer.output_dim(store);
                    layers.push(layer);
                }
                GraphEncoder::Gat(layers)
            }
            EncoderKind::Dgcnn => GraphEncoder::Dgcnn(DgcnnEncoder {
                layers: (0..config.layers)
                    .map(|i| {
                        let d = if i == 0 { d_in } else { h };
                        GcnLayer::new(store, &format!("{prefix}.dgcnn{i}"), d, h, config.activation, seed)
                    })
                    .collect(),
                sortpool_k: config.sortpool_k,
            }),
        })
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        match self {
            GraphEncoder::Gcn(layers) => store.value(layers.last().expect("layer").weight).cols(),
            GraphEncoder::Gat(layers) => layers.last().expect("layer").output_dim(store),
            GraphEncoder::Dgcnn(enc) => enc.layers.iter().map(|l| store.value(l.weight).cols()).sum(),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, inputs: &EncoderInputs<'_>, h: Var) -> Result<Var> {
        match self {
            GraphEncoder::Gcn(layers) => gcn_forward(tape, store, inputs.a_hat, h, layers),
            GraphEncoder::Gat(layers) => gat_forward(tape, store, inputs.neighborhood, h, layers),
            GraphEncoder::Dgcnn(enc) => Ok(dgcnn_forward(tape, store, inputs.a_hat, h, enc)?.features),
        }
    }
}
