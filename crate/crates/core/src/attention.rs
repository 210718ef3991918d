//! Attention blocks applied to encoder outputs.
//!
//! [`ConceptAwareAttention`] keeps one query matrix per (attended kind,
//! query kind) pair, so a document attending to a concept uses different
//! parameters than a word attending to a document.

use std::rc::Rc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeKind;
use crate::numerics::{Block, Mask, ParamGroup, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    #[default]
    Concept,
    Dot,
    Structured,
}

impl std::str::FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concept" => Ok(AttentionKind::Concept),
            "dot" => Ok(AttentionKind::Dot),
            "structured" => Ok(AttentionKind::Structured),
            other => Err(Error::Config(format!("unknown attention `{other}`"))),
        }
    }
}

impl std::fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttentionKind::Concept => "concept",
            AttentionKind::Dot => "dot",
            AttentionKind::Structured => "structured",
        })
    }
}

/// Which nodes a query may attend to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScope {
    /// Every node attends to every node.
    #[default]
    AllNodes,
    /// Documents attend to concepts, words to words and concepts, concepts
    /// to concepts.
    Restricted,
}

impl AttentionScope {
    /// Kinds a node of kind `query` attends to, given which kinds exist.
    /// Never empty when `query` itself is present.
    pub fn attended(self, query: NodeKind, present: [bool; 3]) -> Vec<NodeKind> {
        let wanted: &[NodeKind] = match self {
            AttentionScope::AllNodes => &NodeKind::ALL,
            AttentionScope::Restricted => match query {
                NodeKind::Document => &[NodeKind::Concept],
                NodeKind::Word => &[NodeKind::Word, NodeKind::Concept],
                NodeKind::Concept => &[NodeKind::Concept],
            },
        };
        let mut out: Vec<NodeKind> = wanted.iter().copied().filter(|k| present[k.index()]).collect();
        if out.is_empty() {
            out = if present[NodeKind::Word.index()] {
                warn!("no concept nodes; documents attend to words instead");
                vec![NodeKind::Word]
            } else {
                warn!("no word or concept nodes; attending to every node");
                NodeKind::ALL.into_iter().filter(|k| present[k.index()]).collect()
            };
        }
        out
    }
}

impl std::str::FromStr for AttentionScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_nodes" => Ok(AttentionScope::AllNodes),
            "restricted" => Ok(AttentionScope::Restricted),
            other => Err(Error::Config(format!("unknown attention scope `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub kind: AttentionKind,
    pub scope: AttentionScope,
    /// Projection width `l`; `None` keeps the input width.
    pub dim: Option<usize>,
    pub structured_hops: usize,
    pub structured_dim: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            kind: AttentionKind::Concept,
            scope: AttentionScope::AllNodes,
            dim: None,
            structured_hops: 4,
            structured_dim: 64,
        }
    }
}

/// Attention outputs and the row-stochastic weight matrices behind them
/// (one per hop for structured attention).
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

/// Index of the query matrix used when a `query` node attends to an
/// `attended` node.
pub fn query_index(attended: NodeKind, query: NodeKind) -> usize {
    attended.index() * 3 + query.index()
}

fn kind_letter(k: NodeKind) -> char {
    match k {
        NodeKind::Document => 'd',
        NodeKind::Word => 'w',
        NodeKind::Concept => 'c',
    }
}

#[derive(Clone, Debug)]
pub struct ConceptAwareAttention {
    /// `l × d`.
    pub key: ParamId,
    /// `l × d`.
    pub value: ParamId,
    /// `l × d` each, indexed by [`query_index`].
    pub queries: [ParamId; 9],
    pub scope: AttentionScope,
}

impl ConceptAwareAttention {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, l: usize, scope: AttentionScope, seed: u64) -> Self {
        let key = store.glorot(format!("{prefix}.key"), ParamGroup::Graph, l, d, seed);
        let value = store.glorot(format!("{prefix}.value"), ParamGroup::Graph, l, d, seed);
        let queries = std::array::from_fn(|i| {
            let attended = NodeKind::ALL[i / 3];
            let query = NodeKind::ALL[i % 3];
            store.glorot(
                format!("{prefix}.query_{}{}", kind_letter(attended), kind_letter(query)),
                ParamGroup::Graph,
                l,
                d,
                seed,
            )
        });
        Self {
            key,
            value,
            queries,
            scope,
        }
    }

    /// `h_i = Σ_j softmax_j((K x_j)ᵀ Q_{kind(j),kind(i)} x_i / √l) V x_j`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, kinds: &[NodeKind]) -> Result<AttentionOutput> {
        let [n, d] = tape.shape(x);
        if kinds.len() != n {
            return Err(Error::Dimension(format!("{} node kinds for {n} nodes", kinds.len())));
        }
        let l = store.value(self.key).rows();
        if store.value(self.key).cols() != d {
            return Err(Error::Dimension(format!(
                "attention expects width {}, got {d}",
                store.value(self.key).cols()
            )));
        }
        let members: [Rc<[usize]>; 3] = NodeKind::ALL.map(|k| {
            (0..n).filter(|&i| kinds[i] == k).collect::<Vec<_>>().into()
        });
        let present = members.each_ref().map(|m| !m.is_empty());

        let key = tape.param(store, self.key);
        let value = tape.param(store, self.value);
        let keys = tape.matmul_bt(x, key)?;
        let values = tape.matmul_bt(x, value)?;
        let kind_keys: Vec<Option<Var>> = NodeKind::ALL
            .iter()
            .map(|k| {
                present[k.index()]
                    .then(|| tape.gather_rows(keys, &members[k.index()]))
                    .transpose()
            })
            .collect::<Result<_>>()?;

        let mut blocks = Vec::new();
        let mut mask = Mask::empty(n, n);
        let mut restricted = false;
        for qk in NodeKind::ALL {
            if !present[qk.index()] {
                continue;
            }
            let rows = &members[qk.index()];
            let xq = tape.gather_rows(x, rows)?;
            let attended = self.scope.attended(qk, present);
            restricted |= attended.len() < present.iter().filter(|&&p| p).count();
            for ak in attended {
                let q = tape.param(store, self.queries[query_index(ak, qk)]);
                let projected = tape.matmul_bt(xq, q)?;
                let kk = kind_keys[ak.index()].expect("present kind");
                let scores = tape.matmul_bt(projected, kk)?;
                let cols = &members[ak.index()];
                for &r in rows.iter() {
                    for &c in cols.iter() {
                        mask.set(r, c, true);
                    }
                }
                blocks.push(Block {
                    value: scores,
                    rows: rows.clone(),
                    cols: cols.clone(),
                });
            }
        }
        let scores = tape.assemble(n, n, blocks)?;
        let scores = tape.scale(scores, 1.0 / (l as f64).sqrt());
        let mask = restricted.then(|| Rc::new(mask));
        let alpha = tape.softmax_rows(scores, mask.as_ref())?;
        let output = tape.matmul(alpha, values)?;
        Ok(AttentionOutput {
            output,
            weights: vec![alpha],
        })
    }
}

/// Standard scaled dot-product self-attention with a single query matrix.
#[derive(Clone, Debug)]
pub struct DotProductAttention {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
}

impl DotProductAttention {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, l: usize, seed: u64) -> Self {
        Self {
            query: store.glorot(format!("{prefix}.query"), ParamGroup::Graph, l, d, seed),
            key: store.glorot(format!("{prefix}.key"), ParamGroup::Graph, l, d, seed),
            value: store.glorot(format!("{prefix}.value"), ParamGroup::Graph, l, d, seed),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<AttentionOutput> {
        let l = store.value(self.key).rows();
        let q = tape.param(store, self.query);
        let k = tape.param(store, self.key);
        let v = tape.param(store, self.value);
        let queries = tape.matmul_bt(x, q)?;
        let keys = tape.matmul_bt(x, k)?;
        let values = tape.matmul_bt(x, v)?;
        let scores = tape.matmul_bt(queries, keys)?;
        let scores = tape.scale(scores, 1.0 / (l as f64).sqrt());
        let alpha = tape.softmax_rows(scores, None)?;
        let output = tape.matmul(alpha, values)?;
        Ok(AttentionOutput {
            output,
            weights: vec![alpha],
        })
    }
}

/// Multi-hop self-attentive weighting `E = W_s2 tanh(W_s1 Hᵀ)`. Each hop
/// normalizes its scores over every node's neighborhood; the output is the
/// mean over hops of the attended features.
#[derive(Clone, Debug)]
pub struct StructuredAttention {
    /// `d_a × d`.
    pub w_s1: ParamId,
    /// `r × d_a`.
    pub w_s2: ParamId,
}

impl StructuredAttention {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, d_a: usize, hops: usize, seed: u64) -> Self {
        Self {
            w_s1: store.glorot(format!("{prefix}.w_s1"), ParamGroup::Graph, d_a, d, seed),
            w_s2: store.glorot(format!("{prefix}.w_s2"), ParamGroup::Graph, hops, d_a, seed),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, neighborhood: &Rc<Mask>) -> Result<AttentionOutput> {
        let [n, _] = tape.shape(x);
        if neighborhood.shape() != [n, n] {
            return Err(Error::Dimension(format!(
                "mask {:?} for {n} nodes",
                neighborhood.shape()
            )));
        }
        let w1 = tape.param(store, self.w_s1);
        let w2 = tape.param(store, self.w_s2);
        let hidden = tape.matmul_bt(x, w1)?;
        let hidden = tape.tanh(hidden);
        let energies = tape.matmul_bt(hidden, w2)?;
        let zeros = tape.constant(crate::numerics::Tensor::zeros(n, 1));
        let hops = tape.shape(energies)[1];
        let mut outs = Vec::with_capacity(hops);
        let mut weights = Vec::with_capacity(hops);
        for k in 0..hops {
            let e = tape.select_col(energies, k)?;
            let scores = tape.pair_sum(zeros, e)?;
            let alpha = tape.softmax_rows(scores, Some(neighborhood))?;
            outs.push(tape.matmul(alpha, x)?);
            weights.push(alpha);
        }
        let output = tape.mean(&outs)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// One attention block of any kind.
#[derive(Clone, Debug)]
pub enum AttentionBlock {
    Concept(ConceptAwareAttention),
    Dot(DotProductAttention),
    Structured(StructuredAttention),
}

impl AttentionBlock {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, config: &AttentionConfig, seed: u64) -> Result<Self> {
        let l = config.dim.unwrap_or(d);
        if l == 0 {
            return Err(Error::Config("attention width must be positive".into()));
        }
        Ok(match config.kind {
            AttentionKind::Concept => {
                AttentionBlock::Concept(ConceptAwareAttention::new(store, prefix, d, l, config.scope, seed))
            }
            AttentionKind::Dot => AttentionBlock::Dot(DotProductAttention::new(store, prefix, d, l, seed)),
            AttentionKind::Structured => {
                if config.structured_hops == 0 || config.structured_dim == 0 {
                    return Err(Error::Config("structured attention needs positive hops and width".into()));
                }
                AttentionBlock::Structured(StructuredAttention::new(
                    store,
                    prefix,
                    d,
                    config.structured_dim,
                    config.structured_hops,
                    seed,
                ))
            }
        })
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        match self {
            AttentionBlock::Concept(a) => store.value(a.value).rows(),
            AttentionBlock::Dot(a) => store.value(a.value).rows(),
            AttentionBlock::Structured(a) => store.value(a.w_s1).cols(),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        kinds: &[NodeKind],
        neighborhood: &Rc<Mask>,
    ) -> Result<AttentionOutput> {
        match self {
            AttentionBlock::Concept(a) => a.forward(tape, store, x, kinds),
            AttentionBlock::Dot(a) => a.forward(tape, store, x),
            AttentionBlock::Structured(a) => a.forward(tape, store, x, neighborhood),
        }
    }
}
