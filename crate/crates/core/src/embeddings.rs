//! Document embedding matrices and the initial node feature matrix.
//!
//! The binary KCEM layout, all integers little-endian:
//!
//! ```text
//! "KCEM" | version: u16 = 1 | n_docs: u64 | dim: u32
//! n_docs × (UTF-8 id, NUL)
//! n_docs × dim × f32, row-major
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenizedDocument};
use crate::error::{Error, Result};
use crate::graph::HeteroTextGraph;
use crate::numerics::Tensor;
use crate::util::fnv1a;

pub const KCEM_MAGIC: &[u8; 4] = b"KCEM";
pub const KCEM_VERSION: u16 = 1;

/// Pooled document embeddings, one row per document in corpus order.
#[derive(Clone, Debug, PartialEq)]
pub struct DocEmbeddingMatrix {
    ids: Vec<String>,
    values: Tensor,
}

impl DocEmbeddingMatrix {
    pub fn new(ids: Vec<String>, values: Tensor) -> Result<Self> {
        if ids.len() != values.rows() {
            return Err(Error::Validation(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                values.rows()
            )));
        }
        if !values.is_finite() {
            return Err(Error::Validation("embedding contains a non-finite value".into()));
        }
        Ok(Self { ids, values })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn n_docs(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Checks that rows follow the corpus document order exactly.
    pub fn check_alignment(&self, corpus: &Corpus) -> Result<()> {
        if self.ids.len() != corpus.len() {
            return Err(Error::Validation(format!(
                "embeddings cover {} documents, corpus has {}",
                self.ids.len(),
                corpus.len()
            )));
        }
        for (row, (id, doc)) in self.ids.iter().zip(corpus.documents()).enumerate() {
            if *id != doc.id {
                return Err(Error::Validation(format!(
                    "embedding row {row} is `{id}` but corpus document {row} is `{}`",
                    doc.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_kcem_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.values.len() * 4);
        out.extend_from_slice(KCEM_MAGIC);
        out.extend_from_slice(&KCEM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_docs() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(id.as_bytes());
            out.push(0);
        }
        for &x in self.values.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out
    }

    pub fn from_kcem_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != KCEM_MAGIC {
            return Err(Error::Validation("missing KCEM magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != KCEM_VERSION {
            return Err(Error::Validation(format!("unsupported KCEM version {version}")));
        }
        let n_docs = usize::try_from(u64::from_le_bytes(r.array()?))
            .map_err(|_| Error::Validation("document count overflows".into()))?;
        let dim = u32::from_le_bytes(r.array()?) as usize;
        let mut ids = Vec::with_capacity(n_docs.min(1 << 20));
        for k in 0..n_docs {
            let rest = &r.bytes[r.pos..];
            let end = rest
                .iter()
                .position(|&b| b == 0)
                .ok_or_else(|| Error::Validation(format!("KCEM truncated in id {k}")))?;
            let id = std::str::from_utf8(&rest[..end])
                .map_err(|e| Error::Validation(format!("KCEM id {k}: {e}")))?;
            ids.push(id.to_string());
            r.pos += end + 1;
        }
        let count = n_docs
            .checked_mul(dim)
            .ok_or_else(|| Error::Validation("KCEM size overflows".into()))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from(f32::from_le_bytes(r.array()?)));
        }
        if r.pos != bytes.len() {
            return Err(Error::Validation(format!(
                "{} trailing bytes after KCEM payload",
                bytes.len() - r.pos
            )));
        }
        Self::new(ids, Tensor::from_vec(n_docs, dim, data)?)
    }

    pub fn write_kcem(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_kcem_bytes()).map_err(|e| Error::io(path, e))
    }

    /// `id \t v1 \t … \t vd` per row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, row) in self.ids.iter().zip(0..) {
            out.push_str(id);
            for x in self.values.row(row) {
                out.push('\t');
                out.push_str(&format!("{x:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let row: Vec<f64> = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        Error::Validation(format!("embedding line {}: `{f}`: {e}", k + 1))
                    })
                })
                .collect::<Result<_>>()?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::Validation(format!(
                        "embedding line {} has {} values, expected {d}",
                        k + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            ids.push(id);
            data.extend(row);
        }
        let n = ids.len();
        Self::new(ids, Tensor::from_vec(n, dim.unwrap_or(0), data)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Validation(format!(
                "KCEM truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

/// Loads KCEM (recognized by its magic) or the TSV debug form.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<DocEmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(KCEM_MAGIC) {
        DocEmbeddingMatrix::from_kcem_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Validation(format!("{}: neither KCEM nor UTF-8 TSV", path.display())))?;
        DocEmbeddingMatrix::from_tsv(&text)
    }
}

/// Unit-norm pseudo-random vector for a token string.
pub fn hashed_token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(token.as_bytes()));
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Bag-of-hashed-words document vectors: the normalized sum of each
/// token's hashed vector. A stand-in for pretrained encoder output.
pub fn hashed_embeddings(docs: &[TokenizedDocument], dim: usize, seed: u64) -> Result<DocEmbeddingMatrix> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let mut values = Tensor::zeros(docs.len(), dim);
    for (r, d) in docs.iter().enumerate() {
        let row = values.row_mut(r);
        if d.tokens.is_empty() {
            row.copy_from_slice(&hashed_token_vector("\u{0}empty", dim, seed));
            continue;
        }
        for t in &d.tokens {
            for (o, x) in row.iter_mut().zip(hashed_token_vector(t, dim, seed)) {
                *o += x;
            }
        }
        normalize(row);
        if row.iter().all(|&x| x == 0.0) {
            row.copy_from_slice(&hashed_token_vector("\u{0}empty", dim, seed));
        }
    }
    DocEmbeddingMatrix::new(docs.iter().map(|d| d.id.clone()).collect(), values)
}

/// Initial features of word and concept nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitInit {
    #[default]
    Zeros,
    Hashed,
}

/// Stacks `h_doc` over `n_words + n_concepts` zero rows.
pub fn assemble_initial_features(h_doc: &Tensor, n_words: usize, n_concepts: usize) -> Tensor {
    let [n_docs, d] = h_doc.shape();
    let mut out = Tensor::zeros(n_docs + n_words + n_concepts, d);
    out.data_mut()[..n_docs * d].copy_from_slice(h_doc.data());
    out
}

/// Initial feature matrix for `graph`, with unit rows either zero or hashed
/// from their token strings.
pub fn initial_features(
    graph: &HeteroTextGraph,
    h_doc: &Tensor,
    init: UnitInit,
    seed: u64,
) -> Result<Tensor> {
    if h_doc.rows() != graph.n_docs {
        return Err(Error::Validation(format!(
            "{} embedding rows for {} document nodes",
            h_doc.rows(),
            graph.n_docs
        )));
    }
    let mut out = assemble_initial_features(h_doc, graph.n_words, graph.n_concepts);
    if init == UnitInit::Hashed {
        for node in graph.n_docs..graph.n() {
            let tag = format!("{}:{}", graph.kinds[node].name(), graph.node_ids[node]);
            let v = hashed_token_vector(&tag, h_doc.cols(), seed);
            out.row_mut(node).copy_from_slice(&v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tdoc(id: &str, text: &str) -> TokenizedDocument {
        TokenizedDocument {
            id: id.into(),
            tokens: text.split_whitespace().map(String::from).collect(),
            label: 0,
        }
    }

    #[test]
    fn kcem_round_trip_is_bitwise() {
        let docs = [tdoc("a", "x y"), tdoc("b", "y z"), tdoc("c", "")];
        let m = hashed_embeddings(&docs, 5, 3).unwrap();
        // KCEM stores f32, so compare against the f32-rounded matrix.
        let rounded = DocEmbeddingMatrix::new(
            m.ids().to_vec(),
            m.values().map(|x| f64::from(x as f32)),
        )
        .unwrap();
        let back = DocEmbeddingMatrix::from_kcem_bytes(&m.to_kcem_bytes()).unwrap();
        assert_eq!(back, rounded);
        let again = DocEmbeddingMatrix::from_kcem_bytes(&back.to_kcem_bytes()).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn truncated_kcem_is_validation_error() {
        let docs = [tdoc("a", "x")];
        let bytes = hashed_embeddings(&docs, 4, 0).unwrap().to_kcem_bytes();
        for cut in [2, 10, bytes.len() - 1] {
            assert!(matches!(
                DocEmbeddingMatrix::from_kcem_bytes(&bytes[..cut]),
                Err(Error::Validation(_))
            ));
        }
    }

    #[test]
    fn nan_is_rejected() {
        let t = Tensor::from_rows(&[[1.0, f64::NAN]]).unwrap();
        assert!(DocEmbeddingMatrix::new(vec!["a".into()], t.clone()).is_err());
        let mut bytes = DocEmbeddingMatrix::new(vec!["a".into()], Tensor::zeros(1, 2))
            .unwrap()
            .to_kcem_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(DocEmbeddingMatrix::from_kcem_bytes(&bytes).is_err());
    }

    #[test]
    fn header_dimension_is_echoed() {
        let m = DocEmbeddingMatrix::new(vec!["a".into()], Tensor::zeros(1, 768)).unwrap();
        assert_eq!(DocEmbeddingMatrix::from_kcem_bytes(&m.to_kcem_bytes()).unwrap().dim(), 768);
    }

    #[test]
    fn tsv_round_trip() {
        let docs = [tdoc("a", "x y"), tdoc("b", "y z")];
        let m = hashed_embeddings(&docs, 3, 1).unwrap();
        assert_eq!(DocEmbeddingMatrix::from_tsv(&m.to_tsv()).unwrap(), m);
        assert!(DocEmbeddingMatrix::from_tsv("a\t1\t2\nb\t3\n").is_err());
    }

    #[test]
    fn hashed_rows_are_unit_norm_and_deterministic() {
        let docs = [tdoc("a", "pain pain sleep"), tdoc("b", "pain pain sleep"), tdoc("c", "")];
        let m = hashed_embeddings(&docs, 16, 7).unwrap();
        assert_eq!(m.values().row(0), m.values().row(1));
        for r in 0..3 {
            let norm: f64 = m.values().row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let other = hashed_embeddings(&docs, 16, 8).unwrap();
        assert_ne!(m.values().row(0), other.values().row(0));
    }

    #[test]
    fn assembled_features_stack_zeros() {
        let h = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(assemble_initial_features(&h, 0, 0), h);
        let x = assemble_initial_features(&h, 2, 1);
        assert_eq!(x.shape(), [5, 2]);
        assert_eq!(x.row(0), h.row(0));
        assert!((2..5).all(|r| x.row(r).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn alignment_mismatch_is_reported() {
        use crate::corpus::Document;
        let corpus = Corpus::new(vec![
            Document { id: "a".into(), text: "x".into(), label: 0 },
            Document { id: "b".into(), text: "y".into(), label: 1 },
        ])
        .unwrap();
        let m = DocEmbeddingMatrix::new(vec!["b".into(), "a".into()], Tensor::zeros(2, 2)).unwrap();
        assert!(matches!(m.check_alignment(&corpus), Err(Error::Validation(_))));
    }
}
