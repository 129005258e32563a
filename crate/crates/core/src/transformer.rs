//! Transformer networks with hardmax or scaled-softmax attention.
//!
//! A block maps `Z` (d x cols) to `Y + W2 ReLU(W1 Y + b1) + b2` where
//! `Y = Z + sum_h W_O W_V Z sigma[(W_K Z)^T W_Q Z]` and `sigma` acts on columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maxout_eval::{devectorize, vectorize, SeqMatrix, VectorFunction};
use crate::matrix::Matrix;
use crate::netspec::DomainBox;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum AttentionMode {
    Hardmax,
    Softmax { lambda: f64 },
}

impl AttentionMode {
    pub fn softmax(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Validation(format!(
                "softmax scale must be positive and finite, got {lambda}"
            )));
        }
        Ok(AttentionMode::Softmax { lambda })
    }
}

/// Tolerance below the maximum logit within which entries count as tied.
pub fn tie_tolerance<S: Real>(max: S) -> S {
    S::from_f64(1e-9).unwrap() * max.abs().max(S::one())
}

/// Column activation: hardmax averages over the (tolerance-widened) argmax
/// set, softmax is `exp(lambda x_i) / sum_j exp(lambda x_j)`.
pub fn attn_activation<S: Real>(logits: &[S], mode: AttentionMode) -> Vec<S> {
    let max = logits
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| a.max(b));
    match mode {
        AttentionMode::Hardmax => {
            let cutoff = max - tie_tolerance(max);
            let count = logits.iter().filter(|&&x| x >= cutoff).count();
            let weight = S::one() / S::from_usize(count).unwrap();
            logits
                .iter()
                .map(|&x| if x >= cutoff { weight } else { S::zero() })
                .collect()
        }
        AttentionMode::Softmax { lambda } => {
            let lambda = S::from_f64(lambda).unwrap();
            let exps: Vec<S> = logits.iter().map(|&x| (lambda * (x - max)).exp()).collect();
            let total = exps.iter().fold(S::zero(), |a, &b| a + b);
            exps.into_iter().map(|e| e / total).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHead<S> {
    #[serde(rename = "W_K")]
    pub w_k: Matrix<S>,
    #[serde(rename = "W_Q")]
    pub w_q: Matrix<S>,
    #[serde(rename = "W_V")]
    pub w_v: Matrix<S>,
    #[serde(rename = "W_O")]
    pub w_o: Matrix<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward<S> {
    #[serde(rename = "W1")]
    pub w1: Matrix<S>,
    pub b1: Vec<S>,
    #[serde(rename = "W2")]
    pub w2: Matrix<S>,
    pub b2: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerBlock<S> {
    pub heads: Vec<AttentionHead<S>>,
    pub ff: FeedForward<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetMeta {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub uses_aux_token: bool,
    /// Input box the weights were compiled for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainBox>,
}

/// `C o f^L o ... o f^1 o E` with `E(X) = A X + B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerNet<S> {
    #[serde(rename = "embed_A")]
    pub embed_a: Matrix<S>,
    /// One column per token, plus the auxiliary token when enabled.
    #[serde(rename = "embed_B")]
    pub embed_b: Matrix<S>,
    pub blocks: Vec<TransformerBlock<S>>,
    #[serde(rename = "readout_C")]
    pub readout_c: Matrix<S>,
    pub meta: NetMeta,
}

/// Size parameters `(L, d, k, H, r)`: depth, width, head size, heads per
/// block and feedforward width. `k`, `H` and `r` are maxima over blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    #[serde(rename = "L")]
    pub depth: usize,
    pub d: usize,
    pub k: usize,
    #[serde(rename = "H")]
    pub heads: usize,
    pub r: usize,
}

fn shape_err(what: &str, got: (usize, usize), want: (usize, usize)) -> Error {
    Error::Shape(format!("{what} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1))
}

fn expect_shape<S: Clone>(what: &str, m: &Matrix<S>, want: (usize, usize)) -> Result<()> {
    if m.shape() != want {
        return Err(shape_err(what, m.shape(), want));
    }
    Ok(())
}

fn expect_len<S>(what: &str, v: &[S], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(Error::Shape(format!(
            "{what} has length {}, expected {want}",
            v.len()
        )));
    }
    Ok(())
}

impl<S: Real> AttentionHead<S> {
    pub fn validate(&self, d: usize) -> Result<()> {
        let k = self.w_k.rows();
        expect_shape("W_K", &self.w_k, (k, d))?;
        expect_shape("W_Q", &self.w_q, (k, d))?;
        expect_shape("W_V", &self.w_v, (k, d))?;
        expect_shape("W_O", &self.w_o, (d, k))
    }
}

impl<S: Real> FeedForward<S> {
    /// The zero map, so the block's feedforward part is the identity.
    pub fn identity(d: usize) -> Self {
        FeedForward {
            w1: Matrix::zeros(0, d),
            b1: vec![],
            w2: Matrix::zeros(d, 0),
            b2: vec![S::zero(); d],
        }
    }

    pub fn width(&self) -> usize {
        self.w1.rows()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let r = self.w1.rows();
        expect_shape("W1", &self.w1, (r, d))?;
        expect_len("b1", &self.b1, r)?;
        expect_shape("W2", &self.w2, (d, r))?;
        expect_len("b2", &self.b2, d)
    }
}

impl<S: Real> TransformerBlock<S> {
    pub fn validate(&self, d: usize) -> Result<()> {
        if let Some(first) = self.heads.first() {
            let k = first.w_k.rows();
            for head in &self.heads {
                if head.w_k.rows() != k {
                    return Err(Error::Shape("heads of a block differ in size".into()));
                }
                head.validate(d)?;
            }
        }
        self.ff.validate(d)
    }
}

impl<S: Real> TransformerNet<S> {
    pub fn width(&self) -> usize {
        self.embed_a.rows()
    }

    pub fn columns(&self) -> usize {
        self.meta.t + usize::from(self.meta.uses_aux_token)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.width();
        expect_shape("embed_A", &self.embed_a, (d, self.meta.n))?;
        expect_shape("embed_B", &self.embed_b, (d, self.columns()))?;
        expect_shape("readout_C", &self.readout_c, (self.meta.m, d))?;
        for (i, block) in self.blocks.iter().enumerate() {
            block
                .validate(d)
                .map_err(|e| Error::Shape(format!("block {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            depth: self.blocks.len(),
            d: self.width(),
            k: self
                .blocks
                .iter()
                .flat_map(|b| b.heads.iter().map(|h| h.w_k.rows()))
                .max()
                .unwrap_or(0),
            heads: self.blocks.iter().map(|b| b.heads.len()).max().unwrap_or(0),
            r: self.blocks.iter().map(|b| b.ff.width()).max().unwrap_or(0),
        }
    }

    /// Convert every weight with `f`, e.g. to run the same net in `f32`.
    pub fn cast<U: Real>(&self, f: impl Fn(S) -> U + Copy) -> TransformerNet<U> {
        let m = |x: &Matrix<S>| x.map(|&v| f(v));
        let v = |x: &[S]| x.iter().map(|&e| f(e)).collect::<Vec<U>>();
        TransformerNet {
            embed_a: m(&self.embed_a),
            embed_b: m(&self.embed_b),
            blocks: self
                .blocks
                .iter()
                .map(|b| TransformerBlock {
                    heads: b
                        .heads
                        .iter()
                        .map(|h| AttentionHead {
                            w_k: m(&h.w_k),
                            w_q: m(&h.w_q),
                            w_v: m(&h.w_v),
                            w_o: m(&h.w_o),
                        })
                        .collect(),
                    ff: FeedForward {
                        w1: m(&b.ff.w1),
                        b1: v(&b.ff.b1),
                        w2: m(&b.ff.w2),
                        b2: v(&b.ff.b2),
                    },
                })
                .collect(),
            readout_c: m(&self.readout_c),
            meta: self.meta,
        }
    }
}

impl TransformerNet<f64> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut net: TransformerNet<f64> = serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            let field = message
                .split('`')
                .nth(1)
                .unwrap_or("<document>")
                .to_string();
            Error::parse(field, message)
        })?;
        // a matrix with no rows serializes as [] and loses its column count
        let d = net.width();
        let widen = |m: &mut Matrix<f64>| {
            if m.rows() == 0 {
                *m = Matrix::zeros(0, d);
            }
        };
        for block in &mut net.blocks {
            widen(&mut block.ff.w1);
            for head in &mut block.heads {
                widen(&mut head.w_k);
                widen(&mut head.w_q);
                widen(&mut head.w_v);
            }
        }
        net.validate()?;
        Ok(net)
    }
}

/// Residual attention sublayer.
pub fn attention_forward<S: Real>(
    block: &TransformerBlock<S>,
    z: &Matrix<S>,
    mode: AttentionMode,
) -> Result<Matrix<S>> {
    let cols = z.cols();
    let mut out = z.clone();
    for head in &block.heads {
        let keys = head.w_k.matmul(z)?;
        let queries = head.w_q.matmul(z)?;
        let values = head.w_v.matmul(z)?;
        let scores = keys.transpose().matmul(&queries)?;
        let mut weights = Matrix::zeros(cols, cols);
        for j in 0..cols {
            let column = attn_activation(&scores.column(j), mode);
            for (i, w) in column.into_iter().enumerate() {
                weights.set(i, j, w);
            }
        }
        let mixed = head.w_o.matmul(&values.matmul(&weights)?)?;
        out = out.add(&mixed)?;
    }
    Ok(out)
}

/// Token-wise residual ReLU network.
pub fn ff_forward<S: Real>(ff: &FeedForward<S>, z: &Matrix<S>) -> Result<Matrix<S>> {
    let mut hidden = ff.w1.matmul(z)?;
    for i in 0..hidden.rows() {
        let b = ff.b1[i];
        for x in hidden.row_mut(i) {
            *x = (*x + b).max(S::zero());
        }
    }
    let mut out = z.add(&ff.w2.matmul(&hidden)?)?;
    for i in 0..out.rows() {
        let b = ff.b2[i];
        for x in out.row_mut(i) {
            *x = *x + b;
        }
    }
    Ok(out)
}

pub fn block_forward<S: Real>(
    block: &TransformerBlock<S>,
    z: &Matrix<S>,
    mode: AttentionMode,
) -> Result<Matrix<S>> {
    ff_forward(&block.ff, &attention_forward(block, z, mode)?)
}

/// `E(X)`: token columns `A x_t + B_t`, then the constant auxiliary column.
pub fn embed<S: Real>(net: &TransformerNet<S>, x: &SeqMatrix<S>) -> Result<Matrix<S>> {
    if x.dim() != net.meta.n || x.len() != net.meta.t {
        return Err(shape_err(
            "input sequence",
            (x.dim(), x.len()),
            (net.meta.n, net.meta.t),
        ));
    }
    let mut z = net.embed_b.clone();
    let ax = net.embed_a.matmul(&x.0)?;
    for i in 0..z.rows() {
        for t in 0..net.meta.t {
            z.set(i, t, *z.get(i, t) + *ax.get(i, t));
        }
    }
    Ok(z)
}

fn check_finite<S: Real>(z: &Matrix<S>, block: usize) -> Result<()> {
    if z.as_slice().iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { block })
    }
}

/// Hidden state after the embedding (index 0) and after every block.
pub fn transformer_trace<S: Real>(
    net: &TransformerNet<S>,
    x: &SeqMatrix<S>,
    mode: AttentionMode,
) -> Result<Vec<Matrix<S>>> {
    let mut states = vec![embed(net, x)?];
    for (i, block) in net.blocks.iter().enumerate() {
        let next = block_forward(block, states.last().unwrap(), mode)?;
        check_finite(&next, i)?;
        states.push(next);
    }
    Ok(states)
}

/// Full network output, `m x T`; the auxiliary column is dropped.
pub fn transformer_forward<S: Real>(
    net: &TransformerNet<S>,
    x: &SeqMatrix<S>,
    mode: AttentionMode,
) -> Result<SeqMatrix<S>> {
    let mut z = embed(net, x)?;
    for (i, block) in net.blocks.iter().enumerate() {
        z = block_forward(block, &z, mode)?;
        check_finite(&z, i)?;
    }
    let out = net.readout_c.matmul(&z)?;
    Ok(SeqMatrix(Matrix::from_fn(net.meta.m, net.meta.t, |i, t| {
        *out.get(i, t)
    })))
}

/// A network read as a function of `Vec(X)` under a fixed attention mode.
#[derive(Debug, Clone, Copy)]
pub struct NetFunction<'a, S> {
    pub net: &'a TransformerNet<S>,
    pub mode: AttentionMode,
}

impl<'a, S> NetFunction<'a, S> {
    pub fn new(net: &'a TransformerNet<S>, mode: AttentionMode) -> Self {
        NetFunction { net, mode }
    }
}

impl<S: Real> VectorFunction<S> for NetFunction<'_, S> {
    fn in_dim(&self) -> usize {
        self.net.meta.n * self.net.meta.t
    }
    fn out_dim(&self) -> usize {
        self.net.meta.m * self.net.meta.t
    }
    fn eval(&self, v: &[S]) -> Result<Vec<S>> {
        let x = devectorize(v, self.net.meta.n, self.net.meta.t)?;
        Ok(vectorize(&transformer_forward(self.net, &x, self.mode)?))
    }
}
