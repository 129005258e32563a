//! Rank reduction by a running-max tournament.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netspec::{DeepMaxoutSpec, MaxoutLayerSpec};
use crate::scalar::Scalar;

/// Piece ranges per round: the first round takes `s` pieces, every later
/// round `s - 1` new pieces next to the running max.
pub fn tournament_chunks(p: usize, s: usize) -> Vec<Range<usize>> {
    if p <= s || s < 2 {
        return vec![0..p];
    }
    let mut chunks = vec![0..s];
    let mut start = s;
    while start < p {
        let end = (start + s - 1).min(p);
        chunks.push(start..end);
        start = end;
    }
    chunks
}

/// Rank-`s` deep network equal to `layer`. Intermediate layers output
/// `[x, u]`: the input, carried by units whose `s` pieces all equal one
/// coordinate, followed by the running maxima. The last round is padded by
/// repeating its final piece.
pub fn decompose_rank<S: Scalar>(layer: &MaxoutLayerSpec<S>, s: usize) -> Result<DeepMaxoutSpec<S>> {
    if s < 2 {
        return Err(Error::Validation(format!(
            "tournament width s={s} must be at least 2"
        )));
    }
    layer.validate()?;
    if layer.p <= s {
        return DeepMaxoutSpec::new(vec![layer.clone()]);
    }
    let (n, m) = (layer.n_in, layer.m_out);
    let chunks = tournament_chunks(layer.p, s);
    let mut layers = Vec::with_capacity(chunks.len());
    for (r, chunk) in chunks.iter().enumerate() {
        let width_in = if r == 0 { n } else { n + m };
        let last = r + 1 == chunks.len();
        let unit_vector = |c: usize| {
            let mut row = vec![S::zero(); width_in];
            row[c] = S::one();
            row
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        if !last {
            for c in 0..n {
                weights.push(Matrix::from_rows(vec![unit_vector(c); s])?);
                biases.push(vec![S::zero(); s]);
            }
        }
        for i in 0..m {
            let mut rows = Vec::with_capacity(s);
            let mut bias = Vec::with_capacity(s);
            if r > 0 {
                rows.push(unit_vector(n + i));
                bias.push(S::zero());
            }
            for j in chunk.clone() {
                let (w, b) = layer.piece(i, j);
                let mut row = w.to_vec();
                row.resize(width_in, S::zero());
                rows.push(row);
                bias.push(b.clone());
            }
            while rows.len() < s {
                rows.push(rows.last().unwrap().clone());
                bias.push(bias.last().unwrap().clone());
            }
            weights.push(Matrix::from_rows(rows)?);
            biases.push(bias);
        }
        layers.push(MaxoutLayerSpec::new(weights, biases)?);
    }
    DeepMaxoutSpec::new(layers)
}
