//! Network and domain descriptions: data model, validation and JSON I/O.

mod io;
pub(crate) mod random;

pub use io::{parse_spec, serialize_spec, SpecDocument, SpecKind};
pub use random::{random_spec, Dims};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Axis-aligned box `[a, b]^{n x T}` with the token separation margin `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub delta: f64,
}

impl DomainBox {
    /// Box with the default margin `(b - a) / (2 (T + 1))`.
    pub fn new(a: f64, b: f64, n: usize, t: usize) -> Result<Self> {
        Self::with_delta(a, b, n, t, Self::default_delta(a, b, t))
    }

    pub fn with_delta(a: f64, b: f64, n: usize, t: usize, delta: f64) -> Result<Self> {
        let domain = DomainBox { a, b, n, t, delta };
        domain.validate()?;
        Ok(domain)
    }

    pub fn default_delta(a: f64, b: f64, t: usize) -> f64 {
        (b - a) / (2.0 * (t as f64 + 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.delta.is_finite()) {
            return Err(Error::Validation("box bounds and delta must be finite".into()));
        }
        if self.n == 0 || self.t == 0 {
            return Err(Error::Validation("n and T must be positive".into()));
        }
        if self.b <= self.a {
            return Err(Error::Validation(format!(
                "box needs b > a, got a={} b={}",
                self.a, self.b
            )));
        }
        let limit = (self.b - self.a) / (self.t as f64 + 1.0);
        if !(self.delta > 0.0 && self.delta < limit) {
            return Err(Error::Validation(format!(
                "delta={} must lie in (0, (b-a)/(T+1)) = (0, {limit})",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// `max |x|` over the box.
    pub fn sup_norm(&self) -> f64 {
        self.a.abs().max(self.b.abs())
    }

    /// Offset of token interval `t` (0-based, `t == T` is the auxiliary token).
    pub fn token_offset(&self, t: usize) -> f64 {
        t as f64 * self.width() + (t as f64 + 1.0) * self.delta
    }

    /// Positional shift added to the coordinates of token `t` at embedding time.
    /// The auxiliary token has no input, so its shift lands in the middle of
    /// its own interval.
    pub fn position_shift(&self, t: usize) -> f64 {
        if t < self.t {
            self.token_offset(t)
        } else {
            self.a + self.width() * (self.t as f64 + 0.5) + (self.t as f64 + 1.0) * self.delta
        }
    }

    /// Interval `I_t` that every embedded coordinate of token `t` lies in.
    pub fn token_interval(&self, t: usize) -> (f64, f64) {
        let off = self.token_offset(t);
        (self.a + off, self.b + off)
    }
}

/// Rank-`p` maxout layer `R^{n_in} -> R^{m_out}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Deserialize<'de>"))]
pub struct MaxoutLayerSpec<S> {
    pub n_in: usize,
    pub p: usize,
    pub m_out: usize,
    /// One `p x n_in` matrix per output unit.
    #[serde(rename = "W")]
    pub weights: Vec<Matrix<S>>,
    /// One length-`p` vector per output unit.
    #[serde(rename = "b", default)]
    pub biases: Vec<Vec<S>>,
}

impl<S: Scalar> MaxoutLayerSpec<S> {
    pub fn new(weights: Vec<Matrix<S>>, biases: Vec<Vec<S>>) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| Error::Validation("maxout layer needs at least one unit".into()))?;
        let spec = MaxoutLayerSpec {
            n_in: first.cols(),
            p: first.rows(),
            m_out: weights.len(),
            weights,
            biases,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.p == 0 || self.m_out == 0 {
            return Err(Error::Validation("n_in, p and m_out must be positive".into()));
        }
        if self.weights.len() != self.m_out {
            return Err(Error::Validation(format!(
                "expected {} weight matrices, found {}",
                self.m_out,
                self.weights.len()
            )));
        }
        if self.biases.len() != self.m_out {
            return Err(Error::Validation(format!(
                "expected {} bias vectors, found {}",
                self.m_out,
                self.biases.len()
            )));
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.shape() != (self.p, self.n_in) {
                return Err(Error::Validation(format!(
                    "W[{i}] has shape {:?}, expected ({}, {})",
                    w.shape(),
                    self.p,
                    self.n_in
                )));
            }
            if b.len() != self.p {
                return Err(Error::Validation(format!(
                    "b[{i}] has length {}, expected {}",
                    b.len(),
                    self.p
                )));
            }
        }
        Ok(())
    }

    /// Zero biases when the document omitted them.
    pub(crate) fn fill_missing_biases(&mut self) {
        if self.biases.is_empty() {
            self.biases = vec![vec![S::zero(); self.p]; self.m_out];
        }
    }

    /// Piece `j` of unit `i` as `(weights row, bias)`.
    pub fn piece(&self, i: usize, j: usize) -> (&[S], &S) {
        (self.weights[i].row(j), &self.biases[i][j])
    }

    /// `max(||b^i||_inf, ||W^i||_inf)` over units, with the induced row-sum norm.
    pub fn weight_bound(&self) -> S {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let bmax = b.iter().map(|x| x.abs()).fold(S::zero(), S::max_of);
                w.norm_inf().max_of(bmax)
            })
            .fold(S::zero(), S::max_of)
    }

    /// Bound on `|w . x + beta|` over pieces when `||x||_inf <= input_bound`.
    pub fn output_bound(&self, input_bound: S) -> S {
        let mut best = S::zero();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for j in 0..self.p {
                let row_sum = w.row(j).iter().fold(S::zero(), |acc, x| acc + x.abs());
                best = best.max_of(row_sum * input_bound.clone() + b[j].abs());
            }
        }
        best
    }

    pub fn map<U: Scalar>(&self, mut f: impl FnMut(&S) -> U) -> MaxoutLayerSpec<U> {
        MaxoutLayerSpec {
            n_in: self.n_in,
            p: self.p,
            m_out: self.m_out,
            weights: self.weights.iter().map(|w| w.map(&mut f)).collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.iter().map(&mut f).collect())
                .collect(),
        }
    }
}

/// Stack of maxout layers applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepMaxoutSpec<S> {
    pub layers: Vec<MaxoutLayerSpec<S>>,
}

impl<S: Scalar> DeepMaxoutSpec<S> {
    pub fn new(layers: Vec<MaxoutLayerSpec<S>>) -> Result<Self> {
        let spec = DeepMaxoutSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("deep maxout spec has no layers".into()));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[1].n_in != pair[0].m_out {
                return Err(Error::Validation(format!(
                    "layer {} expects {} inputs but layer {l} produces {}",
                    l + 1,
                    pair[1].n_in,
                    pair[0].m_out
                )));
            }
        }
        Ok(())
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn m_out(&self) -> usize {
        self.layers[self.layers.len() - 1].m_out
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn map<U: Scalar>(&self, mut f: impl FnMut(&S) -> U) -> DeepMaxoutSpec<U> {
        DeepMaxoutSpec {
            layers: self.layers.iter().map(|l| l.map(&mut f)).collect(),
        }
    }
}

/// Affine map `x -> W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Deserialize<'de>"))]
pub struct Affine<S> {
    #[serde(rename = "W")]
    pub weight: Matrix<S>,
    #[serde(rename = "b", default)]
    pub bias: Vec<S>,
}

/// Fully connected ReLU network with an affine readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Deserialize<'de>"))]
pub struct ReluNetSpec<S> {
    pub weights: Vec<Matrix<S>>,
    #[serde(default)]
    pub biases: Vec<Vec<S>>,
    pub readout: Affine<S>,
}

impl<S: Scalar> ReluNetSpec<S> {
    pub fn validate(&self) -> Result<()> {
        if self.biases.len() != self.weights.len() {
            return Err(Error::Validation(format!(
                "{} hidden weight matrices but {} bias vectors",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.rows() == 0 || w.cols() == 0 {
                return Err(Error::Validation(format!("hidden layer {l} is empty")));
            }
            if b.len() != w.rows() {
                return Err(Error::Validation(format!(
                    "hidden layer {l}: bias length {} vs {} rows",
                    b.len(),
                    w.rows()
                )));
            }
            if l > 0 && w.cols() != self.weights[l - 1].rows() {
                return Err(Error::Validation(format!(
                    "hidden layer {l} expects {} inputs, previous layer has {} units",
                    w.cols(),
                    self.weights[l - 1].rows()
                )));
            }
        }
        let feed = self
            .weights
            .last()
            .map_or(self.readout.weight.cols(), Matrix::rows);
        if self.readout.weight.cols() != feed || self.readout.weight.rows() == 0 {
            return Err(Error::Validation(format!(
                "readout expects {} inputs, network provides {feed}",
                self.readout.weight.cols()
            )));
        }
        if self.readout.bias.len() != self.readout.weight.rows() {
            return Err(Error::Validation("readout bias length mismatch".into()));
        }
        Ok(())
    }

    pub(crate) fn fill_missing_biases(&mut self) {
        if self.biases.is_empty() {
            self.biases = self.weights.iter().map(|w| vec![S::zero(); w.rows()]).collect();
        }
        if self.readout.bias.is_empty() {
            self.readout.bias = vec![S::zero(); self.readout.weight.rows()];
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights
            .first()
            .map_or(self.readout.weight.cols(), Matrix::cols)
    }

    pub fn m_out(&self) -> usize {
        self.readout.weight.rows()
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }
}

/// Difference-of-convex pair `f = g - h`, both max-affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpwlPairSpec<S> {
    pub g: MaxoutLayerSpec<S>,
    pub h: MaxoutLayerSpec<S>,
}

impl<S: Scalar> CpwlPairSpec<S> {
    pub fn validate(&self) -> Result<()> {
        self.g.validate()?;
        self.h.validate()?;
        if self.g.n_in != self.h.n_in || self.g.m_out != self.h.m_out {
            return Err(Error::Validation(format!(
                "g maps {}->{} but h maps {}->{}",
                self.g.n_in, self.g.m_out, self.h.n_in, self.h.m_out
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_bound_enforced() {
        assert!(DomainBox::with_delta(0.0, 1.0, 1, 2, 1.0 / 2.0).is_err());
        assert!(DomainBox::with_delta(0.0, 1.0, 1, 2, 1.0 / 3.0).is_err());
        assert!(DomainBox::with_delta(0.0, 1.0, 1, 2, 0.3).is_ok());
        assert!(DomainBox::new(1.0, 1.0, 1, 2).is_err());
    }

    #[test]
    fn default_delta_is_midpoint() {
        let d = DomainBox::new(-1.0, 1.0, 2, 3).unwrap();
        assert_eq!(d.delta, 0.25);
    }

    #[test]
    fn position_shifts_match_hand_values() {
        let d = DomainBox::with_delta(0.0, 1.0, 1, 2, 0.1).unwrap();
        let shifts: Vec<f64> = (0..3).map(|t| d.position_shift(t)).collect();
        let expected = [0.1, 1.2, 2.8];
        for (s, e) in shifts.iter().zip(expected) {
            assert!((s - e).abs() < 1e-15, "{shifts:?}");
        }
    }

    #[test]
    fn token_intervals_are_separated_by_delta() {
        let d = DomainBox::with_delta(-2.0, 3.0, 1, 4, 0.7).unwrap();
        for t in 0..d.t {
            let (_, hi) = d.token_interval(t);
            let (lo, _) = d.token_interval(t + 1);
            assert!(lo - hi >= d.delta - 1e-12);
        }
    }

    #[test]
    fn maxout_shape_errors() {
        let w = Matrix::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let bad = MaxoutLayerSpec {
            n_in: 2,
            p: 2,
            m_out: 1,
            weights: vec![w],
            biases: vec![vec![0.0, 0.0]],
        };
        assert!(bad.validate().is_err());
    }
}
