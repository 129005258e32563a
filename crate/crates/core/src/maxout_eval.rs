//! Reference evaluators for maxout, deep maxout, ReLU and CPWL-pair specs,
//! plus the column-stacking convention between sequences and vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::netspec::{CpwlPairSpec, DeepMaxoutSpec, MaxoutLayerSpec, ReluNetSpec};
use crate::scalar::Scalar;

/// Sequence `X = (x_1, ..., x_T)` stored as an `n x T` matrix; columns are tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeqMatrix<S>(pub Matrix<S>);

impl<S: Scalar> SeqMatrix<S> {
    pub fn from_columns(columns: &[Vec<S>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("token columns differ in length".into()));
        }
        Ok(SeqMatrix(Matrix::from_fn(n, columns.len(), |i, t| {
            columns[t][i].clone()
        })))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn len(&self) -> usize {
        self.0.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.cols() == 0
    }

    pub fn token(&self, t: usize) -> Vec<S> {
        self.0.column(t)
    }
}

/// `Vec(X)`: tokens stacked one after another.
pub fn vectorize<S: Scalar>(x: &SeqMatrix<S>) -> Vec<S> {
    let (n, t) = x.0.shape();
    let mut out = Vec::with_capacity(n * t);
    for col in 0..t {
        for row in 0..n {
            out.push(x.0.get(row, col).clone());
        }
    }
    out
}

/// Inverse of [`vectorize`]: token `t` is entries `t*n .. (t+1)*n`.
pub fn devectorize<S: Scalar>(v: &[S], n: usize, t: usize) -> Result<SeqMatrix<S>> {
    if v.len() != n * t {
        return Err(Error::Shape(format!(
            "vector of length {} cannot be split into {t} tokens of size {n}",
            v.len()
        )));
    }
    Ok(SeqMatrix(Matrix::from_fn(n, t, |i, j| v[j * n + i].clone())))
}

/// A function on flattened inputs with a fixed input and output size.
pub trait VectorFunction<S> {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, v: &[S]) -> Result<Vec<S>>;
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!(
            "input of length {got}, expected {expected}"
        )));
    }
    Ok(())
}

/// Index of the largest entry; the first index wins ties.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = j;
        }
    }
    best
}

fn piece_values<S: Scalar>(spec: &MaxoutLayerSpec<S>, unit: usize, v: &[S]) -> Vec<S> {
    let w = &spec.weights[unit];
    (0..spec.p)
        .map(|j| dot(w.row(j), v) + spec.biases[unit][j].clone())
        .collect()
}

pub fn eval_maxout_layer<S: Scalar>(spec: &MaxoutLayerSpec<S>, v: &[S]) -> Result<Vec<S>> {
    check_len(spec.n_in, v.len())?;
    Ok((0..spec.m_out)
        .map(|i| {
            let values = piece_values(spec, i, v);
            let best = argmax(&values);
            values[best].clone()
        })
        .collect())
}

/// Winning piece per unit.
pub fn maxout_pattern<S: Scalar>(spec: &MaxoutLayerSpec<S>, v: &[S]) -> Result<Vec<usize>> {
    check_len(spec.n_in, v.len())?;
    Ok((0..spec.m_out)
        .map(|i| argmax(&piece_values(spec, i, v)))
        .collect())
}

pub fn eval_deep_maxout<S: Scalar>(spec: &DeepMaxoutSpec<S>, v: &[S]) -> Result<Vec<S>> {
    let mut current = v.to_vec();
    for layer in &spec.layers {
        current = eval_maxout_layer(layer, &current)?;
    }
    Ok(current)
}

/// Winning pieces of every unit of every layer, concatenated.
pub fn deep_pattern<S: Scalar>(spec: &DeepMaxoutSpec<S>, v: &[S]) -> Result<Vec<usize>> {
    let mut current = v.to_vec();
    let mut pattern = Vec::new();
    for layer in &spec.layers {
        pattern.extend(maxout_pattern(layer, &current)?);
        current = eval_maxout_layer(layer, &current)?;
    }
    Ok(pattern)
}

pub fn eval_relu_net<S: Scalar>(spec: &ReluNetSpec<S>, v: &[S]) -> Result<Vec<S>> {
    check_len(spec.n_in(), v.len())?;
    let mut current = v.to_vec();
    for (w, b) in spec.weights.iter().zip(&spec.biases) {
        current = w
            .mul_vec(&current)?
            .into_iter()
            .zip(b)
            .map(|(x, bias)| (x + bias.clone()).max_of(S::zero()))
            .collect();
    }
    Ok(spec
        .readout
        .weight
        .mul_vec(&current)?
        .into_iter()
        .zip(&spec.readout.bias)
        .map(|(x, bias)| x + bias.clone())
        .collect())
}

/// Active/inactive flag of every hidden ReLU unit.
pub fn relu_pattern<S: Scalar>(spec: &ReluNetSpec<S>, v: &[S]) -> Result<Vec<usize>> {
    check_len(spec.n_in(), v.len())?;
    let mut current = v.to_vec();
    let mut pattern = Vec::new();
    for (w, b) in spec.weights.iter().zip(&spec.biases) {
        let pre: Vec<S> = w
            .mul_vec(&current)?
            .into_iter()
            .zip(b)
            .map(|(x, bias)| x + bias.clone())
            .collect();
        pattern.extend(pre.iter().map(|x| usize::from(*x > S::zero())));
        current = pre.into_iter().map(|x| x.max_of(S::zero())).collect();
    }
    Ok(pattern)
}

pub fn eval_cpwl_pair<S: Scalar>(spec: &CpwlPairSpec<S>, v: &[S]) -> Result<Vec<S>> {
    let g = eval_maxout_layer(&spec.g, v)?;
    let h = eval_maxout_layer(&spec.h, v)?;
    Ok(g.into_iter().zip(h).map(|(a, b)| a - b).collect())
}

impl<S: Scalar> VectorFunction<S> for MaxoutLayerSpec<S> {
    fn in_dim(&self) -> usize {
        self.n_in
    }
    fn out_dim(&self) -> usize {
        self.m_out
    }
    fn eval(&self, v: &[S]) -> Result<Vec<S>> {
        eval_maxout_layer(self, v)
    }
}

impl<S: Scalar> VectorFunction<S> for DeepMaxoutSpec<S> {
    fn in_dim(&self) -> usize {
        self.n_in()
    }
    fn out_dim(&self) -> usize {
        self.m_out()
    }
    fn eval(&self, v: &[S]) -> Result<Vec<S>> {
        eval_deep_maxout(self, v)
    }
}

impl<S: Scalar> VectorFunction<S> for ReluNetSpec<S> {
    fn in_dim(&self) -> usize {
        self.n_in()
    }
    fn out_dim(&self) -> usize {
        self.m_out()
    }
    fn eval(&self, v: &[S]) -> Result<Vec<S>> {
        eval_relu_net(self, v)
    }
}

impl<S: Scalar> VectorFunction<S> for CpwlPairSpec<S> {
    fn in_dim(&self) -> usize {
        self.g.n_in
    }
    fn out_dim(&self) -> usize {
        self.g.m_out
    }
    fn eval(&self, v: &[S]) -> Result<Vec<S>> {
        eval_cpwl_pair(self, v)
    }
}

/// A closure on flattened inputs, checked against fixed sizes.
pub struct FnFunction<F> {
    in_dim: usize,
    out_dim: usize,
    f: F,
}

pub fn from_fn<S, F: Fn(&[S]) -> Vec<S>>(in_dim: usize, out_dim: usize, f: F) -> FnFunction<F> {
    FnFunction { in_dim, out_dim, f }
}

impl<S, F: Fn(&[S]) -> Vec<S>> VectorFunction<S> for FnFunction<F> {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, v: &[S]) -> Result<Vec<S>> {
        check_len(self.in_dim, v.len())?;
        let out = (self.f)(v);
        if out.len() != self.out_dim {
            return Err(Error::Shape(format!(
                "function returned {} values, expected {}",
                out.len(),
                self.out_dim
            )));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::Affine;
    use crate::rng::substream;
    use rand::Rng as _;

    fn abs_layer() -> MaxoutLayerSpec<f64> {
        MaxoutLayerSpec::new(
            vec![Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap()],
            vec![vec![0.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn vectorize_stacks_columns() {
        let x = SeqMatrix(Matrix::from_rows(vec![vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap());
        assert_eq!(vectorize(&x), vec![1.0, 2.0, 3.0, 4.0]);
        let back = devectorize(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(back.token(0), vec![1.0, 2.0]);
        assert_eq!(back.token(1), vec![3.0, 4.0]);
        assert!(devectorize(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn absolute_value() {
        let spec = abs_layer();
        assert_eq!(eval_maxout_layer(&spec, &[3.0]).unwrap(), vec![3.0]);
        assert_eq!(eval_maxout_layer(&spec, &[-2.0]).unwrap(), vec![2.0]);
        assert_eq!(eval_maxout_layer(&spec, &[0.0]).unwrap(), vec![0.0]);
        assert!(eval_maxout_layer(&spec, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn stacked_abs_layers() {
        let deep = DeepMaxoutSpec::new(vec![abs_layer(), abs_layer()]).unwrap();
        assert_eq!(eval_deep_maxout(&deep, &[-3.0]).unwrap(), vec![3.0]);
        let single = DeepMaxoutSpec::new(vec![abs_layer()]).unwrap();
        assert_eq!(
            eval_deep_maxout(&single, &[-1.5]).unwrap(),
            eval_maxout_layer(&abs_layer(), &[-1.5]).unwrap()
        );
    }

    #[test]
    fn relu_basics() {
        let one_layer = ReluNetSpec {
            weights: vec![Matrix::identity(1)],
            biases: vec![vec![0.0]],
            readout: Affine {
                weight: Matrix::identity(1),
                bias: vec![0.0],
            },
        };
        assert_eq!(eval_relu_net(&one_layer, &[-5.0]).unwrap(), vec![0.0]);
        let affine = ReluNetSpec {
            weights: vec![],
            biases: vec![],
            readout: Affine {
                weight: Matrix::from_rows(vec![vec![2.0, -1.0]]).unwrap(),
                bias: vec![0.5],
            },
        };
        affine.validate().unwrap();
        assert_eq!(eval_relu_net(&affine, &[1.0, 3.0]).unwrap(), vec![-0.5]);
    }

    #[test]
    fn cpwl_identity_and_zero() {
        let g = MaxoutLayerSpec::new(
            vec![Matrix::from_rows(vec![vec![1.0], vec![0.0]]).unwrap()],
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        let h = MaxoutLayerSpec::new(
            vec![Matrix::from_rows(vec![vec![-1.0], vec![0.0]]).unwrap()],
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        let pair = CpwlPairSpec {
            g: g.clone(),
            h: h.clone(),
        };
        for x in [-1.0, 0.0, 1.0] {
            assert_eq!(eval_cpwl_pair(&pair, &[x]).unwrap(), vec![x]);
        }
        let same = CpwlPairSpec { g: h.clone(), h };
        assert_eq!(eval_cpwl_pair(&same, &[0.7]).unwrap(), vec![0.0]);
    }

    #[test]
    fn layer_matches_loop_oracle() {
        let mut rng = substream(3, "test");
        let layer = crate::netspec::random::random_layer(&mut rng, 4, 3, 2, 1.0);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = eval_maxout_layer(&layer, &v).unwrap();
            for i in 0..layer.m_out {
                let mut best = f64::NEG_INFINITY;
                for j in 0..layer.p {
                    let mut acc = 0.0;
                    for c in 0..layer.n_in {
                        acc += layer.weights[i].get(j, c) * v[c];
                    }
                    best = best.max(acc + layer.biases[i][j]);
                }
                assert_eq!(got[i], best);
            }
        }
    }
}
