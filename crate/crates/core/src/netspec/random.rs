use rand::Rng as _;

use super::{Affine, CpwlPairSpec, DeepMaxoutSpec, DomainBox, MaxoutLayerSpec, ReluNetSpec};
use super::{SpecDocument, SpecKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{substream, Rng};

/// Sequence dimensions for random instances: tokens carry `n` inputs and `m`
/// outputs, layers have rank `p`, networks have `depth` layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub t: usize,
    pub p: usize,
    pub m: usize,
    pub depth: usize,
}

fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize, bound: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

fn uniform_vec(rng: &mut Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

pub(crate) fn random_layer(
    rng: &mut Rng,
    n_in: usize,
    p: usize,
    m_out: usize,
    bound: f64,
) -> MaxoutLayerSpec<f64> {
    MaxoutLayerSpec {
        n_in,
        p,
        m_out,
        weights: (0..m_out)
            .map(|_| uniform_matrix(rng, p, n_in, bound))
            .collect(),
        biases: (0..m_out).map(|_| uniform_vec(rng, p, bound)).collect(),
    }
}

/// Random valid spec of the given kind; every entry lies in `[-bound, bound]`.
/// Sequence layers map `n*T` inputs to `m*T` outputs.
pub fn random_spec(kind: SpecKind, dims: Dims, bound: f64, seed: u64) -> Result<SpecDocument> {
    if dims.n == 0 || dims.t == 0 || dims.p == 0 || dims.m == 0 || dims.depth == 0 {
        return Err(Error::Precondition("all dimensions must be positive".into()));
    }
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::Precondition("weight bound must be positive".into()));
    }
    let mut rng = substream(seed, kind.as_str());
    let n_in = dims.n * dims.t;
    let width = dims.m * dims.t;
    Ok(match kind {
        SpecKind::MaxoutLayer => {
            SpecDocument::MaxoutLayer(random_layer(&mut rng, n_in, dims.p, width, bound))
        }
        SpecKind::DeepMaxout => {
            let layers = (0..dims.depth)
                .map(|l| {
                    let input = if l == 0 { n_in } else { width };
                    random_layer(&mut rng, input, dims.p, width, bound)
                })
                .collect();
            SpecDocument::DeepMaxout(DeepMaxoutSpec::new(layers)?)
        }
        SpecKind::ReluNet => {
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for l in 0..dims.depth {
                let input = if l == 0 { n_in } else { width };
                weights.push(uniform_matrix(&mut rng, width, input, bound));
                biases.push(uniform_vec(&mut rng, width, bound));
            }
            let readout = Affine {
                weight: uniform_matrix(&mut rng, width, width, bound),
                bias: uniform_vec(&mut rng, width, bound),
            };
            let spec = ReluNetSpec {
                weights,
                biases,
                readout,
            };
            spec.validate()?;
            SpecDocument::ReluNet(spec)
        }
        SpecKind::CpwlPair => {
            let g = random_layer(&mut rng, n_in, dims.p, width, bound);
            let h = random_layer(&mut rng, n_in, dims.p, width, bound);
            SpecDocument::CpwlPair(CpwlPairSpec { g, h })
        }
        SpecKind::DomainBox => {
            let a = -rng.gen_range(0.0..bound);
            let b = rng.gen_range(0.0..bound) + bound * 1e-3;
            SpecDocument::DomainBox(DomainBox::new(a, b, dims.n, dims.t)?)
        }
    })
}
