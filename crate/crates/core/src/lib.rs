//! Compile maxout, ReLU and CPWL networks into Transformer weights and check
//! the result against reference evaluators.

pub mod compiler;
pub mod error;
pub mod matrix;
pub mod maxout_eval;
pub mod netspec;
pub mod rng;
pub mod regions;
pub mod scalar;
pub mod selftest;
pub mod transformer;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use maxout_eval::{devectorize, vectorize, SeqMatrix, VectorFunction};
pub use netspec::{
    parse_spec, serialize_spec, Affine, CpwlPairSpec, DeepMaxoutSpec, DomainBox, MaxoutLayerSpec,
    ReluNetSpec, SpecDocument, SpecKind,
};
pub use scalar::{Rational, Real, Scalar};

pub type MaxoutLayer = MaxoutLayerSpec<f64>;
pub type DeepMaxout = DeepMaxoutSpec<f64>;
pub type ReluNet = ReluNetSpec<f64>;
pub type CpwlPair = CpwlPairSpec<f64>;
pub use transformer::{AttentionMode, TransformerNet};

pub type Transformer = TransformerNet<f64>;
