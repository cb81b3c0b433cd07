//! Few-shot node classification on text-attributed graphs with
//! LLM-generated labeled nodes.
//!
//! Stages: [`generate`] samples per class label, [`embed`] every node text,
//! [`link`] generated nodes into the raw graph, then train a [`gnn`] on the
//! union of K-shot raw nodes and generated nodes. [`pipeline`] runs the
//! whole chain and sweeps over settings.

pub mod embed;
pub mod error;
pub mod generate;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod link;
pub mod optim;
pub mod pipeline;
pub mod scalar;
pub mod tensor_io;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Embeddings64 = embed::EmbeddingMatrix<f64>;
pub type Embeddings32 = embed::EmbeddingMatrix<f32>;
pub type EdgePredictorParams64 = link::EdgePredictorParams<f64>;
pub type EdgePredictorParams32 = link::EdgePredictorParams<f32>;
pub type GcnParams64 = gnn::GcnParams<f64>;
pub type GcnParams32 = gnn::GcnParams<f32>;
pub type GatParams64 = gnn::GatParams<f64>;
pub type GatParams32 = gnn::GatParams<f32>;
pub type GnnModel64 = gnn::GnnModel<f64>;
pub type GnnModel32 = gnn::GnnModel<f32>;
