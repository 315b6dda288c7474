// Negated comparisons below are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domains;
pub mod error;
pub mod langevin;
pub mod metrics;
pub mod networks;
pub mod objectives;
pub mod render;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Graph, NodeId, OpKind, Scalar, Tensor};
