//! Dense 2-D tensors, a reverse-mode tape and Adam.
//!
//! Every op takes and returns [`Var`] handles on one [`Tape`]. Values are
//! stored at record time; [`Tape::backward`] returns the adjoint of every
//! node. Parameters live in a [`ParameterSet`] and are placed on a tape with
//! [`ParameterSet::bind`].

mod adam;
mod error;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, DEFAULT_LR};
pub use error::{Error, Result};
pub use params::{Bound, ParameterSet};
pub use scalar::Real;
pub use tape::{row_groups, Gradients, Tape, Var, MASKED_LOGIT};
pub use tensor::Tensor;
