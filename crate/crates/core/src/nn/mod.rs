//! Small reverse-mode autodiff over dense matrices, plus the layers the
//! parser is built from.

pub mod layers;
pub mod ops;
pub mod params;
pub mod tape;

pub use params::{Gradients, ParamGroup, ParamId, ParamStore};
pub use tape::{Tape, Var};
