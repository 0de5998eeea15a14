pub mod diagnostics;
pub mod error;
pub mod face_layout;
pub mod graph_conv;
pub mod losses;
pub mod models;
pub mod nn;
pub mod synthdata;
pub mod tensor;
pub mod train_eval;

pub use error::{Error, Result};
pub use tensor::{Element, Graph, Tensor, Var};
