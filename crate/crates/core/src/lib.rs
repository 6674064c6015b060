pub mod autodiff;
pub mod error;
pub mod fem;
pub mod fields;
pub mod inference;
pub mod mesh;
pub mod predict;
pub mod priors;
pub mod ratapprox;
pub mod simstudy;
pub mod sparse;

pub use error::{Error, Result};
