pub mod corpus;
pub mod dataset;
pub mod disambiguation;
pub mod error;
pub mod eval;
pub mod features;
pub mod genealogy;
pub mod graph;
pub mod io;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
