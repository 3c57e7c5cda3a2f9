pub mod cli;
pub mod cliquetree;
pub mod error;
pub mod inference;
pub mod losses;
pub mod model;
pub mod oracle;
pub mod tasks;

pub use error::{Error, Result};
