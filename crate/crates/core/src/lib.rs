pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod endo;
pub mod error;
pub mod field_io;
pub mod geometry;
pub mod flow;
pub mod hermitian;
pub mod identities;
pub mod linsolve;
pub mod oracle;
pub mod speed;

pub use error::{Error, Result};
