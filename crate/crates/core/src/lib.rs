pub mod autonet;
pub mod checks;
pub mod cli;
pub mod error;
pub mod hessproj;
pub mod metrics;
pub mod pinn;
pub mod pipeline;
pub mod quadobj;
pub mod solvers;

pub use error::{Error, Result};
