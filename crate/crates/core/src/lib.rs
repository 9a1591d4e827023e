//! Market-state analysis of financial return panels: local normalization,
//! correlation-window clustering, empirical pairwise copulas, the bivariate
//! K-copula, and a synthetic-market simulator for ground-truth validation.

pub mod empirical;
pub mod error;
pub mod grid;
pub mod io;
pub mod kcopula;
pub mod pipeline;
pub mod simulator;
pub mod states;
pub mod timeseries;

pub use error::{Error, Result};
pub use grid::{CopulaGrid, GridKind};
