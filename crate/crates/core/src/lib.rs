//! Pseudospectral toolkit for the barotropic compressible and the incompressible
//! Navier-Stokes systems on periodic domains, with critical Besov-space diagnostics.

pub mod cns;
pub mod error;
pub mod experiments;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod helmholtz;
pub mod ins;
pub mod littlewood_paley;
pub mod rundir;
pub mod snapshot;
pub mod spectral;
pub mod stepping;
pub mod trajectory;

pub use error::{FlowError, Result};
pub use field::{PhysicalField, SpectralField};
pub use grid::{Grid, GridSpec};
pub use littlewood_paley::DyadicPartition;
