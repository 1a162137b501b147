pub mod cli;
pub mod eikonal;
pub mod error;
pub mod floquet_rmatrix;
pub mod observables;
pub mod potential;
pub mod radial_basis;
pub mod specfun;
pub mod wavepacket;

pub use error::{Error, Result};
