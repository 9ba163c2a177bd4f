//! Finite-element laboratory for the perturbed fractional Laplacian
//! `(-Delta)^t + (-Delta)^{s/2}_O b (-Delta)^{s/2}_O + q` on an interval.

pub mod assembly;
pub mod dn;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod io;
pub mod kernel;
pub mod mesh;
pub mod quadrature;
pub mod regional;

pub use error::{Error, Result};
