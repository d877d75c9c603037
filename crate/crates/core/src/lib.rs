//! Desk-scale numerical laboratory for Gaussian tail bounds of the
//! Ornstein–Uhlenbeck semigroup.
//!
//! * [`measures`]: densities against `γ_n` with convexity certificates.
//! * [`semigroup`]: `Q_t` and `P_s` by closed form, quadrature or Monte Carlo.
//! * [`foellmer`]: Euler–Maruyama paths of the Föllmer process and their perturbations.
//! * [`verify`]: estimators and [`BoundReport`]s for every checked inequality.



pub mod error;
pub mod foellmer;
pub mod measures;
pub mod numdiff;
pub mod quadrature;
pub mod report;
pub mod semigroup;
pub mod special;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use measures::{DensityModel, Family, Smoothing};
pub use quadrature::QuadratureRule;
pub use report::{BoundReport, Params};
pub use semigroup::{Method, SemigroupQuery};
