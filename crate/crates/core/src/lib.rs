//! Numerical toolkit for nonholonomic Lagrangian field theories on jet
//! bundles: exterior forms on `J¹π`, De Donder–Weyl connections, the
//! nonholonomic projector, and Cauchy-data evolution.

pub mod cauchy;
pub mod constraint;
pub mod ddw;
pub mod error;
pub mod exterior;
pub mod fluid;
pub mod grid;
pub mod jet;
pub mod lagrangian;
pub mod models;
pub mod projector;
pub mod scalar;

pub use error::{Error, Result};
pub use exterior::{Covector, Form, Layout, TangentVector};
pub use jet::{ConnectionCoeffs, Jet2Point, JetPoint};
pub use lagrangian::Lagrangian;
