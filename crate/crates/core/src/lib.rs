//! Incremental signed distance fields from constrained piecewise Bernstein
//! polynomials.
//!
//! A [`FieldModel`] holds the superposition weights of a C¹ tensor-product
//! spline together with their covariance. Surface samples (points with
//! outward normals) are folded in one at a time or in batches by a
//! recursive least-squares update, after which distance, gradient and
//! Hessian queries are closed-form.

pub mod basis;
pub mod error;
pub mod field;
pub mod ingest;
pub mod oracle;
pub mod recon;
pub mod snapshot;
pub mod solver;
pub mod survey;

pub use basis::{BasisConfig, Interval};
pub use error::{Error, Result};
pub use field::{init_spherical_prior, FieldModel, QueryResult, TensorBasis};
pub use solver::{RegularizerSpec, SurfaceSample};
