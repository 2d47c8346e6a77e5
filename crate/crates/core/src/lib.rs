//! Exterior k-plane transforms of differential forms on Rⁿ: the transform
//! and its adjoint, the inverting Fourier multiplier, and the decomposition
//! of forms and currents into plane pieces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod currents;
pub mod error;
pub mod exterior;
pub mod fft;
pub mod fields;
pub mod format;
pub mod grassmann;
pub mod multiplier;
pub mod pipeline;
pub mod random;
pub mod xray;

pub use error::{KplaneError, Result};
pub use exterior::{MOperator, MVector, MultiIndex};
pub use fields::{AnalyticForm, FormField, FormSource, GridSpec};
pub use grassmann::{Plane, PlaneSet};
pub use xray::{PerpQuadrature, Sinogram};
