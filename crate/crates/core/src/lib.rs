//! Core library for nsrkit: a dense f32 tensor engine with reverse-mode
//! autodiff, image I/O and resampling, seeded noise synthesis, classical and
//! learned denoisers, and the WDSR-style super-resolution models built from
//! all of the above.
//!
//! Heavy inner loops (convolution, window filters, batch evaluation) go
//! through [`parallel`], which uses rayon when the `parallel` feature is
//! enabled and plain sequential loops otherwise. Both paths produce
//! bit-identical results: every output element is computed independently
//! with a fixed reduction order.

pub mod checkpoint;
pub mod denoise;
pub mod error;
pub mod imaging;
pub mod noise;
pub mod parallel;
pub mod rng;
pub mod sr;
pub mod tensor;

pub use error::{CoreError, Result};
pub use tensor::{Parameter, Tensor};
