//! Complex neural operator core.
//!
//! Pure numerical building blocks with no IO: complex tensors, the discrete
//! fractional Fourier transform, a Wirtinger-convention reverse-mode tape, the
//! operator model and its training loop. File formats, dataset generators and
//! the command line live in the `fracop` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod ctensor;
pub mod error;
pub mod frft;
pub mod model;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use ctensor::{CTensor, C64};
pub use error::{Error, Result};
pub use frft::{FracOrder, FrftPlan, PlanCache};
pub use model::{make_ablation, ConoConfig, ConoModel, Variant};
pub use train::{rel_l2, Samples, TrainConfig};
