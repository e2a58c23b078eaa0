//! Numerical toolkit for de Branges spaces of vector-valued entire functions.
//!
//! The modules build on each other in this order: dense linear algebra
//! ([`linops`]), operator-valued functions ([`efun`]), canonical systems
//! ([`csys`]), kernels and space elements ([`debranges`]), self-adjoint
//! extensions and sampling ([`specext`]), and the batch front end ([`cli`]).

// Guards written as `!(x > 0.0)` reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod csys;
pub mod debranges;
pub mod efun;
pub mod error;
pub mod io;
pub mod linops;
pub mod specext;

pub use error::{Error, Result};
