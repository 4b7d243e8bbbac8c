//! Brightness-invariant motion tracking for sinusoidally tagged image sequences.

pub mod autodiff;
pub mod baselines;
pub mod disentangle;
pub mod error;
mod fft;
pub mod field;
pub mod harness;
pub mod phantom;
pub mod tagseq;
pub mod tracker;

pub use error::{Error, Result};
