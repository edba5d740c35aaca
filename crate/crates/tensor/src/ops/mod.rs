//! Differentiable operations recorded on the [`crate::Tape`].

mod conv;
mod elementwise;
mod fft;
mod index;
mod matmul;
mod nn;
mod reduce;
mod shape;
