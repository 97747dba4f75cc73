//! Allocation-only building blocks for a hybrid DNN-HMM speech decoder.
//!
//! Everything in this crate is a pure function over in-memory data: context
//! splicing of feature frames, example construction and prior estimation,
//! a feed-forward softmax acoustic model with minibatch SGD, the
//! frame-synchronous WFST beam search that produces lattices, and word error
//! rate scoring. Byte-stream codecs, HTTP and the command line live in the
//! `ramdec` companion crate.
//!
//! The crate is `no_std` and only requires `alloc`.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(any(feature = "std", test))]
extern crate std;

pub mod am;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod mlp;
pub mod splice;
pub mod toy;
pub mod utterance;
pub mod wer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use utterance::{AlignmentVector, FeatureMatrix, UtteranceKey};

/// Formats an `f32` with the shortest decimal representation that reads back
/// to the same value (never more than nine significant digits).
pub fn fmt_f32(value: f32) -> alloc::string::String {
    alloc::format!("{value:?}")
}
