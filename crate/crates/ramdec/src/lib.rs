//! IO side of the hybrid decoder: Kaldi-style archives, the `RAMDEC01`
//! model file, text formats, the remote predict client, and the `ramdec`
//! command line.

pub mod ark;
pub mod cli;
pub mod egs;
pub mod error;
pub mod formats;
pub mod model_io;
pub mod remote;
pub mod toy_io;

pub use error::{Error, Result};
pub use ramdec_core as core;
