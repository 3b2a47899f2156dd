//! Layer-wise trained nuclei segmentation: convolutional sparse coding
//! feature extractors stacked with boosted decision-tree ensembles.

pub mod boosting;
pub mod csc;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
pub use grid::{BinaryMask, Grid};
