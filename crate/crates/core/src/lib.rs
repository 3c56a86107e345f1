//! Whispered-to-voiced speech conversion with an adversarially trained
//! raw-waveform encoder-decoder.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod inference;
pub mod model;
pub mod pipeline;
pub mod pitch;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
