//! Waveform-level speech enhancement for wake-word detection.
//!
//! Everything in this crate is computation over in-memory buffers and runs
//! without `std`: feature extraction, room-impulse-response augmentation,
//! a small reverse-mode autodiff engine, the enhancement auto-encoder and
//! LeNet detector, the training procedure and threshold-based evaluation.
//! File formats and the command-line driver live in the `wuwse` crate.
#![no_std]

extern crate alloc;

pub mod audio;
pub mod augment;
pub mod dsp;
pub mod eval;
pub mod models;
pub mod synth;
pub mod tensor;
pub mod train;
