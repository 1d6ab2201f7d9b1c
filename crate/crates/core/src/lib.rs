//! Synthesis, point-supervised label evolution and evaluation for
//! stripe-like space target detection.
//!
//! - [`synth`]: seeded frame generator with stray light, stars, cosmic rays
//!   and sensor noise, plus point / mask / box labels.
//! - [`geometry`]: connected regions, longest-line extraction and the
//!   GeoDice loss family with analytic gradients.
//! - [`detect`]: pluggable segmenters (matched filter, Hough, trainable
//!   pixel classifier, external command) and point-prompt selection.
//! - [`evolve`]: the teacher-student label evolution loop.
//! - [`metrics`]: Dice, mIoU, Pd and Fa.

pub mod detect;
pub mod evolve;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod synth;

pub use image::{BinaryMask, GrayImage, Pixel};
