//! Class-imbalance aware training and evaluation for proposal classifiers.
//!
//! The crate covers the weighted cross-entropy family used to counter
//! foreground class imbalance in object detection (plain, weighted and focal
//! cross entropy, with weights from hand-picked values, inverse class
//! frequency or the effective number of samples), hard negative mining at a
//! fixed foreground:background ratio, and recall evaluation at a fixed
//! number of false positives per image.
//!
//! A seeded synthetic long-tail proposal generator and a small momentum-SGD
//! classifier make it possible to observe the rebalancing effect end to end
//! on a laptop. See the `examples/` directory for one runnable program per
//! capability.

pub mod boxes;
pub mod classes;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod loss;
pub mod pipeline;
pub mod provenance;
pub mod report;
pub mod sampler;
pub mod trainer;
pub mod weights;

pub use boxes::BoundingBox;
pub use classes::ClassTable;
pub use error::{Error, Result};
