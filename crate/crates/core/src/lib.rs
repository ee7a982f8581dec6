//! Deterministic core of a long-range 3D pedestrian detection pipeline:
//! instance-mask driven proposals, proposal augmentation, voxel crop
//! encoding, loss functions and range-binned BEV evaluation on KITTI-format
//! data.

pub mod augment;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod kitti_io;
pub mod loss;
pub mod oracle;
pub mod proposal;
pub mod voxel;

pub use error::{Error, Result};
