//! KITTI-format readers and writers, the JSON+RLE instance mask format and
//! a deterministic synthetic scene generator.

mod calib;
mod dataset;
mod label;
mod masks;
mod synthetic;
mod velodyne;

pub use calib::{parse_calib, write_calib, DEFAULT_IMAGE_HEIGHT, DEFAULT_IMAGE_WIDTH};
pub use dataset::{Frame, KittiLayout};
pub use label::{parse_label_file, write_label_file, LabelRecord};
pub use masks::{decode_pixel, parse_masks, write_masks, InstanceMask, InstanceMaskSet, MaskRaster};
pub use synthetic::{
    generate_synthetic_frame, random_scene, synthetic_calibration, SyntheticPedestrian,
    SyntheticSpec, RANDOM_SCENE_POINTS,
};
pub use velodyne::{read_velodyne, write_velodyne};

pub(crate) use calib::parse_calib_with_size;
