use std::fs;
use std::path::{Path, PathBuf};

use super::{
    parse_calib_with_size, parse_label_file, parse_masks, read_velodyne, write_calib,
    write_label_file, write_masks, write_velodyne, InstanceMaskSet, LabelRecord,
};
use crate::error::{Error, Result};
use crate::geometry::{Calibration, PointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    /// Velodyne frame.
    pub cloud: PointCloud,
    pub calib: Calibration,
    pub masks: Option<InstanceMaskSet>,
    pub labels: Option<Vec<LabelRecord>>,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.masks {
            if (m.image_width, m.image_height) != (self.calib.image_width, self.calib.image_height) {
                return Err(Error::invalid(
                    "frame",
                    format!(
                        "mask size {}x{} differs from calibration image size {}x{}",
                        m.image_width, m.image_height, self.calib.image_width, self.calib.image_height
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// KITTI object-detection directory layout rooted at one split
/// (e.g. `training/`): `velodyne/`, `calib/`, `label_2/` and `masks/`.
#[derive(Debug, Clone)]
pub struct KittiLayout {
    pub root: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Path {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Path {
        path: path.display().to_string(),
        source,
    })
}

impl KittiLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn velodyne_path(&self, id: &str) -> PathBuf {
        self.root.join("velodyne").join(format!("{id}.bin"))
    }

    pub fn calib_path(&self, id: &str) -> PathBuf {
        self.root.join("calib").join(format!("{id}.txt"))
    }

    pub fn label_path(&self, id: &str) -> PathBuf {
        self.root.join("label_2").join(format!("{id}.txt"))
    }

    pub fn mask_path(&self, id: &str) -> PathBuf {
        self.root.join("masks").join(format!("{id}.json"))
    }

    /// Frame ids from a split file (one id per line), or every calibration
    /// file when no split is given. Sorted and deduplicated.
    pub fn frame_ids(&self, split: Option<&Path>) -> Result<Vec<String>> {
        let mut ids: Vec<String> = match split {
            Some(p) => read_text(p)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
            None => {
                let dir = self.root.join("calib");
                if !dir.exists() {
                    return Ok(Vec::new());
                }
                let mut ids = Vec::new();
                for entry in fs::read_dir(&dir)? {
                    let path = entry?.path();
                    if path.extension().is_some_and(|e| e == "txt") {
                        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                            ids.push(stem.to_owned());
                        }
                    }
                }
                ids
            }
        };
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    pub fn load_labels(&self, id: &str) -> Result<Vec<LabelRecord>> {
        parse_label_file(&read_text(&self.label_path(id))?).map_err(|e| e.in_frame(id))
    }

    /// Loads cloud and calibration plus masks/labels when present (or
    /// required). Calibration files without a declared image size adopt the
    /// mask size.
    pub fn load_frame(&self, id: &str, require_masks: bool, require_labels: bool) -> Result<Frame> {
        let inner = || -> Result<Frame> {
            let (mut calib, declared) = parse_calib_with_size(&read_text(&self.calib_path(id))?)?;
            let velo_path = self.velodyne_path(id);
            let bytes = fs::read(&velo_path).map_err(|source| Error::Path {
                path: velo_path.display().to_string(),
                source,
            })?;
            let cloud = read_velodyne(&bytes)?;
            let mask_path = self.mask_path(id);
            let masks = if require_masks || mask_path.exists() {
                Some(parse_masks(&read_text(&mask_path)?)?)
            } else {
                None
            };
            if let (Some(m), None) = (&masks, declared) {
                calib = calib.with_image_size(m.image_width, m.image_height)?;
            }
            let label_path = self.label_path(id);
            let labels = if require_labels || label_path.exists() {
                Some(parse_label_file(&read_text(&label_path)?)?)
            } else {
                None
            };
            let frame = Frame {
                frame_id: id.to_owned(),
                cloud,
                calib,
                masks,
                labels,
            };
            frame.validate()?;
            Ok(frame)
        };
        inner().map_err(|e| e.in_frame(id))
    }

    pub fn write_frame(&self, frame: &Frame) -> Result<()> {
        for dir in ["velodyne", "calib", "label_2", "masks"] {
            fs::create_dir_all(self.root.join(dir))?;
        }
        let id = &frame.frame_id;
        write_file(&self.velodyne_path(id), &write_velodyne(&frame.cloud))?;
        write_file(&self.calib_path(id), write_calib(&frame.calib).as_bytes())?;
        if let Some(labels) = &frame.labels {
            write_file(&self.label_path(id), write_label_file(labels).as_bytes())?;
        }
        if let Some(masks) = &frame.masks {
            write_file(&self.mask_path(id), write_masks(masks).as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti_io::{generate_synthetic_frame, SyntheticPedestrian, SyntheticSpec};

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let layout = KittiLayout::new(dir.path());
        let spec = SyntheticSpec {
            frame_id: "000004".into(),
            pedestrians: vec![SyntheticPedestrian { x: 1.0, z: 15.0, points: 25, ..Default::default() }],
            ..Default::default()
        };
        let frame = generate_synthetic_frame(&spec, 5);
        layout.write_frame(&frame).unwrap();
        let loaded = layout.load_frame("000004", true, true).unwrap();
        assert_eq!(loaded, frame);
        assert_eq!(layout.frame_ids(None).unwrap(), vec!["000004".to_owned()]);
    }

    #[test]
    fn missing_calib_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        let layout = KittiLayout::new(dir.path());
        let err = layout.load_frame("000123", false, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("000123") && msg.contains("calib"), "{msg}");
    }
}
