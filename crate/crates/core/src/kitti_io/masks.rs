use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One instance, run-length encoded over row-major pixel indices
/// (`index = v * width + u`). Each run is `[start, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMask {
    pub instance_id: u32,
    pub class: String,
    pub score: f64,
    pub rle: Vec<[u64; 2]>,
}

impl InstanceMask {
    pub fn pixel_count(&self) -> u64 {
        self.rle.iter().map(|r| r[1]).sum()
    }

    fn contains_index(&self, idx: u64) -> bool {
        // runs are sorted by start
        let pos = self.rle.partition_point(|r| r[0] <= idx);
        pos > 0 && {
            let [start, len] = self.rle[pos - 1];
            idx < start + len
        }
    }

    /// Builds sorted, merged runs from arbitrary pixel indices.
    pub fn runs_from_indices(indices: impl IntoIterator<Item = u64>) -> Vec<[u64; 2]> {
        let mut idx: Vec<u64> = indices.into_iter().collect();
        idx.sort_unstable();
        idx.dedup();
        let mut runs: Vec<[u64; 2]> = Vec::new();
        for i in idx {
            match runs.last_mut() {
                Some(r) if r[0] + r[1] == i => r[1] += 1,
                _ => runs.push([i, 1]),
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMaskSet {
    pub image_width: u32,
    pub image_height: u32,
    pub instances: Vec<InstanceMask>,
}

impl InstanceMaskSet {
    pub fn empty(image_width: u32, image_height: u32) -> Self {
        Self {
            image_width,
            image_height,
            instances: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Mask("image size must be positive".into()));
        }
        let total = self.image_width as u64 * self.image_height as u64;
        let mut ids = HashSet::new();
        let mut all_runs = Vec::new();
        for inst in &self.instances {
            let id = inst.instance_id;
            if !ids.insert(id) {
                return Err(Error::Mask(format!("duplicate instance_id {id}")));
            }
            if !(0.0..=1.0).contains(&inst.score) {
                return Err(Error::Mask(format!("instance {id}: score {} outside [0, 1]", inst.score)));
            }
            let mut prev_end = None;
            for &[start, len] in &inst.rle {
                if len == 0 {
                    return Err(Error::Mask(format!("instance {id}: empty run at {start}")));
                }
                let end = start
                    .checked_add(len)
                    .filter(|&e| e <= total)
                    .ok_or_else(|| {
                        Error::Mask(format!("instance {id}: run [{start}, {len}] out of image bounds"))
                    })?;
                if let Some(pe) = prev_end {
                    if start < pe {
                        return Err(Error::Mask(format!(
                            "instance {id}: runs unsorted or overlapping at {start}"
                        )));
                    }
                }
                prev_end = Some(end);
                all_runs.push((start, end, id));
            }
        }
        all_runs.sort_unstable();
        for pair in all_runs.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.0 < a.1 {
                return Err(Error::Mask(format!(
                    "instances {} and {} overlap at pixel index {}",
                    a.2, b.2, b.0
                )));
            }
        }
        Ok(())
    }

    pub fn rasterize(&self) -> MaskRaster {
        let n = self.image_width as usize * self.image_height as usize;
        let mut slots = vec![0u32; n];
        for (k, inst) in self.instances.iter().enumerate() {
            for &[start, len] in &inst.rle {
                let start = start as usize;
                let end = (start + len as usize).min(n);
                for s in &mut slots[start.min(end)..end] {
                    // first listed wins
                    if *s == 0 {
                        *s = k as u32 + 1;
                    }
                }
            }
        }
        MaskRaster {
            width: self.image_width,
            height: self.image_height,
            ids: self.instances.iter().map(|i| i.instance_id).collect(),
            slots,
        }
    }
}

/// Dense per-pixel instance lookup.
#[derive(Debug, Clone)]
pub struct MaskRaster {
    width: u32,
    height: u32,
    ids: Vec<u32>,
    slots: Vec<u32>,
}

impl MaskRaster {
    pub fn get(&self, u: u32, v: u32) -> Option<u32> {
        if u >= self.width || v >= self.height {
            return None;
        }
        match self.slots[v as usize * self.width as usize + u as usize] {
            0 => None,
            k => Some(self.ids[k as usize - 1]),
        }
    }
}

/// Instance covering pixel (u, v), if any.
pub fn decode_pixel(set: &InstanceMaskSet, u: u32, v: u32) -> Option<u32> {
    if u >= set.image_width || v >= set.image_height {
        return None;
    }
    let idx = v as u64 * set.image_width as u64 + u as u64;
    set.instances
        .iter()
        .find(|inst| inst.contains_index(idx))
        .map(|inst| inst.instance_id)
}

pub fn parse_masks(json_text: &str) -> Result<InstanceMaskSet> {
    let set: InstanceMaskSet = serde_json::from_str(json_text)?;
    set.validate()?;
    Ok(set)
}

pub fn write_masks(set: &InstanceMaskSet) -> String {
    let mut s = serde_json::to_string(set).expect("mask set serializes");
    s.push('\n');
    s
}
