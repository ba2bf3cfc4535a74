//! Student crop storage.
//!
//! On disk a store is a directory of `{lecture}_{subject}_{frame}.png` files
//! plus `manifest.json`. All crops share one size.

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::annotation::RecordKey;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    lecture_id: u32,
    subject_id: String,
    frame_index: u64,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    width: u32,
    height: u32,
    crops: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropStore {
    width: u32,
    height: u32,
    crops: BTreeMap<RecordKey, RgbImage>,
}

impl CropStore {
    pub fn new(width: u32, height: u32) -> Self {
        CropStore { width, height, crops: BTreeMap::new() }
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn insert(&mut self, key: RecordKey, crop: RgbImage) -> Result<()> {
        if crop.dimensions() != (self.width, self.height) {
            return Err(Error::Shape(format!(
                "crop {key} is {:?}, store holds {}x{}",
                crop.dimensions(),
                self.width,
                self.height
            )));
        }
        self.crops.insert(key, crop);
        Ok(())
    }

    pub fn get(&self, key: &RecordKey) -> Result<&RgbImage> {
        self.crops.get(key).ok_or_else(|| Error::MissingCrop(key.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecordKey, &RgbImage)> {
        self.crops.iter()
    }

    /// Bilinear resize of every crop.
    pub fn resized(&self, width: u32, height: u32) -> CropStore {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let crops = self
            .crops
            .iter()
            .map(|(k, img)| (k.clone(), imageops::resize(img, width, height, FilterType::Triangle)))
            .collect();
        CropStore { width, height, crops }
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.crops.len());
        for (key, img) in &self.crops {
            let file = format!("{key}.png");
            let path = dir.join(&file);
            img.save_with_format(&path, image::ImageFormat::Png)?;
            entries.push(ManifestEntry {
                lecture_id: key.lecture_id,
                subject_id: key.subject_id.clone(),
                frame_index: key.frame_index,
                file,
            });
        }
        let manifest = Manifest { width: self.width, height: self.height, crops: entries };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<CropStore> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut store = CropStore::new(manifest.width, manifest.height);
        for entry in manifest.crops {
            let img = image::open(dir.join(&entry.file))?.to_rgb8();
            let key = RecordKey {
                lecture_id: entry.lecture_id,
                subject_id: entry.subject_id,
                frame_index: entry.frame_index,
            };
            store.insert(key, img)?;
        }
        Ok(store)
    }
}
