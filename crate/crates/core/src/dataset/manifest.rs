use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::shard::read_shard;
use crate::error::{invalid, Error, Result};
use crate::signal::{GeneratorParams, ImpairmentConfig, IqFrame, ModulationMode};
use crate::util::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCount {
    pub mode: ModulationMode,
    pub snr_db: i32,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub file: String,
    pub frames: usize,
}

/// JSON sidecar describing a directory of shards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub frame_length: usize,
    pub classes: Vec<ModulationMode>,
    pub snr_grid: Vec<i32>,
    pub total_frames: usize,
    pub cells: Vec<CellCount>,
    pub shards: Vec<ShardEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impairments: Option<ImpairmentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_seed: Option<u64>,
    pub source: String,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Every frame of a dataset directory under one class table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameSet {
    pub classes: Vec<ModulationMode>,
    pub frames: Vec<IqFrame>,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Dense index of a frame's label in [`FrameSet::classes`].
    pub fn class_index(&self, mode: ModulationMode) -> Option<usize> {
        self.classes.iter().position(|&c| c == mode)
    }

    pub fn label_index(&self, i: usize) -> usize {
        self.class_index(self.frames[i].label).expect("label in class table")
    }

    /// Frame counts keyed by (class index, SNR).
    pub fn cell_histogram(&self) -> BTreeMap<(usize, i32), usize> {
        let mut h = BTreeMap::new();
        for i in 0..self.frames.len() {
            *h.entry((self.label_index(i), self.frames[i].snr_db)).or_insert(0) += 1;
        }
        h
    }

    pub fn snr_values(&self) -> Vec<i32> {
        let mut v: Vec<i32> = self.frames.iter().map(|f| f.snr_db).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Loads a shard directory. Shards listed in `manifest.json` are read in
/// listed order; without a manifest every `*.iqs` file is read in name order.
pub fn load_dir(dir: &Path) -> Result<FrameSet> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let files: Vec<std::path::PathBuf> = if manifest_path.exists() {
        let m = DatasetManifest::load(&manifest_path)?;
        m.shards.iter().map(|s| dir.join(&s.file)).collect()
    } else {
        let mut v: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "iqs"))
            .collect();
        v.sort();
        v
    };
    if files.is_empty() {
        return Err(invalid!("no shards found in {}", dir.display()));
    }
    let mut set = FrameSet::default();
    for (k, file) in files.iter().enumerate() {
        let shard = read_shard(file)?;
        if k == 0 {
            set.classes = shard.classes;
        } else if shard.classes != set.classes {
            return Err(Error::Format(format!(
                "{} has a different class table",
                file.display()
            )));
        }
        set.frames.extend(shard.frames);
    }
    Ok(set)
}
