//! Filesystem datastore: images, their "original" (model) and "final"
//! (approved) labels, and a JSON index.
//!
//! Layout: `root/{index.json, images/, labels/final/, labels/original/}`.
//! An image is labeled iff it has a "final" label.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::active::ImageSource;
use crate::atomic::write_atomic_with;
use crate::error::{Error, Result};
use crate::planner::{dataset_stats, DatasetStats};
use crate::volume::{ensure_same_dims, nifti, LabelMask, Volume};

pub const INDEX_FILE: &str = "index.json";
pub const INDEX_VERSION: u32 = 1;
pub const TAG_FINAL: &str = "final";
pub const TAG_ORIGINAL: &str = "original";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    /// Path relative to the datastore root.
    pub image: PathBuf,
    #[serde(default)]
    pub labels: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub added_at: u64,
    #[serde(default)]
    pub label_saved_at: Option<u64>,
}

impl Entry {
    pub fn is_labeled(&self) -> bool {
        self.labels.contains_key(TAG_FINAL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatastoreIndex {
    pub version: u32,
    pub entries: IndexMap<String, Entry>,
}

impl Default for DatastoreIndex {
    fn default() -> Self {
        Self {
            version: INDEX_VERSION,
            entries: IndexMap::new(),
        }
    }
}

#[derive(Debug)]
pub struct Datastore {
    root: PathBuf,
    index: DatastoreIndex,
    #[cfg(test)]
    fail_before_rename: bool,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn nifti_stem(name: &str) -> Option<&str> {
    name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii"))
}

fn extension(bytes: &[u8]) -> &'static str {
    if nifti::is_gzip(bytes) {
        "nii.gz"
    } else {
        "nii"
    }
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::BadImage(format!("invalid image id {id:?}")))
    }
}

impl Datastore {
    /// Loads `root/index.json`, or scans `root` and `root/images` for NIfTI
    /// files and writes a fresh index.
    pub fn open_or_init(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        for sub in ["images", "labels/final", "labels/original"] {
            fs::create_dir_all(root.join(sub))?;
        }
        let index_path = root.join(INDEX_FILE);
        let mut ds = Self {
            root,
            index: DatastoreIndex::default(),
            #[cfg(test)]
            fail_before_rename: false,
        };
        match fs::read(&index_path) {
            Ok(bytes) => {
                let index: DatastoreIndex = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::CorruptIndex(format!("{}: {e}", index_path.display())))?;
                if index.version != INDEX_VERSION {
                    return Err(Error::CorruptIndex(format!("unsupported version {}", index.version)));
                }
                let missing: Vec<String> = index
                    .entries
                    .values()
                    .flat_map(|e| std::iter::once(&e.image).chain(e.labels.values()))
                    .map(|p| ds.root.join(p))
                    .filter(|p| !p.is_file())
                    .map(|p| p.display().to_string())
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::CorruptIndex(format!("missing files: {}", missing.join(", "))));
                }
                ds.index = index;
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                ds.scan()?;
                ds.commit()?;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(ds)
    }

    fn scan(&mut self) -> Result<()> {
        let t = now();
        for dir in [PathBuf::new(), PathBuf::from("images")] {
            let mut names: Vec<String> = fs::read_dir(self.root.join(&dir))?
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
                .filter_map(|e| e.file_name().into_string().ok())
                .filter(|n| nifti_stem(n).is_some())
                .collect();
            names.sort();
            for name in names {
                let id = self.unique_id(nifti_stem(&name).unwrap());
                self.index.entries.insert(
                    id,
                    Entry {
                        image: dir.join(&name),
                        labels: BTreeMap::new(),
                        meta: BTreeMap::new(),
                        added_at: t,
                        label_saved_at: None,
                    },
                );
            }
        }
        Ok(())
    }

    fn unique_id(&self, base: &str) -> String {
        if !self.index.entries.contains_key(base) {
            return base.to_string();
        }
        (2..)
            .map(|k| format!("{base}-{k}"))
            .find(|id| !self.index.entries.contains_key(id))
            .unwrap()
    }

    fn commit(&self) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.index)?;
        #[cfg(test)]
        let fail = self.fail_before_rename;
        #[cfg(not(test))]
        let fail = false;
        write_atomic_with(&self.root.join(INDEX_FILE), &bytes, |_| {
            if fail {
                Err(io::Error::other("injected failure before rename"))
            } else {
                Ok(())
            }
        })?;
        Ok(())
    }

    /// Applies `change` to a copy of the index and commits it; on failure
    /// the in-memory index is left as it was.
    fn update(&mut self, change: impl FnOnce(&mut DatastoreIndex)) -> Result<()> {
        let previous = self.index.clone();
        change(&mut self.index);
        if let Err(e) = self.commit() {
            self.index = previous;
            return Err(e);
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &DatastoreIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.index.entries.keys().cloned().collect()
    }

    pub fn entry(&self, id: &str) -> Result<&Entry> {
        self.index
            .entries
            .get(id)
            .ok_or_else(|| Error::UnknownImage(id.to_string()))
    }

    /// Stores NIfTI `bytes` verbatim under `images/`; a taken id gets a
    /// `-2`, `-3`, ... suffix. Returns the id used.
    pub fn add_image(&mut self, id: &str, bytes: &[u8]) -> Result<String> {
        check_id(id)?;
        nifti::read(bytes).map_err(|e| Error::BadImage(e.to_string()))?;
        let id = self.unique_id(id);
        let rel = PathBuf::from("images").join(format!("{id}.{}", extension(bytes)));
        let path = self.root.join(&rel);
        if path.exists() {
            return Err(Error::BadImage(format!("{} already exists", path.display())));
        }
        fs::write(&path, bytes)?;
        let entry = Entry {
            image: rel,
            labels: BTreeMap::new(),
            meta: BTreeMap::new(),
            added_at: now(),
            label_saved_at: None,
        };
        let key = id.clone();
        if let Err(e) = self.update(|ix| {
            ix.entries.insert(key, entry);
        }) {
            let _ = fs::remove_file(&path);
            return Err(e);
        }
        Ok(id)
    }

    /// Stores a label for `id` under `labels/<tag>/`.
    pub fn save_label(&mut self, id: &str, tag: &str, bytes: &[u8]) -> Result<PathBuf> {
        if tag != TAG_FINAL && tag != TAG_ORIGINAL {
            return Err(Error::BadTag(tag.to_string()));
        }
        let entry = self.entry(id)?;
        let label = nifti::read(bytes).map_err(|e| Error::BadLabel(e.to_string()))?;
        let image_dims = nifti::read(&fs::read(self.root.join(&entry.image))?)?.dims();
        ensure_same_dims(image_dims, label.dims())?;
        LabelMask::from_volume(&label)?;

        let dir = PathBuf::from("labels").join(tag);
        let rel = dir.join(format!("{id}.{}", extension(bytes)));
        let path = self.root.join(&rel);
        let stale = entry.labels.get(tag).filter(|old| **old != rel).cloned();
        let replaces = entry.labels.get(tag) == Some(&rel);
        write_atomic_with(&path, bytes, |_| Ok(()))?;
        let (id_key, tag_key, t) = (id.to_string(), tag.to_string(), now());
        if let Err(e) = self.update(|ix| {
            let e = ix.entries.get_mut(&id_key).expect("checked above");
            e.labels.insert(tag_key, rel);
            e.label_saved_at = Some(t);
        }) {
            if !replaces {
                let _ = fs::remove_file(&path);
            }
            return Err(e);
        }
        if let Some(old) = stale {
            let _ = fs::remove_file(self.root.join(old));
        }
        Ok(path)
    }

    pub fn set_meta(&mut self, id: &str, key: &str, value: serde_json::Value) -> Result<()> {
        self.entry(id)?;
        let (id, key) = (id.to_string(), key.to_string());
        self.update(|ix| {
            ix.entries.get_mut(&id).unwrap().meta.insert(key, value);
        })
    }

    /// (labeled, unlabeled) ids, each in insertion order.
    pub fn partition(&self) -> (Vec<String>, Vec<String>) {
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for (id, e) in &self.index.entries {
            if e.is_labeled() {
                labeled.push(id.clone());
            } else {
                unlabeled.push(id.clone());
            }
        }
        (labeled, unlabeled)
    }

    pub fn image_path(&self, id: &str) -> Result<PathBuf> {
        Ok(self.root.join(&self.entry(id)?.image))
    }

    pub fn image_bytes(&self, id: &str) -> Result<Vec<u8>> {
        Ok(fs::read(self.image_path(id)?)?)
    }

    pub fn load(&self, id: &str) -> Result<Volume> {
        nifti::read(&self.image_bytes(id)?)
    }

    pub fn label_bytes(&self, id: &str, tag: &str) -> Result<Option<Vec<u8>>> {
        match self.entry(id)?.labels.get(tag) {
            Some(p) => Ok(Some(fs::read(self.root.join(p))?)),
            None => Ok(None),
        }
    }

    pub fn load_label(&self, id: &str, tag: &str) -> Result<Option<LabelMask>> {
        self.label_bytes(id, tag)?
            .map(|b| LabelMask::from_volume(&nifti::read(&b)?))
            .transpose()
    }

    /// Every labeled image with its final label.
    pub fn labeled_pairs(&self) -> Result<Vec<(String, Volume, LabelMask)>> {
        let (labeled, _) = self.partition();
        labeled
            .into_iter()
            .map(|id| {
                let v = self.load(&id)?;
                let m = self.load_label(&id, TAG_FINAL)?.expect("labeled entries have a final label");
                Ok((id, v, m))
            })
            .collect()
    }

    /// Planner statistics over the labeled images.
    pub fn stats(&self) -> Result<DatasetStats> {
        let (labeled, _) = self.partition();
        let images = labeled.iter().map(|id| self.load(id)).collect::<Result<Vec<_>>>()?;
        dataset_stats(&images)
    }
}

impl ImageSource for Datastore {
    fn image_ids(&self) -> Vec<String> {
        self.ids()
    }

    fn load_image(&self, id: &str) -> Result<Volume> {
        self.load(id)
    }
}
