//! Benchmark directory layouts, include lists and mask I/O.
//!
//! | layout     | images                                  | masks                                        | image id          |
//! |------------|-----------------------------------------|----------------------------------------------|-------------------|
//! | `davis`    | `JPEGImages/480p/<seq>/<frame>.jpg`     | `Annotations/480p/<seq>/<frame>.png`         | `seq/frame`       |
//! | `fbms`     | `<seq>/<frame>.jpg`                     | `<seq>/GroundTruth/<frame>[_gt].png`         | `seq/frame`       |
//! | `segtrack` | `JPEGImages/<seq>/<frame>.png`          | `GroundTruth/<seq>/<frame>.png` (or `/1/`)   | `seq/frame`       |
//! | `ytobj`    | `<cat>/<seq>/images/<frame>.jpg`        | `<cat>/<seq>/masks/<frame>.png`              | `cat/seq/frame`   |
//! | `flat`     | `images/<name>.png`                     | `masks/<name>.png`                           | `name`            |
//!
//! Images may be JPEG, PNG or BMP. Masks are optional per frame. Samples are
//! ordered lexicographically by id.

mod mask;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use mask::{encode_mask_png, encode_rgb_png, read_image, read_mask, write_mask, write_rgb_png, MaskIoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Davis,
    Fbms,
    Segtrack,
    Ytobj,
    Flat,
}

impl Layout {
    pub const ALL: [Layout; 5] = [Layout::Davis, Layout::Fbms, Layout::Segtrack, Layout::Ytobj, Layout::Flat];

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Davis => "davis",
            Layout::Fbms => "fbms",
            Layout::Segtrack => "segtrack",
            Layout::Ytobj => "ytobj",
            Layout::Flat => "flat",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layout::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown layout `{s}` (expected davis, fbms, segtrack, ytobj or flat)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub image_id: String,
    pub sequence: String,
    pub frame: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub category: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{root}: expected directory `{expected}` for this layout")]
    LayoutError { root: PathBuf, expected: String },
    #[error("include-list entry `{0}` not found in the dataset")]
    UnresolvedId(String),
    #[error("include list names `{0}` more than once")]
    DuplicateId(String),
    #[error("`{id}`: mask is {mask:?} but image is {image:?} (width, height)")]
    MaskDimensionError {
        id: String,
        image: (u32, u32),
        mask: (u32, u32),
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot read header: {message}")]
    Header { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ordered, duplicate-free list of image ids. One id per line; `#` starts a
/// comment; blank lines are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncludeList(Vec<String>);

impl IncludeList {
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        let mut ids = Vec::new();
        for line in text.lines() {
            let id = line.split('#').next().unwrap_or("").trim();
            if id.is_empty() {
                continue;
            }
            if !seen.insert(id.to_string()) {
                return Err(DatasetError::DuplicateId(id.to_string()));
            }
            ids.push(id.to_string());
        }
        Ok(IncludeList(ids))
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn ids(&self) -> &[String] {
        &self.0
    }

    /// The listed samples, in list order.
    pub fn apply(&self, samples: Vec<Sample>) -> Result<Vec<Sample>, DatasetError> {
        let mut by_id: BTreeMap<String, Sample> = samples.into_iter().map(|s| (s.image_id.clone(), s)).collect();
        self.0
            .iter()
            .map(|id| by_id.remove(id).ok_or_else(|| DatasetError::UnresolvedId(id.clone())))
            .collect()
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "bmp"];
const MASK_EXTENSIONS: [&str; 2] = ["png", "bmp"];

fn has_ext(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn require_dir(root: &Path, rel: &str) -> Result<PathBuf, DatasetError> {
    let dir = if rel.is_empty() { root.to_path_buf() } else { root.join(rel) };
    if dir.is_dir() {
        Ok(dir)
    } else {
        Err(DatasetError::LayoutError {
            root: root.to_path_buf(),
            expected: if rel.is_empty() { ".".into() } else { rel.into() },
        })
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(entry.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    Ok(sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()).collect())
}

fn files_with(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, DatasetError> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_file() && has_ext(p, exts))
        .collect())
}

fn name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// First existing mask for `frame` in any of `dirs`, trying each stem suffix.
fn find_mask(dirs: &[PathBuf], frame: &str, suffixes: &[&str]) -> Option<PathBuf> {
    dirs.iter().find_map(|dir| {
        suffixes.iter().find_map(|suffix| {
            MASK_EXTENSIONS
                .iter()
                .map(|ext| dir.join(format!("{frame}{suffix}.{ext}")))
                .find(|p| p.is_file())
        })
    })
}

fn frames_in(
    image_dir: &Path,
    mask_dirs: &[PathBuf],
    suffixes: &[&str],
    sequence: &str,
    category: Option<&str>,
    out: &mut Vec<Sample>,
) -> Result<(), DatasetError> {
    for image_path in files_with(image_dir, &IMAGE_EXTENSIONS)? {
        let frame = stem(&image_path);
        let image_id = if sequence.is_empty() { frame.clone() } else { format!("{sequence}/{frame}") };
        out.push(Sample {
            image_id,
            sequence: if sequence.is_empty() { frame.clone() } else { sequence.to_string() },
            mask_path: find_mask(mask_dirs, &frame, suffixes),
            frame,
            image_path,
            category: category.map(str::to_string),
        });
    }
    Ok(())
}

fn walk(root: &Path, layout: Layout) -> Result<Vec<Sample>, DatasetError> {
    let mut out = Vec::new();
    match layout {
        Layout::Davis => {
            let images = require_dir(root, "JPEGImages/480p")?;
            let masks = root.join("Annotations/480p");
            for seq_dir in subdirs(&images)? {
                let seq = name(&seq_dir);
                frames_in(&seq_dir, &[masks.join(&seq)], &[""], &seq, None, &mut out)?;
            }
        }
        Layout::Fbms => {
            let root_dir = require_dir(root, "")?;
            for seq_dir in subdirs(&root_dir)? {
                let seq = name(&seq_dir);
                frames_in(&seq_dir, &[seq_dir.join("GroundTruth")], &["", "_gt"], &seq, None, &mut out)?;
            }
        }
        Layout::Segtrack => {
            let images = require_dir(root, "JPEGImages")?;
            let masks = root.join("GroundTruth");
            for seq_dir in subdirs(&images)? {
                let seq = name(&seq_dir);
                let dirs = [masks.join(&seq), masks.join(&seq).join("1")];
                frames_in(&seq_dir, &dirs, &[""], &seq, None, &mut out)?;
            }
        }
        Layout::Ytobj => {
            let root_dir = require_dir(root, "")?;
            for cat_dir in subdirs(&root_dir)? {
                let cat = name(&cat_dir);
                for seq_dir in subdirs(&cat_dir)? {
                    let images = seq_dir.join("images");
                    if !images.is_dir() {
                        continue;
                    }
                    let seq = format!("{cat}/{}", name(&seq_dir));
                    frames_in(&images, &[seq_dir.join("masks")], &[""], &seq, Some(&cat), &mut out)?;
                }
            }
        }
        Layout::Flat => {
            let images = require_dir(root, "images")?;
            frames_in(&images, &[root.join("masks")], &[""], "", None, &mut out)?;
        }
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}

fn dimensions(path: &Path) -> Result<(u32, u32), DatasetError> {
    image::image_dimensions(path).map_err(|e| DatasetError::Header {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Enumerates `root` under `layout`, optionally restricted to an include list.
pub fn load_dataset(root: &Path, layout: Layout, include: Option<&IncludeList>) -> Result<Vec<Sample>, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::LayoutError {
            root: root.to_path_buf(),
            expected: ".".into(),
        });
    }
    let samples = walk(root, layout)?;
    let samples = match include {
        Some(list) => list.apply(samples)?,
        None => samples,
    };
    for s in &samples {
        if let Some(mask) = &s.mask_path {
            let (image, mask) = (dimensions(&s.image_path)?, dimensions(mask)?);
            if image != mask {
                return Err(DatasetError::MaskDimensionError {
                    id: s.image_id.clone(),
                    image,
                    mask,
                });
            }
        }
    }
    Ok(samples)
}
