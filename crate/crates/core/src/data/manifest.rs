use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    classify_haze, haze_density, stratified_split, HazeClass, Split, DEFAULT_THRESHOLDS,
};
use crate::data::{tile_image, Image};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub hazy: String,
    pub clear: String,
    /// Mean dark channel, 0–255 scale.
    pub mdc: f64,
    pub class: HazeClass,
    pub split: Split,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManifestException {
    pub file: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    pub exceptions: Vec<ManifestException>,
}

#[derive(Clone, Copy, Debug)]
pub struct ManifestConfig {
    pub seed: u64,
    pub radius: usize,
    pub thresholds: (f64, f64),
    /// When set, every pair is cut into tiles and each tile is one record.
    pub tile: Option<usize>,
    /// Channel order applied to both images on load.
    pub bands: [usize; 3],
}

impl Default for ManifestConfig {
    fn default() -> Self {
        Self {
            seed: crate::rng::DEFAULT_SEED,
            radius: 7,
            thresholds: DEFAULT_THRESHOLDS,
            tile: None,
            bands: [0, 1, 2],
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pnm", "pgm"];

fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            out.insert(name.to_string(), path);
        }
    }
    Ok(out)
}

struct Pending {
    hazy: String,
    clear: String,
    mdc: f64,
    row: usize,
    col: usize,
}

fn analyze_pair(hazy: &Path, clear: &Path, cfg: &ManifestConfig) -> Result<Vec<Pending>> {
    let img = Image::load(hazy)?.select_bands(cfg.bands)?;
    let gt = Image::load(clear)?.select_bands(cfg.bands)?;
    if (img.width(), img.height()) != (gt.width(), gt.height()) {
        return Err(Error::shape(
            "manifest",
            format!(
                "{}x{} hazy vs {}x{} clear",
                img.width(),
                img.height(),
                gt.width(),
                gt.height()
            ),
        ));
    }
    let tiles = match cfg.tile {
        Some(t) => tile_image(&img, t)?,
        None => vec![(img, (0, 0))],
    };
    Ok(tiles
        .into_iter()
        .map(|(tile, (row, col))| Pending {
            hazy: hazy.display().to_string(),
            clear: clear.display().to_string(),
            mdc: haze_density(&tile, cfg.radius),
            row,
            col,
        })
        .collect())
}

/// Pair images by file name, grade each by mean dark channel, then assign
/// splits per class. Files without a partner, or that fail to decode, are
/// reported as exceptions rather than aborting the run.
pub fn build_manifest(hazy_dir: &Path, clear_dir: &Path, cfg: &ManifestConfig) -> Result<Manifest> {
    let hazy = list_images(hazy_dir)?;
    let clear = list_images(clear_dir)?;
    let mut exceptions = Vec::new();
    for (name, path) in &hazy {
        if !clear.contains_key(name) {
            exceptions.push(ManifestException {
                file: path.display().to_string(),
                reason: "no matching clear image".into(),
            });
        }
    }
    for (name, path) in &clear {
        if !hazy.contains_key(name) {
            exceptions.push(ManifestException {
                file: path.display().to_string(),
                reason: "no matching hazy image".into(),
            });
        }
    }
    let pairs: Vec<(&PathBuf, &PathBuf)> = hazy
        .iter()
        .filter_map(|(name, h)| clear.get(name).map(|c| (h, c)))
        .collect();
    let analyzed: Vec<Result<Vec<Pending>>> = pairs
        .par_iter()
        .map(|(h, c)| analyze_pair(h, c, cfg))
        .collect();
    let mut pending = Vec::new();
    for ((h, _), res) in pairs.iter().zip(analyzed) {
        match res {
            Ok(p) => pending.extend(p),
            Err(e) => exceptions.push(ManifestException {
                file: h.display().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    pending.sort_by(|a, b| (&a.hazy, a.row, a.col).cmp(&(&b.hazy, b.row, b.col)));
    exceptions.sort_by(|a, b| a.file.cmp(&b.file));
    let classes: Vec<HazeClass> = pending
        .iter()
        .map(|p| classify_haze(p.mdc, cfg.thresholds))
        .collect();
    let splits = stratified_split(&classes, cfg.seed);
    let records = pending
        .into_iter()
        .zip(classes)
        .zip(splits)
        .map(|((p, class), split)| ManifestRecord {
            hazy: p.hazy,
            clear: p.clear,
            mdc: p.mdc,
            class,
            split,
            row: p.row,
            col: p.col,
        })
        .collect();
    Ok(Manifest {
        records,
        exceptions,
    })
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<ManifestRecord>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Format {
                    path: PathBuf::from("<manifest>"),
                    detail: format!("line {}: {e}", i + 1),
                })
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::atomic::write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Vec<ManifestRecord>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }

    /// `(class, split) -> count`.
    pub fn counts(&self) -> BTreeMap<(HazeClass, &'static str), usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry((r.class, r.split.as_str())).or_insert(0) += 1;
        }
        out
    }
}
