//! Manifests from on-disk dataset layouts.
//!
//! Both supported layouts look like
//! `<root>/<category>/train/good/*` and `<root>/<category>/test/<kind>/*`,
//! where test images under `good` are normal and every other `<kind>` folder
//! holds anomalies. MVTec-AD ships in this form; VisA does after its
//! standard one-class split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use randprompt_ad_core::{DatasetManifest, Error, ManifestEntry, Result};

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
    out.sort();
    Ok(out)
}

fn images_in(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_dir(dir)?.into_iter().filter(|p| p.is_file() && is_image(p)).collect())
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Test-set manifest plus, when `refs_per_category > 0`, the first training
/// normals of each category (in file-name order) as few-shot references.
pub fn scan(
    root: &Path,
    categories: Option<&[String]>,
    refs_per_category: usize,
) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::MissingInputs(vec![root.to_path_buf()]));
    }
    let mut entries = Vec::new();
    let mut refs = BTreeMap::new();
    for cat_dir in sorted_dir(root)?.into_iter().filter(|p| p.join("test").is_dir()) {
        let category = cat_dir.file_name().unwrap().to_string_lossy().to_string();
        if categories.is_some_and(|c| !c.contains(&category)) {
            continue;
        }
        let test = cat_dir.join("test");
        let mut kinds = sorted_dir(&test)?;
        kinds.retain(|p| p.is_dir());
        // Normals first, then anomaly kinds alphabetically.
        kinds.sort_by_key(|k| (k.file_name().unwrap() != "good", k.clone()));
        for kind in kinds {
            let label = u8::from(kind.file_name().unwrap() != "good");
            for img in images_in(&kind)? {
                entries.push(ManifestEntry {
                    path: relative(root, &img),
                    label,
                    category: category.clone(),
                });
            }
        }
        if refs_per_category > 0 {
            let train_good = cat_dir.join("train").join("good");
            let found = if train_good.is_dir() { images_in(&train_good)? } else { Vec::new() };
            if found.len() < refs_per_category {
                return Err(Error::Data(format!(
                    "category {category} has {} training normals, {refs_per_category} requested",
                    found.len()
                )));
            }
            refs.insert(
                category.clone(),
                found[..refs_per_category].iter().map(|p| relative(root, p)).collect(),
            );
        }
    }
    if entries.is_empty() {
        return Err(Error::Data(format!("no test images found under {}", root.display())));
    }
    DatasetManifest::new(entries, refs)
}

/// The references of `m` as manifest entries, in the row order of the
/// reference-embedding file. Feeding this to the image extractor yields
/// that file.
pub fn reference_manifest(m: &DatasetManifest) -> Result<DatasetManifest> {
    let entries = m
        .refs()
        .iter()
        .flat_map(|(c, paths)| {
            paths.iter().map(move |p| ManifestEntry {
                path: p.clone(),
                label: 0,
                category: c.clone(),
            })
        })
        .collect();
    DatasetManifest::new(entries, BTreeMap::new())
}
