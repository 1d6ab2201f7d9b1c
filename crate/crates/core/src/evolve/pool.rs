use std::path::{Path, PathBuf};

use super::{EvolveError, PoolSample};
use crate::image::Pixel;
use crate::io::{self, FormatError};
use crate::synth::{LabelRecord, Split};

/// Directory actually holding the sidecars: `<dir>/<split>` when `dir` is a
/// dataset root (has `manifest.json`), otherwise `dir` itself.
pub fn resolve_split_dir(dir: &Path, split: Split) -> PathBuf {
    if dir.join("manifest.json").is_file() {
        dir.join(split.as_str())
    } else {
        dir.to_path_buf()
    }
}

/// Sidecar files (`*.json`, excluding manifests and run records), sorted.
pub fn sidecars(dir: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let entries = std::fs::read_dir(dir).map_err(|e| FormatError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && !matches!(
                    p.file_name().and_then(|n| n.to_str()),
                    Some("manifest.json" | "run.json" | "evolution.json")
                )
        })
        .collect();
    out.sort();
    Ok(out)
}

/// The frame belonging to a sidecar: `<id>.pgm`, else `<id>_img.png`, else
/// `<id>.png`.
pub fn image_for(sidecar: &Path) -> Option<PathBuf> {
    let stem = sidecar.file_stem()?.to_str()?;
    let dir = sidecar.parent()?;
    [
        format!("{stem}.pgm"),
        format!("{stem}_img.png"),
        format!("{stem}.png"),
    ]
    .into_iter()
    .map(|n| dir.join(n))
    .find(|p| p.is_file())
}

/// Reads every sidecar-labelled frame of a directory into a pool, in id
/// order. Reference masks are only read when `with_gt` is set.
pub fn load_pool(dir: &Path, split: Split, with_gt: bool) -> Result<Vec<PoolSample>, EvolveError> {
    let dir = resolve_split_dir(dir, split);
    let mut pool = Vec::new();
    for path in sidecars(&dir)? {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let bad = |reason: String| EvolveError::BadSample {
            id: id.clone(),
            reason,
        };
        let rec = LabelRecord::from_json(&io::read_bytes(&path)?)?;
        let image_path =
            image_for(&path).ok_or_else(|| bad("no image next to the label sidecar".into()))?;
        let image = io::read_image(&image_path)?;
        let gt = if with_gt {
            let mask = io::read_mask(&dir.join(&rec.mask))?;
            if mask.dims() != image.dims() {
                return Err(bad(format!(
                    "mask {:?} does not match image {:?}",
                    mask.dims(),
                    image.dims()
                )));
            }
            Some(mask)
        } else {
            None
        };
        pool.push(PoolSample {
            id,
            image,
            point: Pixel::new(rec.point[0], rec.point[1]),
            gt,
            group: Some(rec.stray_light.to_string()),
        });
    }
    if pool.is_empty() {
        return Err(EvolveError::EmptyPool);
    }
    Ok(pool)
}
