//! Stage dumps on disk: written by `--dump-intermediates`, read back by
//! `--resume`, and reused as the content-addressed cache.

use std::fs;
use std::path::{Path, PathBuf};

use retina_kit::imgio::{load_raw, load_raw_map, save_image, save_mask, save_raw, save_raw_map};
use retina_kit::{Detection, Detector, PipelineConfig};
use sha2::{Digest, Sha256};

use crate::error::{Classify, CliError, CliResult};

const WORKING: &str = "working.raw";
const DIFFUSED: &str = "diffused.raw";
const DMAP: &str = "dmap.raw";

/// Writes resumable raw stages plus viewable PNGs of the maps.
pub fn dump(det: &Detection, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    save_raw(&det.working, dir.join(WORKING)).stage()?;
    save_raw(&det.diffused, dir.join(DIFFUSED)).stage()?;
    save_raw_map(&det.dmap, dir.join(DMAP)).stage()?;
    save_image(&det.dmap.to_display(), dir.join("dmap.png")).stage()?;
    save_image(&det.enhanced.to_display(), dir.join("enhanced.png")).stage()?;
    save_mask(&det.binarized, dir.join("binarized.png")).stage()?;
    save_mask(&det.opened, dir.join("opened.png")).stage()?;
    save_mask(&det.field_of_view, dir.join("field_of_view.png")).stage()?;
    Ok(())
}

/// Rebuilds the detection from the raw stages of a dump.
pub fn resume(detector: &Detector, dir: &Path) -> CliResult<Detection> {
    let working = load_raw(dir.join(WORKING)).usage()?;
    let diffused = load_raw(dir.join(DIFFUSED)).usage()?;
    let dmap = load_raw_map(dir.join(DMAP)).usage()?;
    detector.resume_from_dmap(working, diffused, dmap).stage()
}

/// Hex SHA-256 over the input bytes and the canonical configuration.
pub fn cache_key(input: &[u8], config: &PipelineConfig) -> CliResult<String> {
    let json = serde_json::to_vec(config).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let mut h = Sha256::new();
    h.update((input.len() as u64).to_le_bytes());
    h.update(input);
    h.update(&json);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Detection through the cache: a complete entry is resumed, anything else
/// is computed and stored.
pub fn detect_cached(detector: &Detector, image_path: &Path, cache: &Path) -> CliResult<Detection> {
    let bytes = fs::read(image_path).map_err(|e| CliError::io(image_path, e))?;
    let entry = cache.join(cache_key(&bytes, detector.config())?);
    if entry.join(DMAP).is_file() {
        log::info!("cache hit {}", entry.display());
        return resume(detector, &entry);
    }
    let img = retina_kit::imgio::load_image(image_path).usage()?;
    let det = detector.detect(&img).stage()?;
    let staging = staging_dir(&entry);
    dump(&det, &staging)?;
    if fs::rename(&staging, &entry).is_err() {
        // another run filled the entry first
        let _ = fs::remove_dir_all(&staging);
    }
    log::info!("cached {}", entry.display());
    Ok(det)
}

fn staging_dir(entry: &Path) -> PathBuf {
    let mut name = entry.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    entry.with_file_name(name)
}
