use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rescue_mind::agents::{DatasetConfig, DatasetSummary};
use rescue_mind::trajectory::{deserialize, Trajectory};
use rescue_mind::world::{load_map, AreaGraph, World};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

/// Writes `bytes` to a temp file next to `path`, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Data(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let fail = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(fail)?;
    f.write_all(bytes).map_err(fail)?;
    f.sync_all().map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// `default` selects the shipped map; anything else is a map-spec path.
pub fn load_world(map: &str) -> Result<World> {
    if map == "default" {
        return Ok(World::default_map());
    }
    let text = fs::read_to_string(map).map_err(|e| CliError::Data(format!("{map}: {e}")))?;
    load_map(&text).map_err(|e| CliError::Data(format!("{map}: {e}")))
}

pub fn load_graph(map: &str, perturbations: &str) -> Result<AreaGraph> {
    load_world(map)?
        .perturbed(perturbations)
        .map_err(CliError::data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub content_hash: String,
    pub start_label: Option<String>,
    pub switching: bool,
    pub selective_observations: usize,
    pub opportunistic_observations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub map: String,
    pub perturbations: String,
    pub count: usize,
    pub config: DatasetConfig,
    pub summary: DatasetSummary,
    pub files: Vec<ManifestEntry>,
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    deserialize(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub struct Dataset {
    pub manifest: Option<Manifest>,
    pub trajectories: Vec<Trajectory>,
}

/// Reads the files listed in the directory's manifest, or every `*.jsonl`
/// file in name order when there is none.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{}: dataset directory not found", dir.display())));
    }
    let manifest_path = dir.join(MANIFEST);
    let manifest: Option<Manifest> = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(CliError::data)?;
        Some(serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?)
    } else {
        None
    };
    let files: Vec<PathBuf> = match &manifest {
        Some(m) => m.files.iter().map(|e| dir.join(&e.file)).collect(),
        None => {
            let mut v: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(CliError::data)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            v.sort();
            v
        }
    };
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no trajectories", dir.display())));
    }
    let trajectories = files.iter().map(|p| read_trajectory(p)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, trajectories })
}
