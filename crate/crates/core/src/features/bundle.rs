//! JSON bundle manifest tying a beat grid to its feature containers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_container, write_container, BeatGrid, FeatureMatrix};
use crate::{stats, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub audio: String,
    pub sample_rate: u32,
    pub beats: Vec<f64>,
    pub downbeats: Vec<f64>,
    pub beats_per_measure: usize,
    pub features: Vec<FeatureRef>,
    /// Recording length in seconds. When absent it is read from the audio
    /// file header, or estimated as one median beat period past the last beat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRef {
    pub name: String,
    pub path: String,
}

/// A loaded, validated bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub grid: BeatGrid,
    pub features: Vec<FeatureMatrix>,
    /// Audio path resolved against the manifest directory.
    pub audio: PathBuf,
}

impl FeatureBundle {
    pub fn feature(&self, name: &str) -> Option<&FeatureMatrix> {
        self.features.iter().find(|f| f.name() == name)
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn wav_duration(path: &Path) -> Option<f64> {
    let reader = hound::WavReader::open(path).ok()?;
    let spec = reader.spec();
    Some(reader.duration() as f64 / spec.sample_rate as f64)
}

pub fn load_feature_bundle(manifest_path: &Path) -> Result<FeatureBundle> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
        path: manifest_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let audio = resolve(base, &manifest.audio);

    let total_duration = match manifest.total_duration {
        Some(t) => t,
        None => wav_duration(&audio).unwrap_or_else(|| {
            let periods: Vec<f64> = manifest.beats.windows(2).map(|w| w[1] - w[0]).collect();
            let last = manifest.beats.last().copied().unwrap_or(0.0);
            last + stats::median(&periods).unwrap_or(0.0)
        }),
    };
    let grid = BeatGrid::new(
        manifest.beats,
        manifest.downbeats,
        manifest.beats_per_measure,
        manifest.sample_rate,
        total_duration,
    )?;

    let mut features = Vec::with_capacity(manifest.features.len());
    for fref in &manifest.features {
        if features
            .iter()
            .any(|f: &FeatureMatrix| f.name() == fref.name)
        {
            return Err(Error::MalformedManifest {
                path: manifest_path.to_path_buf(),
                reason: format!("duplicate feature `{}`", fref.name),
            });
        }
        features.push(read_container(&resolve(base, &fref.path), &fref.name)?);
    }
    Ok(FeatureBundle {
        grid,
        features,
        audio,
    })
}

/// Writes `<dir>/manifest.json` plus one `<name>.fea` container per feature
/// and returns the manifest path. The audio path is stored as given.
pub fn write_bundle(dir: &Path, bundle: &FeatureBundle) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut refs = Vec::with_capacity(bundle.features.len());
    for m in &bundle.features {
        let file = format!("{}.fea", m.name());
        write_container(&dir.join(&file), m)?;
        refs.push(FeatureRef {
            name: m.name().to_string(),
            path: file,
        });
    }
    let grid = &bundle.grid;
    let manifest = Manifest {
        audio: bundle.audio.to_string_lossy().into_owned(),
        sample_rate: grid.sample_rate(),
        beats: grid.beats().to_vec(),
        downbeats: grid.downbeats().to_vec(),
        beats_per_measure: grid.beats_per_measure(),
        features: refs,
        total_duration: Some(grid.total_duration()),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
