use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::s;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chord::{frame_labels_from_timed, ChordSegment};
use crate::dsp::{analyze, segment, CqtMatrix, SegmentSpec, BINS_PER_OCTAVE, HOP, N_BINS, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::io::{load_features, read_lab, read_wav, save_features, sha256_hex};
use crate::model::TrainExample;

pub const CACHE_ENV: &str = "CHORDALIGN_CACHE";

/// An audio file and its annotation sharing a stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackPair {
    pub stem: String,
    pub wav: PathBuf,
    pub lab: PathBuf,
}

fn files_by_stem(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

/// Every `stem.wav` + `stem.lab` pair in `dir`, sorted by stem. Unpaired
/// files are an error naming each of them.
pub fn list_pairs(dir: &Path) -> Result<Vec<TrackPair>> {
    let wavs = files_by_stem(dir, "wav")?;
    let labs = files_by_stem(dir, "lab")?;
    let mut unpaired: Vec<String> = wavs
        .iter()
        .filter(|(k, _)| !labs.contains_key(*k))
        .chain(labs.iter().filter(|(k, _)| !wavs.contains_key(*k)))
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !unpaired.is_empty() {
        unpaired.sort();
        return Err(Error::Dataset(format!("files without a partner: {}", unpaired.join(", "))));
    }
    if wavs.is_empty() {
        return Err(Error::Dataset(format!("no wav/lab pairs in {}", dir.display())));
    }
    Ok(wavs
        .into_iter()
        .map(|(stem, wav)| {
            let lab = labs[&stem].clone();
            TrackPair { stem, wav, lab }
        })
        .collect())
}

/// Track-level partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffle stems with `seed` and cut 65/20/15; each part is then sorted.
pub fn split_stems(stems: &[String], seed: u64) -> Split {
    let mut order: Vec<String> = stems.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let n_train = ((n as f64) * 0.65).round() as usize;
    let n_val = (((n as f64) * 0.20).round() as usize).min(n - n_train);
    let mut parts = [
        order[..n_train].to_vec(),
        order[n_train..n_train + n_val].to_vec(),
        order[n_train + n_val..].to_vec(),
    ];
    parts.iter_mut().for_each(|p| p.sort());
    let [train, val, test] = parts;
    Split { seed, train, val, test }
}

/// Optional on-disk CQT cache keyed by audio content.
#[derive(Debug, Clone, Default)]
pub struct FeatureCache {
    pub dir: Option<PathBuf>,
}

impl FeatureCache {
    pub fn from_env() -> Self {
        FeatureCache {
            dir: std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
        }
    }

    fn key(bytes: &[u8]) -> String {
        let tag = format!("cqt:{SAMPLE_RATE}:{HOP}:{N_BINS}:{BINS_PER_OCTAVE}:");
        sha256_hex(&[tag.as_bytes(), bytes].concat())
    }

    /// Features of a WAV file, computed or read from the cache.
    pub fn features(&self, wav: &Path) -> Result<CqtMatrix> {
        let Some(dir) = &self.dir else {
            return analyze(&read_wav(wav)?);
        };
        let bytes = fs::read(wav).map_err(|e| Error::io(wav, e))?;
        let path = dir.join(format!("{}.f32", Self::key(&bytes)));
        if path.exists() {
            if let Ok(cqt) = load_features(&path) {
                return Ok(cqt);
            }
        }
        let cqt = analyze(&read_wav(wav)?)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_features(&path, &cqt)?;
        Ok(cqt)
    }
}

/// Cut a labelled track into model windows, keeping only real frames.
pub fn track_examples(cqt: &CqtMatrix, segments: &[ChordSegment], spec: &SegmentSpec) -> Result<Vec<TrainExample>> {
    let labels = frame_labels_from_timed(segments, &cqt.grid);
    segment(&cqt.data, &cqt.grid, spec)
        .into_iter()
        .map(|w| {
            let span = w.span;
            let feats = cqt.data.slice(s![.., span.start..span.end()]).to_owned();
            TrainExample::new(feats, labels.classes[span.start..span.end()].to_vec())
        })
        .collect()
}

/// Windows for every pair, in pair order. Annotation problems name the file.
pub fn load_examples(pairs: &[TrackPair], cache: &FeatureCache) -> Result<Vec<TrainExample>> {
    let per_track = pairs
        .par_iter()
        .map(|p| {
            let segments = read_lab(&p.lab)?;
            let cqt = cache.features(&p.wav)?;
            track_examples(&cqt, &segments, &SegmentSpec::default())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_track.into_iter().flatten().collect())
}
