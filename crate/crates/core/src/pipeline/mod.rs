//! Corpus-level operations behind the command line.

mod config;
mod corpus;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chord::{label_to_class, ChordClassId, ChordSegment};
use crate::ctc::{forced_align, PSEUDO_BLANK_PROB};
use crate::dsp::{CqtMatrix, FrameGrid, SegmentSpec};
use crate::error::{Error, Result};
use crate::io::{read_json, read_lab, sha256_hex, write_atomic, write_json, ListedChord};
use crate::metrics::{aggregate, evaluate_track, CorpusEval};
use crate::model::{emissions_from_features, train_with_progress, Checkpoint, ChordModel, EpochStats};

pub use config::{parse_key_values, RunConfig};
pub use corpus::{list_pairs, load_examples, split_stems, track_examples, FeatureCache, Split, TrackPair, CACHE_ENV};

pub const ALIGNMENT_FORMAT: &str = "chordalign-alignment/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSegment {
    pub onset: f64,
    pub end: f64,
    pub label: String,
}

/// A chord list placed on an audio file, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub format: String,
    pub audio: String,
    pub model: String,
    pub duration: f64,
    pub segments: Vec<RecordSegment>,
}

impl AlignmentRecord {
    pub fn new(audio: &Path, model: &str, duration: f64, segments: &[ChordSegment]) -> Self {
        AlignmentRecord {
            format: ALIGNMENT_FORMAT.to_string(),
            audio: audio.display().to_string(),
            model: model.to_string(),
            duration,
            segments: segments
                .iter()
                .map(|s| RecordSegment {
                    onset: s.onset,
                    end: s.end(),
                    label: s.label.clone(),
                })
                .collect(),
        }
    }

    /// Format tag, label syntax and gapless coverage of `[0, duration]`.
    pub fn validate(&self) -> Result<()> {
        if self.format != ALIGNMENT_FORMAT {
            return Err(Error::Dataset(format!("unsupported alignment format {:?}", self.format)));
        }
        let mut t = 0.0;
        for s in &self.segments {
            label_to_class(&s.label)?;
            if (s.onset - t).abs() > 1e-9 || s.end < s.onset {
                return Err(Error::Dataset(format!("segment {:?} breaks coverage at {t}", s.label)));
            }
            t = s.end;
        }
        if self.segments.is_empty() || (t - self.duration).abs() > 1e-9 {
            return Err(Error::Dataset("segments do not cover the audio".into()));
        }
        Ok(())
    }

    pub fn segments(&self) -> Result<Vec<ChordSegment>> {
        self.segments
            .iter()
            .map(|s| Ok(ChordSegment::new(s.onset, s.end - s.onset, label_to_class(&s.label)?).with_label(s.label.clone())))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rec: AlignmentRecord = read_json(path)?;
        rec.validate()?;
        Ok(rec)
    }
}

/// A trained model with the identifier recorded in outputs.
pub struct LoadedModel {
    pub model: ChordModel,
    pub id: String,
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = Checkpoint::load(path)?.to_model()?;
    Ok(LoadedModel {
        model,
        id: format!("sha256:{}", sha256_hex(&bytes)),
    })
}

/// Force-align listed chords to precomputed features.
pub fn align_features(model: &ChordModel, cqt: &CqtMatrix, chords: &[ListedChord]) -> Result<Vec<ChordSegment>> {
    if chords.is_empty() {
        return Err(Error::Empty { what: "chord list" });
    }
    let emissions = emissions_from_features(model, cqt, &SegmentSpec::default())?.with_pseudo_blank(PSEUDO_BLANK_PROB);
    let classes: Vec<ChordClassId> = chords.iter().map(|c| c.class).collect();
    let segments = spread_repeats(forced_align(&emissions, &classes, &cqt.grid)?, &cqt.grid);
    Ok(segments
        .into_iter()
        .zip(chords)
        .map(|(s, c)| s.with_label(c.label.clone()))
        .collect())
}

/// Split every run of consecutive identical classes evenly over the run's
/// span, snapping inner onsets to frames. Frame posteriors cannot tell one
/// occurrence of a chord from the next.
pub fn spread_repeats(mut segments: Vec<ChordSegment>, grid: &FrameGrid) -> Vec<ChordSegment> {
    let period = grid.period();
    let mut i = 0;
    while i < segments.len() {
        let mut j = i + 1;
        while j < segments.len() && segments[j].class == segments[i].class {
            j += 1;
        }
        let m = j - i;
        if m > 1 {
            let (start, end) = (segments[i].onset, segments[j - 1].end());
            let mut onsets: Vec<f64> = (0..m)
                .map(|k| {
                    let t = start + (end - start) * k as f64 / m as f64;
                    grid.frame_time((t / period).round() as usize)
                })
                .collect();
            onsets[0] = start;
            for k in 1..m {
                if onsets[k] <= onsets[k - 1] {
                    onsets[k] = grid.frame_time((onsets[k - 1] / period).round() as usize + 1);
                }
            }
            for k in 0..m {
                let next = if k + 1 < m { onsets[k + 1] } else { end };
                let s = &mut segments[i + k];
                s.onset = onsets[k];
                s.duration = next - onsets[k];
            }
        }
        i = j;
    }
    segments
}

/// Untimed chord list of an annotation, keeping label text.
pub fn listed_chords(segments: &[ChordSegment]) -> Vec<ListedChord> {
    segments
        .iter()
        .map(|s| ListedChord {
            label: s.label.clone(),
            class: s.class,
        })
        .collect()
}

/// Outputs of a corpus training run.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub split: Split,
}

pub fn split_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("split.json")
}

pub fn loss_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("losses.csv")
}

pub fn config_echo_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("config.txt")
}

/// Split the corpus by track, train, and write the checkpoint with its
/// split, loss log and effective configuration next to it.
pub fn train_corpus(
    data: &Path,
    cfg: &RunConfig,
    out: &Path,
    cache: &FeatureCache,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let pairs = list_pairs(data)?;
    let stems: Vec<String> = pairs.iter().map(|p| p.stem.clone()).collect();
    let split = split_stems(&stems, cfg.train.seed);
    let pick = |names: &[String]| -> Vec<TrackPair> { pairs.iter().filter(|p| names.contains(&p.stem)).cloned().collect() };
    let train_set = load_examples(&pick(&split.train), cache)?;
    let val_set = if split.val.is_empty() {
        Vec::new()
    } else {
        load_examples(&pick(&split.val), cache)?
    };
    let checkpoint = train_with_progress(&train_set, &val_set, &cfg.train, &cfg.model, on_epoch)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    checkpoint.save(out)?;
    write_json(&split_path(out), &split)?;
    let meta = &checkpoint.meta;
    let mut log = String::from("epoch,train_loss,val_loss\n");
    for (i, (t, v)) in meta.train_loss.iter().zip(&meta.val_loss).enumerate() {
        let _ = writeln!(log, "{},{t},{v}", i + 1);
    }
    write_atomic(&loss_log_path(out), log.as_bytes())?;
    write_atomic(&config_echo_path(out), cfg.echo().as_bytes())?;
    Ok(TrainOutcome { checkpoint, split })
}

fn lab_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("lab") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Score every `stem.lab` in `pred` against the same stem in `reference`.
/// Stems present on only one side are an error naming them.
pub fn evaluate_dirs(pred: &Path, reference: &Path, window: f64, tolerance: f64) -> Result<CorpusEval> {
    let p = lab_stems(pred)?;
    let r = lab_stems(reference)?;
    let p_names: Vec<&String> = p.iter().map(|(s, _)| s).collect();
    let r_names: Vec<&String> = r.iter().map(|(s, _)| s).collect();
    let missing: Vec<&str> = r_names.iter().filter(|s| !p_names.contains(s)).map(|s| s.as_str()).collect();
    let extra: Vec<&str> = p_names.iter().filter(|s| !r_names.contains(s)).map(|s| s.as_str()).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("unmatched stems:");
        if !missing.is_empty() {
            let _ = write!(msg, " no prediction for {}", missing.join(", "));
        }
        if !extra.is_empty() {
            let _ = write!(msg, " no reference for {}", extra.join(", "));
        }
        return Err(Error::Dataset(msg));
    }
    if r.is_empty() {
        return Err(Error::Dataset(format!("no .lab files in {}", reference.display())));
    }
    let tracks = p
        .iter()
        .zip(&r)
        .map(|((stem, pp), (_, rp))| evaluate_track(stem, &read_lab(pp)?, &read_lab(rp)?, window, tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(tracks, window))
}

/// One row per aligned event: `stem,index,abs_error`.
pub fn error_csv(eval: &CorpusEval) -> String {
    let mut s = String::from("stem,index,abs_error\n");
    for t in &eval.tracks {
        for (i, e) in t.errors.iter().enumerate() {
            let _ = writeln!(s, "{},{i},{e}", t.stem);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeats_are_split_evenly() {
        let grid = FrameGrid::new(10, 1, 20);
        let c = label_to_class("C:maj").unwrap();
        let g = label_to_class("G:maj").unwrap();
        let segs = vec![
            ChordSegment::new(0.0, 0.3, g),
            ChordSegment::new(0.3, 1.2, c),
            ChordSegment::new(1.5, 0.1, c),
            ChordSegment::new(1.6, 0.1, c),
            ChordSegment::new(1.7, 0.3, g),
        ];
        let out = spread_repeats(segs, &grid);
        let onsets: Vec<f64> = out.iter().map(|s| s.onset).collect();
        assert_eq!(onsets, vec![0.0, 0.3, 0.8, 1.2, 1.7]);
        assert!((out[3].end() - 1.7).abs() < 1e-12);

        let tight = vec![ChordSegment::new(0.0, 0.1, c), ChordSegment::new(0.1, 0.1, c)];
        let out = spread_repeats(tight, &grid);
        assert_eq!((out[0].onset, out[1].onset), (0.0, 0.1));
    }

    #[test]
    fn record_round_trip_and_validation() {
        let segs = vec![
            ChordSegment::new(0.0, 1.5, label_to_class("C:maj").unwrap()).with_label("C:maj"),
            ChordSegment::new(1.5, 2.0, label_to_class("A:min7/b3").unwrap()).with_label("A:min7/b3"),
        ];
        let rec = AlignmentRecord::new(Path::new("x.wav"), "m", 3.5, &segs);
        rec.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        rec.save(&p).unwrap();
        let back = AlignmentRecord::load(&p).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.segments().unwrap(), segs);

        let mut gap = rec.clone();
        gap.segments[1].onset = 1.6;
        assert!(gap.validate().is_err());
        let mut short = rec.clone();
        short.duration = 4.0;
        assert!(short.validate().is_err());
        let mut old = rec;
        old.format = "other/0".into();
        assert!(old.validate().is_err());
    }
}
