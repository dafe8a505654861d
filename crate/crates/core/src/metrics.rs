//! Boundary detection and alignment accuracy measures.

use serde::{Deserialize, Serialize};

use crate::chord::ChordSegment;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: f64 = 0.3;
pub const PERCEPTUAL_CENTER: f64 = 0.3;
pub const PERCEPTUAL_WIDTH: f64 = 0.1;

/// Absolute slack added to the matching window against float noise.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEval {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub window: f64,
    pub matches: usize,
    pub n_pred: usize,
    pub n_ref: usize,
}

impl BoundaryEval {
    pub fn from_counts(matches: usize, n_pred: usize, n_ref: usize, window: f64) -> Result<Self> {
        if n_ref == 0 {
            return Err(Error::Empty {
                what: "reference boundary list",
            });
        }
        let precision = if n_pred == 0 { 0.0 } else { matches as f64 / n_pred as f64 };
        let recall = matches as f64 / n_ref as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(BoundaryEval {
            precision,
            recall,
            f1,
            window,
            matches,
            n_pred,
            n_ref,
        })
    }
}

/// Number of one-to-one matches within `window`, taking the earliest
/// available prediction for each reference in time order.
pub fn count_matches(pred: &[f64], reference: &[f64], window: f64) -> usize {
    let w = window + WINDOW_SLACK;
    let mut i = 0;
    let mut matches = 0;
    for &r in reference {
        while i < pred.len() && pred[i] < r - w {
            i += 1;
        }
        if i < pred.len() && pred[i] <= r + w {
            matches += 1;
            i += 1;
        }
    }
    matches
}

fn check_sorted(xs: &[f64], what: &str) -> Result<()> {
    if xs.windows(2).any(|w| w[1] < w[0]) || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} onsets must be finite and sorted")));
    }
    Ok(())
}

pub fn boundary_prf(pred: &[f64], reference: &[f64], window: f64) -> Result<BoundaryEval> {
    check_sorted(pred, "predicted")?;
    check_sorted(reference, "reference")?;
    BoundaryEval::from_counts(count_matches(pred, reference, window), pred.len(), reference.len(), window)
}

/// Onsets of every segment after the first, i.e. the chord changes.
pub fn change_points(segments: &[ChordSegment]) -> Vec<f64> {
    segments.iter().skip(1).map(|s| s.onset).collect()
}

/// `|pred_i - ref_i|` for index-paired onsets.
pub fn onset_errors(pred: &[ChordSegment], reference: &[ChordSegment]) -> Result<Vec<f64>> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} predicted segments vs {} reference segments",
            pred.len(),
            reference.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p.onset - r.onset).abs())
        .collect())
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn total_span(segs: &[ChordSegment]) -> (f64, f64) {
    let start = segs.first().map_or(0.0, |s| s.onset);
    let end = segs.iter().map(|s| s.end()).fold(start, f64::max);
    (start, end)
}

/// Seconds where the i-th predicted segment overlaps the i-th reference.
pub fn overlap_seconds(pred: &[ChordSegment], reference: &[ChordSegment]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} predicted segments vs {} reference segments",
            pred.len(),
            reference.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p.end().min(r.end()) - p.onset.max(r.onset)).max(0.0))
        .sum())
}

/// Index-paired overlap over the reference duration. Fails when the two
/// segmentations' spans differ by more than `tolerance` seconds.
pub fn percentage_correct(pred: &[ChordSegment], reference: &[ChordSegment], tolerance: f64) -> Result<f64> {
    let (ps, pe) = total_span(pred);
    let (rs, re) = total_span(reference);
    if (ps - rs).abs() > tolerance || (pe - re).abs() > tolerance {
        return Err(Error::InvalidArgument(format!(
            "segmentations cover [{ps}, {pe}) and [{rs}, {re})"
        )));
    }
    let total = re - rs;
    if total <= 0.0 {
        return Err(Error::Empty {
            what: "reference segmentation",
        });
    }
    Ok(overlap_seconds(pred, reference)? / total)
}

pub fn perceptual_weight(e: f64, center: f64, width: f64) -> f64 {
    1.0 / (1.0 + ((e - center) / width).exp())
}

/// Mean of `1 / (1 + exp((e - center) / width))`; 0 for no events.
pub fn perceptual_score(errors: &[f64], center: f64, width: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().map(|&e| perceptual_weight(e, center, width)).sum::<f64>() / errors.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEval {
    pub percentage_correct: f64,
    pub median_abs_err: f64,
    pub mean_abs_err: f64,
    pub max_abs_err: f64,
    pub perceptual: f64,
    pub n_events: usize,
}

impl AlignmentEval {
    pub fn from_parts(errors: &[f64], overlap: f64, duration: f64) -> Self {
        AlignmentEval {
            percentage_correct: if duration > 0.0 { overlap / duration } else { 0.0 },
            median_abs_err: median(errors),
            mean_abs_err: mean(errors),
            max_abs_err: errors.iter().cloned().fold(0.0, f64::max),
            perceptual: perceptual_score(errors, PERCEPTUAL_CENTER, PERCEPTUAL_WIDTH),
            n_events: errors.len(),
        }
    }
}

/// Per-track results that aggregate into corpus figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEval {
    pub stem: String,
    pub boundary: Option<BoundaryEval>,
    pub alignment: Option<AlignmentEval>,
    #[serde(skip)]
    pub errors: Vec<f64>,
    #[serde(skip)]
    pub overlap: f64,
    #[serde(skip)]
    pub duration: f64,
}

/// Boundary scores on chord changes and, when the chord sequences are
/// index-paired, alignment scores.
pub fn evaluate_track(
    stem: &str,
    pred: &[ChordSegment],
    reference: &[ChordSegment],
    window: f64,
    tolerance: f64,
) -> Result<TrackEval> {
    let ref_changes = change_points(reference);
    let boundary = if ref_changes.is_empty() {
        None
    } else {
        Some(boundary_prf(&change_points(pred), &ref_changes, window)?)
    };
    let (errors, overlap, duration, alignment) = if pred.len() == reference.len() {
        let errors = onset_errors(pred, reference)?;
        let pc = percentage_correct(pred, reference, tolerance)?;
        let (rs, re) = total_span(reference);
        let duration = re - rs;
        let overlap = pc * duration;
        let eval = AlignmentEval::from_parts(&errors, overlap, duration);
        (errors, overlap, duration, Some(eval))
    } else {
        (Vec::new(), 0.0, 0.0, None)
    };
    Ok(TrackEval {
        stem: stem.to_string(),
        boundary,
        alignment,
        errors,
        overlap,
        duration,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEval {
    pub window: f64,
    pub n_tracks: usize,
    pub boundary: Option<BoundaryEval>,
    pub alignment: Option<AlignmentEval>,
    pub tracks: Vec<TrackEval>,
}

/// Micro-averaged corpus figures: counts, errors and durations are pooled
/// before ratios are taken.
pub fn aggregate(tracks: Vec<TrackEval>, window: f64) -> CorpusEval {
    let (mut m, mut np, mut nr) = (0, 0, 0);
    for b in tracks.iter().filter_map(|t| t.boundary.as_ref()) {
        m += b.matches;
        np += b.n_pred;
        nr += b.n_ref;
    }
    let boundary = BoundaryEval::from_counts(m, np, nr, window).ok();
    let aligned: Vec<&TrackEval> = tracks.iter().filter(|t| t.alignment.is_some()).collect();
    let alignment = if aligned.is_empty() {
        None
    } else {
        let errors: Vec<f64> = aligned.iter().flat_map(|t| t.errors.iter().copied()).collect();
        let overlap = aligned.iter().map(|t| t.overlap).sum();
        let duration = aligned.iter().map(|t| t.duration).sum();
        Some(AlignmentEval::from_parts(&errors, overlap, duration))
    };
    CorpusEval {
        window,
        n_tracks: tracks.len(),
        boundary,
        alignment,
        tracks,
    }
}
