use serde::{Deserialize, Serialize};

use super::vocab::ChordClassId;
use crate::dsp::FrameGrid;
use crate::error::{Error, Result};

/// A chord with onset and duration in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordSegment {
    pub onset: f64,
    pub duration: f64,
    pub class: ChordClassId,
    /// Label text as written in the source annotation.
    pub label: String,
}

impl ChordSegment {
    pub fn new(onset: f64, duration: f64, class: ChordClassId) -> Self {
        ChordSegment {
            onset,
            duration,
            class,
            label: class.to_string(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.onset && t < self.end()
    }
}

/// One vocabulary class per feature frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabelSequence {
    pub classes: Vec<ChordClassId>,
}

impl FrameLabelSequence {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Repeat each chord for about `n_frames / M` frames; the first `n_frames mod M`
/// chords get one extra frame.
pub fn upsample_uniform(chords: &[ChordClassId], n_frames: usize) -> Result<FrameLabelSequence> {
    let m = chords.len();
    if m == 0 {
        return Err(Error::Empty { what: "chord list" });
    }
    if n_frames < m {
        return Err(Error::TooFewFrames {
            needed: m,
            got: n_frames,
        });
    }
    let base = n_frames / m;
    let extra = n_frames % m;
    let mut classes = Vec::with_capacity(n_frames);
    for (i, &c) in chords.iter().enumerate() {
        let n = base + usize::from(i < extra);
        classes.extend(std::iter::repeat_n(c, n));
    }
    Ok(FrameLabelSequence { classes })
}

/// Label every frame with the segment containing its center time; uncovered
/// frames get no-chord.
pub fn frame_labels_from_timed(segments: &[ChordSegment], grid: &FrameGrid) -> FrameLabelSequence {
    let mut classes = vec![ChordClassId::NO_CHORD; grid.n_frames];
    let mut seg = 0;
    for (i, slot) in classes.iter_mut().enumerate() {
        let t = grid.frame_time(i);
        while seg < segments.len() && segments[seg].end() <= t {
            seg += 1;
        }
        if let Some(s) = segments.get(seg) {
            if s.contains(t) {
                *slot = s.class;
            }
        }
    }
    FrameLabelSequence { classes }
}

/// Turn maximal runs of identical classes into segments.
pub fn collapse_frames(frames: &FrameLabelSequence, grid: &FrameGrid) -> Vec<ChordSegment> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=frames.classes.len() {
        if i == frames.classes.len() || frames.classes[i] != frames.classes[start] {
            let onset = grid.frame_time(start);
            let end = grid.frame_time(i);
            out.push(ChordSegment::new(onset, end - onset, frames.classes[start]));
            start = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: usize) -> ChordClassId {
        ChordClassId::new(i).unwrap()
    }

    fn runs(seq: &FrameLabelSequence) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for c in &seq.classes {
            match out.last_mut() {
                Some((last, n)) if *last == c.index() => *n += 1,
                _ => out.push((c.index(), 1)),
            }
        }
        out
    }

    #[test]
    fn uniform_exact_division() {
        let s = upsample_uniform(&[id(1), id(2)], 10).unwrap();
        assert_eq!(runs(&s), vec![(1, 5), (2, 5)]);
    }

    #[test]
    fn uniform_remainder_goes_first() {
        let s = upsample_uniform(&[id(1), id(2), id(3)], 10).unwrap();
        assert_eq!(runs(&s), vec![(1, 4), (2, 3), (3, 3)]);
        let s = upsample_uniform(&[id(4)], 7).unwrap();
        assert_eq!(runs(&s), vec![(4, 7)]);
    }

    #[test]
    fn uniform_needs_a_frame_per_chord() {
        assert!(matches!(
            upsample_uniform(&[id(1), id(2), id(3)], 2),
            Err(Error::TooFewFrames { needed: 3, got: 2 })
        ));
        assert!(upsample_uniform(&[], 4).is_err());
    }

    #[test]
    fn timed_labels_use_frame_centers() {
        let grid = FrameGrid::for_duration(15.0);
        let seg = [ChordSegment::new(0.0, 10.0, id(0))];
        let labels = frame_labels_from_timed(&seg, &grid);
        for (i, c) in labels.classes.iter().enumerate() {
            let expect = if grid.frame_time(i) < 10.0 { 0 } else { 168 };
            assert_eq!(c.index(), expect);
        }
        let empty = frame_labels_from_timed(&[], &grid);
        assert!(empty.classes.iter().all(|c| c.is_no_chord()));
    }

    #[test]
    fn boundary_frame_assigned_once() {
        let grid = FrameGrid::for_duration(2.0);
        let segs = [
            ChordSegment::new(0.0, 1.0, id(0)),
            ChordSegment::new(1.0, 1.0, id(14)),
        ];
        let labels = frame_labels_from_timed(&segs, &grid);
        let dt = 2048.0 / 22050.0;
        for (i, c) in labels.classes.iter().enumerate() {
            let t = i as f64 * dt;
            let expect = if t < 1.0 {
                0
            } else if t < 2.0 {
                14
            } else {
                168
            };
            assert_eq!(c.index(), expect, "frame {i} at {t}");
        }
    }

    #[test]
    fn collapse_runs() {
        let grid = FrameGrid::new(22050, 2048, 4);
        let dt = grid.period();
        let seq = FrameLabelSequence {
            classes: vec![id(1), id(1), id(2), id(2)],
        };
        let segs = collapse_frames(&seq, &grid);
        assert_eq!(segs.len(), 2);
        assert!((segs[1].onset - 2.0 * dt).abs() < 1e-12);
        assert!((segs[1].end() - 4.0 * dt).abs() < 1e-12);

        let one = collapse_frames(&FrameLabelSequence { classes: vec![id(3)] }, &grid);
        assert_eq!(one.len(), 1);
        assert!((one[0].duration - dt).abs() < 1e-12);

        let aba = FrameLabelSequence {
            classes: vec![id(1), id(2), id(1)],
        };
        let segs = collapse_frames(&aba, &grid);
        let classes: Vec<usize> = segs.iter().map(|s| s.class.index()).collect();
        assert_eq!(classes, vec![1, 2, 1]);
    }
}
