//! CTC loss and CTC forced alignment over frame-wise emissions.
//!
//! The label sequence `c_1..c_M` is expanded to `blank, c_1, blank, ..., c_M,
//! blank` (length `2M + 1`). A path assigns one expanded state to each frame;
//! it may stay, advance by one, or skip a blank when the two chords around it
//! differ.

use ndarray::{Array2, Axis};

use crate::chord::{ChordClassId, ChordSegment, N_CLASSES};
use crate::dsp::FrameGrid;
use crate::error::{Error, Result};

/// Probability given to the blank column appended at decode time.
pub const PSEUDO_BLANK_PROB: f64 = 1e-3;

/// Frame-wise log-probabilities over the chord vocabulary, `T x 169`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    pub log_probs: Array2<f64>,
}

impl EmissionMatrix {
    pub fn new(log_probs: Array2<f64>) -> Result<Self> {
        if log_probs.ncols() != N_CLASSES {
            return Err(Error::Shape(format!(
                "emissions need {N_CLASSES} columns, got {}",
                log_probs.ncols()
            )));
        }
        Ok(EmissionMatrix { log_probs })
    }

    pub fn n_frames(&self) -> usize {
        self.log_probs.nrows()
    }

    /// Largest deviation of a row's probability mass from 1.
    pub fn max_row_error(&self) -> f64 {
        self.log_probs
            .axis_iter(Axis(0))
            .map(|row| (row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Append a blank column of constant probability `eps` and renormalize.
    pub fn with_pseudo_blank(&self, eps: f64) -> CtcEmissions {
        let t = self.n_frames();
        let norm = eps.ln_1p();
        let mut out = Array2::<f64>::zeros((t, N_CLASSES + 1));
        out.slice_mut(ndarray::s![.., ..N_CLASSES])
            .assign(&self.log_probs.mapv(|v| v - norm));
        out.column_mut(N_CLASSES).fill(eps.ln() - norm);
        CtcEmissions {
            log_probs: out,
            blank: N_CLASSES,
        }
    }
}

/// Log-probabilities including a blank column.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcEmissions {
    pub log_probs: Array2<f64>,
    pub blank: usize,
}

impl CtcEmissions {
    pub fn new(log_probs: Array2<f64>, blank: usize) -> Result<Self> {
        if blank >= log_probs.ncols() {
            return Err(Error::Shape(format!(
                "blank index {blank} outside {} columns",
                log_probs.ncols()
            )));
        }
        Ok(CtcEmissions { log_probs, blank })
    }

    pub fn n_frames(&self) -> usize {
        self.log_probs.nrows()
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::Empty { what: "label sequence" });
        }
        if let Some(&bad) = labels
            .iter()
            .find(|&&l| l >= self.log_probs.ncols() || l == self.blank)
        {
            return Err(Error::InvalidArgument(format!("label {bad} is not an emitting column")));
        }
        let needed = min_frames(labels);
        if self.n_frames() < needed {
            return Err(Error::TooFewFrames {
                needed,
                got: self.n_frames(),
            });
        }
        Ok(())
    }
}

/// `blank, c_1, blank, ..., c_M, blank`.
pub fn expand_labels(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * labels.len() + 1);
    out.push(blank);
    for &l in labels {
        out.push(l);
        out.push(blank);
    }
    out
}

/// Frames needed to emit `labels`: one per label plus a blank between repeats.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

fn can_skip(expanded: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && expanded[s] != blank && expanded[s] != expanded[s - 2]
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Negative log-probability of `labels` summed over every CTC path.
///
/// Returns `+inf` when every path has probability zero.
pub fn ctc_loss(emissions: &CtcEmissions, labels: &[usize]) -> Result<f64> {
    emissions.check_labels(labels)?;
    let ext = expand_labels(labels, emissions.blank);
    let lp = &emissions.log_probs;
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; s_len];
    alpha[0] = lp[[0, ext[0]]];
    alpha[1] = lp[[0, ext[1]]];
    let mut next = vec![f64::NEG_INFINITY; s_len];
    for t in 1..emissions.n_frames() {
        for s in 0..s_len {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add(acc, alpha[s - 1]);
            }
            if can_skip(&ext, s, emissions.blank) {
                acc = log_add(acc, alpha[s - 2]);
            }
            next[s] = acc + lp[[t, ext[s]]];
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    let total = log_add(alpha[s_len - 1], alpha[s_len - 2]);
    Ok(-total)
}

/// Per-frame index into the expanded label sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath {
    pub states: Vec<usize>,
}

impl AlignmentPath {
    /// Chord index per frame; blanks belong to the chord before them and
    /// leading blanks to the first chord.
    pub fn chord_per_frame(&self) -> Vec<usize> {
        self.states
            .iter()
            .map(|&s| if s == 0 { 0 } else { (s - 1) / 2 })
            .collect()
    }
}

/// Check that `path` is a valid CTC path for `labels`.
pub fn validate_path(path: &AlignmentPath, labels: &[usize], blank: usize, n_frames: usize) -> Result<()> {
    let ext = expand_labels(labels, blank);
    let st = &path.states;
    if st.len() != n_frames {
        return Err(Error::InvalidPath(format!("{} states for {n_frames} frames", st.len())));
    }
    if st.is_empty() || labels.is_empty() {
        return Err(Error::InvalidPath("empty path".into()));
    }
    if st[0] > 1 {
        return Err(Error::InvalidPath(format!("starts at state {}", st[0])));
    }
    let last = *st.last().unwrap_or(&0);
    if last + 2 < ext.len() || last >= ext.len() {
        return Err(Error::InvalidPath(format!("ends at state {last}")));
    }
    for (t, w) in st.windows(2).enumerate() {
        let ok = match w[1].checked_sub(w[0]) {
            Some(0) | Some(1) => true,
            Some(2) => can_skip(&ext, w[1], blank),
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidPath(format!(
                "step {} -> {} at frame {}",
                w[0],
                w[1],
                t + 1
            )));
        }
    }
    Ok(())
}

/// Sum of log emissions along a path.
pub fn path_probability(emissions: &CtcEmissions, labels: &[usize], path: &AlignmentPath) -> Result<f64> {
    validate_path(path, labels, emissions.blank, emissions.n_frames())?;
    let ext = expand_labels(labels, emissions.blank);
    Ok(path
        .states
        .iter()
        .enumerate()
        .map(|(t, &s)| emissions.log_probs[[t, ext[s]]])
        .sum())
}

/// Chord index per frame when `m` chords share `t` frames evenly, the first
/// `t mod m` chords taking one extra frame.
pub fn uniform_chord_index(m: usize, t: usize) -> Vec<usize> {
    let base = t / m;
    let extra = t % m;
    (0..m)
        .flat_map(|i| std::iter::repeat_n(i, base + usize::from(i < extra)))
        .collect()
}

/// Scores closer than this (relative) are treated as tied.
const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct Cell {
    score: f64,
    /// Frames agreeing with a uniform spread of the chords.
    agree: u32,
}

impl Cell {
    const DEAD: Cell = Cell {
        score: f64::NEG_INFINITY,
        agree: 0,
    };

    fn beats(self, other: Cell) -> bool {
        if self.score == f64::NEG_INFINITY {
            return false;
        }
        if other.score == f64::NEG_INFINITY {
            return true;
        }
        let tol = TIE_TOLERANCE * self.score.abs().max(other.score.abs()).max(1.0);
        if (self.score - other.score).abs() > tol {
            return self.score > other.score;
        }
        self.agree > other.agree
    }
}

/// Best CTC path (Viterbi over the trellis).
///
/// Exact ties in path probability are broken first by agreement with a
/// uniform spread of the chords over the frames, then by preferring to stay,
/// then to advance by one rather than two.
pub fn viterbi_path(emissions: &CtcEmissions, labels: &[usize]) -> Result<AlignmentPath> {
    emissions.check_labels(labels)?;
    let blank = emissions.blank;
    let ext = expand_labels(labels, blank);
    let lp = &emissions.log_probs;
    let t_len = emissions.n_frames();
    let s_len = ext.len();
    let prior_idx = uniform_chord_index(labels.len(), t_len);
    let agree_at = |t: usize, s: usize| u32::from(s % 2 == 1 && (s - 1) / 2 == prior_idx[t]);

    let mut back = vec![0u8; t_len * s_len];
    let mut prev = vec![Cell::DEAD; s_len];
    for (s, cell) in prev.iter_mut().enumerate().take(2) {
        *cell = Cell {
            score: lp[[0, ext[s]]],
            agree: agree_at(0, s),
        };
    }
    let mut cur = vec![Cell::DEAD; s_len];
    for t in 1..t_len {
        for s in 0..s_len {
            let mut best = prev[s];
            let mut step = 0u8;
            if s >= 1 && prev[s - 1].beats(best) {
                best = prev[s - 1];
                step = 1;
            }
            if can_skip(&ext, s, blank) && prev[s - 2].beats(best) {
                best = prev[s - 2];
                step = 2;
            }
            cur[s] = if best.score == f64::NEG_INFINITY {
                Cell::DEAD
            } else {
                Cell {
                    score: best.score + lp[[t, ext[s]]],
                    agree: best.agree + agree_at(t, s),
                }
            };
            back[t * s_len + s] = step;
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut s = s_len - 1;
    if prev[s_len - 2].beats(prev[s_len - 1]) {
        s = s_len - 2;
    }
    if prev[s].score == f64::NEG_INFINITY {
        return Err(Error::Numeric("no alignment path has non-zero probability".into()));
    }
    let mut states = vec![0; t_len];
    for t in (0..t_len).rev() {
        states[t] = s;
        if t > 0 {
            s -= usize::from(back[t * s_len + s]);
        }
    }
    Ok(AlignmentPath { states })
}

/// Turn a path into one gapless segment per chord over the grid.
pub fn segments_from_path(path: &AlignmentPath, chords: &[ChordClassId], grid: &FrameGrid) -> Vec<ChordSegment> {
    let per_frame = path.chord_per_frame();
    let mut onsets = vec![usize::MAX; chords.len()];
    for (t, &m) in per_frame.iter().enumerate() {
        if onsets[m] == usize::MAX {
            onsets[m] = t;
        }
    }
    let end = grid.duration();
    (0..chords.len())
        .map(|m| {
            let onset = grid.frame_time(onsets[m]);
            let next = onsets
                .get(m + 1)
                .map_or(end, |&f| grid.frame_time(f));
            ChordSegment::new(onset, next - onset, chords[m])
        })
        .collect()
}

/// Align a chord list to emissions that already carry a blank column.
pub fn forced_align(
    emissions: &CtcEmissions,
    chords: &[ChordClassId],
    grid: &FrameGrid,
) -> Result<Vec<ChordSegment>> {
    if chords.is_empty() {
        return Err(Error::Empty { what: "chord list" });
    }
    if grid.n_frames != emissions.n_frames() {
        return Err(Error::Shape(format!(
            "grid has {} frames, emissions {}",
            grid.n_frames,
            emissions.n_frames()
        )));
    }
    let labels: Vec<usize> = chords.iter().map(|c| c.index()).collect();
    let path = viterbi_path(emissions, &labels)?;
    Ok(segments_from_path(&path, chords, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn probs(rows: Array2<f64>, blank: usize) -> CtcEmissions {
        CtcEmissions::new(rows.mapv(f64::ln), blank).unwrap()
    }

    #[test]
    fn two_frame_single_label() {
        // columns: a, blank
        let em = probs(array![[0.6, 0.4], [0.6, 0.4]], 1);
        let loss = ctc_loss(&em, &[0]).unwrap();
        assert!((loss + 0.84f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_diagonal_has_zero_loss() {
        let em = probs(
            array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            3,
        );
        assert_eq!(ctc_loss(&em, &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn repeats_need_a_blank_frame() {
        let em = probs(array![[0.5, 0.5], [0.5, 0.5]], 1);
        assert!(matches!(
            ctc_loss(&em, &[0, 0]),
            Err(Error::TooFewFrames { needed: 3, got: 2 })
        ));
        assert_eq!(min_frames(&[0, 0, 1, 1, 1]), 8);
    }

    fn grid(n: usize) -> FrameGrid {
        FrameGrid::new(22050, 2048, n)
    }

    fn one_hot(classes: &[usize]) -> EmissionMatrix {
        let mut lp = Array2::from_elem((classes.len(), N_CLASSES), f64::NEG_INFINITY);
        for (t, &c) in classes.iter().enumerate() {
            lp[[t, c]] = 0.0;
        }
        EmissionMatrix::new(lp).unwrap()
    }

    fn ids(v: &[usize]) -> Vec<ChordClassId> {
        v.iter().map(|&i| ChordClassId::new(i).unwrap()).collect()
    }

    #[test]
    fn one_hot_two_chords() {
        let em = one_hot(&[3, 3, 7, 7]).with_pseudo_blank(PSEUDO_BLANK_PROB);
        let g = grid(4);
        let segs = forced_align(&em, &ids(&[3, 7]), &g).unwrap();
        let dt = g.period();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].onset, 0.0);
        assert!((segs[0].duration - 2.0 * dt).abs() < 1e-12);
        assert!((segs[1].onset - 2.0 * dt).abs() < 1e-12);
        assert!((segs[1].end() - 4.0 * dt).abs() < 1e-12);
    }

    #[test]
    fn repeated_chord_splits_at_blank() {
        // five frames certain of chord 3, chord list [3, 3]: exactly one frame
        // must be blank. Blank at frame 1, 2 or 3 ties on probability; the
        // uniform spread [0,0,0,1,1] is matched by blanks at 2 and 3 (4 frames
        // each), and staying-first picks frame 2: segments of 3 and 2 frames.
        let em = one_hot(&[3; 5]).with_pseudo_blank(PSEUDO_BLANK_PROB);
        let path = viterbi_path(&em, &[3, 3]).unwrap();
        assert_eq!(path.states, vec![1, 1, 2, 3, 3]);
        let g = grid(5);
        let segs = forced_align(&em, &ids(&[3, 3]), &g).unwrap();
        assert_eq!(segs.len(), 2);
        assert!((segs[1].onset - g.frame_time(3)).abs() < 1e-12);
        assert!((segs[0].duration + segs[1].duration - g.duration()).abs() < 1e-12);
    }

    #[test]
    fn uniform_emissions_split_evenly() {
        let lp = Array2::from_elem((9, N_CLASSES), -(N_CLASSES as f64).ln());
        let em = EmissionMatrix::new(lp).unwrap().with_pseudo_blank(PSEUDO_BLANK_PROB);
        let path = viterbi_path(&em, &[0, 1, 2]).unwrap();
        assert_eq!(path.chord_per_frame(), vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn path_probability_cases() {
        let em = probs(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 2);
        let p = path_probability(&em, &[0, 1], &AlignmentPath { states: vec![1, 3] }).unwrap();
        assert_eq!(p, 0.0);

        let k = 4.0f64;
        let em = CtcEmissions::new(Array2::from_elem((6, 4), -k.ln()), 3).unwrap();
        let path = AlignmentPath {
            states: vec![0, 1, 1, 2, 3, 4],
        };
        let p = path_probability(&em, &[0, 1], &path).unwrap();
        assert!((p - 6.0 * (1.0 / k).ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_paths_are_rejected() {
        let em = CtcEmissions::new(Array2::zeros((4, 3)), 2).unwrap();
        let bad = [
            vec![0, 1, 3, 3],    // skip over blank to a repeat
            vec![2, 2, 3, 3],    // wrong start
            vec![1, 1, 1, 1],    // never reaches the end
            vec![1, 0, 1, 3],    // goes backwards
            vec![1, 1, 3],       // wrong length
        ];
        for states in bad {
            assert!(path_probability(&em, &[0, 0], &AlignmentPath { states }).is_err());
        }
        let ok = AlignmentPath { states: vec![1, 2, 3, 4] };
        assert!(path_probability(&em, &[0, 0], &ok).is_ok());
    }

    #[test]
    fn pseudo_blank_rows_normalize() {
        let em = one_hot(&[0, 5]);
        assert!(em.max_row_error() < 1e-12);
        let ctc = em.with_pseudo_blank(PSEUDO_BLANK_PROB);
        for row in ctc.log_probs.axis_iter(Axis(0)) {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!((ctc.log_probs[[0, N_CLASSES]].exp() - 1e-3 / 1.001).abs() < 1e-15);
    }

    #[test]
    fn empty_chords_rejected() {
        let em = one_hot(&[0, 1]).with_pseudo_blank(PSEUDO_BLANK_PROB);
        assert!(forced_align(&em, &[], &grid(2)).is_err());
        assert!(forced_align(&em, &ids(&[0, 1, 2]), &grid(2)).is_err());
    }
}
