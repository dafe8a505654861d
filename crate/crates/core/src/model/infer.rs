use ndarray::{s, Array2};

use super::net::ChordModel;
use crate::chord::N_CLASSES;
use crate::ctc::EmissionMatrix;
use crate::dsp::{analyze, segment, AudioBuffer, CqtMatrix, SegmentSpec};
use crate::error::{Error, Result};

/// Run the model over overlapping windows and average the frame
/// probabilities where windows overlap.
pub fn emissions_from_features(model: &ChordModel, cqt: &CqtMatrix, spec: &SegmentSpec) -> Result<EmissionMatrix> {
    let n = cqt.data.ncols();
    if n == 0 {
        return Err(Error::Empty { what: "feature matrix" });
    }
    let mut sum = Array2::<f64>::zeros((n, N_CLASSES));
    let mut count = vec![0u32; n];
    for win in segment(&cqt.data, &cqt.grid, spec) {
        let out = model.forward(win.valid())?;
        let span = win.span;
        let mut dst = sum.slice_mut(s![span.start..span.end(), ..]);
        dst += &out.chord_log_probs.mapv(f64::exp);
        count[span.start..span.end()].iter_mut().for_each(|c| *c += 1);
    }
    for (mut row, &c) in sum.rows_mut().into_iter().zip(&count) {
        if c == 0 {
            return Err(Error::Numeric("frame not covered by any window".into()));
        }
        let total = row.sum();
        row.mapv_inplace(|p| (p / total).max(f64::MIN_POSITIVE).ln());
    }
    if sum.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("model produced NaN probabilities".into()));
    }
    EmissionMatrix::new(sum)
}

/// Full-track emissions on the 22.05 kHz / 2048-hop frame grid.
pub fn predict_emissions(audio: &AudioBuffer, model: &ChordModel) -> Result<EmissionMatrix> {
    let cqt = analyze(audio)?;
    emissions_from_features(model, &cqt, &SegmentSpec::default())
}
