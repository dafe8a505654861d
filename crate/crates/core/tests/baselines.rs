use chordalign::baselines::{dtw_align, hcdf, hcdf_curve, HcdfParams};
use chordalign::chord::{label_to_class, ChordSegment};
use chordalign::datagen::{generate_track, render, SynthSpec};
use chordalign::dsp::{analyze, chroma, FrameGrid};
use chordalign::metrics::onset_errors;

fn seg(onset: f64, dur: f64, label: &str) -> ChordSegment {
    ChordSegment::new(onset, dur, label_to_class(label).unwrap()).with_label(label)
}

fn synth(prog: &[ChordSegment], seed: u64) -> chordalign::dsp::AudioBuffer {
    let spec = SynthSpec { seed, ..SynthSpec::default() };
    render(prog, &spec, &mut spec.track_rng(0))
}

#[test]
fn constant_chord_has_no_changes() {
    let audio = synth(&[seg(0.0, 10.0, "C:maj")], 1);
    assert!(hcdf(&audio, &HcdfParams::default()).unwrap().is_empty());
}

#[test]
fn single_change_is_found_near_boundary() {
    let audio = synth(&[seg(0.0, 5.0, "C:maj"), seg(5.0, 5.0, "F:maj")], 2);
    let cqt = analyze(&audio).unwrap();
    let xi = hcdf_curve(&chroma(&cqt), 8.0);
    let max = xi.iter().cloned().fold(0.0, f64::max);
    let peaks = hcdf(&audio, &HcdfParams::default()).unwrap();
    assert_eq!(peaks.len(), 1, "{peaks:?} max {max}");
    assert!((peaks[0] - 5.0).abs() < 0.25, "{peaks:?}");
}

#[test]
fn silence_has_no_changes() {
    let audio = chordalign::dsp::AudioBuffer::new(vec![0.0; 22050 * 4], 22050);
    assert!(hcdf(&audio, &HcdfParams::default()).unwrap().is_empty());
}

#[test]
fn dtw_self_alignment_within_one_frame() {
    let period = FrameGrid::default().period();
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let (prog, audio) = generate_track(&SynthSpec::default(), i);
        let out = dtw_align(&audio, &prog).unwrap();
        assert_eq!(out.len(), prog.len());
        let errs = onset_errors(&out, &prog).unwrap();
        worst = errs.iter().cloned().fold(worst, f64::max);
    }
    assert!(worst <= period + 1e-9, "worst {worst}");
}

#[test]
fn dtw_recovers_uniform_stretch() {
    let mut all = Vec::new();
    for i in 0..5 {
        let (prog, audio) = generate_track(&SynthSpec::default(), i);
        let weak: Vec<ChordSegment> = prog
            .iter()
            .map(|s| ChordSegment::new(s.onset * 1.2, s.duration * 1.2, s.class))
            .collect();
        let out = dtw_align(&audio, &weak).unwrap();
        all.extend(onset_errors(&out, &prog).unwrap());
    }
    all.sort_by(f64::total_cmp);
    let median = all[all.len() / 2];
    assert!(median <= 0.3, "median {median}");
}
