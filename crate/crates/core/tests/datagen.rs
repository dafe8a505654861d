use chordalign::chord::{frame_labels_from_timed, label_to_class, ChordSegment};
use chordalign::datagen::{render, write_corpus, SynthSpec};
use chordalign::dsp::{analyze, chroma, FrameGrid};
use chordalign::io::{read_lab, read_wav};

#[test]
fn c_major_chroma_peaks_on_chord_tones() {
    let spec = SynthSpec::default();
    let prog = [ChordSegment::new(0.0, 4.0, label_to_class("C:maj").unwrap())];
    let audio = render(&prog, &spec, &mut spec.track_rng(0));
    let c = chroma(&analyze(&audio).unwrap());
    let mean: Vec<f32> = (0..12).map(|pc| c.row(pc).mean().unwrap()).collect();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]));
    let mut top = order[..3].to_vec();
    top.sort();
    assert_eq!(top, vec![0, 4, 7], "{mean:?}");
}

#[test]
fn corpus_is_reproducible_and_labels_round_trip() {
    let spec = SynthSpec {
        n_tracks: 3,
        duration_range: (4.0, 6.0),
        ..SynthSpec::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let manifests: Vec<_> = dirs.iter().map(|d| write_corpus(d.path(), &spec).unwrap()).collect();
    assert_eq!(manifests[0], manifests[1]);
    for t in &manifests[0].tracks {
        for ext in ["wav", "lab"] {
            let name = format!("{}.{ext}", t.stem);
            assert_eq!(
                std::fs::read(dirs[0].path().join(&name)).unwrap(),
                std::fs::read(dirs[1].path().join(&name)).unwrap()
            );
        }
        let (prog, _) = chordalign::datagen::generate_track(&spec, t.stem.parse().unwrap());
        let lab = read_lab(&dirs[0].path().join(format!("{}.lab", t.stem))).unwrap();
        let audio = read_wav(&dirs[0].path().join(format!("{}.wav", t.stem))).unwrap();
        let grid = FrameGrid::for_samples(audio.len(), audio.sample_rate, chordalign::dsp::HOP);
        let (a, b) = (frame_labels_from_timed(&lab, &grid), frame_labels_from_timed(&prog, &grid));
        assert_eq!(a, b);
        assert_eq!(lab.len(), t.n_chords);
    }
    let other = write_corpus(
        &dirs[0].path().join("b"),
        &SynthSpec { seed: 9, ..spec.clone() },
    )
    .unwrap();
    assert_ne!(other.tracks[0].wav_sha256, manifests[0].tracks[0].wav_sha256);
}
