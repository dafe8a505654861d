use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use chordalign::chord::{label_to_class, ChordSegment};
use chordalign::datagen::{render, SynthSpec};
use chordalign::io::{read_lab, write_lab, write_wav};
use chordalign::pipeline::{split_path, AlignmentRecord, Split};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chordalign"))
        .args(args)
        .env_remove("CHORDALIGN_CACHE")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// A small corpus and a two-epoch model shared by the tests.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    checkpoint: PathBuf,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        ok(&["synth", "--out", &s(&data), "--n", "6", "--seed", "2", "--min-duration", "4", "--max-duration", "6"]);
        let checkpoint = dir.path().join("model.json");
        ok(&["train", "--data", &s(&data), "--out", &s(&checkpoint), "--epochs", "2", "--jobs", "1"]);
        Fixture {
            _dir: dir,
            data,
            checkpoint,
        }
    })
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["align", "--audio", "x.wav"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_rejects_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--out", &s(dir.path()), "--n", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_writes_checkpoint_split_and_log() {
    let f = fixture();
    chordalign::model::Checkpoint::load(&f.checkpoint).unwrap().to_model().unwrap();
    let split: Split = chordalign::io::read_json(&split_path(&f.checkpoint)).unwrap();
    let mut all: Vec<&String> = split.train.iter().chain(&split.val).chain(&split.test).collect();
    assert_eq!(all.len(), 6);
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 6);
    let log = std::fs::read_to_string(f.checkpoint.with_extension("losses.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let echo = std::fs::read_to_string(f.checkpoint.with_extension("config.txt")).unwrap();
    assert!(echo.contains("max_epochs = 2"));
}

#[test]
fn train_names_unpaired_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture().data.join("0000.wav"), dir.path().join("lonely.wav")).unwrap();
    let out = run(&["train", "--data", &s(dir.path()), "--out", &s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lonely.wav"));
}

#[test]
fn align_outputs_gapless_segments_and_record() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let truth = read_lab(&f.data.join("0001.lab")).unwrap();
    let chords = dir.path().join("c.txt");
    std::fs::write(&chords, chordalign::io::format_chord_list(&truth)).unwrap();
    let out = dir.path().join("a.lab");
    let audio = f.data.join("0001.wav");
    ok(&["align", "--audio", &s(&audio), "--chords", &s(&chords), "--checkpoint", &s(&f.checkpoint), "--out", &s(&out)]);
    let segs = read_lab(&out).unwrap();
    assert_eq!(segs.len(), truth.len());
    assert_eq!(segs[0].onset, 0.0);
    for (w, t) in segs.windows(2).zip(&truth) {
        assert!((w[0].end() - w[1].onset).abs() < 1e-5);
        assert_eq!(w[0].label, t.label);
    }
    let rec = AlignmentRecord::load(&out.with_extension("json")).unwrap();
    assert_eq!(rec.segments.len(), truth.len());
    assert!(rec.model.starts_with("sha256:"));
}

#[test]
fn align_single_chord_spans_track() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let chords = dir.path().join("c.txt");
    std::fs::write(&chords, "G:7\n").unwrap();
    let out = dir.path().join("a.lab");
    ok(&[
        "align",
        "--audio",
        &s(&f.data.join("0002.wav")),
        "--chords",
        &s(&chords),
        "--checkpoint",
        &s(&f.checkpoint),
        "--out",
        &s(&out),
    ]);
    let rec = AlignmentRecord::load(&out.with_extension("json")).unwrap();
    assert_eq!(rec.segments.len(), 1);
    assert_eq!(rec.segments[0].onset, 0.0);
    assert_eq!(rec.segments[0].end, rec.duration);
}

#[test]
fn align_reports_bad_chord_lists() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let audio = s(&f.data.join("0000.wav"));
    let chords = dir.path().join("c.txt");
    let out = s(&dir.path().join("a.lab"));
    let args = |c: &Path| {
        vec![
            "align".to_string(),
            "--audio".into(),
            audio.clone(),
            "--chords".into(),
            s(c),
            "--checkpoint".into(),
            s(&f.checkpoint),
            "--out".into(),
            out.clone(),
        ]
    };
    std::fs::write(&chords, "# nothing\n").unwrap();
    let a = args(&chords);
    let r = run(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("chord list is empty"));

    std::fs::write(&chords, "C:maj\nG:7\nQ:min\n").unwrap();
    let r = run(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("c.txt:3"), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn eval_identity_window_and_missing_stems() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    let refs = dir.path().join("ref");
    std::fs::create_dir(&refs).unwrap();
    for stem in ["0000", "0001", "0002"] {
        let lab = read_lab(&f.data.join(format!("{stem}.lab"))).unwrap();
        write_lab(&refs.join(format!("{stem}.lab")), &lab).unwrap();
        // shift interior onsets so that the window matters
        let shifted: Vec<ChordSegment> = lab
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let d = if i == 0 { 0.0 } else { 0.4 };
                let next = lab.get(i + 1).map_or(x.end(), |n| n.onset + 0.4);
                ChordSegment::new(x.onset + d, next - x.onset - d, x.class).with_label(x.label.clone())
            })
            .collect();
        write_lab(&pred.join(format!("{stem}.lab")), &shifted).unwrap();
    }
    let report = dir.path().join("r.json");
    let same = ok(&["eval", "--pred", &s(&refs), "--ref", &s(&refs), "--out", &s(&report)]);
    assert!(same.contains("F1 1.0000"), "{same}");
    assert!(same.contains("correct 1.0000") && same.contains("median 0.0000"), "{same}");
    assert!(report.with_extension("csv").exists());

    let matches = |w: &str| {
        ok(&["eval", "--pred", &s(&pred), "--ref", &s(&refs), "--out", &s(&report), "--window", w]);
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
        v["boundary"]["matches"].as_u64().unwrap()
    };
    let (narrow, wide) = (matches("0.3"), matches("0.5"));
    assert!(wide >= narrow && wide > 0, "{narrow} {wide}");
    assert_eq!(narrow, 0);

    std::fs::remove_file(pred.join("0001.lab")).unwrap();
    let r = run(&["eval", "--pred", &s(&pred), "--ref", &s(&refs), "--out", &s(&report)]);
    assert_ne!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stderr).contains("0001"));
}

fn two_chord_clip(dir: &Path) -> (PathBuf, Vec<ChordSegment>) {
    let spec = SynthSpec::default();
    let prog = vec![
        ChordSegment::new(0.0, 5.0, label_to_class("C:maj").unwrap()).with_label("C:maj"),
        ChordSegment::new(5.0, 5.0, label_to_class("F:maj").unwrap()).with_label("F:maj"),
    ];
    let audio = render(&prog, &spec, &mut spec.track_rng(0));
    let path = dir.join("clip.wav");
    write_wav(&path, &audio).unwrap();
    (path, prog)
}

#[test]
fn baselines_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let (wav, prog) = two_chord_clip(dir.path());
    let onsets: Vec<f64> = ok(&["baseline", "hcdf", "--audio", &s(&wav)])
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(onsets.len(), 1);
    assert!((onsets[0] - 5.0).abs() < 0.3);

    let r = run(&["baseline", "dtw", "--audio", &s(&wav), "--out", &s(&dir.path().join("x.lab"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("weak"));

    let empty = dir.path().join("empty.lab");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("d.lab");
    let r = run(&["baseline", "dtw", "--audio", &s(&wav), "--weak", &s(&empty), "--out", &s(&out)]);
    assert_eq!(r.status.code(), Some(2));

    let weak = dir.path().join("weak.lab");
    write_lab(&weak, &prog).unwrap();
    ok(&["baseline", "dtw", "--audio", &s(&wav), "--weak", &s(&weak), "--out", &s(&out)]);
    let aligned = read_lab(&out).unwrap();
    assert_eq!(aligned.len(), 2);
    assert!((aligned[1].onset - 5.0).abs() <= 2048.0 / 22050.0 + 1e-6);
}

#[test]
fn features_dump_has_header() {
    let dir = tempfile::tempdir().unwrap();
    let (wav, _) = two_chord_clip(dir.path());
    let out = dir.path().join("chroma.f32");
    ok(&["features", "--audio", &s(&wav), "--out", &s(&out), "--chroma"]);
    let m = chordalign::io::load_features(&out).unwrap();
    assert_eq!(m.data.nrows(), 12);
    assert_eq!(m.data.ncols(), m.grid.n_frames);
}
