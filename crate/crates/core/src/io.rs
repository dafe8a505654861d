//! Audio, annotation and feature files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chord::{label_to_class, ChordClassId, ChordSegment};
use crate::dsp::{AudioBuffer, CqtMatrix, FrameGrid};
use crate::error::{Error, Result};

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Read a WAV file (integer PCM or float) and mix it down to mono.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let wav_err = |e| Error::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>().map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    Ok(AudioBuffer::from_interleaved(&interleaved, usize::from(spec.channels), spec.sample_rate))
}

/// Write mono 32-bit float WAV.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let tmp = temp_sibling(path);
    let wav_err = |e| Error::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = hound::WavWriter::create(&tmp, spec).map_err(wav_err)?;
    for &s in &audio.samples {
        w.write_sample(s).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn annotation_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Annotation {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Meaningful lines with their 1-based numbers. A `#` at the start of a
/// line or after whitespace starts a comment; `C#:maj` is a label.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn strip_comment(line: &str) -> &str {
    let mut prev_space = true;
    for (i, ch) in line.char_indices() {
        if ch == '#' && prev_space {
            return &line[..i];
        }
        prev_space = ch.is_whitespace();
    }
    line
}

/// Parse `onset end label` lines. Labels keep their original text.
pub fn parse_lab(text: &str, path: &Path) -> Result<Vec<ChordSegment>> {
    let mut out: Vec<ChordSegment> = Vec::new();
    for (n, line) in content_lines(text) {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), Some(label)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(annotation_err(path, n, "expected `onset end label`"));
        };
        if parts.next().is_some() {
            return Err(annotation_err(path, n, "trailing fields after label"));
        }
        let onset: f64 = a
            .parse()
            .map_err(|_| annotation_err(path, n, format!("bad onset {a:?}")))?;
        let end: f64 = b.parse().map_err(|_| annotation_err(path, n, format!("bad end {b:?}")))?;
        if !onset.is_finite() || !end.is_finite() || end < onset || onset < 0.0 {
            return Err(annotation_err(path, n, format!("invalid interval [{a}, {b})")));
        }
        if let Some(prev) = out.last() {
            if onset < prev.onset {
                return Err(annotation_err(path, n, "segments are not in time order"));
            }
        }
        let class = label_to_class(label).map_err(|e| annotation_err(path, n, e.to_string()))?;
        out.push(ChordSegment::new(onset, end - onset, class).with_label(label));
    }
    Ok(out)
}

pub fn read_lab(path: &Path) -> Result<Vec<ChordSegment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lab(&text, path)
}

pub fn format_lab(segments: &[ChordSegment]) -> String {
    segments.iter().fold(String::new(), |mut s, seg| {
        let _ = writeln!(s, "{:.6} {:.6} {}", seg.onset, seg.end(), seg.label);
        s
    })
}

pub fn write_lab(path: &Path, segments: &[ChordSegment]) -> Result<()> {
    write_atomic(path, format_lab(segments).as_bytes())
}

/// An untimed chord as written in a chord list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListedChord {
    pub label: String,
    pub class: ChordClassId,
}

/// One chord label per line (several per line may be separated by spaces).
pub fn parse_chord_list(text: &str, path: &Path) -> Result<Vec<ListedChord>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        for label in line.split_whitespace() {
            let class = label_to_class(label).map_err(|e| annotation_err(path, n, e.to_string()))?;
            out.push(ListedChord {
                label: label.to_string(),
                class,
            });
        }
    }
    Ok(out)
}

pub fn read_chord_list(path: &Path) -> Result<Vec<ListedChord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_chord_list(&text, path)
}

pub fn format_chord_list(chords: &[ChordSegment]) -> String {
    chords.iter().fold(String::new(), |mut s, c| {
        let _ = writeln!(s, "{}", c.label);
        s
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureHeader {
    bins: usize,
    frames: usize,
    sample_rate: u32,
    hop: usize,
}

/// Store a CQT as raw little-endian f32 (bins-major) plus a JSON sidecar.
pub fn save_features(path: &Path, cqt: &CqtMatrix) -> Result<()> {
    let header = FeatureHeader {
        bins: cqt.data.nrows(),
        frames: cqt.data.ncols(),
        sample_rate: cqt.grid.sample_rate,
        hop: cqt.grid.hop,
    };
    let bytes: Vec<u8> = cqt.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_atomic(path, &bytes)?;
    write_json(&path.with_extension("json"), &header)
}

pub fn load_features(path: &Path) -> Result<CqtMatrix> {
    let header: FeatureHeader = read_json(&path.with_extension("json"))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * header.bins * header.frames {
        return Err(Error::Shape(format!(
            "{}: {} bytes for {}x{} features",
            path.display(),
            bytes.len(),
            header.bins,
            header.frames
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let data = Array2::from_shape_vec((header.bins, header.frames), values).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(CqtMatrix {
        data,
        grid: FrameGrid::new(header.sample_rate, header.hop, header.frames),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chord::ChordClassId;

    #[test]
    fn lab_round_trip() {
        let text = "0.000000 1.500000 C:maj\n1.500000 3.000000 A:min7/b3\n3.000000 4.250000 N\n";
        let p = Path::new("x.lab");
        let segs = parse_lab(text, p).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[1].label, "A:min7/b3");
        assert_eq!(format_lab(&segs), text);
        assert!(segs[2].class.is_no_chord());
    }

    #[test]
    fn lab_errors_carry_line_numbers() {
        let p = Path::new("bad.lab");
        let err = parse_lab("0 1 C\n\n1 2 H:maj\n", p).unwrap_err();
        match err {
            Error::Annotation { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
        assert!(parse_lab("0 1\n", p).is_err());
        assert!(parse_lab("2 1 C\n", p).is_err());
    }

    #[test]
    fn chord_list_lines() {
        let p = Path::new("c.txt");
        let list = parse_chord_list("# intro\nC:maj\nG:7 A:min # verse\n\nF C#:7\n", p).unwrap();
        let labels: Vec<_> = list.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["C:maj", "G:7", "A:min", "F", "C#:7"]);
        assert_eq!(list[3].class, ChordClassId::new(5 * 14).unwrap());
        match parse_chord_list("C\nC:xyz\n", p).unwrap_err() {
            Error::Annotation { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn wav_round_trip_and_pcm16() {
        let dir = tempfile::tempdir().unwrap();
        let a = AudioBuffer::new(vec![0.0, 0.5, -0.25, 1.0], 22050);
        let p = dir.path().join("a.wav");
        write_wav(&p, &a).unwrap();
        assert_eq!(read_wav(&p).unwrap(), a);

        let q = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&q, spec).unwrap();
        for s in [16384i16, 0, -16384, -16384] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let b = read_wav(&q).unwrap();
        assert_eq!(b.sample_rate, 44100);
        assert_eq!(b.samples, vec![0.25, -0.5]);
    }

    #[test]
    fn feature_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cqt = CqtMatrix {
            data: Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f32 * 0.5),
            grid: FrameGrid::new(22050, 2048, 4),
        };
        let p = dir.path().join("f.bin");
        save_features(&p, &cqt).unwrap();
        assert_eq!(load_features(&p).unwrap(), cqt);
    }
}
