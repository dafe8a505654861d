use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of pitched chord qualities in the vocabulary.
pub const N_QUALITIES: usize = 14;
/// Vocabulary size: 12 roots x 14 qualities plus no-chord.
pub const N_CLASSES: usize = 12 * N_QUALITIES + 1;

const ROOT_NAMES: [&str; 12] = [
    "C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B",
];

/// Chord quality. Discriminants are the vocabulary quality index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quality {
    Maj = 0,
    Min,
    Dom7,
    Dim,
    Dim7,
    Hdim7,
    Aug,
    Min7,
    Maj7,
    Maj6,
    Min6,
    MinMaj7,
    Sus2,
    Sus4,
}

impl Quality {
    pub const ALL: [Quality; N_QUALITIES] = [
        Quality::Maj,
        Quality::Min,
        Quality::Dom7,
        Quality::Dim,
        Quality::Dim7,
        Quality::Hdim7,
        Quality::Aug,
        Quality::Min7,
        Quality::Maj7,
        Quality::Maj6,
        Quality::Min6,
        Quality::MinMaj7,
        Quality::Sus2,
        Quality::Sus4,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Quality> {
        Self::ALL.get(index).copied()
    }

    /// Harte shorthand.
    pub fn shorthand(self) -> &'static str {
        match self {
            Quality::Maj => "maj",
            Quality::Min => "min",
            Quality::Dom7 => "7",
            Quality::Dim => "dim",
            Quality::Dim7 => "dim7",
            Quality::Hdim7 => "hdim7",
            Quality::Aug => "aug",
            Quality::Min7 => "min7",
            Quality::Maj7 => "maj7",
            Quality::Maj6 => "maj6",
            Quality::Min6 => "min6",
            Quality::MinMaj7 => "minmaj7",
            Quality::Sus2 => "sus2",
            Quality::Sus4 => "sus4",
        }
    }

    /// Chord tones relative to the root, in semitones.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            Quality::Maj => &[0, 4, 7],
            Quality::Min => &[0, 3, 7],
            Quality::Dom7 => &[0, 4, 7, 10],
            Quality::Dim => &[0, 3, 6],
            Quality::Dim7 => &[0, 3, 6, 9],
            Quality::Hdim7 => &[0, 3, 6, 10],
            Quality::Aug => &[0, 4, 8],
            Quality::Min7 => &[0, 3, 7, 10],
            Quality::Maj7 => &[0, 4, 7, 11],
            Quality::Maj6 => &[0, 4, 7, 9],
            Quality::Min6 => &[0, 3, 7, 9],
            Quality::MinMaj7 => &[0, 3, 7, 11],
            Quality::Sus2 => &[0, 2, 7],
            Quality::Sus4 => &[0, 5, 7],
        }
    }

    pub fn template(self) -> PitchSet {
        PitchSet::from_intervals(0, self.intervals())
    }

    /// Quality whose template is exactly `relative` (a root-relative set).
    pub fn from_template(relative: PitchSet) -> Option<Quality> {
        Self::ALL.into_iter().find(|q| q.template() == relative)
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.shorthand())
    }
}

/// Set of pitch classes as a 12-bit mask (bit 0 = C).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PitchSet(u16);

impl PitchSet {
    pub const EMPTY: PitchSet = PitchSet(0);

    pub fn from_intervals(root: u8, intervals: &[u8]) -> Self {
        let mut set = PitchSet::EMPTY;
        for &i in intervals {
            set.insert((root + i) % 12);
        }
        set
    }

    pub fn insert(&mut self, pc: u8) {
        self.0 |= 1 << (pc % 12);
    }

    pub fn remove(&mut self, pc: u8) {
        self.0 &= !(1 << (pc % 12));
    }

    pub fn contains(self, pc: u8) -> bool {
        self.0 & (1 << (pc % 12)) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn intersection(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 & other.0)
    }

    pub fn union(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 | other.0)
    }

    /// Rotate so that `root` becomes pitch class 0.
    pub fn relative_to(self, root: u8) -> PitchSet {
        let r = u32::from(root % 12);
        let bits = u32::from(self.0);
        let rotated = ((bits >> r) | (bits << (12 - r))) & 0xfff;
        PitchSet(rotated as u16)
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0u8..12).filter(move |&pc| self.contains(pc))
    }

    pub fn to_binary(self) -> [bool; 12] {
        std::array::from_fn(|pc| self.contains(pc as u8))
    }
}

/// Index into the 169-class vocabulary: `root * 14 + quality`, or 168 for no-chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ChordClassId(u8);

impl ChordClassId {
    pub const NO_CHORD: ChordClassId = ChordClassId(168);

    pub fn new(id: usize) -> Result<Self> {
        if id < N_CLASSES {
            Ok(ChordClassId(id as u8))
        } else {
            Err(Error::ClassOutOfRange(id))
        }
    }

    pub fn pitched(root_pc: u8, quality: Quality) -> Self {
        ChordClassId((root_pc % 12) * N_QUALITIES as u8 + quality as u8)
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn is_no_chord(self) -> bool {
        self == Self::NO_CHORD
    }

    /// Root pitch class and quality, `None` for no-chord.
    pub fn parts(self) -> Option<(u8, Quality)> {
        if self.is_no_chord() {
            return None;
        }
        let root = self.0 / N_QUALITIES as u8;
        let quality = Quality::from_index(usize::from(self.0) % N_QUALITIES)?;
        Some((root, quality))
    }

    pub fn pitch_set(self) -> PitchSet {
        match self.parts() {
            Some((root, q)) => PitchSet::from_intervals(root, q.intervals()),
            None => PitchSet::EMPTY,
        }
    }

    pub fn all() -> impl Iterator<Item = ChordClassId> {
        (0..N_CLASSES).map(|i| ChordClassId(i as u8))
    }
}

impl TryFrom<usize> for ChordClassId {
    type Error = Error;

    fn try_from(id: usize) -> Result<Self> {
        ChordClassId::new(id)
    }
}

impl From<ChordClassId> for usize {
    fn from(id: ChordClassId) -> usize {
        id.index()
    }
}

impl fmt::Display for ChordClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&class_to_label_unchecked(*self))
    }
}

pub fn root_name(pc: u8) -> &'static str {
    ROOT_NAMES[usize::from(pc % 12)]
}

fn class_to_label_unchecked(id: ChordClassId) -> String {
    match id.parts() {
        Some((root, q)) => format!("{}:{}", root_name(root), q.shorthand()),
        None => "N".to_string(),
    }
}

/// Canonical Harte label for a vocabulary index.
pub fn class_to_label(id: usize) -> Result<String> {
    Ok(class_to_label_unchecked(ChordClassId::new(id)?))
}

/// Per-frame targets for the structured heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuredTargets {
    /// Root pitch class, 12 for no-chord.
    pub root: u8,
    /// Bass pitch class, 12 for no-chord.
    pub bass: u8,
    pub pitches: [bool; 12],
}

pub const NO_ROOT: u8 = 12;

pub fn structured_targets(id: ChordClassId) -> StructuredTargets {
    match id.parts() {
        Some((root, _)) => StructuredTargets {
            root,
            bass: root,
            pitches: id.pitch_set().to_binary(),
        },
        None => StructuredTargets {
            root: NO_ROOT,
            bass: NO_ROOT,
            pitches: [false; 12],
        },
    }
}
