//! Harte-style chord label parser.
//!
//! Accepted grammar:
//!
//! ```text
//! chord    := "N" | root [":" [shorthand] ["(" degrees ")"]] ["/" degree]
//! root     := [A-G] ("#" | "b")*
//! degrees  := ["*"] degree ("," ["*"] degree)*
//! degree   := ("#" | "b")* [1-9][0-9]?
//! ```
//!
//! A bare root is a major triad. Shorthands outside the 14 vocabulary
//! qualities (`9`, `maj9`, `11`, ...) and degree-list edits are kept as a raw
//! pitch set and resolved later by [`to_class`](super::to_class).

use std::str::FromStr;

use super::vocab::{PitchSet, Quality};
use crate::error::ChordParseError;

/// A parsed chord label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChordSymbol {
    pub root_pc: u8,
    /// Vocabulary quality when the chord tones match one exactly.
    pub quality: Option<Quality>,
    pub bass_pc: u8,
    /// Absolute chord tones (bass excluded unless it is a chord tone).
    pub pitches: PitchSet,
    pub is_nochord: bool,
}

impl ChordSymbol {
    pub const NO_CHORD: ChordSymbol = ChordSymbol {
        root_pc: 0,
        quality: None,
        bass_pc: 0,
        pitches: PitchSet::EMPTY,
        is_nochord: true,
    };

    pub fn new(root_pc: u8, quality: Quality) -> Self {
        let root_pc = root_pc % 12;
        ChordSymbol {
            root_pc,
            quality: Some(quality),
            bass_pc: root_pc,
            pitches: PitchSet::from_intervals(root_pc, quality.intervals()),
            is_nochord: false,
        }
    }
}

impl FromStr for ChordSymbol {
    type Err = ChordParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_chord(s)
    }
}

/// Semitone offsets of the natural scale degrees 1..=13.
fn degree_semitones(degree: u32) -> Option<i32> {
    const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
    if degree == 0 || degree > 13 {
        return None;
    }
    let d = (degree - 1) as usize;
    Some(MAJOR[d % 7] + 12 * (d / 7) as i32)
}

fn shorthand_intervals(name: &str) -> Option<&'static [u8]> {
    if let Some(q) = Quality::ALL.into_iter().find(|q| q.shorthand() == name) {
        return Some(q.intervals());
    }
    Some(match name {
        "9" => &[0, 4, 7, 10, 2],
        "maj9" => &[0, 4, 7, 11, 2],
        "min9" => &[0, 3, 7, 10, 2],
        "11" => &[0, 4, 7, 10, 2, 5],
        "min11" => &[0, 3, 7, 10, 2, 5],
        "13" => &[0, 4, 7, 10, 2, 5, 9],
        "maj13" => &[0, 4, 7, 11, 2, 5, 9],
        "min13" => &[0, 3, 7, 10, 2, 5, 9],
        "5" => &[0, 7],
        "1" => &[0],
        _ => return None,
    })
}

struct Cursor<'a> {
    input: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(input: &'a str) -> Self {
        Cursor {
            input,
            chars: input.char_indices().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn byte_pos(&self) -> usize {
        self.chars
            .get(self.pos)
            .map_or(self.input.len(), |&(i, _)| i)
    }

    fn error(&self, message: &'static str) -> ChordParseError {
        let token = match self.peek() {
            Some(c) => c.to_string(),
            None => "<end>".to_string(),
        };
        ChordParseError {
            input: self.input.to_string(),
            position: self.byte_pos(),
            token,
            message,
        }
    }

    fn accidentals(&mut self) -> i32 {
        let mut shift = 0;
        loop {
            if self.eat('#') {
                shift += 1;
            } else if self.eat('b') {
                shift -= 1;
            } else {
                return shift;
            }
        }
    }

    /// Interval in semitones above the root.
    fn degree(&mut self) -> Result<i32, ChordParseError> {
        let shift = self.accidentals();
        let start = self.pos;
        let mut value = 0u32;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            if self.pos - start == 2 {
                return Err(self.error("degree has too many digits"));
            }
            value = value * 10 + d;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected a scale degree"));
        }
        match degree_semitones(value) {
            Some(semis) => Ok(semis + shift),
            None => {
                self.pos = start;
                Err(self.error("scale degree must be between 1 and 13"))
            }
        }
    }
}

fn pc(semitones: i32) -> u8 {
    semitones.rem_euclid(12) as u8
}

/// Parse a Harte chord label such as `C:maj`, `A:min7/b3` or `N`.
pub fn parse_chord(text: &str) -> Result<ChordSymbol, ChordParseError> {
    let mut cur = Cursor::new(text.trim());
    if cur.chars.is_empty() {
        return Err(cur.error("empty chord label"));
    }
    if cur.eat('N') {
        if cur.peek().is_some() {
            return Err(cur.error("unexpected input after no-chord"));
        }
        return Ok(ChordSymbol::NO_CHORD);
    }

    let natural = match cur.peek() {
        Some('C') => 0,
        Some('D') => 2,
        Some('E') => 4,
        Some('F') => 5,
        Some('G') => 7,
        Some('A') => 9,
        Some('B') => 11,
        _ => return Err(cur.error("expected a root note A-G or N")),
    };
    cur.bump();
    let root = pc(natural + cur.accidentals());

    let mut relative: Vec<i32> = vec![0, 4, 7];
    if cur.eat(':') {
        let start = cur.pos;
        while cur
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric())
        {
            cur.bump();
        }
        let name: String = cur.chars[start..cur.pos].iter().map(|&(_, c)| c).collect();
        if name.is_empty() {
            if cur.peek() != Some('(') {
                return Err(cur.error("expected a quality shorthand or degree list"));
            }
            // bare degree list: only the root is implied
            relative = vec![0];
        } else {
            match shorthand_intervals(&name) {
                Some(iv) => relative = iv.iter().map(|&i| i32::from(i)).collect(),
                None => {
                    cur.pos = start;
                    return Err(cur.error("unknown quality shorthand"));
                }
            }
        }
        if cur.eat('(') {
            loop {
                let omit = cur.eat('*');
                let semis = cur.degree()?;
                if omit {
                    relative.retain(|&r| pc(r) != pc(semis));
                } else if !relative.iter().any(|&r| pc(r) == pc(semis)) {
                    relative.push(semis);
                }
                if cur.eat(',') {
                    continue;
                }
                if cur.eat(')') {
                    break;
                }
                return Err(cur.error("expected ',' or ')' in degree list"));
            }
        }
    }

    let mut bass = root;
    if cur.eat('/') {
        bass = pc(i32::from(root) + cur.degree()?);
    }
    if cur.peek().is_some() {
        return Err(cur.error("unexpected trailing input"));
    }

    let mut pitches = PitchSet::EMPTY;
    for r in &relative {
        pitches.insert(pc(i32::from(root) + r));
    }
    Ok(ChordSymbol {
        root_pc: root,
        quality: Quality::from_template(pitches.relative_to(root)),
        bass_pc: bass,
        pitches,
        is_nochord: false,
    })
}
