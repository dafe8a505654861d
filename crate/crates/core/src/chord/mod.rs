//! Chord labels, the 169-class vocabulary and frame-level label sequences.

mod frames;
mod parse;
mod vocab;

pub use frames::{
    collapse_frames, frame_labels_from_timed, upsample_uniform, ChordSegment, FrameLabelSequence,
};
pub use parse::{parse_chord, ChordSymbol};
pub use vocab::{
    class_to_label, root_name, structured_targets, ChordClassId, PitchSet, Quality,
    StructuredTargets, NO_ROOT, N_CLASSES, N_QUALITIES,
};

/// Map a parsed chord onto the vocabulary.
///
/// In-vocabulary chords map exactly (inversions fold to root position).
/// Anything else goes to the pitched class with the highest Jaccard
/// similarity between pitch-class sets. Ties prefer fewer chord tones, then a
/// class sharing the input root, then the lower quality index.
pub fn to_class(symbol: &ChordSymbol) -> ChordClassId {
    if symbol.is_nochord {
        return ChordClassId::NO_CHORD;
    }
    if let Some(q) = symbol.quality {
        return ChordClassId::pitched(symbol.root_pc, q);
    }

    let input = symbol.pitches;
    let mut best: Option<(ChordClassId, u32, u32)> = None;
    for id in ChordClassId::all().filter(|c| !c.is_no_chord()) {
        let set = id.pitch_set();
        let inter = set.intersection(input).len();
        let union = set.union(input).len().max(1);
        let Some((best_id, best_inter, best_union)) = best else {
            best = Some((id, inter, union));
            continue;
        };
        // compare inter/union against best_inter/best_union without floats
        let lhs = inter * best_union;
        let rhs = best_inter * union;
        let better = if lhs != rhs {
            lhs > rhs
        } else {
            tie_key(id, symbol.root_pc) < tie_key(best_id, symbol.root_pc)
        };
        if better {
            best = Some((id, inter, union));
        }
    }
    best.map(|(id, _, _)| id).unwrap_or(ChordClassId::NO_CHORD)
}

fn tie_key(id: ChordClassId, root: u8) -> (u32, bool, usize, usize) {
    let (r, q) = id.parts().expect("pitched class");
    (id.pitch_set().len(), r != root, q.index(), id.index())
}

/// Parse a label and map it to its vocabulary class.
pub fn label_to_class(text: &str) -> crate::Result<ChordClassId> {
    Ok(to_class(&parse_chord(text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_classes() {
        assert_eq!(label_to_class("C:maj").unwrap().index(), 0);
        assert_eq!(label_to_class("N").unwrap().index(), 168);
        assert_eq!(
            label_to_class("A:min7/b3").unwrap(),
            ChordClassId::pitched(9, Quality::Min7)
        );
    }

    #[test]
    fn round_trip_all_classes() {
        for id in 0..N_CLASSES {
            let label = class_to_label(id).unwrap();
            assert_eq!(label_to_class(&label).unwrap().index(), id, "{label}");
        }
    }

    /// Brute force over all 168 pitched classes with float Jaccard.
    fn jaccard_oracle(pitches: &[u8], root: u8) -> ChordClassId {
        let input: std::collections::BTreeSet<u8> = pitches.iter().copied().collect();
        let mut scored: Vec<(f64, usize, bool, usize, usize)> = Vec::new();
        for r in 0..12u8 {
            for (qi, q) in Quality::ALL.iter().enumerate() {
                let tones: std::collections::BTreeSet<u8> =
                    q.intervals().iter().map(|i| (r + i) % 12).collect();
                let inter = tones.intersection(&input).count() as f64;
                let union = tones.union(&input).count() as f64;
                scored.push((inter / union, tones.len(), r != root, qi, r as usize * 14 + qi));
            }
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        ChordClassId::new(scored[0].4).unwrap()
    }

    #[test]
    fn maj9_resolves_to_maj7() {
        let c = label_to_class("C:maj9").unwrap();
        assert_eq!(c.index(), 8);
        assert_eq!(c, jaccard_oracle(&[0, 4, 7, 11, 2], 0));
    }

    #[test]
    fn out_of_vocabulary_matches_oracle() {
        for label in ["G:9", "D:min11", "E:13", "F#:5", "Bb:maj13", "A:7(*3)", "C:1", "Eb:min9"] {
            let sym = parse_chord(label).unwrap();
            let pcs: Vec<u8> = sym.pitches.iter().collect();
            assert_eq!(to_class(&sym), jaccard_oracle(&pcs, sym.root_pc), "{label}");
        }
    }

    #[test]
    fn exact_match_is_fixed_point() {
        for id in ChordClassId::all() {
            let sym = parse_chord(&id.to_string()).unwrap();
            let again = to_class(&parse_chord(&to_class(&sym).to_string()).unwrap());
            assert_eq!(again, id);
        }
    }
}
