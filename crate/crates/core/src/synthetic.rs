//! Generated corpora with known structure, for tests and desk runs.
//!
//! Filler text is drawn from a fixed word list; the signal is carried by a
//! few reserved marker tokens that never appear as filler.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DialogueRecord, Label};

const FILLER: [&str; 40] = [
    "the", "game", "last", "night", "was", "really", "long", "weather", "today", "seems", "cold",
    "my", "phone", "battery", "died", "again", "coffee", "shop", "closed", "early", "traffic",
    "on", "highway", "new", "movie", "comes", "out", "friday", "train", "delayed", "meeting",
    "moved", "to", "monday", "store", "ran", "milk", "team", "lost", "match",
];

/// Marker carried by every sarcastic response.
pub const SARCASM_MARKER: &str = "yeahright";
/// Marker carried by every non-sarcastic response.
pub const PLAIN_MARKER: &str = "thanks";

fn filler(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Vec<String> {
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| FILLER.choose(rng).expect("non-empty").to_string())
        .collect()
}

fn with_marker(mut words: Vec<String>, marker: &str, rng: &mut ChaCha8Rng) -> String {
    let at = rng.gen_range(0..=words.len());
    words.insert(at, marker.to_string());
    words.join(" ")
}

fn at_end(words: &str, marker: &str) -> String {
    format!("{words} {marker}")
}

fn at_start(words: Vec<String>, marker: &str) -> String {
    format!("{marker} {}", words.join(" "))
}

fn context(rng: &mut ChaCha8Rng) -> Vec<String> {
    let turns = rng.gen_range(1..=4);
    (0..turns).map(|_| filler(rng, 3, 7).join(" ")).collect()
}

/// Balanced labeled corpus whose label is decided by a marker token in the
/// response alone. Ids are `syn-{i}`.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Sarcasm
            } else {
                Label::NotSarcasm
            };
            let marker = match label {
                Label::Sarcasm => SARCASM_MARKER,
                Label::NotSarcasm => PLAIN_MARKER,
            };
            let ctx = context(&mut rng);
            let words = filler(&mut rng, 3, 6);
            let response = with_marker(words, marker, &mut rng);
            DialogueRecord::new(format!("syn-{i}"), ctx, response, Some(label))
        })
        .collect()
}

/// Topic marker `topic{k}`.
pub fn topic_marker(k: usize) -> String {
    format!("topic{k}")
}

/// Dialogues whose last context turn ends with, and whose response starts
/// with, the same topic marker.
/// Record `i` uses topic `i % topics`; labels are left empty.
pub fn nsp_corpus(n: usize, topics: usize, seed: u64) -> Vec<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let marker = topic_marker(i % topics);
            let mut ctx = context(&mut rng);
            let last = ctx.pop().expect("at least one turn");
            ctx.push(at_end(&last, &marker));
            let response = at_start(filler(&mut rng, 3, 6), &marker);
            DialogueRecord::new(format!("nsp-{i}"), ctx, response, None)
        })
        .collect()
}

/// Context cue preceding sarcastic replies.
pub const SARCASM_CUE: &str = "obviously";
/// Context cue preceding plain replies.
pub const PLAIN_CUE: &str = "honestly";

/// Labeled and unlabeled threads for contextual response augmentation.
#[derive(Debug, Clone)]
pub struct CraFixture {
    pub labeled: Vec<DialogueRecord>,
    /// Unlabeled threads; their own responses carry no marker.
    pub unlabeled: Vec<DialogueRecord>,
    /// The label each unlabeled thread's context calls for.
    pub truth: BTreeMap<String, Label>,
}

/// Labeled threads end the last context turn with a class cue and start the
/// response with the class marker, so a pair scorer can learn which responses fit
/// which contexts. Unlabeled threads carry only the context cue.
pub fn cra_fixture(n_labeled: usize, n_unlabeled: usize, seed: u64) -> CraFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thread = |rng: &mut ChaCha8Rng, label: Label| {
        let cue = match label {
            Label::Sarcasm => SARCASM_CUE,
            Label::NotSarcasm => PLAIN_CUE,
        };
        let mut ctx = context(rng);
        let last = ctx.pop().expect("at least one turn");
        ctx.push(at_end(&last, cue));
        ctx
    };
    let labeled = (0..n_labeled)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Sarcasm
            } else {
                Label::NotSarcasm
            };
            let ctx = thread(&mut rng, label);
            let marker = match label {
                Label::Sarcasm => SARCASM_MARKER,
                Label::NotSarcasm => PLAIN_MARKER,
            };
            let response = at_start(filler(&mut rng, 3, 6), marker);
            DialogueRecord::new(format!("lab-{i}"), ctx, response, Some(label))
        })
        .collect();
    let mut truth = BTreeMap::new();
    let unlabeled = (0..n_unlabeled)
        .map(|i| {
            let label = if rng.gen::<bool>() {
                Label::Sarcasm
            } else {
                Label::NotSarcasm
            };
            let id = format!("unl-{i}");
            truth.insert(id.clone(), label);
            let ctx = thread(&mut rng, label);
            DialogueRecord::new(id, ctx, filler(&mut rng, 3, 6).join(" "), None)
        })
        .collect();
    CraFixture {
        labeled,
        unlabeled,
        truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_corpus_is_balanced_and_marked() {
        let recs = separable_corpus(100, 1);
        assert_eq!(crate::dataset::label_counts(&recs), [50, 50]);
        for r in &recs {
            let marked = r.response.split(' ').any(|w| w == SARCASM_MARKER);
            assert_eq!(marked, r.label == Some(Label::Sarcasm));
            assert!(!r.context.is_empty());
        }
        assert_eq!(separable_corpus(100, 1), recs);
    }

    #[test]
    fn nsp_pairs_share_topic() {
        for (i, r) in nsp_corpus(20, 4, 2).iter().enumerate() {
            let m = topic_marker(i % 4);
            assert!(r.response.contains(&m));
            assert!(r.context.last().unwrap().contains(&m));
        }
    }

    #[test]
    fn cra_fixture_truth_follows_cue() {
        let f = cra_fixture(10, 10, 3);
        for r in &f.unlabeled {
            let cue = r.context.last().unwrap();
            let want = if cue.contains(SARCASM_CUE) {
                Label::Sarcasm
            } else {
                Label::NotSarcasm
            };
            assert_eq!(f.truth[&r.id], want);
            assert!(!r.response.contains(SARCASM_MARKER));
        }
    }
}
