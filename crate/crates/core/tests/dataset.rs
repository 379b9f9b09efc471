use std::collections::BTreeSet;

use proptest::prelude::*;
use sarcasm_core::dataset::{
    context_windows, parse_jsonl, parse_jsonl_str, split, to_jsonl, write_jsonl, DialogueRecord,
    Label, SplitSpec, WindowSize,
};

fn text() -> impl Strategy<Value = String> {
    // Includes quotes, escapes and non-ASCII.
    prop::string::string_regex("[a-zA-Z0-9 ,.!?'\"\\\\é😀@#]{1,20}").unwrap()
}

fn record() -> impl Strategy<Value = DialogueRecord> {
    (
        prop::collection::vec(text(), 0..5),
        text(),
        prop::option::of(prop::sample::select(Label::ALL.to_vec())),
        "[a-z0-9]{1,8}",
    )
        .prop_map(|(context, response, label, id)| {
            DialogueRecord::new(id, context, response, label)
        })
        .prop_filter("non-blank response", |r| !r.response.trim().is_empty())
}

fn numbered(n: usize) -> Vec<DialogueRecord> {
    (0..n)
        .map(|i| DialogueRecord::new(i.to_string(), vec![], format!("r{i}"), Some(Label::Sarcasm)))
        .collect()
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 2usize..200, seed in any::<u64>(), frac in 0.05f64..0.95, stratify in any::<bool>()) {
        let recs = numbered(n);
        let spec = SplitSpec { train_fraction: frac, seed, stratify };
        let (t, v) = split(&recs, &spec).unwrap();
        let ids = |rs: &[DialogueRecord]| rs.iter().map(|r| r.id.clone()).collect::<BTreeSet<_>>();
        let (ti, vi) = (ids(&t), ids(&v));
        prop_assert_eq!(ti.len() + vi.len(), n);
        prop_assert!(ti.is_disjoint(&vi));
        prop_assert_eq!(ti.union(&vi).cloned().collect::<BTreeSet<_>>(), ids(&recs));
    }

    #[test]
    fn windows_are_suffixes_and_counted(turns in prop::collection::vec(text(), 0..8), ws in prop::collection::btree_set(0usize..10, 1..6)) {
        let rec = DialogueRecord::new("s", turns.clone(), "r", None);
        let sizes: Vec<WindowSize> = ws.iter().map(|&w| WindowSize::Turns(w)).collect();
        let views = context_windows(&rec, &sizes);
        let distinct: BTreeSet<usize> = ws.iter().map(|&w| w.min(turns.len())).collect();
        prop_assert_eq!(views.len(), distinct.len());
        prop_assert!(!views.is_empty() && views.len() <= ws.len());
        for v in &views {
            prop_assert_eq!(&v.turns[..], &turns[turns.len() - v.turns.len()..]);
            prop_assert_eq!(v.window_size, v.turns.len());
        }
    }

    #[test]
    fn jsonl_round_trip(recs in prop::collection::vec(record(), 0..10)) {
        let text = to_jsonl(&recs);
        let back = parse_jsonl_str(&text, false).unwrap();
        prop_assert_eq!(&back, &recs);
        prop_assert_eq!(to_jsonl(&back), text);
    }
}

#[test]
fn file_round_trip_and_missing_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let recs = numbered(3);
    write_jsonl(&path, &recs).unwrap();
    assert_eq!(parse_jsonl(&path, true).unwrap(), recs);
    assert!(parse_jsonl(&dir.path().join("absent.jsonl"), true).is_err());
}
