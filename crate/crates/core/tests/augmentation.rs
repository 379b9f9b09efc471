use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sarcasm_core::augmentation::*;
use sarcasm_core::dataset::{AugmentMethod, DialogueRecord, Label, Vocab};
use sarcasm_core::layers::EncoderConfig;
use sarcasm_core::synthetic::{cra_fixture, nsp_corpus};
use sarcasm_core::training::CyclicLRConfig;

/// Brute-force ranking: every cosine from scratch, full sort, first `k`.
fn linear_scan(entries: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|(id, e)| {
            let en = norm(e);
            let dot: f64 = e.iter().zip(query).map(|(a, b)| a * b).sum();
            let c = if en == 0.0 || qn == 0.0 { 0.0 } else { dot / (en * qn) };
            (id.clone(), c)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn index_from(entries: &[(String, Vec<f64>)]) -> ResponseIndex {
    let mut index = ResponseIndex::new(entries[0].1.len());
    for (id, e) in entries {
        index
            .push(IndexEntry {
                record_id: id.clone(),
                label: Label::Sarcasm,
                response: format!("response of {id}"),
                embedding: e.clone(),
            })
            .unwrap();
    }
    index
}

#[test]
fn topk_matches_linear_scan_including_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        // Small integer coordinates and repeated vectors under shuffled ids
        // make exact cosine ties common.
        let distinct: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..32).map(|_| rng.gen_range(-1i32..=1) as f64).collect())
            .collect();
        let mut ids: Vec<usize> = (0..1000).collect();
        ids.shuffle(&mut rng);
        let entries: Vec<(String, Vec<f64>)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (format!("r{id:04}"), distinct[i % distinct.len()].clone()))
            .collect();
        let index = index_from(&entries);
        let query: Vec<f64> = if trial % 4 == 0 {
            entries[rng.gen_range(0..1000)].1.clone()
        } else {
            (0..32).map(|_| rng.gen_range(-2i32..=2) as f64).collect()
        };
        let got = retrieve_topk(&index, &query, 10).unwrap();
        let want = linear_scan(&entries, &query, 10);
        assert_eq!(got.len(), 10);
        for (g, (id, c)) in got.iter().zip(&want) {
            assert_eq!(&g.record_id, id, "trial {trial}");
            assert!((g.cosine - c).abs() <= 1e-12, "trial {trial}");
        }
    }
}

#[test]
fn orthogonal_query_ranks_by_id() {
    let entries: Vec<(String, Vec<f64>)> = ["c", "a", "d", "b"]
        .iter()
        .map(|id| (id.to_string(), vec![1.0, 0.0]))
        .collect();
    let got = retrieve_topk(&index_from(&entries), &[0.0, 3.0], 4).unwrap();
    let ids: Vec<&str> = got.iter().map(|c| c.record_id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c", "d"]);
    assert!(got.iter().all(|c| c.cosine == 0.0));
}

#[test]
fn entry_retrieves_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let entries: Vec<(String, Vec<f64>)> = (0..200)
        .map(|i| (format!("e{i:03}"), (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let index = index_from(&entries);
    let top = retrieve_topk(&index, &entries[7].1, 1).unwrap();
    assert_eq!(top[0].record_id, "e007");
    assert!((top[0].cosine - 1.0).abs() < 1e-12);
}

#[test]
fn topk_rejects_bad_queries() {
    let entries = vec![("a".to_string(), vec![1.0, 2.0])];
    let index = index_from(&entries);
    assert!(matches!(
        retrieve_topk(&index, &[1.0], 1),
        Err(AugmentError::DimensionMismatch { expected: 2, got: 1 })
    ));
    assert!(retrieve_topk(&index, &[1.0, 0.0], 2).is_err());
    assert!(retrieve_topk(&index, &[1.0, 0.0], 0).is_err());
    assert!(matches!(
        retrieve_topk(&ResponseIndex::new(2), &[1.0, 0.0], 1),
        Err(AugmentError::EmptyIndex)
    ));
}

#[test]
fn tfidf_index_is_deterministic() {
    let recs: Vec<DialogueRecord> = ["same words here", "same words here", "other text"]
        .iter()
        .enumerate()
        .map(|(i, r)| DialogueRecord::new(format!("t{i}"), vec!["ctx".into()], *r, Some(Label::NotSarcasm)))
        .collect();
    let enc = TfIdfEncoder::fit(&recs.iter().map(|r| r.response.clone()).collect::<Vec<_>>());
    let index = build_response_index(&recs, &enc).unwrap();
    assert_eq!(index.len(), 3);
    assert_eq!(index.entries()[0].embedding, index.entries()[1].embedding);
    let single = build_response_index(&recs[2..], &enc).unwrap();
    assert_eq!(single.len(), 1);
}

fn record_strategy() -> impl Strategy<Value = DialogueRecord> {
    (
        "[a-z]{1,6}",
        prop::collection::vec("[a-z ]{1,12}", 0..5),
        "[a-z]{1,8}",
        prop::option::of(prop::bool::ANY),
    )
        .prop_map(|(id, context, response, label)| {
            let label = label.map(|s| if s { Label::Sarcasm } else { Label::NotSarcasm });
            DialogueRecord::new(id, context, response, label)
        })
}

proptest! {
    #[test]
    fn every_context_negative_is_not_sarcasm(recs in prop::collection::vec(record_strategy(), 1..30)) {
        let mut seen = HashSet::new();
        let recs: Vec<DialogueRecord> = recs
            .into_iter()
            .enumerate()
            .filter(|(_, r)| seen.insert(r.id.clone()))
            .map(|(i, mut r)| { r.id = format!("{}-{i}", r.id); r })
            .collect();
        let out = derive_context_negatives(&recs).unwrap();
        let eligible = recs.iter().filter(|r| r.context.len() >= 2).count();
        prop_assert_eq!(out.records.len(), eligible);
        prop_assert_eq!(out.skipped, recs.len() - eligible);
        let sources: HashSet<&str> = recs.iter().map(|r| r.id.as_str()).collect();
        for n in &out.records {
            prop_assert_eq!(n.label, Some(Label::NotSarcasm));
            prop_assert!(!sources.contains(n.id.as_str()));
            let p = n.provenance.as_ref().unwrap();
            prop_assert_eq!(p.method, AugmentMethod::ContextNegative);
            let src = recs.iter().find(|r| r.id == p.source_id).unwrap();
            prop_assert_eq!(&n.response, src.context.last().unwrap());
            prop_assert_eq!(&n.context[..], &src.context[..src.context.len() - 1]);
        }
    }

    #[test]
    fn back_translation_never_echoes_its_source(
        texts in prop::collection::vec("(this|is|great|good|very|the|movie|was|a|it) (is|great|good|very|really){1,4}", 1..8)
    ) {
        let langs: Vec<String> = ["fr", "es", "nl"].iter().map(|s| s.to_string()).collect();
        let bt = back_translate(&texts, &langs, &SynonymTranslator::default()).unwrap();
        for p in &bt.paraphrases {
            prop_assert_ne!(&p.text, &texts[p.source_index]);
        }
    }
}

#[test]
fn identity_translator_yields_nothing() {
    let texts = vec!["a b c".to_string(), "d e".to_string()];
    let bt = back_translate(&texts, &["fr".to_string()], &IdentityTranslator).unwrap();
    assert!(bt.paraphrases.is_empty());
    assert!(bt.failures.is_empty());
}

#[test]
fn balanced_input_is_unchanged() {
    let recs = vec![
        DialogueRecord::new("s", vec!["c".into()], "this is great", Some(Label::Sarcasm)),
        DialogueRecord::new("n", vec!["c".into()], "fine", Some(Label::NotSarcasm)),
    ];
    let out = balance_with_positives(&recs, &["fr".to_string()], &SynonymTranslator::default()).unwrap();
    assert_eq!(out.records, recs);
    assert_eq!(out.added, 0);
}

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        num_layers: 1,
        hidden_dim: 8,
        num_heads: 2,
        ffn_dim: 16,
        max_seq_len: 48,
        vocab_size: 0,
    }
}

fn untrained_scorer(records: &[DialogueRecord]) -> NspScorer {
    let vocab = sarcasm_core::dataset::build_vocab(records, 1).unwrap();
    NspScorer::untrained(&tiny_encoder(), vocab, 0).unwrap()
}

#[test]
fn untrained_scorer_is_one_half_and_deterministic() {
    let f = cra_fixture(10, 0, 1);
    let scorer = untrained_scorer(&f.labeled);
    for r in &f.labeled {
        let a = scorer.score(&r.context, &r.response).unwrap();
        let b = scorer.score(&r.context, &r.response).unwrap();
        assert_eq!(a.confidence, 0.5);
        assert_eq!(a, b);
    }
    let unknown = NspScorer::untrained(&tiny_encoder(), Vocab::specials_only(), 0).unwrap();
    assert_eq!(unknown.score(&["x".into()], "y").unwrap().confidence, 0.5);
}

#[test]
fn overlong_pairs_are_flagged_truncated() {
    let f = cra_fixture(4, 0, 1);
    let scorer = untrained_scorer(&f.labeled);
    let long: Vec<String> = (0..40).map(|_| "the game was long".to_string()).collect();
    assert!(scorer.score(&long, "thanks").unwrap().truncated);
    assert!(!scorer.score(&f.labeled[0].context, "thanks").unwrap().truncated);
}

#[test]
fn pairs_are_balanced_and_degenerate_corpora_fail() {
    let recs = nsp_corpus(30, 5, 2);
    let pairs = nsp_pairs(&recs, &recs, 9).unwrap();
    assert_eq!(pairs.iter().filter(|p| p.follows).count(), 30);
    assert_eq!(pairs.iter().filter(|p| !p.follows).count(), 30);
    for p in pairs.iter().filter(|p| !p.follows) {
        let src = recs.iter().find(|r| r.id == p.context_id).unwrap();
        assert_ne!(p.response, src.response);
    }
    let same: Vec<DialogueRecord> = (0..5)
        .map(|i| DialogueRecord::new(format!("d{i}"), vec!["c".into()], "same", None))
        .collect();
    assert!(matches!(
        train_nsp_scorer(&same, &NspTrainConfig::default()),
        Err(AugmentError::DegenerateCorpus)
    ));
}

#[test]
fn cra_preserves_context_and_records_provenance() {
    let f = cra_fixture(40, 20, 5);
    let texts: Vec<String> = f.labeled.iter().map(|r| r.response.clone()).collect();
    let enc = TfIdfEncoder::fit(&texts);
    let index = build_response_index(&f.labeled, &enc).unwrap();
    let scorer = untrained_scorer(&f.labeled);
    let out = cra_augment_all(&f.unlabeled, &index, &enc, &scorer, &CraConfig { k: 10, min_nsp_confidence: 0.5 }).unwrap();
    assert_eq!(out.records.len(), 20);
    let by_id: BTreeMap<&str, &DialogueRecord> = f.unlabeled.iter().map(|r| (r.id.as_str(), r)).collect();
    let labeled: BTreeMap<&str, &DialogueRecord> = f.labeled.iter().map(|r| (r.id.as_str(), r)).collect();
    for r in &out.records {
        let p = r.provenance.as_ref().unwrap();
        assert_eq!(p.method, AugmentMethod::Cra);
        let src = by_id[p.source_id.as_str()];
        assert_eq!(r.context, src.context);
        let cand = labeled[p.candidate_id.as_deref().unwrap()];
        assert_eq!(r.response, cand.response);
        assert_eq!(r.label, cand.label);
        assert!(p.cosine.unwrap().abs() <= 1.0);
        assert_eq!(p.nsp_confidence, Some(0.5));
        assert!(!by_id.contains_key(r.id.as_str()) && !labeled.contains_key(r.id.as_str()));
    }
    let ids: Vec<&str> = out.records.iter().map(|r| r.provenance.as_ref().unwrap().source_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn cra_threshold_and_forced_choice() {
    let f = cra_fixture(6, 3, 8);
    let texts: Vec<String> = f.labeled.iter().map(|r| r.response.clone()).collect();
    let enc = TfIdfEncoder::fit(&texts);
    let scorer = untrained_scorer(&f.labeled);
    let index = build_response_index(&f.labeled, &enc).unwrap();
    let strict = CraConfig { k: 6, min_nsp_confidence: 0.99 };
    let out = cra_augment_all(&f.unlabeled, &index, &enc, &scorer, &strict).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.rejected.len(), 3);
    assert!(out.rejected.iter().all(|(_, c)| *c == 0.5));

    let one = build_response_index(&f.labeled[1..2], &enc).unwrap();
    let (decision, _) = cra_augment(&f.unlabeled[0], &one, &enc, &scorer, &CraConfig::default()).unwrap();
    match decision {
        CraDecision::Accepted(r) => {
            assert_eq!(r.response, f.labeled[1].response);
            assert_eq!(r.label, f.labeled[1].label);
        }
        CraDecision::Rejected { .. } => panic!("0.5 meets the default threshold"),
    }
    assert!(matches!(
        cra_augment(&f.unlabeled[0], &ResponseIndex::new(enc.dim()), &enc, &scorer, &CraConfig::default()),
        Err(AugmentError::EmptyIndex)
    ));
}

fn desk_nsp_config(seed: u64, epochs: usize, base_lr: f64) -> NspTrainConfig {
    NspTrainConfig {
        encoder: EncoderConfig {
            num_layers: 1,
            hidden_dim: 32,
            num_heads: 4,
            ffn_dim: 64,
            max_seq_len: 48,
            vocab_size: 0,
        },
        max_epochs: epochs,
        patience: epochs,
        seed,
        lr: CyclicLRConfig {
            base_lr,
            max_lr: 10.0 * base_lr,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn scorer_learns_shared_marker_continuations() {
    let out = train_nsp_scorer(&nsp_corpus(2000, 20, 7), &desk_nsp_config(7, 25, 3e-3)).unwrap();
    assert!((out.initial_loss - 2f64.ln()).abs() < 1e-12);
    assert!(out.valid_accuracy >= 0.9, "validation pair accuracy {}", out.valid_accuracy);

    // Fresh dialogues: the true continuation against another dialogue's response.
    let probe = nsp_corpus(500, 20, 1234);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut wins = 0;
    for (i, r) in probe.iter().enumerate() {
        let j = loop {
            let j = rng.gen_range(0..probe.len());
            if j != i {
                break j;
            }
        };
        let t = out.scorer.score(&r.context, &r.response).unwrap().confidence;
        let f = out.scorer.score(&r.context, &probe[j].response).unwrap().confidence;
        wins += usize::from(t > f);
    }
    assert!(wins >= 450, "true continuation ranked first in {wins}/500 pairs");
}

#[test]
fn cra_fixture_labels_transfer_correctly() {
    let f = cra_fixture(200, 100, 7);
    let trained = train_nsp_scorer(&f.labeled, &desk_nsp_config(7, 30, 3e-3)).unwrap();
    let texts: Vec<String> = f.labeled.iter().map(|r| r.response.clone()).collect();
    let enc = TfIdfEncoder::fit(&texts);
    let index = build_response_index(&f.labeled, &enc).unwrap();
    let out = cra_augment_all(&f.unlabeled, &index, &enc, &trained.scorer, &CraConfig::default()).unwrap();
    assert!(!out.records.is_empty());
    let correct = out
        .records
        .iter()
        .filter(|r| Some(f.truth[&r.provenance.as_ref().unwrap().source_id]) == r.label)
        .count();
    assert!(
        correct * 5 >= out.records.len() * 4,
        "{correct}/{} emitted samples carry the correct label",
        out.records.len()
    );
}

#[test]
fn scorer_checkpoint_round_trips() {
    let f = cra_fixture(20, 0, 4);
    let out = train_nsp_scorer(&f.labeled, &desk_nsp_config(1, 2, 1e-3)).unwrap();
    let params = out.scorer.model.to_params();
    let back = NspScorer::from_checkpoint(&params, &out.scorer.checkpoint_extra()).unwrap();
    for r in &f.labeled {
        assert_eq!(
            back.score(&r.context, &r.response).unwrap(),
            out.scorer.score(&r.context, &r.response).unwrap()
        );
    }
}

/// Serves scripted `(status, body)` replies, one connection per request,
/// and records each request's headers and body.
fn scripted_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<(String, String)>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/translate", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            log.lock().unwrap().push((headers, String::from_utf8(payload).unwrap()));
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

#[test]
fn http_translator_retries_and_decodes() {
    let (url, seen) = scripted_server(vec![
        (503, "{}".into()),
        (200, r#"{"translation": "c'est super"}"#.into()),
    ]);
    let t = HttpTranslator::new(HttpTranslatorConfig {
        endpoint: url,
        api_key: Some("k123".into()),
        timeout_secs: 5.0,
        retries: 2,
    })
    .unwrap();
    assert_eq!(t.translate("this is great", "en", "fr").unwrap(), "c'est super");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let (headers, body) = &seen[1];
    assert!(headers.to_ascii_lowercase().contains("authorization: bearer k123"));
    let json: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(json, serde_json::json!({"text": "this is great", "source": "en", "target": "fr"}));
}

#[test]
fn http_translator_gives_up_on_client_errors() {
    let (url, seen) = scripted_server(vec![(400, "{}".into())]);
    let t = HttpTranslator::new(HttpTranslatorConfig {
        endpoint: url,
        retries: 3,
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(t.translate("x", "en", "fr"), Err(TranslateError::Service(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
    assert!(HttpTranslator::new(HttpTranslatorConfig::default()).is_err());
}
