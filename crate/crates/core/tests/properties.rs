mod common;

use hiertag_core::corpus::{
    batch_document, generate_synthetic, slice_regime, BatchConfig, Corpus, GenConfig, Label, VocabConfig, NUM_LABELS,
};
use hiertag_core::model::{HierModel, ModelConfig};
use hiertag_core::scoring::{chunk_f1, extract_chunks};
use hiertag_core::training::{clip_gradients, document_gradients, LossSpec, Variation};
use proptest::prelude::*;
use std::collections::HashSet;

fn gen_config() -> impl Strategy<Value = GenConfig> {
    (1usize..6, 0usize..4, 1usize..5, 2usize..10, 0.0f64..1.0, 1usize..4).prop_map(
        |(documents, negative_documents, max_sentences, max_len, positive_rate, max_span_len)| GenConfig {
            documents,
            negative_documents,
            test_documents: 1,
            min_sentences: 1,
            max_sentences,
            min_sentence_len: 1,
            max_sentence_len: max_len.max(2 * max_span_len + 1),
            positive_rate,
            max_span_len,
            ..GenConfig::default()
        },
    )
}

fn label_seq(max: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(0..NUM_LABELS, 0..max).prop_map(|ids| ids.into_iter().map(|i| Label::from_id(i).unwrap()).collect())
}

fn all_documents(cfg: &GenConfig, seed: u64) -> Corpus {
    let s = generate_synthetic(cfg, seed).unwrap();
    let mut docs = s.train.documents;
    docs.extend(s.negatives.documents);
    docs.extend(s.test.documents);
    Corpus::new(docs, "all").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trips(cfg in gen_config(), seed in any::<u64>()) {
        let corpus = all_documents(&cfg, seed);
        let parsed = Corpus::parse_str(&corpus.to_jsonl()).unwrap();
        prop_assert_eq!(parsed.documents, corpus.documents);
    }

    #[test]
    fn coarse_derivation_is_idempotent(cfg in gen_config(), seed in any::<u64>()) {
        let train = generate_synthetic(&cfg, seed).unwrap().train;
        let once = train.clone().derive_coarse_labels().unwrap();
        prop_assert_eq!(&once, &train);
        prop_assert_eq!(once.clone().derive_coarse_labels().unwrap(), once);
    }

    #[test]
    fn regimes_nest_and_partition(n in 1usize..40, seed in any::<u64>(), cuts in prop::collection::btree_set(1usize..40, 1..5)) {
        let corpus = Corpus::new(
            (0..n).map(|i| hiertag_core::corpus::sample::example_document(&format!("d{i}"))).collect(),
            "c",
        ).unwrap();
        let schedule: Vec<usize> = cuts.into_iter().filter(|&k| k <= n).rev().collect();
        let slices = slice_regime(&corpus, &schedule, seed).unwrap();
        let all = corpus.ids();
        for (i, s) in slices.iter().enumerate() {
            let kept = s.kept.ids();
            let gone = s.discarded.ids();
            prop_assert!(kept.is_disjoint(&gone));
            prop_assert_eq!(kept.union(&gone).copied().collect::<HashSet<_>>(), all.clone());
            if let Some(next) = slices.get(i + 1) {
                prop_assert!(next.kept.ids().is_subset(&kept));
            }
        }
    }

    #[test]
    fn masks_mark_exactly_the_labeled_positions(cfg in gen_config(), seed in any::<u64>(), width in 1usize..16) {
        let corpus = all_documents(&cfg, seed);
        let batch = BatchConfig { max_tokens: width, max_sentences: 3 };
        for d in &corpus.documents {
            let b = batch_document(d, &VocabConfig::default(), batch).unwrap();
            for (m, l) in b.token_mask.iter().zip(&b.token_labels) {
                prop_assert!(*m || l.is_none());
                if d.has_token_annotations {
                    prop_assert_eq!(*m, l.is_some());
                }
            }
        }
    }

    #[test]
    fn generated_sequences_chunk_cleanly(cfg in gen_config(), seed in any::<u64>()) {
        for d in &generate_synthetic(&cfg, seed).unwrap().train.documents {
            for s in &d.sentences {
                let labels = s.labels().unwrap();
                let chunks = extract_chunks(&labels);
                prop_assert!(chunks.iter().all(|c| c.start < c.end));
                let tagged = labels.iter().filter(|l| !l.is_outside()).count();
                prop_assert_eq!(chunks.iter().map(|c| c.end - c.start).sum::<usize>(), tagged);
            }
        }
    }

    #[test]
    fn chunks_are_disjoint_and_ordered(labels in label_seq(30)) {
        let chunks = extract_chunks(&labels);
        for c in &chunks {
            prop_assert!(c.start < c.end && c.end <= labels.len());
        }
        for w in chunks.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
    }

    #[test]
    fn swapping_gold_and_prediction_swaps_precision_and_recall(pairs in prop::collection::vec((label_seq(12), label_seq(12)), 1..4)) {
        let (gold, pred): (Vec<Vec<Label>>, Vec<Vec<Label>>) = pairs
            .into_iter()
            .map(|(mut g, mut p)| {
                let n = g.len().min(p.len());
                g.truncate(n);
                p.truncate(n);
                (g, p)
            })
            .unzip();
        let a = chunk_f1(&gold, &pred).unwrap().overall;
        let b = chunk_f1(&pred, &gold).unwrap().overall;
        prop_assert_eq!(a.precision(), b.recall());
        prop_assert_eq!(a.recall(), b.precision());
        prop_assert!((0.0..=100.0).contains(&a.f1()));
        let full = a.gold == a.correct && a.predicted == a.correct && a.gold > 0;
        prop_assert_eq!(a.f1() == 100.0, full);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn clipping_bounds_the_global_norm(seed in 0u64..1000, max_norm in 1e-3f64..2.0, sentences in 1usize..4) {
        let cfg = common::fd_config(seed as usize % 20);
        let mut model = HierModel::new(cfg.clone(), seed).unwrap();
        let doc = common::random_batch(&mut common::rng(seed), &cfg, sentences);
        let (_, grads) = document_gradients(&model, &doc, &LossSpec::for_variation(Variation::SentDoc), &mut hiertag_core::model::Dropout::off()).unwrap();
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                model.params_mut().accumulate(i, g, 7.5).unwrap();
            }
        }
        let before = model.params().grad_norm();
        let scale = clip_gradients(model.params_mut(), max_norm);
        let after = model.params().grad_norm();
        prop_assert!(after <= max_norm + 1e-9);
        prop_assert!(scale <= 1.0);
        if before <= max_norm {
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn window_sums_do_not_depend_on_order(seed in 0u64..1000) {
        let cfg = common::fd_config(seed as usize % 20);
        let model = HierModel::new(cfg.clone(), seed).unwrap();
        let mut r = common::rng(seed);
        let docs: Vec<_> = (0..3).map(|k| common::random_batch(&mut r, &cfg, 1 + k)).collect();
        let spec = LossSpec::for_variation(Variation::SentDoc);
        let sum = |order: &[usize]| {
            let mut m = model.clone();
            for &i in order {
                let (_, grads) = document_gradients(&model, &docs[i], &spec, &mut hiertag_core::model::Dropout::off()).unwrap();
                for (j, g) in grads.iter().enumerate() {
                    if let Some(g) = g {
                        m.params_mut().accumulate(j, g, 1.0 / 3.0).unwrap();
                    }
                }
            }
            m.params().iter().flat_map(|p| p.tensor.grad().unwrap().to_vec()).collect::<Vec<f64>>()
        };
        let a = sum(&[0, 1, 2]);
        let b = sum(&[2, 0, 1]);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn coarse_documents_carry_no_token_loss(cfg in gen_config(), seed in 0u64..1000) {
        let model = HierModel::new(ModelConfig::tiny(), seed).unwrap();
        let spec = LossSpec::for_variation(Variation::SentDoc);
        for d in generate_synthetic(&cfg, seed).unwrap().negatives.documents {
            let b = batch_document(&d, &model.config().vocab, model.config().batch()).unwrap();
            let v = hiertag_core::training::loss_values(&model, &b, &spec).unwrap();
            prop_assert!(v.token.is_none());
            prop_assert!(v.document.is_some());
        }
    }
}
