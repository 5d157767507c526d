mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use intentbot::dialog::DialogSession;
use intentbot::evaluation::{metrics, ConfusionMatrix};
use intentbot::matcher::{build_index, cosine, predict_cosine, Prediction, PatternIndex};
use intentbot::mlp::{self, softmax, Network};
use intentbot::textproc::{porter_stem, preprocess};
use intentbot::vectorizer::{build_vocabulary, encode_bow, EmbeddingProvider, HashedTfidf, Vector};
use intentbot::{Corpus, DialogConfig};

use common::*;

fn vector(values: Vec<f64>) -> Vector {
    Vector::new(values).unwrap()
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    (prop::collection::vec(1usize..8, 1..4), 2usize..6).prop_map(|(mut d, k)| {
        d.push(k);
        d
    })
}

// text processing

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ascii_tokens_are_lowercase_alphanumeric(s in "[ -~]{0,60}") {
        for t in preprocess(&s).iter() {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()), "{t:?}");
        }
    }

    // Re-running the pipeline keeps token boundaries and only re-stems each
    // token; when every token is already a stem fixed point it is a no-op.
    #[test]
    fn reprocessing_is_restemming(s in "[ -~]{0,60}|[a-zA-Z ]{0,60}") {
        let once = preprocess(&s);
        let twice = preprocess(&once.joined());
        prop_assert_eq!(twice.len(), once.len());
        for (a, b) in once.iter().zip(twice.iter()) {
            prop_assert_eq!(b, &porter_stem(a));
        }
        if once.iter().all(|t| porter_stem(t) == *t) {
            prop_assert_eq!(twice, once);
        }
    }

    #[test]
    fn stemming_never_grows_or_empties(w in "[a-z]{1,15}") {
        let s = porter_stem(&w);
        prop_assert!(!s.is_empty());
        prop_assert!(s.len() <= w.len());
    }
}

#[test]
fn reprocessing_is_not_always_idempotent() {
    // "abusing" -> "abus", and "abus" -> "abu"
    let once = preprocess("abusing");
    let twice = preprocess(&once.joined());
    assert_eq!(once.tokens(), ["abus"]);
    assert_eq!(twice.tokens(), ["abu"]);
}

// vectorizer

fn shuffled_corpus(seed: u64) -> Corpus {
    let mut c = Corpus::demo();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    c.intents.shuffle(&mut rng);
    for i in &mut c.intents {
        i.patterns.shuffle(&mut rng);
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vocabulary_ignores_corpus_order(seed in any::<u64>()) {
        let base = build_vocabulary(&Corpus::demo()).unwrap();
        prop_assert_eq!(build_vocabulary(&shuffled_corpus(seed)).unwrap(), base);
    }

    #[test]
    fn bow_is_binary_and_vocab_wide(s in "[ -~]{0,80}") {
        let vocab = build_vocabulary(&Corpus::demo()).unwrap();
        let v = encode_bow(&preprocess(&s), &vocab);
        prop_assert_eq!(v.dim(), vocab.len());
        prop_assert!(v.values().iter().all(|x| *x == 0.0 || *x == 1.0));
    }

    #[test]
    fn hashed_self_similarity_is_one(s in "[a-zA-Z0-9 ]{1,60}") {
        let h = HashedTfidf::fit(&Corpus::demo(), 384).unwrap();
        let v = h.embed(&s).unwrap();
        if !preprocess(&s).is_empty() {
            prop_assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        } else {
            prop_assert!(v.is_zero());
        }
    }
}

// network

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn forward_is_a_probability_simplex(dims in dims_strategy(), seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &dims);
        let x: Vec<f64> = (0..dims[0]).map(|i| ((i as f64 + 1.0) * 0.37).sin() * scale).collect();
        let p = net.forward(&x).unwrap();
        prop_assert_eq!(p.len(), *dims.last().unwrap());
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_ignores_last_layer_bias_shift(dims in dims_strategy(), seed in any::<u64>(), shift in -100.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &dims);
        let x: Vec<f64> = (0..dims[0]).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut shifted = net.clone();
        for b in &mut shifted.layers_mut().last_mut().unwrap().biases {
            *b += shift;
        }
        let (p, q) = (net.forward(&x).unwrap(), shifted.forward(&x).unwrap());
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_shift_invariance(logits in prop::collection::vec(-30.0f64..30.0, 1..10), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
        for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn small_sgd_step_lowers_sample_loss(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = random_network(&mut rng, &dims);
        let batch = random_batch(&mut rng, dims[0], *dims.last().unwrap());
        let sample = vec![batch[0].clone()];
        let refs = as_refs(&sample);
        let (grads, before) = net.gradients(&refs).unwrap();
        prop_assume!(grads.max_abs() > 1e-6);
        net.apply(&grads, 1e-4);
        prop_assert!(net.loss(&refs).unwrap() < before);
    }

    #[test]
    fn loss_matches_independent_computation(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &dims);
        let batch = random_batch(&mut rng, dims[0], *dims.last().unwrap());
        let ours = net.loss(&as_refs(&batch)).unwrap();
        prop_assert!((ours - naive_loss(&net, &batch)).abs() < 1e-9);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for draw in 0..50 {
        let dims = random_topology(&mut rng);
        let net = random_network(&mut rng, &dims);
        let batch = random_batch(&mut rng, dims[0], *dims.last().unwrap());
        let err = gradient_check(&net, &batch, 1e-5);
        assert!(err < 1e-4, "draw {draw} dims {dims:?}: {err}");
    }
}

#[test]
fn gradients_for_dims_5_4_3() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = random_network(&mut rng, &[5, 4, 3]);
    let batch = vec![(vec![0.3, -1.2, 0.5, 2.0, -0.1], 2), (vec![1.0, 0.0, -0.4, 0.2, 0.9], 0)];
    assert!(gradient_check(&net, &batch, 1e-5) < 1e-4);
}

#[test]
fn training_is_deterministic() {
    let samples: Vec<(Vec<f64>, usize)> =
        (0..12).map(|i| ((0..6).map(|j| ((i * 7 + j) as f64).sin()).collect(), i % 3)).collect();
    let config = mlp::TrainConfig { epochs: 30, hidden_dims: vec![8], seed: 5, ..Default::default() };
    let (a, ra) = mlp::train_samples(&samples, 3, &config).unwrap();
    let (b, rb) = mlp::train_samples(&samples, 3, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epoch_losses, rb.epoch_losses);
}

// cosine retrieval

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cosine_is_symmetric(pair in (1usize..20).prop_flat_map(|d| (
        prop::collection::vec(-10.0f64..10.0, d),
        prop::collection::vec(-10.0f64..10.0, d),
    ))) {
        let (a, b) = (vector(pair.0), vector(pair.1));
        let (ab, ba) = (cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - naive_cosine(a.values(), b.values())).abs() < 1e-12);
    }
}

fn demo_index() -> (HashedTfidf, PatternIndex) {
    let h = HashedTfidf::fit(&Corpus::demo(), 384).unwrap();
    let idx = build_index(&Corpus::demo(), &h).unwrap();
    (h, idx)
}

fn query_strategy() -> impl Strategy<Value = String> {
    let words = Corpus::demo()
        .labeled_patterns()
        .flat_map(|(p, _)| p.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .collect::<Vec<_>>();
    prop::collection::vec(prop::sample::select(words), 1..7).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn retrieval_equals_brute_force_scan(q in query_strategy()) {
        let (h, idx) = demo_index();
        let rows: Vec<Vec<f64>> = idx.entries.iter().map(|e| e.vector.values().to_vec()).collect();
        let qv = h.embed(&q).unwrap();
        let (best, sim) = brute_force_best(&rows, qv.values());
        let p = predict_cosine(&idx, &q, &h, 0.0).unwrap();
        prop_assert_eq!(p.matched_pattern.as_deref(), Some(idx.entries[best].pattern.as_str()));
        prop_assert!((p.confidence - sim).abs() < 1e-12);
    }

    #[test]
    fn retrieval_ignores_index_scale(q in query_strategy(), scale in 1e-3f64..1e3) {
        let (h, idx) = demo_index();
        let mut scaled = idx.clone();
        for e in &mut scaled.entries {
            e.vector = e.vector.scaled(scale);
        }
        let a = predict_cosine(&idx, &q, &h, 0.0).unwrap();
        let b = predict_cosine(&scaled, &q, &h, 0.0).unwrap();
        prop_assert_eq!(a.matched_pattern, b.matched_pattern);
    }
}

// evaluation

fn outcomes(k: usize) -> impl Strategy<Value = Vec<(usize, Option<usize>)>> {
    prop::collection::vec((0..k, prop::option::weighted(0.8, 0..k)), 1..80)
}

fn matrix(k: usize, pairs: &[(usize, Option<usize>)]) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new((0..k).map(|i| format!("t{i}")).collect());
    for (t, p) in pairs {
        cm.record(*t, *p);
    }
    cm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_naive_tally((k, pairs) in (1usize..7).prop_flat_map(|k| (Just(k), outcomes(k)))) {
        let m = metrics(&matrix(k, &pairs)).unwrap();
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<Option<usize>> = pairs.iter().map(|p| p.1).collect();
        let (p, r, f) = naive_macro(&truth, &pred, k);
        prop_assert!((m.macro_precision - p).abs() < 1e-12);
        prop_assert!((m.macro_recall - r).abs() < 1e-12);
        prop_assert!((m.macro_f1 - f).abs() < 1e-12);
    }

    #[test]
    fn matrix_ignores_test_order((k, pairs, seed) in (1usize..7).prop_flat_map(|k| (Just(k), outcomes(k), any::<u64>()))) {
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cm = matrix(k, &pairs);
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        prop_assert_eq!(matrix(k, &shuffled), cm);
    }

    #[test]
    fn macro_f1_ignores_relabeling((k, pairs, seed) in (1usize..7).prop_flat_map(|k| (Just(k), outcomes(k), any::<u64>()))) {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let relabeled: Vec<_> = pairs.iter().map(|(t, p)| (perm[*t], p.map(|p| perm[p]))).collect();
        let a = metrics(&matrix(k, &pairs)).unwrap().macro_f1;
        let b = metrics(&matrix(k, &relabeled)).unwrap().macro_f1;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

// dialog

fn fixed(tag: &'static str) -> impl Fn(&str) -> Result<Prediction, intentbot::matcher::ClassifyError> {
    move |_| Ok(Prediction::intent(tag, 1.0, None))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_never_repeats_back_to_back(seed in any::<u64>(), id in "[a-z0-9]{1,12}") {
        let corpus = Arc::new(Corpus::demo());
        let mut s = DialogSession::new(corpus.clone(), id, seed);
        for intent in corpus.intents.iter().filter(|i| i.responses.len() >= 2) {
            let mut last = String::new();
            for _ in 0..50 {
                let r = s.next_response(&intent.tag).unwrap();
                prop_assert_ne!(&r, &last);
                last = r;
            }
        }
    }

    #[test]
    fn same_seed_same_transcript(seed in any::<u64>(), turns in prop::collection::vec(0usize..3, 1..30)) {
        let corpus = Arc::new(Corpus::demo());
        let tags = ["Timing", "gold", "thanks"];
        let run = || {
            let mut s = DialogSession::new(corpus.clone(), "s", seed);
            for t in &turns {
                s.handle_turn("x", &fixed(tags[*t]), &DialogConfig::default()).unwrap();
            }
            s.transcript().to_vec()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn goodbye_is_absorbing() {
    let mut s = DialogSession::new(Arc::new(Corpus::demo()), "s", 0);
    assert!(s.handle_turn("bye", &fixed("goodbye"), &DialogConfig::default()).unwrap().ended);
    for _ in 0..5 {
        assert!(s.handle_turn("hi", &fixed("greeting"), &DialogConfig::default()).is_err());
    }
    assert_eq!(s.transcript().len(), 1);
}

// corpus

#[test]
fn corpus_survives_save_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.json");
    let corpus = Corpus::demo();
    intentbot::corpus::save_corpus(&corpus, &path).unwrap();
    let back = intentbot::load_corpus(&path).unwrap();
    assert_eq!(back, corpus);
    assert!(intentbot::corpus::validate_corpus(&back).is_empty());
}

#[test]
fn zero_width_layer_is_rejected() {
    assert!(Network::init(&[3, 0, 2], 0).is_err());
}
