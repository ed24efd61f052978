mod support;

use cntm::corpus::Split;
use cntm::eval::{evaluate, nmi, perplexity, purity, Evaluator, FoldIn};
use cntm::model::{ModelConfig, ModelState, Variant};
use cntm::report::{author_summaries, export_dot, render_report, topic_summaries, NO_PREFERENCE};
use cntm::sampler::train;
use cntm::synthetic::{generate, SyntheticSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::tiny_dataset;

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        docs: 60,
        topics: 3,
        words_per_topic: 10,
        seed_words: 3,
        authors: 12,
        ..Default::default()
    }
}

fn trained(variant: Variant) -> (cntm::corpus::Dataset, ModelState) {
    let data = generate(&small_spec()).dataset;
    let config = ModelConfig {
        variant,
        topic_cap: 6,
        iterations: 60,
        network_start: 20,
        seed: 5,
        ..Default::default()
    };
    let mut state = ModelState::init_random(&data, &config).unwrap();
    train(&mut state, |_, _| true).unwrap();
    (data, state)
}

proptest! {
    #[test]
    fn clustering_scores_ignore_cluster_names(
        pairs in prop::collection::vec((0u32..4, 0u32..3), 1..40),
        shift in 1u32..50,
    ) {
        let clusters: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        let classes: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let renamed: Vec<u32> = clusters.iter().map(|&c| (3 - c) * 7 + shift).collect();
        let p = purity(&clusters, &classes).unwrap();
        let n = nmi(&clusters, &classes).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&n));
        prop_assert!((purity(&renamed, &classes).unwrap() - p).abs() < 1e-12);
        prop_assert!((nmi(&renamed, &classes).unwrap() - n).abs() < 1e-12);
        prop_assert!((nmi(&classes, &clusters).unwrap() - n).abs() < 1e-9);
        prop_assert!((purity(&classes, &classes).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_is_bounded_by_the_worst_token(
        raw in prop::collection::vec(0.01f64..1.0, 8),
        tokens in prop::collection::vec(0u32..4, 1..20),
    ) {
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
        let phi = vec![norm(&raw[..4]), norm(&raw[4..])];
        let theta = vec![0.4, 0.6];
        let p = perplexity(&phi, &[(theta.clone(), tokens.clone())]).unwrap();
        let probs: Vec<f64> = tokens.iter().map(|&w| 0.4 * phi[0][w as usize] + 0.6 * phi[1][w as usize]).collect();
        let worst = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let best = probs.iter().cloned().fold(0.0, f64::max);
        prop_assert!(p >= 1.0 / best - 1e-9 && p <= 1.0 / worst + 1e-9);
    }
}

#[test]
fn fold_in_is_a_distribution_and_leaves_the_model_alone() {
    let (data, state) = trained(Variant::Full);
    let before = state.to_checkpoint_string().unwrap();
    let ev = Evaluator::new(&state, FoldIn::default());
    let doc = &data.corpus.documents[data.corpus.test_indices()[0]];
    let author = data.corpus.effective_author(data.corpus.test_indices()[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let theta = ev.estimate_test_theta(doc.title_tokens(), author, &mut rng).unwrap();
    assert_eq!(theta.len(), state.topic_cap());
    assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(theta.iter().all(|&p| p >= 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let again = ev.estimate_test_theta(doc.title_tokens(), author, &mut rng).unwrap();
    assert_eq!(theta, again);
    assert_eq!(state.to_checkpoint_string().unwrap(), before);

    // the title words pull the estimate toward their topic
    let prior = ev.estimate_test_theta(&[], author, &mut rng).unwrap();
    let phi = ev.phi();
    let fit = |t: &[f64]| -> f64 {
        doc.title_tokens()
            .iter()
            .map(|&w| t.iter().zip(phi).map(|(p, row)| p * row[w as usize]).sum::<f64>().ln())
            .sum()
    };
    assert!(fit(&theta) > fit(&prior));
}

#[test]
fn evaluation_reports_every_metric_on_labeled_data() {
    for variant in [Variant::Full, Variant::NoNetwork, Variant::Atm, Variant::HdpLda] {
        let (data, state) = trained(variant);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = evaluate(&state, &data.corpus, FoldIn::default(), &mut rng).unwrap();
        let v = data.corpus.vocabulary.len() as f64;
        let test = m.perplexity_test.unwrap();
        assert!(test > 1.0 && test < v, "{variant}: {test}");
        assert!(m.perplexity_train.unwrap() < test * 1.5);
        assert!(m.purity.unwrap() > 0.5, "{variant}: {:?}", m.purity);
        assert!(m.nmi.unwrap() > 0.3, "{variant}: {:?}", m.nmi);
        assert!(m.k_active >= 1 && m.k_active <= 6);
        assert_eq!(m.oov_skipped, 0);
        let text = m.to_text();
        assert!(text.contains("perplexity_test = ") && text.contains("K_active = "));
    }
}

#[test]
fn unseen_words_are_skipped_and_counted() {
    let mut data = tiny_dataset(&[vec![0, 0, 1], vec![1, 0, 0], vec![0, 2, 3]], &[0, 1, 0], 4, &[]);
    data.corpus.documents[2].split = Split::Test;
    data.corpus.documents[2].title_len = 1;
    data.corpus.documents[2].label = None;
    let config = ModelConfig {
        topic_cap: 2,
        iterations: 5,
        network_start: 2,
        ..Default::default()
    };
    let mut state = ModelState::init_random(&data, &config).unwrap();
    train(&mut state, |_, _| true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = evaluate(&state, &data.corpus, FoldIn::default(), &mut rng).unwrap();
    assert_eq!(m.oov_skipped, 2);
    assert_eq!(m.test_tokens, 0);
    assert!(m.perplexity_test.is_none());
    assert!(m.purity.is_none() && m.nmi.is_none());
    assert_eq!(m.notes.len(), 2);
}

#[test]
fn report_lists_topics_and_author_preferences() {
    let (data, state) = trained(Variant::Full);
    let topics = topic_summaries(&state, &data.corpus, 4);
    assert_eq!(topics.len(), state.active_topics());
    assert!(topics.iter().all(|t| t.words.len() == 4));
    // each planted topic owns a block of words named after it
    let heaviest = topics.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
    let prefix = &heaviest.words[0][..2];
    assert!(heaviest.words.iter().all(|w| w.starts_with(prefix)), "{:?}", heaviest.words);
    let authors = author_summaries(&state, &data.corpus, 4);
    assert_eq!(authors.len(), data.corpus.authors.len());
    let text = render_report(&state, &data.corpus, 4);
    assert!(text.starts_with("[topics]\n"));
    assert!(text.contains("\n[authors]\n"));
    for a in &authors {
        match a.topic {
            Some(k) => assert!(text.contains(&format!("{}: topic {k}: ", a.name))),
            None => assert!(text.contains(&format!("{}: {NO_PREFERENCE}", a.name))),
        }
    }
}

#[test]
fn dot_export_is_well_formed() {
    let (data, state) = trained(Variant::Full);
    let dot = export_dot(&state, &data.corpus, 0.2, 3);
    assert!(dot.starts_with("digraph author_topics {\n"));
    assert!(dot.ends_with("}\n"));
    assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    let boxes = dot.matches("[shape=box").count();
    assert_eq!(boxes, state.active_topics());
    assert!(dot.contains(" -> t"));
    let all = export_dot(&state, &data.corpus, 1.0, 3);
    assert!(!all.contains(" -> "));

    let (data, state) = trained(Variant::HdpLda);
    let dot = export_dot(&state, &data.corpus, 0.0, 3);
    assert!(!dot.contains("ellipse"));
    assert!(!render_report(&state, &data.corpus, 3).contains("[authors]"));
}
