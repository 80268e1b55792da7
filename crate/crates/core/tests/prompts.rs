use std::collections::BTreeMap;

use proptest::prelude::*;
use randprompt_ad_core::prompts::{
    fill_templates, generate_prompt_set, generate_random_word, PromptSet, RandomWordConfig, WordPair,
    DEFAULT_ALPHABET,
};

fn default_cfg(seed: u64) -> RandomWordConfig {
    RandomWordConfig::with_seed(seed)
}

/// Splits a prompt into its template slots: (w0..w3, word, w4) with the
/// anchors verified.
fn parse_prompt<'a>(prompt: &'a str, word: &str) -> Option<Vec<&'a str>> {
    let tokens: Vec<&str> = prompt.split(' ').collect();
    let word_tokens = word.split(' ').count();
    if tokens.len() != 8 + word_tokens {
        return None;
    }
    let ok = tokens[1] == "a"
        && tokens[3] == "photo"
        && tokens[5] == "of"
        && tokens[7..7 + word_tokens].join(" ") == word;
    ok.then(|| vec![tokens[0], tokens[2], tokens[4], tokens[6], tokens[7 + word_tokens]])
}

#[test]
fn character_frequencies_are_uniform() {
    let cfg = RandomWordConfig::new(5, 10, DEFAULT_ALPHABET, 42).unwrap();
    let mut rng = cfg.rng();
    let mut counts: BTreeMap<char, u64> = DEFAULT_ALPHABET.chars().map(|c| (c, 0)).collect();
    let mut lengths = [0u64; 11];
    for _ in 0..10_000 {
        let w = generate_random_word(&cfg, &mut rng);
        lengths[w.len()] += 1;
        for c in w.chars() {
            *counts.get_mut(&c).expect("character outside the alphabet") += 1;
        }
    }
    let total: u64 = counts.values().sum();
    let p = 1.0 / counts.len() as f64;
    let expect = total as f64 * p;
    let sigma = (total as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for (c, &n) in &counts {
        let dev = n as f64 - expect;
        assert!(dev.abs() <= 3.0 * sigma, "{c:?}: {n} vs {expect:.1} ± {sigma:.1}");
        chi2 += dev * dev / expect;
    }
    // 99.9th percentile of chi-squared with 35 degrees of freedom.
    assert!(chi2 < 66.62, "chi2 {chi2}");

    // Lengths are uniform on 5..=10 as well (5 degrees of freedom).
    let e = 10_000.0 / 6.0;
    let chi2_len: f64 = lengths[5..=10].iter().map(|&n| (n as f64 - e).powi(2) / e).sum();
    assert!(chi2_len < 20.52, "length chi2 {chi2_len}");
}

#[test]
fn seed_seven_first_pair_is_reproducible() {
    let words = WordPair::default();
    let a = generate_prompt_set(&default_cfg(7), &words, 1).unwrap();
    let b = generate_prompt_set(&default_cfg(7), &words, 1).unwrap();
    assert_eq!(a.pairs[0].index, 0);
    assert_eq!(a.pairs[0].normal.as_bytes(), b.pairs[0].normal.as_bytes());
    assert_eq!(a.pairs[0].anomaly.as_bytes(), b.pairs[0].anomaly.as_bytes());
}

#[test]
fn neighbouring_seeds_differ() {
    let words = WordPair::default();
    for s in [0u64, 1, 41, 1_000, u64::MAX - 1] {
        let a = generate_prompt_set(&default_cfg(s), &words, 20).unwrap();
        let b = generate_prompt_set(&default_cfg(s + 1), &words, 20).unwrap();
        assert_ne!(a.pairs, b.pairs, "seeds {s} and {}", s + 1);
    }
}

#[test]
fn full_size_set_and_file_round_trip() {
    let set = generate_prompt_set(&default_cfg(3), &WordPair::default(), 10_000).unwrap();
    assert_eq!(set.len(), 10_000);
    let mut buf = Vec::new();
    set.write_to(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    // Header plus one line per prompt.
    assert_eq!(text.lines().count(), 1 + 20_000);
    let back = PromptSet::read_from(&buf[..]).unwrap();
    assert_eq!(back, set);

    let one = generate_prompt_set(&default_cfg(3), &WordPair::default(), 1).unwrap();
    assert_eq!(one.len(), 1);
}

#[test]
fn template_example() {
    let w: Vec<String> = (0..10).map(|i| format!("x{i}y2z")).collect();
    let p = fill_templates(&WordPair::default(), &w, 0).unwrap();
    assert_eq!(p.normal, "x0y2z a x1y2z photo x2y2z of x3y2z a x4y2z");
    assert_eq!(p.anomaly, "x5y2z a x6y2z photo x7y2z of x8y2z a damaged x9y2z");
    let empty = vec![""; 10];
    assert!(fill_templates(&WordPair::default(), &empty, 0).is_err());
}

fn word_pair() -> impl Strategy<Value = WordPair> {
    proptest::sample::select(WordPair::grid())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_property(seed in any::<u64>(), small in 1usize..20, extra in 0usize..20) {
        let cfg = default_cfg(seed);
        let w = WordPair::default();
        let a = generate_prompt_set(&cfg, &w, small).unwrap();
        let b = generate_prompt_set(&cfg, &w, small + extra).unwrap();
        prop_assert_eq!(&a.pairs[..], &b.pairs[..small]);
    }

    #[test]
    fn deterministic_bytes(seed in any::<u64>(), n in 1usize..30, words in word_pair()) {
        let render = || {
            let mut buf = Vec::new();
            generate_prompt_set(&default_cfg(seed), &words, n).unwrap().write_to(&mut buf).unwrap();
            buf
        };
        prop_assert_eq!(render(), render());
    }

    #[test]
    fn prompts_follow_templates(
        seed in any::<u64>(),
        min in 1usize..6,
        span in 0usize..6,
        alphabet in prop::sample::select(vec!["abc", "a", "xyz019", DEFAULT_ALPHABET, "ABCdef"]),
        words in word_pair(),
    ) {
        let cfg = RandomWordConfig::new(min, min + span, alphabet, seed).unwrap();
        let set = generate_prompt_set(&cfg, &words, 8).unwrap();
        for (i, p) in set.pairs.iter().enumerate() {
            prop_assert_eq!(p.index, i);
            let n = parse_prompt(&p.normal, words.normal());
            let a = parse_prompt(&p.anomaly, words.anomaly());
            prop_assert!(n.is_some(), "normal prompt {:?}", p.normal);
            prop_assert!(a.is_some(), "anomaly prompt {:?}", p.anomaly);
            for w in n.unwrap().into_iter().chain(a.unwrap()) {
                let len = w.chars().count();
                prop_assert!((min..=min + span).contains(&len), "word {:?}", w);
                prop_assert!(w.chars().all(|c| alphabet.contains(c)), "word {:?}", w);
            }
        }
    }
}
