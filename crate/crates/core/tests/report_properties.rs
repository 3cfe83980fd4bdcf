use std::path::Path;

use morphaug::corpus::{extract_alphabet, parse_unimorph};
use morphaug::milab::{generate_gold, ToyGrammar};
use morphaug::report::{
    bootstrap_mean_difference, bootstrap_percentile, correlations, is_harmony_violation, mean, pearson,
    HarmonyConfig,
};
use morphaug::seeds;
use morphaug::stemcorrupt::{generate_pool, generate_pool_segmented, CorruptionConfig};
use proptest::prelude::*;
use rand::distributions::Distribution;
use rand::Rng;
use statrs::distribution::Normal;

fn normal_samples(n: usize, mu: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed);
    let d = Normal::new(mu, sd).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[test]
fn independent_scores_show_no_correlation() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/low.tsv")).unwrap();
    let gold = parse_unimorph(&text, "low").unwrap();
    let cfg = CorruptionConfig { seed: 3, ..Default::default() };
    let mut pool = generate_pool(&gold, 10_000, &extract_alphabet(&gold).unwrap(), &cfg).unwrap().examples;
    let noise = normal_samples(pool.len(), 5.0, 1.0, 11);
    for (e, s) in pool.iter_mut().zip(noise) {
        e.score = Some(s);
    }
    let r = correlations(&pool).unwrap();
    let values = [r.pearson_nll_levenshtein, r.pearson_nll_stem_length, r.pearson_nll_target_length];
    assert!(values.iter().all(Option::is_some));
    for v in values.into_iter().flatten() {
        assert!(v.abs() < 0.05, "r = {v}");
    }
}

#[test]
fn planted_linear_relation_is_recovered() {
    let xs = normal_samples(2000, 0.0, 1.0, 1);
    let noise = normal_samples(2000, 0.0, 1.0, 2);
    let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| x + e).collect();
    // corr(x, x + e) with unit variances is 1/sqrt(2)
    assert!((pearson(&xs, &ys).unwrap() - 0.5f64.sqrt()).abs() < 0.03);
}

proptest! {
    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (Ok(r), Ok(r_swapped)) = (pearson(&xs, &ys), pearson(&ys, &xs)) else {
            return Ok(());
        };
        prop_assert!((r - r_swapped).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&r));
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((pearson(&scaled, &ys).unwrap() - r).abs() < 1e-6);
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((pearson(&flipped, &ys).unwrap() + r).abs() < 1e-6);
    }

    #[test]
    fn bootstrap_ci_contains_point(
        samples in prop::collection::vec(-10.0f64..10.0, 2..40),
        seed in any::<u64>(),
    ) {
        let ci = bootstrap_percentile("mean", &samples, mean, 50, 0.9, seed).unwrap();
        prop_assert!(ci.lower <= ci.point && ci.point <= ci.upper);
    }
}

#[test]
fn planted_mean_gap_is_significant() {
    let violating = normal_samples(1000, 4.07, 0.3, 21);
    let adhering = normal_samples(1000, 4.0, 0.3, 22);
    let t = bootstrap_mean_difference(&violating, &adhering, 2000, 0.95, 5).unwrap();
    assert!(t.p_value < 0.05, "p = {}", t.p_value);
    assert!(t.ci.lower > 0.0);
}

#[test]
fn equal_groups_are_not_significant() {
    let a = normal_samples(500, 4.0, 0.3, 31);
    let b = normal_samples(500, 4.0, 0.3, 32);
    let t = bootstrap_mean_difference(&a, &b, 2000, 0.95, 6).unwrap();
    assert!(t.p_value > 0.05, "p = {}", t.p_value);
    assert!(t.ci.lower < 0.0 && t.ci.upper > 0.0);
}

#[test]
fn ci_width_shrinks_with_root_n() {
    let widths: Vec<f64> = [100usize, 400, 1600]
        .iter()
        .map(|&n| {
            let xs = normal_samples(n, 0.0, 1.0, n as u64);
            let ci = bootstrap_percentile("mean", &xs, mean, 2000, 0.95, 9).unwrap();
            ci.upper - ci.lower
        })
        .collect();
    for w in widths.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.0..=4.0).contains(&ratio), "ratio {ratio} not within a factor 2 of 2");
    }
    // 2 * 1.96 / sqrt(n) for unit variance
    let expected = 2.0 * 1.96 / 10.0;
    assert!((widths[0] / expected - 1.0).abs() < 0.25);
}

#[test]
fn planted_win_rate_excludes_chance() {
    let mut rng = seeds::rng(77);
    let wins: Vec<f64> = (0..300).map(|_| f64::from(u8::from(rng.gen_bool(0.33)))).collect();
    let ci = bootstrap_percentile("win_rate", &wins, mean, 5000, 0.95, 4).unwrap();
    assert!(ci.lower > 1.0 / 7.0, "{ci:?}");
    assert!(ci.lower <= 0.33 && 0.33 <= ci.upper);
}

const BACK: [char; 4] = ['a', 'ı', 'o', 'u'];
const FRONT: [char; 4] = ['e', 'i', 'ö', 'ü'];

fn vowel_class(c: char) -> Option<bool> {
    if BACK.contains(&c) {
        Some(true)
    } else if FRONT.contains(&c) {
        Some(false)
    } else {
        None
    }
}

/// Violation by the rule itself: the last stem vowel picks the class every
/// suffix vowel must share.
fn violates(stem: &[char], suffix: &[char]) -> bool {
    let Some(governing) = stem.iter().rev().find_map(|&c| vowel_class(c)) else {
        return false;
    };
    suffix.iter().filter_map(|&c| vowel_class(c)).any(|k| k != governing)
}

#[test]
fn harmony_classifier_matches_rule_on_every_word() {
    let cfg = HarmonyConfig::turkish();
    let letters = ['a', 'e', 'ı', 'i', 'k', 'l'];
    for stem_len in 0..=3 {
        for code in 0..letters.len().pow(5) {
            let word: Vec<char> = (0..5).map(|p| letters[code / letters.len().pow(p) % letters.len()]).collect();
            let (stem, suffix) = word.split_at(stem_len);
            assert_eq!(cfg.violates(&word, |j| j < stem_len), violates(stem, suffix), "{word:?}");
        }
    }
}

#[test]
fn harmony_rate_under_full_corruption_matches_enumeration() {
    let g = ToyGrammar::harmonic(40, 4, 2).unwrap();
    let gold = generate_gold(&g, 300, 8).unwrap();
    let alphabet = g.alphabet();
    let segs: Vec<_> = gold.segmentations.iter().cloned().map(Some).collect();
    let n = 20_000;
    let cfg = CorruptionConfig { theta: 1.0, exclude_original: true, min_run: 3, seed: 13 };
    let pool = generate_pool_segmented(&gold.dataset, &segs, n, &alphabet, &cfg).unwrap();
    let hc = HarmonyConfig::turkish();
    let observed = pool.examples.iter().filter(|e| is_harmony_violation(e, &hc)).count() as f64 / n as f64;

    // every stem character is replaced by one of the other letters, uniformly
    let chars = alphabet.chars();
    let per_source: Vec<f64> = gold
        .dataset
        .iter()
        .map(|t| {
            let form: Vec<char> = t.form.chars().collect();
            let (stem, suffix) = form.split_at(3);
            let options: Vec<Vec<char>> =
                stem.iter().map(|c| chars.iter().copied().filter(|x| x != c).collect()).collect();
            let mut hits = 0usize;
            let mut total = 0usize;
            for &a in &options[0] {
                for &b in &options[1] {
                    for &c in &options[2] {
                        total += 1;
                        hits += usize::from(violates(&[a, b, c], suffix));
                    }
                }
            }
            hits as f64 / total as f64
        })
        .collect();
    let expected = mean(&per_source);
    let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!(
        (observed - expected).abs() < 3.0 * sigma,
        "observed {observed}, enumerated {expected}, sigma {sigma}"
    );
    assert!(expected > 0.2);
}
