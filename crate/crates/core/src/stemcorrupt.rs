//! Stem corruption: synthetic examples made by replacing stem characters
//! of gold triples with random alphabet characters.
//!
//! Each aligned stem position is substituted independently with
//! probability `theta`. The lemma and form positions of an aligned pair
//! receive the same replacement, so the corrupted lemma and form still
//! share their stem. Affixes and the MSD are never touched.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{self, Segmentation};
use crate::corpus::{Alphabet, Dataset, InflectionTriple, TripleId};
use crate::seeds;

/// Pool items generated per RNG shard.
const SHARD_SIZE: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum CorruptError {
    #[error("theta must lie in [0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("alphabet has {0} characters; at least 2 are needed to exclude the original")]
    AlphabetTooSmall(usize),
    #[error("segmentation does not belong to triple {0}")]
    SegmentationMismatch(TripleId),
    #[error("no gold triple has a stem")]
    NoAlignableTriples,
    #[error("segmentation list has {got} entries for {expected} triples")]
    SegmentationCount { expected: usize, got: usize },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub theta: f64,
    /// Never replace a character by itself, so that `theta` is exactly the
    /// expected fraction of changed stem characters.
    pub exclude_original: bool,
    pub min_run: usize,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            theta: 0.5,
            exclude_original: true,
            min_run: alignment::DEFAULT_MIN_RUN,
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<(), CorruptError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(CorruptError::InvalidTheta(self.theta));
        }
        Ok(())
    }
}

mod spans {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::ops::Range;

    pub fn serialize<S: Serializer>(v: &[Range<usize>], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[usize; 2]> = v.iter().map(|r| [r.start, r.end]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Range<usize>>, D::Error> {
        let pairs = Vec::<[usize; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[a, b]| a..b).collect())
    }
}

/// A corrupted triple together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExample {
    #[serde(flatten)]
    pub triple: InflectionTriple,
    pub source_id: TripleId,
    pub substituted_lemma_positions: Vec<usize>,
    pub substituted_form_positions: Vec<usize>,
    pub lev_to_gold_target: usize,
    #[serde(with = "spans")]
    pub lemma_stem_spans: Vec<Range<usize>>,
    #[serde(with = "spans")]
    pub form_stem_spans: Vec<Range<usize>>,
    #[serde(default, rename = "nll", skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl SyntheticExample {
    pub fn id(&self) -> TripleId {
        self.triple.id
    }

    /// Stem/affix segmentation of the corrupted strings.
    pub fn segmentation(&self) -> Segmentation {
        Segmentation::from_spans(
            &self.triple.lemma,
            &self.triple.form,
            self.lemma_stem_spans.clone(),
            self.form_stem_spans.clone(),
        )
        .expect("corruption preserves paired stem spans")
    }

    pub fn stem_len(&self) -> usize {
        self.form_stem_spans.iter().map(Range::len).sum()
    }
}

/// Corrupts one triple. `seg` must have been computed from `t`.
pub fn corrupt<R: Rng + ?Sized>(
    t: &InflectionTriple,
    seg: &Segmentation,
    alphabet: &Alphabet,
    cfg: &CorruptionConfig,
    rng: &mut R,
) -> Result<SyntheticExample, CorruptError> {
    cfg.validate()?;
    let mut lemma: Vec<char> = t.lemma.chars().collect();
    let mut form: Vec<char> = t.form.chars().collect();
    if seg.lemma() != lemma.as_slice() || seg.form() != form.as_slice() {
        return Err(CorruptError::SegmentationMismatch(t.id));
    }
    let needed = if cfg.exclude_original { 2 } else { 1 };
    if alphabet.len() < needed {
        return Err(CorruptError::AlphabetTooSmall(alphabet.len()));
    }

    let mut lemma_pos = Vec::new();
    let mut form_pos = Vec::new();
    for (i, j) in seg.stem_pairs() {
        if !rng.gen_bool(cfg.theta) {
            continue;
        }
        let original = lemma[i];
        let replacement = match alphabet.position(original).filter(|_| cfg.exclude_original) {
            Some(pos) => {
                let k = rng.gen_range(0..alphabet.len() - 1);
                alphabet.chars()[if k >= pos { k + 1 } else { k }]
            }
            None => alphabet.chars()[rng.gen_range(0..alphabet.len())],
        };
        lemma[i] = replacement;
        form[j] = replacement;
        lemma_pos.push(i);
        form_pos.push(j);
    }

    let form: String = form.into_iter().collect();
    Ok(SyntheticExample {
        lev_to_gold_target: levenshtein(&form, &t.form),
        triple: InflectionTriple {
            id: t.id,
            lemma: lemma.into_iter().collect(),
            form,
            msd: t.msd.clone(),
        },
        source_id: t.id,
        substituted_lemma_positions: lemma_pos,
        substituted_form_positions: form_pos,
        lemma_stem_spans: seg.lemma_stem_spans().to_vec(),
        form_stem_spans: seg.form_stem_spans().to_vec(),
        score: None,
    })
}

/// Unit-cost edit distance over code points.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPool {
    pub name: String,
    pub examples: Vec<SyntheticExample>,
    /// Draws that landed on a triple without a stem and were retried.
    pub skipped_draws: usize,
    /// Gold triples that cannot be augmented.
    pub unalignable: Vec<TripleId>,
}

impl SyntheticPool {
    pub fn from_examples(name: impl Into<String>, examples: Vec<SyntheticExample>) -> Self {
        SyntheticPool {
            name: name.into(),
            examples,
            skipped_draws: 0,
            unalignable: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_dataset(&self) -> Dataset {
        Dataset::new(
            self.name.clone(),
            self.examples.iter().map(|e| e.triple.clone()).collect(),
        )
        .expect("pool ids are unique")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&serde_json::to_string(e).expect("example serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(name: impl Into<String>, text: &str) -> Result<SyntheticPool, CorruptError> {
        let mut examples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: SyntheticExample =
                serde_json::from_str(line).map_err(|e| CorruptError::Json {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            Segmentation::from_spans(
                &e.triple.lemma,
                &e.triple.form,
                e.lemma_stem_spans.clone(),
                e.form_stem_spans.clone(),
            )
            .map_err(|err| CorruptError::Json {
                line: i + 1,
                message: err.to_string(),
            })?;
            examples.push(e);
        }
        let pool = SyntheticPool::from_examples(name, examples);
        let mut ids: Vec<TripleId> = pool.examples.iter().map(SyntheticExample::id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(CorruptError::Json {
                line: 0,
                message: format!("duplicate id {}", w[0]),
            });
        }
        Ok(pool)
    }
}

/// Segments every gold triple with the alignment module.
pub fn segment_all(gold: &Dataset, min_run: usize) -> Vec<Option<Segmentation>> {
    gold.triples()
        .par_iter()
        .map(|t| alignment::segment(&t.lemma, &t.form, min_run).ok())
        .collect()
}

/// Builds a pool of `n` synthetic examples by sampling gold triples
/// uniformly with replacement and corrupting them.
pub fn generate_pool(
    gold: &Dataset,
    n: usize,
    alphabet: &Alphabet,
    cfg: &CorruptionConfig,
) -> Result<SyntheticPool, CorruptError> {
    let segs = segment_all(gold, cfg.min_run);
    generate_pool_segmented(gold, &segs, n, alphabet, cfg)
}

/// Like [`generate_pool`] with caller-supplied segmentations (`None` marks
/// a triple without a stem).
///
/// Items are produced in shards of fixed size, each shard with its own
/// derived seed, so the pool for `n` is a prefix of the pool for any
/// larger `n` under the same seed.
pub fn generate_pool_segmented(
    gold: &Dataset,
    segs: &[Option<Segmentation>],
    n: usize,
    alphabet: &Alphabet,
    cfg: &CorruptionConfig,
) -> Result<SyntheticPool, CorruptError> {
    cfg.validate()?;
    if segs.len() != gold.len() {
        return Err(CorruptError::SegmentationCount {
            expected: gold.len(),
            got: segs.len(),
        });
    }
    let unalignable: Vec<TripleId> = gold
        .iter()
        .zip(segs)
        .filter(|(_, s)| s.is_none())
        .map(|(t, _)| t.id)
        .collect();
    if unalignable.len() == gold.len() {
        return Err(CorruptError::NoAlignableTriples);
    }

    let shards = n.div_ceil(SHARD_SIZE);
    let results: Vec<Result<(Vec<SyntheticExample>, usize), CorruptError>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeds::rng(seeds::derive_seed_index(cfg.seed, s as u64));
            let start = s * SHARD_SIZE;
            let end = n.min(start + SHARD_SIZE);
            let mut out = Vec::with_capacity(end - start);
            let mut skipped = 0;
            while out.len() < end - start {
                let k = rng.gen_range(0..gold.len());
                let Some(seg) = &segs[k] else {
                    skipped += 1;
                    continue;
                };
                let mut e = corrupt(&gold.triples()[k], seg, alphabet, cfg, &mut rng)?;
                e.triple.id = TripleId((start + out.len()) as u64);
                out.push(e);
            }
            Ok((out, skipped))
        })
        .collect();

    let mut examples = Vec::with_capacity(n);
    let mut skipped_draws = 0;
    for r in results {
        let (mut items, skipped) = r?;
        examples.append(&mut items);
        skipped_draws += skipped;
    }
    Ok(SyntheticPool {
        name: format!("{}-syn", gold.name()),
        examples,
        skipped_draws,
        unalignable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{extract_alphabet, parse_unimorph, Msd};
    use proptest::prelude::*;

    fn triple(lemma: &str, form: &str) -> InflectionTriple {
        InflectionTriple {
            id: TripleId(0),
            lemma: lemma.into(),
            form: form.into(),
            msd: Msd::parse("N;PL").unwrap(),
        }
    }

    fn cfg(theta: f64) -> CorruptionConfig {
        CorruptionConfig {
            theta,
            ..CorruptionConfig::default()
        }
    }

    fn alphabet() -> Alphabet {
        Alphabet::from_chars("abcdefghijklmnopqrstuvwxyz".chars()).unwrap()
    }

    #[test]
    fn theta_zero_is_identity() {
        let t = triple("walked", "walking");
        let seg = alignment::segment(&t.lemma, &t.form, 3).unwrap();
        let e = corrupt(&t, &seg, &alphabet(), &cfg(0.0), &mut seeds::rng(1)).unwrap();
        assert_eq!(e.triple, t);
        assert!(e.substituted_form_positions.is_empty());
        assert_eq!(e.lev_to_gold_target, 0);
    }

    #[test]
    fn theta_one_changes_every_stem_character() {
        let t = triple("walked", "walking");
        let seg = alignment::segment(&t.lemma, &t.form, 3).unwrap();
        for s in 0..50 {
            let e = corrupt(&t, &seg, &alphabet(), &cfg(1.0), &mut seeds::rng(s)).unwrap();
            let stem: Vec<(usize, usize)> = seg.stem_pairs().collect();
            assert_eq!(e.substituted_form_positions.len(), stem.len());
            let new_lemma: Vec<char> = e.triple.lemma.chars().collect();
            let new_form: Vec<char> = e.triple.form.chars().collect();
            for (i, j) in stem {
                assert_ne!(new_lemma[i], seg.lemma()[i]);
                assert_eq!(new_lemma[i], new_form[j]);
            }
            assert!(e.lev_to_gold_target >= 1);
            assert!(e.triple.form.ends_with("ing"));
        }
    }

    #[test]
    fn alphabet_too_small() {
        let t = triple("aaa", "aaab");
        let seg = alignment::segment(&t.lemma, &t.form, 3).unwrap();
        let one = Alphabet::from_chars(['a']).unwrap();
        assert_eq!(
            corrupt(&t, &seg, &one, &cfg(0.5), &mut seeds::rng(0)),
            Err(CorruptError::AlphabetTooSmall(1))
        );
        let lax = CorruptionConfig {
            exclude_original: false,
            ..cfg(1.0)
        };
        let e = corrupt(&t, &seg, &one, &lax, &mut seeds::rng(0)).unwrap();
        assert_eq!(e.triple.form, "aaab");
        assert_eq!(e.substituted_form_positions.len(), 3);
    }

    #[test]
    fn mismatched_segmentation_rejected() {
        let t = triple("walked", "walking");
        let seg = alignment::segment("talked", "talking", 3).unwrap();
        assert!(matches!(
            corrupt(&t, &seg, &alphabet(), &cfg(0.5), &mut seeds::rng(0)),
            Err(CorruptError::SegmentationMismatch(_))
        ));
    }

    #[test]
    fn invalid_theta() {
        assert_eq!(cfg(1.5).validate(), Err(CorruptError::InvalidTheta(1.5)));
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("abc", "abd"), 1);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn single_triple_pool() {
        let gold = parse_unimorph("dog\tdogs\tN;PL\n", "g").unwrap();
        let a = extract_alphabet(&gold).unwrap();
        let pool = generate_pool(&gold, 1, &a, &cfg(0.0)).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.examples[0].triple.form, "dogs");
        assert_eq!(pool.examples[0].source_id, TripleId(0));
    }

    #[test]
    fn pool_skips_unalignable_and_fails_when_none_align() {
        let gold = parse_unimorph("go\twent\tV;PST\nwalk\twalked\tV;PST\n", "g").unwrap();
        let a = extract_alphabet(&gold).unwrap();
        let pool = generate_pool(&gold, 50, &a, &cfg(0.5)).unwrap();
        assert_eq!(pool.len(), 50);
        assert_eq!(pool.unalignable, [TripleId(0)]);
        assert!(pool.skipped_draws > 0);
        assert!(pool.examples.iter().all(|e| e.source_id == TripleId(1)));

        let bad = parse_unimorph("go\twent\tV;PST\n", "g").unwrap();
        assert_eq!(
            generate_pool(&bad, 5, &a, &cfg(0.5)),
            Err(CorruptError::NoAlignableTriples)
        );
    }

    #[test]
    fn pools_are_deterministic_and_prefix_stable() {
        let gold = parse_unimorph(
            "walk\twalked\tV;PST\ntalk\ttalking\tV;PTCP\nhouse\thouses\tN;PL\n",
            "g",
        )
        .unwrap();
        let a = extract_alphabet(&gold).unwrap();
        let c = CorruptionConfig { seed: 42, ..cfg(0.5) };
        let big = generate_pool(&gold, 3000, &a, &c).unwrap();
        assert_eq!(big, generate_pool(&gold, 3000, &a, &c).unwrap());
        let small = generate_pool(&gold, 1500, &a, &c).unwrap();
        assert_eq!(small.examples[..], big.examples[..1500]);
        assert_eq!(big.to_jsonl(), generate_pool(&gold, 3000, &a, &c).unwrap().to_jsonl());
    }

    #[test]
    fn pool_jsonl_round_trip() {
        let gold = parse_unimorph("walk\twalked\tV;PST\n", "g").unwrap();
        let a = extract_alphabet(&gold).unwrap();
        let mut pool = generate_pool(&gold, 3, &a, &cfg(0.5)).unwrap();
        pool.examples[1].score = Some(0.25);
        let text = pool.to_jsonl();
        let first = text.lines().next().unwrap();
        for key in ["\"id\":0", "\"source_id\":0", "\"lemma\"", "\"msd\":\"V;PST\"", "\"lev_to_gold_target\""] {
            assert!(first.contains(key), "{first}");
        }
        let back = SyntheticPool::from_jsonl(pool.name.clone(), &text).unwrap();
        assert_eq!(back.examples, pool.examples);
    }

    /// Exhaustive recursion with memoization, independent of the DP above.
    fn lev_oracle(a: &[char], b: &[char], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let v = if a[0] == b[0] {
            lev_oracle(&a[1..], &b[1..], memo)
        } else {
            1 + lev_oracle(&a[1..], b, memo)
                .min(lev_oracle(a, &b[1..], memo))
                .min(lev_oracle(&a[1..], &b[1..], memo))
        };
        memo.insert((a.len(), b.len()), v);
        v
    }

    proptest! {
        #[test]
        fn levenshtein_matches_recursive_oracle(a in "[abcd]{0,10}", b in "[abcd]{0,10}") {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            let expected = lev_oracle(&ac, &bc, &mut Default::default());
            prop_assert_eq!(levenshtein(&a, &b), expected);
        }

        #[test]
        fn corruption_preserves_affixes(
            lemma in "[a-f]{3,8}",
            suffix in "[x-z]{0,3}",
            theta in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let form = format!("{lemma}{suffix}");
            let t = triple(&lemma, &form);
            let seg = alignment::segment(&lemma, &form, 3).unwrap();
            let e = corrupt(&t, &seg, &alphabet(), &cfg(theta), &mut seeds::rng(seed)).unwrap();
            let new_seg = e.segmentation();
            prop_assert_eq!(new_seg.y_affix(), seg.y_affix());
            prop_assert_eq!(new_seg.x_affix(), seg.x_affix());
            prop_assert_eq!(new_seg.x_stem(), new_seg.y_stem());
            prop_assert_eq!(&e.triple.msd, &t.msd);
            prop_assert_eq!(e.lev_to_gold_target, levenshtein(&e.triple.form, &form));
            for &j in &e.substituted_form_positions {
                prop_assert!(seg.is_form_stem(j));
            }
        }
    }
}
