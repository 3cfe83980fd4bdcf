//! Predictive-uncertainty scores for synthetic examples.
//!
//! A score is the average negative log-likelihood (nats) of the target
//! form, end-of-sequence symbol included, under a [`Scorer`]. Scores can
//! come from the built-in character n-gram model or from an external model
//! through the score TSV format (`example_id<TAB>nll`).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Msd, TripleId};
use crate::stemcorrupt::SyntheticExample;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("n-gram order must be >= 1")]
    InvalidOrder,
    #[error("smoothing constant must be > 0, got {0}")]
    InvalidSmoothing(f64),
    #[error("line {0}: expected `example_id<TAB>nll`")]
    MalformedLine(usize),
    #[error("line {0}: score is not a number")]
    NonNumericScore(usize),
    #[error("line {0}: score must be finite and >= 0")]
    InvalidScore(usize),
    #[error("line {line}: id {id} occurs more than once")]
    DuplicateId { id: TripleId, line: usize },
    #[error("line {line}: id {id:?} is not in the pool")]
    UnknownId { id: String, line: usize },
    #[error("no score for pool id {0}")]
    MissingId(TripleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub example_id: TripleId,
    /// Mean negative log-likelihood per target token, in nats.
    pub nll: f64,
}

/// A conditional model of the target given lemma and MSD.
pub trait Scorer {
    /// `log p(y_j | y_<j, X, T)` for every target character followed by the
    /// end-of-sequence symbol; the result has `|form| + 1` entries.
    fn target_log_probs(&self, lemma: &str, msd: &Msd, form: &str) -> Vec<f64>;
}

/// Assigns `1 / vocab_size` to every symbol.
#[derive(Debug, Clone, Copy)]
pub struct UniformScorer {
    pub vocab_size: usize,
}

impl Scorer for UniformScorer {
    fn target_log_probs(&self, _lemma: &str, _msd: &Msd, form: &str) -> Vec<f64> {
        vec![-(self.vocab_size as f64).ln(); form.chars().count() + 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    Char(char),
    Feature(String),
    /// The `#` separator between lemma, MSD and form.
    Sep,
    Bos,
    Eos,
    Unk,
}

/// Add-k smoothed character n-gram model over `X # T # Y EOS`.
///
/// The outcome vocabulary is the training characters, the MSD feature
/// tokens, `#`, `EOS` and `UNK`. `BOS` only pads contexts. A context never
/// seen in training gets the uniform distribution, which is what add-k
/// yields for zero counts.
#[derive(Debug, Clone)]
pub struct NGramScorer {
    order: usize,
    k: f64,
    ids: HashMap<Symbol, u32>,
    symbols: Vec<Symbol>,
    bos: u32,
    counts: HashMap<Vec<u32>, ContextCounts>,
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_SMOOTHING: f64 = 0.1;

fn sequence(lemma: &str, msd: &Msd, form: &str) -> (Vec<Symbol>, usize) {
    let mut seq: Vec<Symbol> = lemma.chars().map(Symbol::Char).collect();
    seq.push(Symbol::Sep);
    seq.extend(msd.features().iter().cloned().map(Symbol::Feature));
    seq.push(Symbol::Sep);
    let target_start = seq.len();
    seq.extend(form.chars().map(Symbol::Char));
    seq.push(Symbol::Eos);
    (seq, target_start)
}

pub fn train_ngram(gold: &Dataset, order: usize, k: f64) -> Result<NGramScorer, ScoringError> {
    if gold.is_empty() {
        return Err(ScoringError::EmptyDataset);
    }
    if order == 0 {
        return Err(ScoringError::InvalidOrder);
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(ScoringError::InvalidSmoothing(k));
    }
    let mut vocab: std::collections::BTreeSet<Symbol> =
        [Symbol::Sep, Symbol::Eos, Symbol::Unk].into_iter().collect();
    for t in gold {
        vocab.extend(t.lemma.chars().chain(t.form.chars()).map(Symbol::Char));
        vocab.extend(t.msd.features().iter().cloned().map(Symbol::Feature));
    }
    let symbols: Vec<Symbol> = vocab.into_iter().collect();
    let ids: HashMap<Symbol, u32> = symbols
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    let mut scorer = NGramScorer {
        order,
        k,
        bos: symbols.len() as u32,
        ids,
        symbols,
        counts: HashMap::new(),
    };
    for t in gold {
        let (seq, _) = sequence(&t.lemma, &t.msd, &t.form);
        let coded = scorer.encode(&seq);
        for pos in 0..coded.len() {
            let ctx = scorer.context(&coded, pos);
            let cell = scorer.counts.entry(ctx).or_default();
            cell.total += 1;
            *cell.next.entry(coded[pos]).or_insert(0) += 1;
        }
    }
    Ok(scorer)
}

impl NGramScorer {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Number of outcome symbols.
    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn vocabulary(&self) -> &[Symbol] {
        &self.symbols
    }

    fn code(&self, s: &Symbol) -> u32 {
        match s {
            Symbol::Bos => self.bos,
            _ => self.ids.get(s).copied().unwrap_or(self.ids[&Symbol::Unk]),
        }
    }

    fn encode(&self, seq: &[Symbol]) -> Vec<u32> {
        seq.iter().map(|s| self.code(s)).collect()
    }

    /// The `order - 1` codes preceding `pos`, left-padded with BOS.
    fn context(&self, coded: &[u32], pos: usize) -> Vec<u32> {
        let n = self.order - 1;
        (0..n)
            .map(|back| {
                let offset = n - back;
                if pos >= offset {
                    coded[pos - offset]
                } else {
                    self.bos
                }
            })
            .collect()
    }

    fn prob_coded(&self, ctx: &[u32], next: u32) -> f64 {
        let v = self.symbols.len() as f64;
        match self.counts.get(ctx) {
            Some(c) => {
                let n = c.next.get(&next).copied().unwrap_or(0) as f64;
                (n + self.k) / (c.total as f64 + self.k * v)
            }
            None => 1.0 / v,
        }
    }

    /// `p(next | history)`, using the last `order - 1` symbols of `history`.
    pub fn prob(&self, history: &[Symbol], next: &Symbol) -> f64 {
        let mut coded: Vec<u32> = self.encode(history);
        coded.push(0);
        let ctx = self.context(&coded, history.len());
        self.prob_coded(&ctx, self.code(next))
    }

    /// Full conditional distribution after `history`, in vocabulary order.
    pub fn distribution(&self, history: &[Symbol]) -> Vec<f64> {
        let mut coded: Vec<u32> = self.encode(history);
        coded.push(0);
        let ctx = self.context(&coded, history.len());
        (0..self.symbols.len() as u32)
            .map(|s| self.prob_coded(&ctx, s))
            .collect()
    }

    /// Number of symbols in `X # T # Y` that fall outside the vocabulary.
    pub fn unknown_symbols(&self, lemma: &str, msd: &Msd, form: &str) -> usize {
        let (seq, _) = sequence(lemma, msd, form);
        seq.iter()
            .filter(|s| !matches!(s, Symbol::Bos) && !self.ids.contains_key(s))
            .count()
    }
}

impl Scorer for NGramScorer {
    fn target_log_probs(&self, lemma: &str, msd: &Msd, form: &str) -> Vec<f64> {
        let (seq, start) = sequence(lemma, msd, form);
        let coded = self.encode(&seq);
        (start..coded.len())
            .map(|pos| self.prob_coded(&self.context(&coded, pos), coded[pos]).ln())
            .collect()
    }
}

pub fn score<S: Scorer + ?Sized>(scorer: &S, e: &SyntheticExample) -> UncertaintyScore {
    let lp = scorer.target_log_probs(&e.triple.lemma, &e.triple.msd, &e.triple.form);
    // Running mean: exact when every token has the same log-probability.
    let mut mean = 0.0;
    for (i, x) in lp.iter().enumerate() {
        mean += (x - mean) / (i + 1) as f64;
    }
    let nll = -mean;
    UncertaintyScore {
        example_id: e.id(),
        // -0.0 for a probability-1 target
        nll: nll.max(0.0),
    }
}

pub fn score_all<S: Scorer + Sync + ?Sized>(
    scorer: &S,
    examples: &[SyntheticExample],
) -> Vec<UncertaintyScore> {
    examples.par_iter().map(|e| score(scorer, e)).collect()
}

/// Writes `example_id<TAB>nll` lines. `f64` display is the shortest
/// representation that parses back to the same value.
pub fn scores_to_tsv<'a>(scores: impl IntoIterator<Item = &'a UncertaintyScore>) -> String {
    let mut out = String::new();
    for s in scores {
        writeln!(out, "{}\t{}", s.example_id, s.nll).expect("write to String");
    }
    out
}

/// Reads a score file and checks it covers `pool_ids` exactly once each.
pub fn load_external_scores(
    text: &str,
    pool_ids: impl IntoIterator<Item = TripleId>,
) -> Result<BTreeMap<TripleId, UncertaintyScore>, ScoringError> {
    let known: HashSet<TripleId> = pool_ids.into_iter().collect();
    let mut scores = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, value) = line
            .split_once('\t')
            .ok_or(ScoringError::MalformedLine(line_no))?;
        let nll: f64 = value
            .trim()
            .parse()
            .map_err(|_| ScoringError::NonNumericScore(line_no))?;
        if !(nll.is_finite() && nll >= 0.0) {
            return Err(ScoringError::InvalidScore(line_no));
        }
        let id = id
            .trim()
            .parse::<u64>()
            .ok()
            .map(TripleId)
            .filter(|id| known.contains(id))
            .ok_or_else(|| ScoringError::UnknownId {
                id: id.to_owned(),
                line: line_no,
            })?;
        let previous = scores.insert(
            id,
            UncertaintyScore {
                example_id: id,
                nll,
            },
        );
        if previous.is_some() {
            return Err(ScoringError::DuplicateId { id, line: line_no });
        }
    }
    let mut missing: Vec<TripleId> = known.difference(&scores.keys().copied().collect()).copied().collect();
    missing.sort_unstable();
    match missing.first() {
        Some(&id) => Err(ScoringError::MissingId(id)),
        None => Ok(scores),
    }
}

/// Copies scores onto the matching pool examples.
pub fn attach_scores(
    examples: &mut [SyntheticExample],
    scores: &BTreeMap<TripleId, UncertaintyScore>,
) -> Result<(), ScoringError> {
    for e in examples {
        let s = scores.get(&e.id()).ok_or(ScoringError::MissingId(e.id()))?;
        e.score = Some(s.nll);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_unimorph;
    use crate::stemcorrupt::{self, CorruptionConfig};

    fn example(id: u64, lemma: &str, form: &str, msd: &str) -> SyntheticExample {
        let seg = crate::alignment::segment(lemma, form, 3).unwrap();
        let t = crate::corpus::InflectionTriple {
            id: TripleId(id),
            lemma: lemma.into(),
            form: form.into(),
            msd: Msd::parse(msd).unwrap(),
        };
        let cfg = CorruptionConfig { theta: 0.0, ..Default::default() };
        let a = crate::corpus::Alphabet::from_chars("abcdefghijklmnopqrstuvwxyz".chars()).unwrap();
        stemcorrupt::corrupt(&t, &seg, &a, &cfg, &mut crate::seeds::rng(0)).unwrap()
    }

    #[test]
    fn uniform_scorer_gives_log_vocab() {
        let e = example(0, "walk", "walked", "V;PST");
        let s = score(&UniformScorer { vocab_size: 4 }, &e);
        assert!((s.nll - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unigram_equals_add_k_frequencies() {
        // "ab # N # abc EOS": a:2 b:2 c:1 #:2 N:1 EOS:1 = 9 tokens
        let gold = parse_unimorph("ab\tabc\tN\n", "g").unwrap();
        let k = 0.5;
        let m = train_ngram(&gold, 1, k).unwrap();
        // vocab: a b c N # EOS UNK
        assert_eq!(m.vocab_size(), 7);
        let denom = 9.0 + 7.0 * k;
        assert!((m.prob(&[], &Symbol::Char('a')) - (2.0 + k) / denom).abs() < 1e-12);
        assert!((m.prob(&[], &Symbol::Char('c')) - (1.0 + k) / denom).abs() < 1e-12);
        assert!((m.prob(&[], &Symbol::Eos) - (1.0 + k) / denom).abs() < 1e-12);
        assert!((m.prob(&[], &Symbol::Unk) - k / denom).abs() < 1e-12);
    }

    #[test]
    fn large_k_approaches_uniform() {
        let gold = parse_unimorph("walk\twalked\tV;PST\n", "g").unwrap();
        let m = train_ngram(&gold, 3, 1e9).unwrap();
        let v = m.vocab_size() as f64;
        for p in m.distribution(&[Symbol::Char('w'), Symbol::Char('a')]) {
            assert!((p - 1.0 / v).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_continuation_near_one() {
        let gold = parse_unimorph("aaa\taaab\tN\n", "g").unwrap();
        let m = train_ngram(&gold, 3, 0.0001).unwrap();
        // after '#' at the end of the MSD block only 'a' ever follows
        let p = m.prob(&[Symbol::Feature("N".into()), Symbol::Sep], &Symbol::Char('a'));
        assert!(p > 0.99, "{p}");
    }

    #[test]
    fn distributions_sum_to_one() {
        let gold = parse_unimorph("walk\twalked\tV;PST\ntalk\ttalks\tV;3;SG\n", "g").unwrap();
        let m = train_ngram(&gold, 3, 0.1).unwrap();
        let histories: [&[Symbol]; 3] = [
            &[],
            &[Symbol::Char('a'), Symbol::Char('l')],
            &[Symbol::Char('z'), Symbol::Sep],
        ];
        for h in histories {
            let sum: f64 = m.distribution(h).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let gold = parse_unimorph("walk\twalked\tV;PST\n", "g").unwrap();
        let m = train_ngram(&gold, 3, 0.1).unwrap();
        let msd = Msd::parse("V;PST").unwrap();
        assert_eq!(m.unknown_symbols("wälk", &msd, "wälked"), 2);
        let lp = m.target_log_probs("wälk", &msd, "wälked");
        assert_eq!(lp.len(), 7);
        assert!(lp.iter().all(|&x| x < 0.0 && x.is_finite()));
    }

    #[test]
    fn training_errors() {
        let empty = Dataset::new("e", vec![]).unwrap();
        assert_eq!(train_ngram(&empty, 3, 0.1).unwrap_err(), ScoringError::EmptyDataset);
        let gold = parse_unimorph("a\tb\tN\n", "g").unwrap();
        assert_eq!(train_ngram(&gold, 0, 0.1).unwrap_err(), ScoringError::InvalidOrder);
        assert_eq!(
            train_ngram(&gold, 3, 0.0).unwrap_err(),
            ScoringError::InvalidSmoothing(0.0)
        );
    }

    #[test]
    fn external_scores() {
        let ids = [TripleId(0), TripleId(1), TripleId(2)];
        let full = "0\t1.5\n1\t0.25\n2\t3\n";
        let s = load_external_scores(full, ids).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[&TripleId(2)].nll, 3.0);

        assert_eq!(
            load_external_scores("0\t1.5\n2\t3\n", ids),
            Err(ScoringError::MissingId(TripleId(1)))
        );
        assert_eq!(
            load_external_scores("x\tabc\n", ids),
            Err(ScoringError::NonNumericScore(1))
        );
        assert_eq!(
            load_external_scores("0\t1\n0\t2\n", ids),
            Err(ScoringError::DuplicateId { id: TripleId(0), line: 2 })
        );
        assert!(matches!(
            load_external_scores("7\t1\n", ids),
            Err(ScoringError::UnknownId { line: 1, .. })
        ));
        assert_eq!(
            load_external_scores("0\t-1\n", ids),
            Err(ScoringError::InvalidScore(1))
        );
        assert_eq!(load_external_scores("0 1\n", ids), Err(ScoringError::MalformedLine(1)));
    }

    #[test]
    fn score_tsv_round_trip_is_bit_exact() {
        let scores: Vec<UncertaintyScore> = [0.1, 1.0 / 3.0, 2.5e-10, 7.0]
            .iter()
            .enumerate()
            .map(|(i, &nll)| UncertaintyScore { example_id: TripleId(i as u64), nll })
            .collect();
        let tsv = scores_to_tsv(&scores);
        let back = load_external_scores(&tsv, scores.iter().map(|s| s.example_id)).unwrap();
        for s in &scores {
            assert_eq!(back[&s.example_id].nll.to_bits(), s.nll.to_bits());
        }
        assert_eq!(scores_to_tsv(back.values()), tsv);
    }
}
