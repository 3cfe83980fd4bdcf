//! Character alignment of lemma and form, and stem/affix segmentation.
//!
//! The alignment is a unit-cost Levenshtein alignment. Among minimum-cost
//! alignments the one with the most matched characters is chosen; remaining
//! ties are resolved during backtrace in the order match, substitution,
//! deletion, insertion. The stem is the set of maximal runs of consecutive
//! matches of length at least `min_run`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MIN_RUN: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignmentError {
    #[error("cannot align an empty sequence")]
    EmptyInput,
    #[error("no aligned run of length >= {min_run}")]
    NoStem { min_run: usize },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
}

/// One column of an alignment. `None` on one side is a gap.
pub type AlignedPair = (Option<usize>, Option<usize>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharAlignment {
    lemma: Vec<char>,
    form: Vec<char>,
    pairs: Vec<AlignedPair>,
    cost: usize,
}

impl CharAlignment {
    pub fn lemma(&self) -> &[char] {
        &self.lemma
    }

    pub fn form(&self) -> &[char] {
        &self.form
    }

    pub fn pairs(&self) -> &[AlignedPair] {
        &self.pairs
    }

    pub fn cost(&self) -> usize {
        self.cost
    }

    pub fn is_match(&self, pair: AlignedPair) -> bool {
        match pair {
            (Some(i), Some(j)) => self.lemma[i] == self.form[j],
            _ => false,
        }
    }

    pub fn matches(&self) -> usize {
        self.pairs.iter().filter(|&&p| self.is_match(p)).count()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Move {
    Diagonal,
    Delete,
    Insert,
}

/// Aligns `lemma` to `form`.
pub fn align(lemma: &str, form: &str) -> Result<CharAlignment, AlignmentError> {
    let x: Vec<char> = lemma.chars().collect();
    let y: Vec<char> = form.chars().collect();
    if x.is_empty() || y.is_empty() {
        return Err(AlignmentError::EmptyInput);
    }
    let (n, m) = (x.len(), y.len());
    let w = m + 1;
    // (cost, matched) per cell; better = lower cost, then more matches.
    let mut table = vec![(0usize, 0usize); (n + 1) * w];
    for i in 0..=n {
        table[i * w] = (i, 0);
    }
    for (j, cell) in table.iter_mut().take(m + 1).enumerate() {
        *cell = (j, 0);
    }
    let better = |a: (usize, usize), b: (usize, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 > b.1);
    for i in 1..=n {
        for j in 1..=m {
            let same = x[i - 1] == y[j - 1];
            let (dc, dm) = table[(i - 1) * w + j - 1];
            let mut best = if same { (dc, dm + 1) } else { (dc + 1, dm) };
            let (uc, um) = table[(i - 1) * w + j];
            if better((uc + 1, um), best) {
                best = (uc + 1, um);
            }
            let (lc, lm) = table[i * w + j - 1];
            if better((lc + 1, lm), best) {
                best = (lc + 1, lm);
            }
            table[i * w + j] = best;
        }
    }

    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = table[i * w + j];
        let mut candidates: [Option<Move>; 4] = [None; 4];
        if i > 0 && j > 0 {
            let (dc, dm) = table[(i - 1) * w + j - 1];
            let same = x[i - 1] == y[j - 1];
            if same && (dc, dm + 1) == here {
                candidates[0] = Some(Move::Diagonal);
            } else if !same && (dc + 1, dm) == here {
                candidates[1] = Some(Move::Diagonal);
            }
        }
        if i > 0 {
            let (uc, um) = table[(i - 1) * w + j];
            if (uc + 1, um) == here {
                candidates[2] = Some(Move::Delete);
            }
        }
        if j > 0 {
            let (lc, lm) = table[i * w + j - 1];
            if (lc + 1, lm) == here {
                candidates[3] = Some(Move::Insert);
            }
        }
        match candidates.iter().flatten().next().expect("DP cell has a predecessor") {
            Move::Diagonal => {
                i -= 1;
                j -= 1;
                pairs.push((Some(i), Some(j)));
            }
            Move::Delete => {
                i -= 1;
                pairs.push((Some(i), None));
            }
            Move::Insert => {
                j -= 1;
                pairs.push((None, Some(j)));
            }
        }
    }
    pairs.reverse();
    Ok(CharAlignment {
        cost: table[n * w + m].0,
        lemma: x,
        form: y,
        pairs,
    })
}

/// Stem/affix decomposition of a lemma–form pair.
///
/// Stem spans on the two sides are paired by position in their lists and
/// have equal lengths and identical characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    lemma: Vec<char>,
    form: Vec<char>,
    lemma_stem_spans: Vec<Range<usize>>,
    form_stem_spans: Vec<Range<usize>>,
}

impl Segmentation {
    /// Builds a segmentation from known stem spans, e.g. ground-truth
    /// morpheme boundaries.
    pub fn from_spans(
        lemma: &str,
        form: &str,
        lemma_stem_spans: Vec<Range<usize>>,
        form_stem_spans: Vec<Range<usize>>,
    ) -> Result<Segmentation, AlignmentError> {
        let seg = Segmentation {
            lemma: lemma.chars().collect(),
            form: form.chars().collect(),
            lemma_stem_spans,
            form_stem_spans,
        };
        seg.validate()?;
        Ok(seg)
    }

    fn validate(&self) -> Result<(), AlignmentError> {
        let bad = |m: &str| Err(AlignmentError::InvalidSegmentation(m.to_owned()));
        if self.lemma_stem_spans.len() != self.form_stem_spans.len() {
            return bad("span count differs between lemma and form");
        }
        if self.lemma_stem_spans.is_empty() {
            return bad("no stem spans");
        }
        for spans in [&self.lemma_stem_spans, &self.form_stem_spans] {
            if spans.windows(2).any(|w| w[0].end > w[1].start) {
                return bad("spans overlap or are out of order");
            }
        }
        for (ls, fs) in self.lemma_stem_spans.iter().zip(&self.form_stem_spans) {
            if ls.is_empty() || ls.len() != fs.len() {
                return bad("paired spans differ in length");
            }
            if ls.end > self.lemma.len() || fs.end > self.form.len() {
                return bad("span out of bounds");
            }
            if self.lemma[ls.clone()] != self.form[fs.clone()] {
                return bad("stem characters differ between lemma and form");
            }
        }
        Ok(())
    }

    pub fn lemma(&self) -> &[char] {
        &self.lemma
    }

    pub fn form(&self) -> &[char] {
        &self.form
    }

    pub fn lemma_stem_spans(&self) -> &[Range<usize>] {
        &self.lemma_stem_spans
    }

    pub fn form_stem_spans(&self) -> &[Range<usize>] {
        &self.form_stem_spans
    }

    /// Aligned stem positions `(lemma_index, form_index)` in order.
    pub fn stem_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lemma_stem_spans
            .iter()
            .zip(&self.form_stem_spans)
            .flat_map(|(l, f)| l.clone().zip(f.clone()))
    }

    pub fn stem_len(&self) -> usize {
        self.form_stem_spans.iter().map(Range::len).sum()
    }

    pub fn is_lemma_stem(&self, i: usize) -> bool {
        self.lemma_stem_spans.iter().any(|s| s.contains(&i))
    }

    pub fn is_form_stem(&self, j: usize) -> bool {
        self.form_stem_spans.iter().any(|s| s.contains(&j))
    }

    pub fn x_stem(&self) -> String {
        collect(&self.lemma, |i| self.is_lemma_stem(i))
    }

    pub fn x_affix(&self) -> String {
        collect(&self.lemma, |i| !self.is_lemma_stem(i))
    }

    pub fn y_stem(&self) -> String {
        collect(&self.form, |j| self.is_form_stem(j))
    }

    pub fn y_affix(&self) -> String {
        collect(&self.form, |j| !self.is_form_stem(j))
    }

    /// The same spans applied to other strings of identical lengths.
    pub fn with_strings(&self, lemma: &str, form: &str) -> Result<Segmentation, AlignmentError> {
        Segmentation::from_spans(
            lemma,
            form,
            self.lemma_stem_spans.clone(),
            self.form_stem_spans.clone(),
        )
    }
}

fn collect(chars: &[char], keep: impl Fn(usize) -> bool) -> String {
    chars
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(i))
        .map(|(_, c)| c)
        .collect()
}

/// Maximal runs of consecutive matched pairs of length `>= min_run`.
pub fn extract_stem(a: &CharAlignment, min_run: usize) -> Result<Segmentation, AlignmentError> {
    let min_run = min_run.max(1);
    let mut lemma_spans = Vec::new();
    let mut form_spans = Vec::new();
    let mut run: Option<(usize, usize, usize)> = None; // (lemma start, form start, len)
    let mut close = |run: Option<(usize, usize, usize)>| {
        if let Some((ls, fs, len)) = run {
            if len >= min_run {
                lemma_spans.push(ls..ls + len);
                form_spans.push(fs..fs + len);
            }
        }
    };
    for &pair in a.pairs() {
        if a.is_match(pair) {
            let (i, j) = (pair.0.unwrap(), pair.1.unwrap());
            run = match run {
                Some((ls, fs, len)) => Some((ls, fs, len + 1)),
                None => Some((i, j, 1)),
            };
        } else {
            close(run.take());
        }
    }
    close(run);
    if lemma_spans.is_empty() {
        return Err(AlignmentError::NoStem { min_run });
    }
    Ok(Segmentation {
        lemma: a.lemma.clone(),
        form: a.form.clone(),
        lemma_stem_spans: lemma_spans,
        form_stem_spans: form_spans,
    })
}

/// `align` followed by `extract_stem`.
pub fn segment(lemma: &str, form: &str, min_run: usize) -> Result<Segmentation, AlignmentError> {
    extract_stem(&align(lemma, form)?, min_run)
}

/// Debug record for alignment export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub lemma: String,
    pub form: String,
    pub pairs: Vec<AlignedPair>,
    pub cost: usize,
    pub stem_spans: Vec<(Range<usize>, Range<usize>)>,
}

impl AlignmentRecord {
    pub fn new(a: &CharAlignment, min_run: usize) -> AlignmentRecord {
        let stem_spans = match extract_stem(a, min_run) {
            Ok(seg) => seg
                .lemma_stem_spans
                .into_iter()
                .zip(seg.form_stem_spans)
                .collect(),
            Err(_) => Vec::new(),
        };
        AlignmentRecord {
            lemma: a.lemma.iter().collect(),
            form: a.form.iter().collect(),
            pairs: a.pairs.clone(),
            cost: a.cost,
            stem_spans,
        }
    }
}
