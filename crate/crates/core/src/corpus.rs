//! Inflection datasets in the UniMorph TSV convention.
//!
//! A dataset is an ordered list of `(lemma, form, msd)` triples. Characters
//! are handled as Unicode scalar values (code points); combining marks are
//! therefore treated as separate characters.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {0}: expected 3 tab-separated fields")]
    MalformedLine(usize),
    #[error("line {0}: empty field")]
    EmptyField(usize),
    #[error("line {line}: invalid MSD {msd:?}")]
    InvalidMsd { line: usize, msd: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("duplicate triple id {0}")]
    DuplicateId(TripleId),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
}

/// Identifier of a triple within a [`Dataset`]. Ordering is numeric, which
/// is what the "lowest id wins" tie-break in selection relies on.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TripleId(pub u64);

impl fmt::Display for TripleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A morphosyntactic description: an ordered, non-empty list of feature
/// tokens. Order is preserved as given; `N;PL` and `PL;N` are distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Msd(Vec<String>);

impl Msd {
    pub fn parse(s: &str) -> Option<Msd> {
        if s.is_empty() {
            return None;
        }
        let tokens: Vec<String> = s.split(';').map(str::to_owned).collect();
        let valid = tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace));
        valid.then_some(Msd(tokens))
    }

    pub fn features(&self) -> &[String] {
        &self.0
    }

    /// The canonical `;`-joined form.
    pub fn canonical(&self) -> String {
        self.0.join(";")
    }
}

impl fmt::Display for Msd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl Serialize for Msd {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for Msd {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Msd::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid MSD {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InflectionTriple {
    pub id: TripleId,
    pub lemma: String,
    pub form: String,
    pub msd: Msd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    name: String,
    triples: Vec<InflectionTriple>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        triples: Vec<InflectionTriple>,
    ) -> Result<Dataset, CorpusError> {
        let mut seen = HashSet::with_capacity(triples.len());
        for t in &triples {
            if !seen.insert(t.id) {
                return Err(CorpusError::DuplicateId(t.id));
            }
        }
        Ok(Dataset {
            name: name.into(),
            triples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn triples(&self) -> &[InflectionTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InflectionTriple> {
        self.triples.iter()
    }

    /// Serializes as UniMorph TSV. Ids are not written; parsing the result
    /// reassigns them by line order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.lemma);
            out.push('\t');
            out.push_str(&t.form);
            out.push('\t');
            out.push_str(&t.msd.canonical());
            out.push('\n');
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&serde_json::to_string(t).expect("triple serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(name: impl Into<String>, text: &str) -> Result<Dataset, CorpusError> {
        let mut triples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: InflectionTriple = serde_json::from_str(line).map_err(|e| CorpusError::Json {
                line: i + 1,
                message: e.to_string(),
            })?;
            triples.push(t);
        }
        Dataset::new(name, triples)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a InflectionTriple;
    type IntoIter = std::slice::Iter<'a, InflectionTriple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

/// Parses UniMorph TSV (`lemma<TAB>form<TAB>msd`). Blank lines are skipped;
/// ids are assigned 0, 1, 2, ... in order of the triples.
pub fn parse_unimorph(text: &str, name: impl Into<String>) -> Result<Dataset, CorpusError> {
    let mut triples = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::MalformedLine(line_no));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(CorpusError::EmptyField(line_no));
        }
        let msd = Msd::parse(fields[2]).ok_or_else(|| CorpusError::InvalidMsd {
            line: line_no,
            msd: fields[2].to_owned(),
        })?;
        triples.push(InflectionTriple {
            id: TripleId(triples.len() as u64),
            lemma: fields[0].to_owned(),
            form: fields[1].to_owned(),
            msd,
        });
    }
    Dataset::new(name, triples)
}

/// Sorted set of code points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    chars: Vec<char>,
}

impl Alphabet {
    /// Builds an alphabet from arbitrary characters; duplicates are removed.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Option<Alphabet> {
        let set: BTreeSet<char> = chars.into_iter().collect();
        (!set.is_empty()).then(|| Alphabet {
            chars: set.into_iter().collect(),
        })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.binary_search(&c).is_ok()
    }

    pub fn position(&self, c: char) -> Option<usize> {
        self.chars.binary_search(&c).ok()
    }
}

pub fn extract_alphabet(d: &Dataset) -> Result<Alphabet, CorpusError> {
    Alphabet::from_chars(
        d.iter()
            .flat_map(|t| t.lemma.chars().chain(t.form.chars())),
    )
    .ok_or(CorpusError::EmptyDataset)
}

/// Frequency of each canonical MSD string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsdHistogram {
    counts: BTreeMap<String, usize>,
    total: usize,
}

impl MsdHistogram {
    pub fn from_msds<'a>(msds: impl IntoIterator<Item = &'a Msd>) -> MsdHistogram {
        let mut h = MsdHistogram::default();
        for m in msds {
            *h.counts.entry(m.canonical()).or_insert(0) += 1;
            h.total += 1;
        }
        h
    }

    pub fn counts(&self) -> &BTreeMap<String, usize> {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, msd: &str) -> usize {
        self.counts.get(msd).copied().unwrap_or(0)
    }

    /// Empirical p(T).
    pub fn probability(&self, msd: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(msd) as f64 / self.total as f64
    }
}

pub fn msd_histogram(d: &Dataset) -> MsdHistogram {
    MsdHistogram::from_msds(d.iter().map(|t| &t.msd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triple(id: u64, lemma: &str, form: &str, msd: &str) -> InflectionTriple {
        InflectionTriple {
            id: TripleId(id),
            lemma: lemma.into(),
            form: form.into(),
            msd: Msd::parse(msd).unwrap(),
        }
    }

    #[test]
    fn parses_single_line() {
        let d = parse_unimorph("dog\tdogs\tN;PL", "gold").unwrap();
        assert_eq!(d.len(), 1);
        let t = &d.triples()[0];
        assert_eq!(t.lemma, "dog");
        assert_eq!(t.form, "dogs");
        assert_eq!(t.msd.features(), ["N", "PL"]);
    }

    #[test]
    fn empty_stream_is_empty_dataset() {
        assert!(parse_unimorph("", "gold").unwrap().is_empty());
        assert!(parse_unimorph("\n\n  \n", "gold").unwrap().is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(parse_unimorph("a\tb", "g"), Err(CorpusError::MalformedLine(1)));
        assert_eq!(
            parse_unimorph("a\tb\tN\n\nx\t\tN", "g"),
            Err(CorpusError::EmptyField(3))
        );
        assert!(matches!(
            parse_unimorph("a\tb\tN;;PL", "g"),
            Err(CorpusError::InvalidMsd { line: 1, .. })
        ));
        assert!(matches!(
            parse_unimorph("a\tb\tN PL", "g"),
            Err(CorpusError::InvalidMsd { line: 1, .. })
        ));
    }

    #[test]
    fn spaces_in_lemmas_are_ordinary_characters() {
        let d = parse_unimorph("ice cream\tice creams\tN;PL\r\n", "g").unwrap();
        assert_eq!(d.triples()[0].lemma, "ice cream");
        assert!(extract_alphabet(&d).unwrap().contains(' '));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::new("d", vec![triple(0, "a", "b", "N"), triple(0, "c", "d", "N")]);
        assert_eq!(err, Err(CorpusError::DuplicateId(TripleId(0))));
    }

    #[test]
    fn alphabet_is_sorted_union() {
        let d = Dataset::new("d", vec![triple(0, "ab", "abc", "N")]).unwrap();
        assert_eq!(extract_alphabet(&d).unwrap().chars(), ['a', 'b', 'c']);
        let d = Dataset::new("d", vec![triple(0, "dog", "dogs", "N")]).unwrap();
        assert_eq!(extract_alphabet(&d).unwrap().chars(), ['d', 'g', 'o', 's']);
        let empty = Dataset::new("d", vec![]).unwrap();
        assert_eq!(extract_alphabet(&empty), Err(CorpusError::EmptyDataset));
    }

    #[test]
    fn histogram_counts_msds() {
        let mut triples = Vec::new();
        for i in 0..9 {
            triples.push(triple(i, "x", "y", "PL;ERG"));
        }
        triples.push(triple(9, "x", "y", "SG;ERG"));
        let h = msd_histogram(&Dataset::new("d", triples).unwrap());
        assert_eq!(h.total(), 10);
        assert_eq!(h.count("PL;ERG"), 9);
        assert_eq!(h.count("SG;ERG"), 1);
        assert!((h.probability("PL;ERG") - 0.9).abs() < 1e-12);

        let empty = msd_histogram(&Dataset::new("d", vec![]).unwrap());
        assert!(empty.counts().is_empty());
        assert_eq!(empty.total(), 0);
    }

    #[test]
    fn msd_order_is_preserved() {
        let a = Msd::parse("N;PL").unwrap();
        let b = Msd::parse("PL;N").unwrap();
        assert_ne!(a, b);
        assert_eq!(b.canonical(), "PL;N");
    }

    #[test]
    fn jsonl_round_trip() {
        let d = parse_unimorph("dog\tdogs\tN;PL\ncat\tcats\tN;PL\n", "gold").unwrap();
        let jsonl = d.to_jsonl();
        assert_eq!(
            jsonl.lines().next().unwrap(),
            r#"{"id":0,"lemma":"dog","form":"dogs","msd":"N;PL"}"#
        );
        assert_eq!(Dataset::from_jsonl("gold", &jsonl).unwrap(), d);
    }

    fn arb_word() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-zäöü ]{0,6}[a-zçğış]").unwrap()
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let msd = proptest::string::string_regex("[A-Z]{1,3}(;[A-Z0-9]{1,3}){0,3}").unwrap();
        proptest::collection::vec((arb_word(), arb_word(), msd), 0..20).prop_map(|rows| {
            let triples = rows
                .into_iter()
                .enumerate()
                .map(|(i, (l, f, m))| InflectionTriple {
                    id: TripleId(i as u64),
                    lemma: l,
                    form: f,
                    msd: Msd::parse(&m).unwrap(),
                })
                .collect();
            Dataset::new("p", triples).unwrap()
        })
    }

    proptest! {
        #[test]
        fn tsv_round_trip(d in arb_dataset()) {
            prop_assert_eq!(parse_unimorph(&d.to_tsv(), "p").unwrap(), d);
        }

        #[test]
        fn alphabet_ignores_triple_order(d in arb_dataset(), seed in any::<u64>()) {
            prop_assume!(!d.is_empty());
            let mut triples = d.triples().to_vec();
            let n = triples.len();
            triples.rotate_left((seed as usize) % n);
            triples.reverse();
            let permuted = Dataset::new("p", triples).unwrap();
            prop_assert_eq!(extract_alphabet(&d).unwrap(), extract_alphabet(&permuted).unwrap());
        }

        #[test]
        fn histogram_sums_to_total(d in arb_dataset()) {
            let h = msd_histogram(&d);
            prop_assert_eq!(h.counts().values().sum::<usize>(), h.total());
            prop_assert!(h.counts().values().all(|&c| c > 0));
        }
    }
}
