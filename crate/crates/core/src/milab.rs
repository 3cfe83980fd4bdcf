//! Information-theoretic checks of stem corruption on toy grammars.
//!
//! A [`ToyGrammar`] produces gold triples whose stem and affix boundaries
//! are known. Mixing them with corrupted copies at ratio
//! `lambda = gold / (gold + synthetic)` should drive four mutual
//! informations between stem, affix and tag variables towards zero, keep
//! the mixture MI under the convex combination of its parts, and leave the
//! conditional `P(Y | X, T)` factorized into an affix part and a stem part
//! unless the grammar has vowel harmony.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{self, Segmentation};
use crate::corpus::{Alphabet, Dataset, InflectionTriple, Msd, TripleId};
use crate::report::{self, BootstrapCI};
use crate::seeds;
use crate::stemcorrupt::{self, CorruptError, CorruptionConfig};

#[derive(Debug, Error, PartialEq)]
pub enum MilabError {
    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("{got} segmentations for {expected} triples")]
    SegmentationCount { expected: usize, got: usize },
    #[error("every conditioning cell has fewer than {min_cell} observations ({skipped} skipped)")]
    InsufficientSupport { min_cell: usize, skipped: usize },
    #[error(transparent)]
    Corrupt(#[from] CorruptError),
}

pub const BACK_VOWELS: [char; 4] = ['a', 'ı', 'o', 'u'];
pub const FRONT_VOWELS: [char; 4] = ['e', 'i', 'ö', 'ü'];
const HARMONY_CONSONANTS: [char; 8] = ['d', 'k', 'l', 'm', 'n', 'r', 's', 't'];
const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VowelClass {
    Back,
    Front,
}

/// Front-back vowel harmony. Affixes are stored in back form; each affix
/// vowel takes the class of the last stem vowel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonyRule {
    /// `(back, front)` vowel pairs.
    pub pairs: Vec<(char, char)>,
}

impl HarmonyRule {
    pub fn turkish() -> HarmonyRule {
        HarmonyRule {
            pairs: BACK_VOWELS.into_iter().zip(FRONT_VOWELS).collect(),
        }
    }

    pub fn class(&self, c: char) -> Option<VowelClass> {
        self.pairs.iter().find_map(|&(b, f)| {
            if c == b {
                Some(VowelClass::Back)
            } else if c == f {
                Some(VowelClass::Front)
            } else {
                None
            }
        })
    }

    pub fn stem_class(&self, stem: &str) -> Option<VowelClass> {
        stem.chars().rev().find_map(|c| self.class(c))
    }

    pub fn harmonize(&self, affix: &str, class: Option<VowelClass>) -> String {
        affix
            .chars()
            .map(|c| {
                let Some(&(b, f)) = self.pairs.iter().find(|&&(b, f)| c == b || c == f) else {
                    return c;
                };
                match class {
                    Some(VowelClass::Front) => f,
                    Some(VowelClass::Back) => b,
                    None => c,
                }
            })
            .collect()
    }
}

/// A concatenative suffixing grammar with optional inflection classes.
///
/// Stem `i` belongs to class `i % n_classes`. The lemma is the stem plus
/// its class's lemma affix; the inflected form is the stem plus the affix
/// of `(msd, class)`, harmonized if a rule is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGrammar {
    stems: Vec<String>,
    lemma_affixes: Vec<String>,
    affix_map: BTreeMap<String, Vec<String>>,
    harmony: Option<HarmonyRule>,
}

fn all_strings(letters: &[char], len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..len {
        out = out
            .iter()
            .flat_map(|p| letters.iter().map(move |c| format!("{p}{c}")))
            .collect();
    }
    out
}

fn msd_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("N;C{i}")).collect()
}

impl ToyGrammar {
    pub fn new(
        stems: Vec<String>,
        lemma_affixes: Vec<String>,
        affix_map: BTreeMap<String, Vec<String>>,
        harmony: Option<HarmonyRule>,
    ) -> Result<ToyGrammar, MilabError> {
        let bad = |m: String| Err(MilabError::InvalidGrammar(m));
        if stems.is_empty() || affix_map.is_empty() || lemma_affixes.is_empty() {
            return bad("stems, affixes and classes must be non-empty".into());
        }
        if let Some(s) = stems.iter().find(|s| s.chars().count() < alignment::DEFAULT_MIN_RUN) {
            return bad(format!("stem {s:?} is shorter than {}", alignment::DEFAULT_MIN_RUN));
        }
        let mut sorted = stems.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != stems.len() {
            return bad("duplicate stems".into());
        }
        let classes = lemma_affixes.len();
        for (msd, affixes) in &affix_map {
            if Msd::parse(msd).is_none() {
                return bad(format!("invalid MSD {msd:?}"));
            }
            if affixes.len() != classes {
                return bad(format!("MSD {msd} has {} affixes for {classes} classes", affixes.len()));
            }
        }
        for c in 0..classes {
            let mut col: Vec<&String> = affix_map.values().map(|a| &a[c]).collect();
            col.sort();
            col.dedup();
            if col.len() != affix_map.len() {
                return bad(format!("affixes of class {c} are not distinct per MSD"));
            }
        }
        Ok(ToyGrammar { stems, lemma_affixes, affix_map, harmony })
    }

    /// A grammar without harmony over a small alphabet: large enough for
    /// `n_stems` distinct stems of length 3 and distinct affixes, small
    /// enough that corrupted stems have a support comparable to the gold
    /// one.
    pub fn concatenative(
        n_stems: usize,
        n_msds: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<ToyGrammar, MilabError> {
        if n_stems == 0 || n_msds == 0 || n_classes == 0 {
            return Err(MilabError::InvalidGrammar("sizes must be positive".into()));
        }
        let mut size = 3.max(n_classes);
        while size.pow(3) < n_stems {
            size += 1;
        }
        if size > LETTERS.len() {
            return Err(MilabError::InvalidGrammar(format!("{n_stems} stems need more than 26 letters")));
        }
        let letters: Vec<char> = LETTERS.chars().take(size).collect();
        let n_affixes = n_classes * (n_msds + 1);
        let mut affix_len = 2;
        while size.pow(affix_len as u32) < n_affixes {
            affix_len += 1;
        }

        let mut rng = seeds::rng(seeds::derive_seed(seed, "grammar"));
        let mut stems = all_strings(&letters, 3);
        stems.shuffle(&mut rng);
        stems.truncate(n_stems);
        let mut affixes = all_strings(&letters, affix_len);
        affixes.shuffle(&mut rng);
        affixes.truncate(n_affixes);
        let mut chunks = affixes.chunks(n_classes).map(<[String]>::to_vec);
        let lemma_affixes = chunks.next().expect("at least one class");
        let affix_map = msd_names(n_msds).into_iter().zip(chunks).collect();
        ToyGrammar::new(stems, lemma_affixes, affix_map, None)
    }

    /// A Turkish-style grammar with CVC stems, bare-stem lemmas and one
    /// back-form affix per MSD, harmonized to the stem's last vowel.
    pub fn harmonic(n_stems: usize, n_msds: usize, seed: u64) -> Result<ToyGrammar, MilabError> {
        let mut rng = seeds::rng(seeds::derive_seed(seed, "grammar"));
        let mut stems = Vec::new();
        for c1 in HARMONY_CONSONANTS {
            for v in BACK_VOWELS.into_iter().chain(FRONT_VOWELS) {
                for c2 in HARMONY_CONSONANTS {
                    stems.push(format!("{c1}{v}{c2}"));
                }
            }
        }
        if n_stems == 0 || n_stems > stems.len() {
            return Err(MilabError::InvalidGrammar(format!("stem count must lie in 1..={}", stems.len())));
        }
        stems.shuffle(&mut rng);
        stems.truncate(n_stems);
        let mut affixes = Vec::new();
        for c1 in HARMONY_CONSONANTS {
            for v in BACK_VOWELS {
                affixes.push(format!("{c1}{v}"));
                affixes.push(format!("{v}{c1}"));
            }
        }
        if n_msds == 0 || n_msds > affixes.len() {
            return Err(MilabError::InvalidGrammar(format!("MSD count must lie in 1..={}", affixes.len())));
        }
        affixes.shuffle(&mut rng);
        let affix_map = msd_names(n_msds)
            .into_iter()
            .zip(affixes.into_iter().map(|a| vec![a]))
            .collect();
        ToyGrammar::new(stems, vec![String::new()], affix_map, Some(HarmonyRule::turkish()))
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    pub fn msds(&self) -> impl Iterator<Item = &str> {
        self.affix_map.keys().map(String::as_str)
    }

    pub fn n_classes(&self) -> usize {
        self.lemma_affixes.len()
    }

    pub fn harmony(&self) -> Option<&HarmonyRule> {
        self.harmony.as_ref()
    }

    /// Every character of the stems and affixes, plus both members of each
    /// harmony pair.
    pub fn alphabet(&self) -> Alphabet {
        let mut chars: Vec<char> = self
            .stems
            .iter()
            .chain(&self.lemma_affixes)
            .chain(self.affix_map.values().flatten())
            .flat_map(|s| s.chars())
            .collect();
        if let Some(h) = &self.harmony {
            chars.extend(h.pairs.iter().flat_map(|&(b, f)| [b, f]));
        }
        Alphabet::from_chars(chars).expect("stems are non-empty")
    }

    /// Lemma, form and their ground-truth segmentation.
    pub fn inflect(&self, stem_index: usize, msd: &str) -> (String, String, Segmentation) {
        let stem = &self.stems[stem_index];
        let class = stem_index % self.n_classes();
        let lemma = format!("{stem}{}", self.lemma_affixes[class]);
        let affix = &self.affix_map[msd][class];
        let affix = match &self.harmony {
            Some(h) => h.harmonize(affix, h.stem_class(stem)),
            None => affix.clone(),
        };
        let form = format!("{stem}{affix}");
        let n = stem.chars().count();
        let seg = Segmentation::from_spans(&lemma, &form, vec![0..n], vec![0..n])
            .expect("stem prefixes lemma and form");
        (lemma, form, seg)
    }
}

/// Gold triples with their ground-truth segmentations.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSample {
    pub dataset: Dataset,
    pub segmentations: Vec<Segmentation>,
}

/// `n` triples with stem and MSD drawn independently and uniformly.
pub fn generate_gold(g: &ToyGrammar, n: usize, seed: u64) -> Result<GoldSample, MilabError> {
    if n == 0 {
        return Err(MilabError::EmptySample);
    }
    let msds: Vec<&str> = g.msds().collect();
    let mut rng = seeds::rng(seed);
    let mut triples = Vec::with_capacity(n);
    let mut segmentations = Vec::with_capacity(n);
    for i in 0..n {
        let s = rng.gen_range(0..g.stems.len());
        let msd = msds[rng.gen_range(0..msds.len())];
        let (lemma, form, seg) = g.inflect(s, msd);
        triples.push(InflectionTriple {
            id: TripleId(i as u64),
            lemma,
            form,
            msd: Msd::parse(msd).expect("validated in ToyGrammar::new"),
        });
        segmentations.push(seg);
    }
    let dataset = Dataset::new("toy", triples).expect("ids are 0..n");
    Ok(GoldSample { dataset, segmentations })
}

/// The four variable pairs whose MI the augmentation should remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MiPair {
    #[serde(rename = "Y_stem;T")]
    StemTag,
    #[serde(rename = "Y_stem;X_affix")]
    StemLemmaAffix,
    #[serde(rename = "Y_affix;Y_stem")]
    AffixStem,
    #[serde(rename = "Y_affix;X_stem")]
    AffixLemmaStem,
}

impl MiPair {
    pub const ALL: [MiPair; 4] = [
        MiPair::StemTag,
        MiPair::StemLemmaAffix,
        MiPair::AffixStem,
        MiPair::AffixLemmaStem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MiPair::StemTag => "Y_stem;T",
            MiPair::StemLemmaAffix => "Y_stem;X_affix",
            MiPair::AffixStem => "Y_affix;Y_stem",
            MiPair::AffixLemmaStem => "Y_affix;X_stem",
        }
    }

    fn columns(self) -> (Var, Var) {
        match self {
            MiPair::StemTag => (Var::YStem, Var::T),
            MiPair::StemLemmaAffix => (Var::YStem, Var::XAffix),
            MiPair::AffixStem => (Var::YAffix, Var::YStem),
            MiPair::AffixLemmaStem => (Var::YAffix, Var::XStem),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Var {
    X,
    T,
    XStem,
    XAffix,
    YStem,
    YAffix,
}

const N_VARS: usize = 6;

/// Each variable of each example interned to a dense code, in order of
/// first appearance.
struct Coded {
    cols: [Vec<u32>; N_VARS],
    sizes: [usize; N_VARS],
}

impl Coded {
    fn new<'a>(examples: impl Iterator<Item = (&'a Msd, Segmentation)>) -> Coded {
        let mut tables: [HashMap<String, u32>; N_VARS] = Default::default();
        let mut cols: [Vec<u32>; N_VARS] = Default::default();
        for (msd, seg) in examples {
            let values = [
                seg.lemma().iter().collect::<String>(),
                msd.canonical(),
                seg.x_stem(),
                seg.x_affix(),
                seg.y_stem(),
                seg.y_affix(),
            ];
            for (v, value) in values.into_iter().enumerate() {
                let next = tables[v].len() as u32;
                cols[v].push(*tables[v].entry(value).or_insert(next));
            }
        }
        Coded {
            sizes: tables.map(|t| t.len()),
            cols,
        }
    }

    fn col(&self, v: Var) -> &[u32] {
        &self.cols[v as usize]
    }

    fn size(&self, v: Var) -> usize {
        self.sizes[v as usize]
    }

    fn len(&self) -> usize {
        self.col(Var::X).len()
    }

    fn mi(&self, pair: MiPair, idx: impl Iterator<Item = usize>) -> f64 {
        let (a, b) = pair.columns();
        let (ca, cb) = (self.col(a), self.col(b));
        mi_of_codes(idx.map(|i| (ca[i], cb[i])), self.size(a), self.size(b))
    }
}

const DENSE_LIMIT: usize = 1 << 22;

fn mi_of_codes(pairs: impl Iterator<Item = (u32, u32)>, ka: usize, kb: usize) -> f64 {
    let mut ma = vec![0u64; ka];
    let mut mb = vec![0u64; kb];
    let mut n = 0u64;
    let mut joint: Vec<(u32, u32, u64)> = if ka * kb <= DENSE_LIMIT {
        let mut dense = vec![0u64; ka * kb];
        for (a, b) in pairs {
            dense[a as usize * kb + b as usize] += 1;
            ma[a as usize] += 1;
            mb[b as usize] += 1;
            n += 1;
        }
        dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| ((i / kb) as u32, (i % kb) as u32, c))
            .collect()
    } else {
        let mut sparse: HashMap<(u32, u32), u64> = HashMap::new();
        for (a, b) in pairs {
            *sparse.entry((a, b)).or_default() += 1;
            ma[a as usize] += 1;
            mb[b as usize] += 1;
            n += 1;
        }
        let mut cells: Vec<_> = sparse.into_iter().map(|((a, b), c)| (a, b, c)).collect();
        cells.sort_unstable();
        cells
    };
    if n == 0 {
        return 0.0;
    }
    joint.sort_unstable();
    let n = n as f64;
    let mi: f64 = joint
        .iter()
        .map(|&(a, b, c)| {
            let c = c as f64;
            c / n * (c * n / (ma[a as usize] as f64 * mb[b as usize] as f64)).log2()
        })
        .sum();
    mi.max(0.0)
}

/// Plug-in mutual information of the empirical joint, in bits.
pub fn plug_in_mi<A: Hash + Eq, B: Hash + Eq>(samples: &[(A, B)]) -> f64 {
    let mut ta: HashMap<&A, u32> = HashMap::new();
    let mut tb: HashMap<&B, u32> = HashMap::new();
    let codes: Vec<(u32, u32)> = samples
        .iter()
        .map(|(a, b)| {
            let na = ta.len() as u32;
            let nb = tb.len() as u32;
            (*ta.entry(a).or_insert(na), *tb.entry(b).or_insert(nb))
        })
        .collect();
    mi_of_codes(codes.into_iter(), ta.len(), tb.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub gold_count: usize,
    pub syn_count: usize,
}

impl MixtureSpec {
    pub fn lambda(&self) -> f64 {
        self.gold_count as f64 / (self.gold_count + self.syn_count) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub pair: MiPair,
    pub bits: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_samples: usize,
    pub lambda: f64,
}

pub fn convexity_bound_check(i_gold: f64, i_syn: f64, lambda: f64, i_mixture: f64, epsilon: f64) -> bool {
    i_mixture <= lambda * i_gold + (1.0 - lambda) * i_syn + epsilon
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityVerdict {
    pub pair: MiPair,
    pub i_gold: f64,
    /// MI of the synthetic slice alone; zero when there is none.
    pub i_syn: f64,
    pub i_mixture: f64,
    pub bound: f64,
    pub epsilon: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationGap {
    pub tv_distance: f64,
    pub cells_used: usize,
    pub cells_skipped: usize,
    pub skip_rate: f64,
}

/// Smallest `(X, T)` cell used by [`factorization_gap`].
pub const MIN_CELL: usize = 5;

fn total<K>(m: &BTreeMap<K, u64>) -> f64 {
    m.values().sum::<u64>() as f64
}

fn gap_of_codes(c: &Coded, range: std::ops::Range<usize>, min_cell: usize) -> Result<FactorizationGap, MilabError> {
    type Counts = BTreeMap<(u32, u32), BTreeMap<(u32, u32), u64>>;
    let mut cells: Counts = BTreeMap::new();
    let mut affix_given: Counts = BTreeMap::new();
    let mut stem_given: BTreeMap<u32, BTreeMap<u32, u64>> = BTreeMap::new();
    let [x, t, xs, xa, ys, ya] = &c.cols;
    for i in range {
        *cells.entry((x[i], t[i])).or_default().entry((ys[i], ya[i])).or_default() += 1;
        *affix_given.entry((xa[i], t[i])).or_default().entry((0, ya[i])).or_default() += 1;
        *stem_given.entry(xs[i]).or_default().entry(ys[i]).or_default() += 1;
    }
    // Any example of a cell fixes its X, hence X_stem and X_affix.
    let mut lookup: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for i in 0..c.len() {
        lookup.entry((x[i], t[i])).or_insert((xs[i], xa[i]));
    }

    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for (key, ys_counts) in &cells {
        let n = total(ys_counts);
        if (n as usize) < min_cell {
            skipped += 1;
            continue;
        }
        let (x_stem, x_affix) = lookup[key];
        let affixes = &affix_given[&(x_affix, key.1)];
        let stems = &stem_given[&x_stem];
        let (na, ns) = (total(affixes), total(stems));
        let q = |y_stem: u32, y_affix: u32| {
            affixes.get(&(0, y_affix)).copied().unwrap_or(0) as f64 / na
                * stems.get(&y_stem).copied().unwrap_or(0) as f64
                / ns
        };
        // q sums to one over its own support, so mass outside the cell's
        // observed support is 1 - sum of q over it.
        let (mut abs, mut q_in) = (0.0, 0.0);
        for (&(y_stem, y_affix), &cnt) in ys_counts {
            let qv = q(y_stem, y_affix);
            abs += (cnt as f64 / n - qv).abs();
            q_in += qv;
        }
        sum += 0.5 * (abs + (1.0 - q_in).max(0.0));
        used += 1;
    }
    if used == 0 {
        return Err(MilabError::InsufficientSupport { min_cell, skipped });
    }
    Ok(FactorizationGap {
        tv_distance: (sum / used as f64).clamp(0.0, 1.0),
        cells_used: used,
        cells_skipped: skipped,
        skip_rate: skipped as f64 / (used + skipped) as f64,
    })
}

/// Mean total-variation distance between the empirical `P(Y | X, T)` and
/// `P(Y_affix | X_affix, T) * P(Y_stem | X_stem)` over `(X, T)` cells with
/// at least `min_cell` observations.
pub fn factorization_gap(
    d: &Dataset,
    segs: &[Segmentation],
    min_cell: usize,
) -> Result<FactorizationGap, MilabError> {
    if segs.len() != d.len() {
        return Err(MilabError::SegmentationCount { expected: d.len(), got: segs.len() });
    }
    let coded = Coded::new(d.iter().map(|t| &t.msd).zip(segs.iter().cloned()));
    gap_of_codes(&coded, 0..coded.len(), min_cell)
}

/// Agreement of alignment-derived stems with the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub n: usize,
    pub disagreements: usize,
    pub unalignable: usize,
    pub disagreement_rate: f64,
}

pub fn cross_check_segmentation(d: &Dataset, truth: &[Segmentation], min_run: usize) -> CrossCheck {
    let outcomes: Vec<Option<bool>> = d
        .triples()
        .par_iter()
        .zip(truth)
        .map(|(t, s)| {
            alignment::segment(&t.lemma, &t.form, min_run)
                .ok()
                .map(|a| a.lemma_stem_spans() == s.lemma_stem_spans() && a.form_stem_spans() == s.form_stem_spans())
        })
        .collect();
    let unalignable = outcomes.iter().filter(|o| o.is_none()).count();
    let disagreements = outcomes.iter().filter(|o| **o != Some(true)).count();
    CrossCheck {
        n: d.len(),
        disagreements,
        unalignable,
        disagreement_rate: if d.is_empty() { 0.0 } else { disagreements as f64 / d.len() as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub gold_n: usize,
    pub syn_sizes: Vec<usize>,
    pub theta: f64,
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub epsilon: f64,
    pub min_cell: usize,
    pub cross_check: bool,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            gold_n: 500,
            syn_sizes: vec![0, 100, 1000, 10_000],
            theta: 1.0,
            bootstrap_resamples: 200,
            level: 0.95,
            epsilon: 0.02,
            min_cell: MIN_CELL,
            cross_check: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub mixture: MixtureSpec,
    pub lambda: f64,
    pub mi: Vec<MIEstimate>,
    pub convexity: Vec<ConvexityVerdict>,
    /// `None` when no `(X, T)` cell reaches the minimum size.
    pub factorization: Option<FactorizationGap>,
}

impl CurvePoint {
    pub fn estimate(&self, pair: MiPair) -> &MIEstimate {
        self.mi.iter().find(|m| m.pair == pair).expect("all pairs estimated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub config: CurveConfig,
    pub points: Vec<CurvePoint>,
    pub cross_check: Option<CrossCheck>,
}

impl DecayCurve {
    /// Each point estimate is at most the upper CI bound of the point
    /// before it.
    pub fn non_increasing_within_ci(&self, pair: MiPair) -> bool {
        self.points.windows(2).all(|w| w[1].estimate(pair).bits <= w[0].estimate(pair).ci_upper)
    }

    pub fn convexity_holds(&self) -> bool {
        self.points.iter().flat_map(|p| &p.convexity).all(|v| v.holds)
    }

    pub fn endpoint(&self, pair: MiPair) -> f64 {
        self.points.last().map_or(0.0, |p| p.estimate(pair).bits)
    }
}

fn estimate_range(
    c: &Coded,
    range: std::ops::Range<usize>,
    lambda: f64,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Vec<MIEstimate> {
    let n = range.len();
    let lo = range.start;
    let draws: Vec<[f64; 4]> = (0..resamples)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |idx, b| {
                let mut rng = seeds::rng(seeds::derive_seed_index(seed, b as u64));
                for slot in idx.iter_mut() {
                    *slot = lo + rng.gen_range(0..n);
                }
                MiPair::ALL.map(|p| c.mi(p, idx.iter().copied()))
            },
        )
        .collect();
    MiPair::ALL
        .iter()
        .enumerate()
        .map(|(k, &pair)| {
            let point = c.mi(pair, range.clone());
            let BootstrapCI { lower, upper, .. } =
                report::percentile_interval(pair.name(), point, draws.iter().map(|d| d[k]).collect(), level);
            MIEstimate {
                pair,
                bits: point,
                ci_lower: lower,
                ci_upper: upper,
                n_samples: n,
                lambda,
            }
        })
        .collect()
}

fn bootstrap_seed(seed: u64, syn: usize) -> u64 {
    seeds::derive_seed(seed, &format!("bootstrap/{syn}"))
}

/// MI estimates of a gold sample on its own, matching the `syn = 0` point
/// of [`mi_decay_curve`] for the same configuration.
pub fn gold_estimates(gold: &GoldSample, cfg: &CurveConfig) -> Vec<MIEstimate> {
    let coded = Coded::new(gold.dataset.iter().map(|t| &t.msd).zip(gold.segmentations.iter().cloned()));
    estimate_range(&coded, 0..coded.len(), 1.0, cfg.bootstrap_resamples, cfg.level, bootstrap_seed(cfg.seed, 0))
}

pub fn sample_gold(g: &ToyGrammar, cfg: &CurveConfig) -> Result<GoldSample, MilabError> {
    generate_gold(g, cfg.gold_n, seeds::derive_seed(cfg.seed, "gold"))
}

/// MI curves over gold mixed with growing synthetic pools. The pools for
/// all sizes are prefixes of one pool, so the points are nested.
pub fn mi_decay_curve(g: &ToyGrammar, cfg: &CurveConfig) -> Result<DecayCurve, MilabError> {
    let gold = sample_gold(g, cfg)?;
    let max_syn = cfg.syn_sizes.iter().copied().max().unwrap_or(0);
    let corruption = CorruptionConfig {
        theta: cfg.theta,
        seed: seeds::derive_seed(cfg.seed, "pool"),
        ..CorruptionConfig::default()
    };
    corruption.validate()?;
    let segs: Vec<Option<Segmentation>> = gold.segmentations.iter().cloned().map(Some).collect();
    let pool = if max_syn > 0 {
        stemcorrupt::generate_pool_segmented(&gold.dataset, &segs, max_syn, &g.alphabet(), &corruption)?.examples
    } else {
        Vec::new()
    };
    let gold_n = gold.dataset.len();
    let coded = Coded::new(
        gold.dataset
            .iter()
            .map(|t| &t.msd)
            .zip(gold.segmentations.iter().cloned())
            .chain(pool.iter().map(|e| (&e.triple.msd, e.segmentation()))),
    );
    let gold_only = MiPair::ALL.map(|p| coded.mi(p, 0..gold_n));

    let points = cfg
        .syn_sizes
        .par_iter()
        .map(|&syn| {
            let mixture = MixtureSpec { gold_count: gold_n, syn_count: syn };
            let lambda = mixture.lambda();
            let end = gold_n + syn;
            let mi = estimate_range(
                &coded,
                0..end,
                lambda,
                cfg.bootstrap_resamples,
                cfg.level,
                bootstrap_seed(cfg.seed, syn),
            );
            let convexity = MiPair::ALL
                .iter()
                .enumerate()
                .map(|(k, &pair)| {
                    let i_syn = if syn == 0 { 0.0 } else { coded.mi(pair, gold_n..end) };
                    let i_mixture = mi[k].bits;
                    let bound = lambda * gold_only[k] + (1.0 - lambda) * i_syn;
                    ConvexityVerdict {
                        pair,
                        i_gold: gold_only[k],
                        i_syn,
                        i_mixture,
                        bound,
                        epsilon: cfg.epsilon,
                        holds: convexity_bound_check(gold_only[k], i_syn, lambda, i_mixture, cfg.epsilon),
                    }
                })
                .collect();
            CurvePoint {
                mixture,
                lambda,
                mi,
                convexity,
                factorization: gap_of_codes(&coded, 0..end, cfg.min_cell).ok(),
            }
        })
        .collect();

    let cross_check = cfg
        .cross_check
        .then(|| cross_check_segmentation(&gold.dataset, &gold.segmentations, alignment::DEFAULT_MIN_RUN));
    Ok(DecayCurve {
        config: cfg.clone(),
        points,
        cross_check,
    })
}

/// Endpoint MIs of a single-mixture run at `theta = 1` and at a lower
/// `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSensitivity {
    pub theta_low: f64,
    pub syn_count: usize,
    pub endpoint_full: Vec<MIEstimate>,
    pub endpoint_low: Vec<MIEstimate>,
}

impl ThetaSensitivity {
    /// Whether partial corruption leaves more MI for `pair` than full.
    pub fn stays_above(&self, pair: MiPair) -> bool {
        let get = |v: &[MIEstimate]| v.iter().find(|m| m.pair == pair).map_or(0.0, |m| m.bits);
        get(&self.endpoint_low) > get(&self.endpoint_full)
    }
}

pub fn theta_sensitivity(
    g: &ToyGrammar,
    cfg: &CurveConfig,
    syn_count: usize,
    theta_low: f64,
) -> Result<ThetaSensitivity, MilabError> {
    let run = |theta: f64| -> Result<Vec<MIEstimate>, MilabError> {
        let c = CurveConfig {
            syn_sizes: vec![syn_count],
            theta,
            cross_check: false,
            ..cfg.clone()
        };
        Ok(mi_decay_curve(g, &c)?.points.remove(0).mi)
    };
    Ok(ThetaSensitivity {
        theta_low,
        syn_count,
        endpoint_full: run(1.0)?,
        endpoint_low: run(theta_low)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(syn_sizes: Vec<usize>) -> CurveConfig {
        CurveConfig {
            gold_n: 300,
            syn_sizes,
            bootstrap_resamples: 20,
            seed: 5,
            ..CurveConfig::default()
        }
    }

    #[test]
    fn plug_in_mi_closed_forms() {
        let independent = [(0, 0), (0, 1), (1, 0), (1, 1)];
        assert_eq!(plug_in_mi(&independent), 0.0);
        let bijection = [("a", 'x'), ("b", 'y'), ("a", 'x'), ("b", 'y')];
        assert!((plug_in_mi(&bijection) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plug_in_mi_three_by_three() {
        let counts = [[4, 1, 0], [1, 3, 1], [0, 2, 8]];
        let mut samples = Vec::new();
        for (a, row) in counts.iter().enumerate() {
            for (b, &c) in row.iter().enumerate() {
                samples.extend(std::iter::repeat((a, b)).take(c));
            }
        }
        // direct evaluation of the definition
        let n = 20.0;
        let ra = [5.0, 5.0, 10.0];
        let cb = [5.0, 6.0, 9.0];
        let mut expected = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let p = counts[a][b] as f64 / n;
                if p > 0.0 {
                    expected += p * (p / (ra[a] / n * cb[b] / n)).log2();
                }
            }
        }
        assert!((plug_in_mi(&samples) - expected).abs() < 1e-12);
    }

    #[test]
    fn grammar_concatenates() {
        let g = ToyGrammar::new(
            vec!["dal".into()],
            vec![String::new()],
            BTreeMap::from([("N;PL".to_owned(), vec!["lar".to_owned()])]),
            None,
        )
        .unwrap();
        let (lemma, form, seg) = g.inflect(0, "N;PL");
        assert_eq!((lemma.as_str(), form.as_str()), ("dal", "dallar"));
        assert_eq!(seg.y_affix(), "lar");
    }

    #[test]
    fn harmony_picks_back_affixes_after_back_stems() {
        let g = ToyGrammar::new(
            vec!["dal".into(), "kel".into()],
            vec![String::new()],
            BTreeMap::from([("N;PL;GEN".to_owned(), vec!["ların".to_owned()])]),
            Some(HarmonyRule::turkish()),
        )
        .unwrap();
        assert_eq!(g.inflect(0, "N;PL;GEN").1, "dalların");
        assert_eq!(g.inflect(1, "N;PL;GEN").1, "kellerin");
    }

    #[test]
    fn invalid_grammars() {
        let affixes = BTreeMap::from([("N;A".to_owned(), vec!["x".to_owned()]), ("N;B".to_owned(), vec!["x".to_owned()])]);
        assert!(ToyGrammar::new(vec!["abc".into()], vec![String::new()], affixes, None).is_err());
        let short = BTreeMap::from([("N;A".to_owned(), vec!["x".to_owned()])]);
        assert!(ToyGrammar::new(vec!["ab".into()], vec![String::new()], short, None).is_err());
        assert!(matches!(
            generate_gold(&ToyGrammar::concatenative(5, 2, 1, 0).unwrap(), 0, 0),
            Err(MilabError::EmptySample)
        ));
    }

    #[test]
    fn built_grammars_have_distinct_affixes() {
        let g = ToyGrammar::concatenative(50, 5, 2, 3).unwrap();
        assert_eq!(g.stems().len(), 50);
        assert_eq!(g.alphabet().len(), 4);
        let h = ToyGrammar::harmonic(50, 5, 3).unwrap();
        assert_eq!(h.n_classes(), 1);
        for s in h.stems() {
            let class = h.harmony().unwrap().stem_class(s).unwrap();
            for msd in h.msds() {
                let form = h.inflect(h.stems().iter().position(|x| x == s).unwrap(), msd).1;
                let affix: String = form.chars().skip(3).collect();
                assert!(affix.chars().filter_map(|c| h.harmony().unwrap().class(c)).all(|k| k == class));
            }
        }
    }

    #[test]
    fn gold_msd_marginal_is_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let g = ToyGrammar::concatenative(20, 5, 2, 0).unwrap();
        let gold = generate_gold(&g, 1000, 9).unwrap();
        let hist = crate::corpus::msd_histogram(&gold.dataset);
        let stat: f64 = hist.counts().values().map(|&c| (c as f64 - 200.0).powi(2) / 200.0).sum();
        let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(stat);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn gap_is_zero_without_harmony_and_large_with_it() {
        let g = ToyGrammar::concatenative(10, 3, 2, 1).unwrap();
        let gold = generate_gold(&g, 2000, 1).unwrap();
        let gap = factorization_gap(&gold.dataset, &gold.segmentations, MIN_CELL).unwrap();
        assert!(gap.tv_distance < 1e-12);
        let h = ToyGrammar::harmonic(10, 3, 1).unwrap();
        let gold = generate_gold(&h, 2000, 1).unwrap();
        let gap = factorization_gap(&gold.dataset, &gold.segmentations, MIN_CELL).unwrap();
        assert!(gap.tv_distance > 0.2, "{gap:?}");
        let tiny = generate_gold(&h, 3, 1).unwrap();
        assert!(matches!(
            factorization_gap(&tiny.dataset, &tiny.segmentations, MIN_CELL),
            Err(MilabError::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn zero_synthetic_point_reproduces_gold_estimates() {
        let g = ToyGrammar::concatenative(20, 3, 2, 0).unwrap();
        let cfg = small_cfg(vec![0, 200]);
        let curve = mi_decay_curve(&g, &cfg).unwrap();
        let gold = sample_gold(&g, &cfg).unwrap();
        assert_eq!(curve.points[0].mi, gold_estimates(&gold, &cfg));
        assert_eq!(curve.points[0].lambda, 1.0);
        assert_eq!(curve, mi_decay_curve(&g, &cfg).unwrap());
    }

    #[test]
    fn estimates_are_nonnegative_and_bracketed() {
        let g = ToyGrammar::concatenative(20, 3, 2, 0).unwrap();
        let curve = mi_decay_curve(&g, &small_cfg(vec![0, 100, 1000])).unwrap();
        for p in &curve.points {
            for m in &p.mi {
                assert!(m.bits >= 0.0 && m.ci_lower <= m.bits && m.bits <= m.ci_upper);
            }
        }
    }

    #[test]
    fn convexity_edges() {
        assert!(convexity_bound_check(0.7, 0.0, 1.0, 0.7, 0.0));
        assert!(convexity_bound_check(0.7, 0.0, 0.0, 0.01, 0.02));
        assert!(!convexity_bound_check(0.7, 0.0, 0.0, 0.03, 0.02));
    }

    #[test]
    fn cross_check_reports_rate() {
        let g = ToyGrammar::concatenative(20, 3, 2, 0).unwrap();
        let gold = generate_gold(&g, 200, 0).unwrap();
        let c = cross_check_segmentation(&gold.dataset, &gold.segmentations, 3);
        assert_eq!(c.n, 200);
        assert!((0.0..=1.0).contains(&c.disagreement_rate));
    }
}
