//! Diagnostics over scored pools and selections: Pearson correlations of
//! uncertainty with corruption and length, the most frequent MSD of a
//! selection, vowel-harmony violations, and bootstrap percentile intervals.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TripleId;
use crate::seeds;
use crate::selection::SelectionResult;
use crate::stemcorrupt::SyntheticExample;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{0} has zero variance")]
    ZeroVariance(String),
    #[error("example {0} has no score")]
    Unscored(TripleId),
    #[error("selection is empty")]
    EmptySelection,
    #[error("no vowels configured")]
    NoVowelsConfigured,
    #[error("line {0}: expected `vowel<TAB>class`")]
    MalformedHarmonyLine(usize),
    #[error("confidence level must lie in (0, 1)")]
    InvalidLevel,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, ReportError> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    if xs.len() < 3 {
        return Err(ReportError::TooFewSamples { needed: 3, got: xs.len() });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(ReportError::ZeroVariance("x".into()));
    }
    if syy == 0.0 {
        return Err(ReportError::ZeroVariance("y".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlations of nll against corruption and length. A `None` field means
/// the other variable had zero variance; it is named in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_nll_levenshtein: Option<f64>,
    pub pearson_nll_stem_length: Option<f64>,
    pub pearson_nll_target_length: Option<f64>,
    pub n: usize,
    pub undefined: Vec<String>,
}

fn pool_scores(pool: &[SyntheticExample]) -> Result<Vec<f64>, ReportError> {
    pool.iter()
        .map(|e| e.score.ok_or(ReportError::Unscored(e.id())))
        .collect()
}

pub fn correlations(pool: &[SyntheticExample]) -> Result<CorrelationReport, ReportError> {
    let nll = pool_scores(pool)?;
    if nll.len() < 3 {
        return Err(ReportError::TooFewSamples { needed: 3, got: nll.len() });
    }
    if pearson(&nll, &nll).is_err() {
        return Err(ReportError::ZeroVariance("nll".into()));
    }
    let columns: [(&str, Vec<f64>); 3] = [
        ("levenshtein", pool.iter().map(|e| e.lev_to_gold_target as f64).collect()),
        ("stem_length", pool.iter().map(|e| e.stem_len() as f64).collect()),
        ("target_length", pool.iter().map(|e| e.triple.form.chars().count() as f64).collect()),
    ];
    let mut undefined = Vec::new();
    let mut rs = columns.iter().map(|(name, col)| match pearson(&nll, col) {
        Ok(r) => Some(r),
        Err(_) => {
            undefined.push((*name).to_owned());
            None
        }
    });
    let (lev, stem, target) = (rs.next().unwrap(), rs.next().unwrap(), rs.next().unwrap());
    drop(rs);
    Ok(CorrelationReport {
        pearson_nll_levenshtein: lev,
        pearson_nll_stem_length: stem,
        pearson_nll_target_length: target,
        n: nll.len(),
        undefined,
    })
}

/// The most frequent MSD of a selection and its count; ties go to the
/// lexicographically smallest MSD.
pub fn msd_mode_frequency(sel: &SelectionResult) -> Result<(String, usize), ReportError> {
    let mut best: Option<(&String, usize)> = None;
    for (msd, &c) in sel.per_msd_counts.counts() {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((msd, c));
        }
    }
    best.map(|(m, c)| (m.clone(), c))
        .ok_or(ReportError::EmptySelection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub statistic: String,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
    pub level: f64,
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap distribution of a statistic of index resamples `0..n`.
/// Resample `b` uses its own seed derived from `(seed, b)`.
pub fn bootstrap_distribution<F>(n: usize, statistic: F, resamples: usize, seed: u64) -> Vec<f64>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    (0..resamples)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |idx, b| {
                let mut rng = seeds::rng(seeds::derive_seed_index(seed, b as u64));
                for slot in idx.iter_mut() {
                    *slot = rng.gen_range(0..n);
                }
                statistic(idx)
            },
        )
        .collect()
}

/// Percentile interval of a resample distribution, widened if needed so it
/// contains the point estimate.
pub fn percentile_interval(
    name: &str,
    point: f64,
    mut distribution: Vec<f64>,
    level: f64,
) -> BootstrapCI {
    distribution.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let resamples = distribution.len();
    let (lower, upper) = if distribution.is_empty() {
        (point, point)
    } else {
        (quantile(&distribution, tail), quantile(&distribution, 1.0 - tail))
    };
    BootstrapCI {
        statistic: name.to_owned(),
        point,
        lower: lower.min(point),
        upper: upper.max(point),
        resamples,
        level,
    }
}

/// Percentile bootstrap CI of `statistic` over `samples`.
pub fn bootstrap_percentile<F>(
    name: &str,
    samples: &[f64],
    statistic: F,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCI, ReportError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if samples.len() < 2 {
        return Err(ReportError::TooFewSamples { needed: 2, got: samples.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(ReportError::InvalidLevel);
    }
    let point = statistic(samples);
    let dist = bootstrap_distribution(
        samples.len(),
        |idx| {
            let resample: Vec<f64> = idx.iter().map(|&i| samples[i]).collect();
            statistic(&resample)
        },
        resamples,
        seed,
    );
    Ok(percentile_interval(name, point, dist, level))
}

/// Two-sample bootstrap of `mean(a) - mean(b)`; each group is resampled
/// independently. The p-value is two-sided: twice the smaller fraction of
/// resampled differences on either side of zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDifferenceTest {
    pub ci: BootstrapCI,
    pub p_value: f64,
}

pub fn bootstrap_mean_difference(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<MeanDifferenceTest, ReportError> {
    for g in [a, b] {
        if g.len() < 2 {
            return Err(ReportError::TooFewSamples { needed: 2, got: g.len() });
        }
    }
    let point = mean(a) - mean(b);
    let diffs: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeds::rng(seeds::derive_seed_index(seed, r as u64));
            let ma = (0..a.len()).map(|_| a[rng.gen_range(0..a.len())]).sum::<f64>() / a.len() as f64;
            let mb = (0..b.len()).map(|_| b[rng.gen_range(0..b.len())]).sum::<f64>() / b.len() as f64;
            ma - mb
        })
        .collect();
    let below = diffs.iter().filter(|&&d| d <= 0.0).count() as f64;
    let above = diffs.iter().filter(|&&d| d >= 0.0).count() as f64;
    let p_value = (2.0 * below.min(above) / resamples.max(1) as f64).min(1.0);
    Ok(MeanDifferenceTest {
        ci: percentile_interval("mean_difference", point, diffs, level),
        p_value,
    })
}

/// Vowel classes for the harmony check. The class `neutral` never triggers
/// a violation and is skipped when finding the governing stem vowel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonyConfig {
    pub vowel_classes: BTreeMap<char, String>,
}

pub const NEUTRAL: &str = "neutral";

impl HarmonyConfig {
    /// Parses `vowel<TAB>class` lines.
    pub fn parse_tsv(text: &str) -> Result<HarmonyConfig, ReportError> {
        let mut vowel_classes = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (v, class) = line
                .split_once('\t')
                .ok_or(ReportError::MalformedHarmonyLine(i + 1))?;
            let mut chars = v.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(ReportError::MalformedHarmonyLine(i + 1));
            };
            if class.trim().is_empty() {
                return Err(ReportError::MalformedHarmonyLine(i + 1));
            }
            vowel_classes.insert(c, class.trim().to_owned());
        }
        Ok(HarmonyConfig { vowel_classes })
    }

    /// Turkish front/back classes.
    pub fn turkish() -> HarmonyConfig {
        let mut vowel_classes = BTreeMap::new();
        for c in ['a', 'ı', 'o', 'u'] {
            vowel_classes.insert(c, "back".to_owned());
        }
        for c in ['e', 'i', 'ö', 'ü'] {
            vowel_classes.insert(c, "front".to_owned());
        }
        HarmonyConfig { vowel_classes }
    }

    fn class(&self, c: char) -> Option<&str> {
        self.vowel_classes
            .get(&c)
            .map(String::as_str)
            .filter(|&k| k != NEUTRAL)
    }

    /// True iff some affix vowel's class differs from the class of the
    /// last classed stem vowel. Stem positions are given by `is_stem`.
    pub fn violates(&self, form: &[char], is_stem: impl Fn(usize) -> bool) -> bool {
        let governing = (0..form.len())
            .rev()
            .filter(|&j| is_stem(j))
            .find_map(|j| self.class(form[j]));
        let Some(governing) = governing else {
            return false;
        };
        (0..form.len())
            .filter(|&j| !is_stem(j))
            .filter_map(|j| self.class(form[j]))
            .any(|k| k != governing)
    }
}

pub fn is_harmony_violation(e: &SyntheticExample, cfg: &HarmonyConfig) -> bool {
    let form: Vec<char> = e.triple.form.chars().collect();
    cfg.violates(&form, |j| e.form_stem_spans.iter().any(|s| s.contains(&j)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonyStats {
    pub n: usize,
    pub violating: usize,
    pub violation_rate: f64,
    pub mean_nll_violating: Option<f64>,
    pub mean_nll_adhering: Option<f64>,
    /// `None` when either group has fewer than two examples.
    pub difference: Option<MeanDifferenceTest>,
}

impl HarmonyStats {
    pub fn bootstrap_p(&self) -> Option<f64> {
        self.difference.as_ref().map(|d| d.p_value)
    }
}

pub fn harmony_violation_stats(
    pool: &[SyntheticExample],
    cfg: &HarmonyConfig,
    resamples: usize,
    seed: u64,
) -> Result<HarmonyStats, ReportError> {
    if cfg.vowel_classes.is_empty() {
        return Err(ReportError::NoVowelsConfigured);
    }
    let nll = pool_scores(pool)?;
    let mut violating = Vec::new();
    let mut adhering = Vec::new();
    for (e, &s) in pool.iter().zip(&nll) {
        if is_harmony_violation(e, cfg) {
            violating.push(s);
        } else {
            adhering.push(s);
        }
    }
    let group_mean = |g: &[f64]| (!g.is_empty()).then(|| mean(g));
    Ok(HarmonyStats {
        n: pool.len(),
        violating: violating.len(),
        violation_rate: if pool.is_empty() { 0.0 } else { violating.len() as f64 / pool.len() as f64 },
        mean_nll_violating: group_mean(&violating),
        mean_nll_adhering: group_mean(&adhering),
        difference: bootstrap_mean_difference(&violating, &adhering, resamples, 0.95, seed).ok(),
    })
}
