//! Subset selection over a synthetic pool.
//!
//! Seven strategies: uniform random, MSD-templatic sampling (`umt`, `ume`),
//! loss ranking (`highloss`, `lowloss`) and the templatic/loss hybrids
//! (`umt-loss`, `ume-loss`). Templatic strategies draw an MSD `T` from
//! `q_alpha(T) = p(T)^alpha / sum_T' p(T')^alpha`, where `p` is the MSD
//! distribution of the whole pool, renormalized at every step over the
//! MSDs that still have unselected candidates.
//!
//! Ties in `nll` are broken by the lower id.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, InflectionTriple, MsdHistogram, TripleId};
use crate::seeds;
use crate::stemcorrupt::SyntheticExample;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("cannot select {k} examples from a pool of {pool}")]
    KTooLarge { k: usize, pool: usize },
    #[error("pool example {0} has no score")]
    UnscoredPool(TripleId),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("alpha must be finite")]
    InvalidAlpha,
    #[error("selected id {0} is not in the pool")]
    UnknownId(TripleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Random,
    Umt,
    Ume,
    #[serde(rename = "highloss")]
    HighLoss,
    #[serde(rename = "lowloss")]
    LowLoss,
    UmtLoss,
    UmeLoss,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Random,
        StrategyKind::Umt,
        StrategyKind::Ume,
        StrategyKind::HighLoss,
        StrategyKind::LowLoss,
        StrategyKind::UmtLoss,
        StrategyKind::UmeLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Umt => "umt",
            StrategyKind::Ume => "ume",
            StrategyKind::HighLoss => "highloss",
            StrategyKind::LowLoss => "lowloss",
            StrategyKind::UmtLoss => "umt-loss",
            StrategyKind::UmeLoss => "ume-loss",
        }
    }

    /// `alpha` for the MSD-tempered strategies.
    pub fn default_alpha(self) -> Option<f64> {
        match self {
            StrategyKind::Umt | StrategyKind::UmtLoss => Some(0.0),
            StrategyKind::Ume | StrategyKind::UmeLoss => Some(1.0),
            _ => None,
        }
    }

    pub fn needs_scores(self) -> bool {
        matches!(
            self,
            StrategyKind::HighLoss
                | StrategyKind::LowLoss
                | StrategyKind::UmtLoss
                | StrategyKind::UmeLoss
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SelectionError::UnknownStrategy(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Highest,
    Lowest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    pub k: usize,
    /// Only read by the templatic and hybrid strategies.
    pub alpha: f64,
    pub seed: u64,
}

impl SelectionStrategy {
    pub fn new(kind: StrategyKind, k: usize, seed: u64) -> Self {
        SelectionStrategy {
            kind,
            k,
            alpha: kind.default_alpha().unwrap_or(0.0),
            seed,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// True when `alpha` differs from the strategy's named value (0 or 1).
    pub fn is_experimental(&self) -> bool {
        self.kind
            .default_alpha()
            .is_some_and(|a| a != self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected_ids: Vec<TripleId>,
    pub strategy: SelectionStrategy,
    pub per_msd_counts: MsdHistogram,
}

fn check_k(pool: &[SyntheticExample], k: usize) -> Result<(), SelectionError> {
    if k > pool.len() {
        return Err(SelectionError::KTooLarge { k, pool: pool.len() });
    }
    Ok(())
}

fn scores(pool: &[SyntheticExample]) -> Result<Vec<f64>, SelectionError> {
    pool.iter()
        .map(|e| e.score.ok_or(SelectionError::UnscoredPool(e.id())))
        .collect()
}

fn finish(
    pool: &[SyntheticExample],
    picked: Vec<usize>,
    strategy: SelectionStrategy,
) -> SelectionResult {
    SelectionResult {
        per_msd_counts: MsdHistogram::from_msds(picked.iter().map(|&i| &pool[i].triple.msd)),
        selected_ids: picked.iter().map(|&i| pool[i].id()).collect(),
        strategy,
    }
}

/// Pool indices grouped by canonical MSD, each group in pool order.
fn by_msd(pool: &[SyntheticExample]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in pool.iter().enumerate() {
        groups.entry(e.triple.msd.canonical()).or_default().push(i);
    }
    groups
}

/// `p(T)^alpha` per group, `p` taken over the full pool.
fn q_weights(groups: &BTreeMap<String, Vec<usize>>, total: usize, alpha: f64) -> Vec<f64> {
    groups
        .values()
        .map(|g| (g.len() as f64 / total as f64).powf(alpha))
        .collect()
}

/// Index of a group with remaining candidates, drawn proportionally to
/// `weights` restricted to those groups.
fn draw_group<R: Rng>(rng: &mut R, weights: &[f64], remaining: &[usize]) -> usize {
    let total: f64 = weights
        .iter()
        .zip(remaining)
        .filter(|(_, &r)| r > 0)
        .map(|(w, _)| w)
        .sum();
    let mut target = rng.gen::<f64>() * total;
    let mut last = None;
    for (g, (&w, &r)) in weights.iter().zip(remaining).enumerate() {
        if r == 0 {
            continue;
        }
        last = Some(g);
        if target < w {
            return g;
        }
        target -= w;
    }
    last.expect("some group has candidates")
}

/// The exact `q_alpha` over the MSDs of `pool`.
pub fn q_alpha(pool: &[SyntheticExample], alpha: f64) -> BTreeMap<String, f64> {
    let groups = by_msd(pool);
    let w = q_weights(&groups, pool.len(), alpha);
    let z: f64 = w.iter().sum();
    groups.keys().cloned().zip(w.into_iter().map(|x| x / z)).collect()
}

pub fn select_random(
    pool: &[SyntheticExample],
    k: usize,
    seed: u64,
) -> Result<SelectionResult, SelectionError> {
    check_k(pool, k)?;
    let mut rng = seeds::rng(seed);
    let picked = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
    Ok(finish(
        pool,
        picked,
        SelectionStrategy::new(StrategyKind::Random, k, seed),
    ))
}

pub fn select_templatic(
    pool: &[SyntheticExample],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<SelectionResult, SelectionError> {
    check_k(pool, k)?;
    if !alpha.is_finite() {
        return Err(SelectionError::InvalidAlpha);
    }
    let grouped = by_msd(pool);
    let weights = q_weights(&grouped, pool.len(), alpha);
    let mut groups: Vec<Vec<usize>> = grouped.into_values().collect();
    let mut remaining: Vec<usize> = groups.iter().map(Vec::len).collect();
    let mut rng = seeds::rng(seed);
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let g = draw_group(&mut rng, &weights, &remaining);
        let j = rng.gen_range(0..groups[g].len());
        picked.push(groups[g].swap_remove(j));
        remaining[g] -= 1;
    }
    let kind = if alpha == 1.0 { StrategyKind::Ume } else { StrategyKind::Umt };
    Ok(finish(
        pool,
        picked,
        SelectionStrategy::new(kind, k, seed).with_alpha(alpha),
    ))
}

fn by_score<'a>(
    scores: &'a [f64],
    pool: &'a [SyntheticExample],
    direction: Direction,
) -> impl Fn(&usize, &usize) -> Ordering + 'a {
    move |&a, &b| {
        let primary = match direction {
            Direction::Highest => scores[b].total_cmp(&scores[a]),
            Direction::Lowest => scores[a].total_cmp(&scores[b]),
        };
        primary.then_with(|| pool[a].id().cmp(&pool[b].id()))
    }
}

/// Exact top-k (`Highest`) or bottom-k (`Lowest`) by score.
pub fn select_by_loss(
    pool: &[SyntheticExample],
    k: usize,
    direction: Direction,
) -> Result<SelectionResult, SelectionError> {
    let s = scores(pool)?;
    check_k(pool, k)?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(by_score(&s, pool, direction));
    order.truncate(k);
    let kind = match direction {
        Direction::Highest => StrategyKind::HighLoss,
        Direction::Lowest => StrategyKind::LowLoss,
    };
    Ok(finish(pool, order, SelectionStrategy::new(kind, k, 0)))
}

/// Draw an MSD from `q_alpha`, take its highest-scoring remaining example.
pub fn select_hybrid(
    pool: &[SyntheticExample],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<SelectionResult, SelectionError> {
    let s = scores(pool)?;
    check_k(pool, k)?;
    if !alpha.is_finite() {
        return Err(SelectionError::InvalidAlpha);
    }
    let groups = by_msd(pool);
    let weights = q_weights(&groups, pool.len(), alpha);
    let mut ranked: Vec<Vec<usize>> = groups.into_values().collect();
    for g in &mut ranked {
        g.sort_by(by_score(&s, pool, Direction::Highest));
    }
    let mut next = vec![0usize; ranked.len()];
    let mut remaining: Vec<usize> = ranked.iter().map(Vec::len).collect();
    let mut rng = seeds::rng(seed);
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let g = draw_group(&mut rng, &weights, &remaining);
        picked.push(ranked[g][next[g]]);
        next[g] += 1;
        remaining[g] -= 1;
    }
    let kind = if alpha == 1.0 { StrategyKind::UmeLoss } else { StrategyKind::UmtLoss };
    Ok(finish(
        pool,
        picked,
        SelectionStrategy::new(kind, k, seed).with_alpha(alpha),
    ))
}

/// Runs the strategy named by `strategy`.
pub fn select(
    pool: &[SyntheticExample],
    strategy: &SelectionStrategy,
) -> Result<SelectionResult, SelectionError> {
    let SelectionStrategy { kind, k, alpha, seed } = *strategy;
    let mut result = match kind {
        StrategyKind::Random => select_random(pool, k, seed)?,
        StrategyKind::Umt | StrategyKind::Ume => select_templatic(pool, k, alpha, seed)?,
        StrategyKind::HighLoss => select_by_loss(pool, k, Direction::Highest)?,
        StrategyKind::LowLoss => select_by_loss(pool, k, Direction::Lowest)?,
        StrategyKind::UmtLoss | StrategyKind::UmeLoss => select_hybrid(pool, k, alpha, seed)?,
    };
    result.strategy = strategy.clone();
    Ok(result)
}

/// Gold triples followed by the selected synthetic triples, renumbered,
/// for handing to a trainer.
pub fn merge_for_training(
    gold: &Dataset,
    pool: &[SyntheticExample],
    selection: &SelectionResult,
) -> Result<Dataset, SelectionError> {
    let by_id: BTreeMap<TripleId, &SyntheticExample> = pool.iter().map(|e| (e.id(), e)).collect();
    let mut triples: Vec<InflectionTriple> = gold.triples().to_vec();
    for id in &selection.selected_ids {
        let e = by_id.get(id).ok_or(SelectionError::UnknownId(*id))?;
        triples.push(e.triple.clone());
    }
    for (i, t) in triples.iter_mut().enumerate() {
        t.id = TripleId(i as u64);
    }
    Ok(Dataset::new(format!("{}+syn", gold.name()), triples).expect("renumbered ids are unique"))
}
