//! Lemma-disjoint evaluation splits.
//!
//! The test set is every triple of the full data whose lemma does not occur
//! in the training data. Lemmas are compared after NFC normalization.

use std::collections::BTreeSet;

use unicode_normalization::UnicodeNormalization;

use crate::corpus::Dataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitWarning {
    /// Every triple of the full data shares a lemma with training.
    EmptyTest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// NFC-normalized training lemmas.
    pub train_lemmas: BTreeSet<String>,
    pub warning: Option<SplitWarning>,
}

pub fn normalize_lemma(lemma: &str) -> String {
    lemma.nfc().collect()
}

pub fn lemma_split(full: &Dataset, train: &Dataset) -> LemmaSplit {
    let train_lemmas: BTreeSet<String> = train.iter().map(|t| normalize_lemma(&t.lemma)).collect();
    let kept = full
        .iter()
        .filter(|t| !train_lemmas.contains(&normalize_lemma(&t.lemma)))
        .cloned()
        .collect();
    let test = Dataset::new(format!("{}-test", full.name()), kept)
        .expect("subset of a dataset keeps unique ids");
    LemmaSplit {
        warning: (test.is_empty() && !full.is_empty()).then_some(SplitWarning::EmptyTest),
        train: train.clone(),
        test,
        train_lemmas,
    }
}
