//! Stem-corruption data augmentation for morphological inflection.
//!
//! The crate covers the whole augmentation workflow: parsing UniMorph data
//! ([`corpus`]), finding stems ([`alignment`]), generating corrupted
//! examples ([`stemcorrupt`]), scoring them ([`scoring`]), choosing subsets
//! ([`selection`]), building lemma-disjoint test sets ([`splitgen`]) and
//! diagnostics ([`report`]). [`milab`] runs information-theoretic checks of
//! the augmentation on toy concatenative grammars.

pub mod alignment;
pub mod corpus;
pub mod seeds;
pub mod stemcorrupt;
pub mod scoring;
pub mod selection;
pub mod splitgen;
pub mod report;
pub mod milab;
pub mod cli;
