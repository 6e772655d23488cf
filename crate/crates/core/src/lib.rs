//! Core algorithms for detecting, characterizing and mitigating hallucinated
//! machine translations.
//!
//! Everything in this crate is pure and `no_std` (with `alloc`): record and
//! score types, lexical metrics (tokenization, n-gram profiles, sentence-level
//! spBLEU, Pearson correlation, nearest-rank quantiles), source perturbation
//! operators, per-record detectors, threshold calibration, candidate selection
//! and fallback routing, and report aggregation. File formats, the worker pool
//! and the command line live in the `halluscope` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod calibrate;
pub mod detect;
mod error;
pub mod metrics;
pub mod perturb;
pub mod pipeline;
pub mod record;
pub mod report;

pub use error::{Error, Result};
pub use record::{
    LanguagePair, PerturbationKind, PerturbationLineage, ResourceLevel, ResourceMap, ScoreMap, TranslationRecord,
};
