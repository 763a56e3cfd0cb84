//! Dataset-quality algorithms for extractive machine reading comprehension.
//!
//! Everything in this crate is pure and allocation-only (`no_std` + `alloc`):
//! corpus cleaning and chunking, label validation and splitting, similarity
//! primitives, negative-context mining, question-variant generation, the
//! evaluation harness arithmetic, report rendering, and the answer-review
//! queue state machine. File formats, the HTTP annotation service, and the
//! command line live in the `mrc-enhance` crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

pub mod analysis;
pub mod augment;
pub mod clock;
pub mod corpus;
pub mod harness;
pub mod negatives;
pub mod review;
pub mod simscore;
pub mod text;

pub use augment::{Method, PivotLanguage, TrainingSetVariant, VariantParams};
pub use clock::{Clock, FixedClock};
pub use corpus::{CleaningRules, DatasetSplit, Passage, QALabel};
pub use harness::{Hyperparams, ScoreLedger};
pub use simscore::{JaccardScorer, SimilarityScorer, TokenEmbedder};
