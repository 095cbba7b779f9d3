//! Synthetic recommendation-data curriculum generation and a scaling-law
//! toolkit.
//!
//! The pipeline turns raw interaction logs into three training-data layers:
//! item-text alignment documents, collaborative-filtering statements mined as
//! association rules, and synthetic user histories generated by biased random
//! walks over the item graph. Companion modules mint semantic item ids by
//! residual quantization, measure corpus fidelity, fit loss scaling laws, and
//! run train-on-synthetic / train-on-real comparisons.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod seeds;
mod jsonl;

pub mod ingest;
pub mod rules;
pub mod graph;
pub mod walks;
pub mod tokenizer;
pub mod metrics;
pub mod corpus;
pub mod scaling;
pub mod eval;

pub use corpus::{CorpusDoc, DocKind, MixtureDomain, MixtureReport, MixtureSpec};
pub use error::{Error, Result};
pub use eval::{BaselineKind, EvalReport, EvalSetting, NextItemModel};
pub use graph::{EdgeSplit, ItemGraph, SplitMode, WeightSource};
pub use ingest::{Action, EventFormat, HoldoutSplit, InteractionEvent, SessionizedLog};
pub use metrics::CorpusStats;
pub use rules::{AssociationRule, RuleSet, Window};
pub use scaling::{JointScalingFit, LossCurve, PerModelFit};
pub use tokenizer::{Codebook, EmbeddingMatrix, SemanticId, SemanticIdMap};
pub use walks::{GenerationReport, StartPolicy, Walk, WalkConfig, WalkOrder};
