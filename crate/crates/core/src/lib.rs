//! Corpus analysis for intergovernmental committee summary records.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`ingest`] splits plain-text transcripts into paragraphs, strips layout
//!   artefacts, tags the language and attributes a speaker.
//! * [`preprocess`] turns paragraph text into filtered Porter stem bags.
//! * [`embed`] maps paragraphs to fixed-dimension vectors, either with the
//!   built-in signed hashing provider or an external embedding service.
//! * [`topics`] clusters the vectors and extracts class-based TF-IDF keywords.
//! * [`classifier`] is the tension head trained over frozen embeddings.
//! * [`annotation`] stores expert labels, measures agreement and drives the
//!   uncertainty-sampling loop.
//! * [`store`] persists everything and answers filtered, ordered queries.
//! * [`pipeline`] ties training, scoring and active-learning rounds to a
//!   stored corpus.

pub mod annotation;
pub mod classifier;
pub mod codec;
pub mod embed;
pub mod hashing;
pub mod ingest;
pub mod pipeline;
pub mod preprocess;
pub mod store;
pub mod synthetic;
pub mod topics;

pub use ingest::{Actor, ActorKind, Language, Paragraph, ParagraphId, SessionRef};
