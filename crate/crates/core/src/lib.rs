//! Query performance prediction for query-by-example image retrieval.
//!
//! The crate works on precomputed image embeddings: it ranks a collection
//! for each query image, measures ground-truth effectiveness (AP, P@k) from
//! relevance judgments, computes pre- and post-retrieval performance
//! predictors, trains a supervised SVR meta-predictor, and scores every
//! predictor by Pearson and Kendall tau-b correlation with significance
//! tests.
//!
//! ```no_run
//! use iqpp::pipeline::{run, Config, Stage};
//!
//! let config = Config::from_path("bench.json")?;
//! let report = run(&config, Stage::Evaluate)?;
//! # Ok::<(), iqpp::Error>(())
//! ```

pub mod error;
pub mod eval;
pub mod io;
pub mod meta;
pub mod model;
mod par;
pub mod pipeline;
pub mod predictors;
pub mod retrieval;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    EffectivenessTable, EmbeddingStore, Hit, Label, Measure, Orientation, PredictorOutput, Qrels,
    RankedList, RetrievalConfig, Similarity,
};
