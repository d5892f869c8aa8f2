//! Query performance predictors.
//!
//! Pre-retrieval predictors look only at the query embedding (plus
//! collection statistics or detections); post-retrieval predictors look at
//! the ranked list the system returned.

pub mod class_head;
pub mod kmeans;
pub mod objects;
pub mod post;

use std::path::Path;

pub use class_head::{
    class_head_dispersion, class_head_kurtosis, train_class_head, ClassHead, ClassHeadParams,
};
pub use kmeans::{cluster_density, fit_kmeans, KMeansModel, KMeansParams};
pub use objects::objects_over_area;
pub use post::{
    adapted_query_feedback, embedding_variance, iterative_feature_removal, median_image,
    score_variance, FeatureRemoval, FeatureRemovalParams,
};

use crate::error::{Error, Result};
use crate::model::PredictorOutput;

/// Stable predictor names used in score files and reports.
pub mod names {
    pub const OBJECTS_OVER_AREA: &str = "objects_over_area";
    pub const KMEANS_DENSITY: &str = "kmeans_cluster_density";
    pub const CLASS_HEAD_DISPERSION: &str = "class_head_dispersion";
    pub const CLASS_HEAD_KURTOSIS: &str = "class_head_kurtosis";
    pub const SCORE_VARIANCE: &str = "score_variance";
    pub const ADAPTED_QUERY_FEEDBACK: &str = "adapted_query_feedback";
    pub const FEATURE_REMOVAL: &str = "iterative_feature_removal";
    pub const EMBEDDING_VARIANCE: &str = "embedding_variance";
    pub const META_REGRESSOR: &str = "meta_regressor";

    /// Every predictor the engine computes itself, in report order.
    pub const BUILTIN: [&str; 9] = [
        OBJECTS_OVER_AREA,
        KMEANS_DENSITY,
        CLASS_HEAD_DISPERSION,
        CLASS_HEAD_KURTOSIS,
        SCORE_VARIANCE,
        ADAPTED_QUERY_FEEDBACK,
        FEATURE_REMOVAL,
        EMBEDDING_VARIANCE,
        META_REGRESSOR,
    ];
}

/// Loads an externally computed score file (auto-encoder error, fine-tuned
/// ViT, image difficulty, correlation CNN, ...) and checks it covers exactly
/// the evaluated queries.
pub fn register_external_predictor(
    path: impl AsRef<Path>,
    queries: &[String],
) -> Result<PredictorOutput> {
    let out = crate::io::load_scores(path)?;
    if let Some(q) = queries.iter().find(|q| out.get(q).is_none()) {
        return Err(Error::MissingScores {
            predictor: out.name.clone(),
            query: q.clone(),
        });
    }
    if let Some(q) = out
        .scores()
        .keys()
        .find(|k| !queries.contains(k))
    {
        return Err(Error::UnknownQueryId(q.clone()));
    }
    Ok(out)
}
