//! End-to-end benchmark runs driven by a [`Config`]:
//! ingest → retrieve → ground-truth → predict → train-meta → evaluate.
//!
//! Every stage writes its artifacts under the configured output directory,
//! each tagged with the config hash and seed. A run up to a later stage
//! recomputes the earlier ones, so any subcommand works from inputs alone.

pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

pub use config::{
    ClassHeadConfig, Config, ExternalScores, FeatureRemovalConfig, KMeansConfig, MetaConfig,
    SystemConfig, ENV_PREFIX,
};

use crate::error::{Error, Result};
use crate::eval::{build_report, plot_data, EvaluationReport, SupervisedOutput, SystemBlock};
use crate::io::{self, DetectionFile, Meta};
use crate::meta::{cross_validate, make_folds, FeatureTable, TrainParams};
use crate::model::{
    EffectivenessTable, EmbeddingStore, Measure, Orientation, PredictorOutput, Qrels, RankedList,
    RetrievalConfig,
};
use crate::par;
use crate::predictors::{self, names};
use crate::retrieval::{self, rank, rank_queries, similarity_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Config,
    Ingest,
    Retrieve,
    GroundTruth,
    Predict,
    TrainMeta,
    Evaluate,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Retrieve => "retrieve",
            Stage::GroundTruth => "ground-truth",
            Stage::Predict => "predict",
            Stage::TrainMeta => "train-meta",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An engine error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<StageError> for Error {
    fn from(e: StageError) -> Self {
        e.error
    }
}

fn at(stage: Stage) -> impl Fn(Error) -> StageError {
    move |error| StageError { stage, error }
}

/// Non-fatal conditions worth a look, written to `advisories.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Advisory {
    pub stage: &'static str,
    pub code: &'static str,
    pub system: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub report: Option<EvaluationReport>,
    pub advisories: Vec<Advisory>,
}

struct SystemData {
    cfg: config::SystemConfig,
    collection: EmbeddingStore,
    queries: EmbeddingStore,
    qrels: Qrels,
    external: Vec<PredictorOutput>,
}

struct Ctx<'a> {
    config: &'a Config,
    out: &'a Path,
    meta: Meta,
    advisories: Vec<Advisory>,
}

impl Ctx<'_> {
    fn meta_for(&self, system: &str) -> Meta {
        self.meta.clone().with("system", system)
    }

    fn advise(&mut self, stage: Stage, code: &'static str, system: &str, detail: String) {
        self.advisories.push(Advisory {
            stage: stage.name(),
            code,
            system: system.to_string(),
            detail,
        });
    }
}

/// Runs every stage up to and including `until`.
pub fn run(config: &Config, until: Stage) -> Result<RunSummary, StageError> {
    with_threads(config.threads, || run_inner(config, until))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    f()
}

fn run_inner(config: &Config, until: Stage) -> Result<RunSummary, StageError> {
    config.validate().map_err(at(Stage::Config))?;
    let hash = config.hash();
    let mut ctx = Ctx {
        config,
        out: &config.output_dir,
        meta: Meta::new()
            .with("config_hash", &hash)
            .with("seed", config.seed),
        advisories: Vec::new(),
    };
    let (systems, detections) = ingest(&ctx).map_err(at(Stage::Ingest))?;
    let mut report = None;
    if until >= Stage::Retrieve {
        let mut blocks = Vec::with_capacity(systems.len());
        let mut ranked_all = Vec::with_capacity(systems.len());
        for s in &systems {
            let ranked = retrieve(&ctx, s).map_err(at(Stage::Retrieve))?;
            ranked_all.push(ranked);
        }
        if until >= Stage::GroundTruth {
            for (s, ranked) in systems.iter().zip(&ranked_all) {
                let tables = ground_truth(&ctx, s).map_err(at(Stage::GroundTruth))?;
                let predictors = if until >= Stage::Predict {
                    predict(&mut ctx, s, ranked, detections.as_ref()).map_err(at(Stage::Predict))?
                } else {
                    Vec::new()
                };
                blocks.push(SystemBlock {
                    system: s.cfg.name.clone(),
                    tables,
                    predictors,
                    supervised: Vec::new(),
                });
            }
        }
        if until >= Stage::TrainMeta && config.wants(names::META_REGRESSOR) {
            train_meta(&mut ctx, &systems, &mut blocks).map_err(at(Stage::TrainMeta))?;
        }
        if until >= Stage::Evaluate {
            report = Some(evaluate(&ctx, &blocks).map_err(at(Stage::Evaluate))?);
        }
    }
    let mut json = serde_json::to_string_pretty(&ctx.advisories).expect("advisories serialize");
    json.push('\n');
    io::write_file(&ctx.out.join("advisories.json"), json).map_err(at(until))?;
    Ok(RunSummary {
        config_hash: hash,
        output_dir: config.output_dir.clone(),
        report,
        advisories: ctx.advisories,
    })
}

fn ingest(ctx: &Ctx) -> Result<(Vec<SystemData>, Option<DetectionFile>)> {
    let config = ctx.config;
    let detections = config
        .detections
        .as_ref()
        .map(io::load_detections)
        .transpose()?;
    let mut out = Vec::with_capacity(config.systems.len());
    for cfg in &config.systems {
        let collection = io::load_embeddings(&cfg.collection)?;
        let queries = io::load_embeddings(&cfg.queries)?;
        if queries.dim() != collection.dim() {
            return Err(Error::DimensionMismatch {
                expected: collection.dim(),
                got: queries.dim(),
            });
        }
        let qrels = io::load_qrels(&config.qrels, &collection)?;
        let query_ids: Vec<String> = qrels.queries().map(str::to_string).collect();
        if let Some(q) = query_ids.iter().find(|q| queries.get(q).is_none()) {
            return Err(Error::UnknownQueryId(q.clone()));
        }
        if let Some(d) = &detections {
            if config.wants(names::OBJECTS_OVER_AREA) {
                if let Some(q) = query_ids.iter().find(|q| d.get(q).is_none()) {
                    return Err(Error::MissingDetections(q.clone()));
                }
            }
        }
        let mut external = Vec::new();
        for e in &config.external_scores {
            if e.system.as_ref().is_some_and(|s| s != &cfg.name) {
                continue;
            }
            let p = predictors::register_external_predictor(&e.path, &query_ids)?;
            if names::BUILTIN.contains(&p.name.as_str()) || external.iter().any(|x: &PredictorOutput| x.name == p.name) {
                return Err(Error::Config(format!("duplicate predictor name `{}`", p.name)));
            }
            external.push(p);
        }
        out.push(SystemData {
            cfg: cfg.clone(),
            collection,
            queries,
            qrels,
            external,
        });
    }
    Ok((out, detections))
}

fn query_ids(s: &SystemData) -> Vec<String> {
    s.qrels.queries().map(str::to_string).collect()
}

fn retrieval_config(s: &SystemData, k: usize) -> Result<RetrievalConfig> {
    RetrievalConfig::new(s.cfg.similarity, k)
}

fn retrieve(ctx: &Ctx, s: &SystemData) -> Result<Vec<RankedList>> {
    let cfg = retrieval_config(s, s.cfg.k)?;
    let ranked = rank_queries(&query_ids(s), &s.queries, &s.collection, &cfg, &s.qrels)?;
    io::write_ranked_lists(
        &ranked,
        &s.collection,
        &ctx.meta_for(&s.cfg.name).with("k", cfg.k).with("similarity", cfg.similarity),
        ctx.out.join("ranked").join(format!("{}.tsv", s.cfg.name)),
    )?;
    Ok(ranked)
}

/// Effectiveness from a ranking of the whole (non-ignored) collection.
fn ground_truth(ctx: &Ctx, s: &SystemData) -> Result<Vec<EffectivenessTable>> {
    let tables = effectiveness_tables(s, &ctx.config.measures)?;
    for t in &tables {
        io::write_effectiveness(
            t,
            &ctx.meta_for(&s.cfg.name),
            ctx.out
                .join("effectiveness")
                .join(format!("{}.{}.tsv", s.cfg.name, t.measure)),
        )?;
    }
    Ok(tables)
}

fn effectiveness_tables(s: &SystemData, measures: &[Measure]) -> Result<Vec<EffectivenessTable>> {
    let cfg = retrieval_config(s, s.collection.len())?;
    let ids = query_ids(s);
    let per_query = par::map(&ids, |q| -> Result<Vec<f64>> {
        let ignore = s.qrels.ignored_rows(q, &s.collection);
        let query = s.queries.get(q).ok_or_else(|| Error::UnknownQueryId(q.clone()))?;
        let full = rank(q, query, &s.collection, &cfg, &ignore)?;
        measures
            .iter()
            .map(|m| match *m {
                Measure::AveragePrecision => retrieval::average_precision(&full, &s.qrels, &s.collection),
                Measure::PrecisionAt(k) => retrieval::precision_at_k(&full, &s.qrels, &s.collection, k),
            })
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    measures
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let values = ids.iter().zip(&per_query).map(|(q, v)| (q.clone(), v[j])).collect();
            EffectivenessTable::new(m, values)
        })
        .collect()
}

fn output(
    name: &str,
    orientation: Orientation,
    ids: &[String],
    values: Vec<Result<f64>>,
) -> Result<PredictorOutput> {
    let scores = ids
        .iter()
        .cloned()
        .zip(values)
        .map(|(q, v)| v.map(|v| (q, v)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    PredictorOutput::new(name, orientation, scores)
}

fn unit(v: &[f32], id: &str) -> Result<Vec<f32>> {
    let n = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroVector(id.to_string()));
    }
    Ok(v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

fn predict(
    ctx: &mut Ctx,
    s: &SystemData,
    ranked: &[RankedList],
    detections: Option<&DetectionFile>,
) -> Result<Vec<PredictorOutput>> {
    use crate::model::Similarity;
    let config = ctx.config;
    let ids = query_ids(s);
    let name = s.cfg.name.as_str();
    let mut outputs = Vec::new();

    if config.wants(names::OBJECTS_OVER_AREA) {
        match detections {
            Some(dets) => {
                let values = ids.iter().map(|q| predictors::objects_over_area(dets, q)).collect();
                outputs.push(output(names::OBJECTS_OVER_AREA, Orientation::HigherIsHarder, &ids, values)?);
            }
            None => ctx.advise(
                Stage::Predict,
                "MISSING_DETECTIONS",
                name,
                format!("no detections file; `{}` skipped", names::OBJECTS_OVER_AREA),
            ),
        }
    }

    let wants_head = config.wants(names::CLASS_HEAD_DISPERSION) || config.wants(names::CLASS_HEAD_KURTOSIS);
    if config.wants(names::KMEANS_DENSITY) || wants_head {
        let cosine = s.cfg.similarity == Similarity::Cosine;
        let space = if cosine { s.collection.to_unit_norm()? } else { s.collection.clone() };
        let qvecs = ids
            .iter()
            .map(|q| {
                let v = s.queries.get(q).expect("checked at ingest");
                if cosine { unit(v, q) } else { Ok(v.to_vec()) }
            })
            .collect::<Result<Vec<_>>>()?;
        let km = predictors::fit_kmeans(
            &space,
            &predictors::KMeansParams {
                clusters: config.kmeans.clusters,
                max_iterations: config.kmeans.max_iterations,
                seed: config.seed,
                ..Default::default()
            },
        )?;
        km.save(&ctx.meta_for(name), ctx.out.join("models").join(name).join("kmeans.bin"))?;
        if config.wants(names::KMEANS_DENSITY) {
            let values = par::map(&qvecs, |v| predictors::cluster_density(&km, v));
            outputs.push(output(names::KMEANS_DENSITY, Orientation::HigherIsHarder, &ids, values)?);
        }
        if wants_head {
            let head = predictors::train_class_head(
                &space,
                &km.assignments,
                km.clusters,
                &predictors::ClassHeadParams {
                    epochs: config.class_head.epochs,
                    learning_rate: config.class_head.learning_rate,
                    batch_size: config.class_head.batch_size,
                    seed: config.seed,
                },
            )?;
            head.save(&ctx.meta_for(name), ctx.out.join("models").join(name).join("class_head.bin"))?;
            if config.wants(names::CLASS_HEAD_DISPERSION) {
                let values = par::map(&qvecs, |v| predictors::class_head_dispersion(&head, v));
                outputs.push(output(names::CLASS_HEAD_DISPERSION, Orientation::HigherIsBetter, &ids, values)?);
            }
            if config.wants(names::CLASS_HEAD_KURTOSIS) {
                let values = par::map(&qvecs, |v| predictors::class_head_kurtosis(&head, v));
                outputs.push(output(names::CLASS_HEAD_KURTOSIS, Orientation::HigherIsBetter, &ids, values)?);
            }
        }
    }

    let cfg = retrieval_config(s, s.cfg.k)?;
    if config.wants(names::SCORE_VARIANCE) {
        let values = par::map(ranked, predictors::score_variance);
        outputs.push(output(names::SCORE_VARIANCE, Orientation::HigherIsBetter, &ids, values)?);
    }
    if config.wants(names::ADAPTED_QUERY_FEEDBACK) {
        let values = par::map(ranked, |r| {
            let ignore = s.qrels.ignored_rows(&r.query_id, &s.collection);
            predictors::adapted_query_feedback(r, &s.collection, &cfg, &ignore)
        });
        outputs.push(output(names::ADAPTED_QUERY_FEEDBACK, Orientation::HigherIsBetter, &ids, values)?);
    }
    if config.wants(names::FEATURE_REMOVAL) {
        let params = predictors::FeatureRemovalParams {
            per_step: config.feature_removal.m,
            steps: config.feature_removal.l,
        };
        let runs = par::map(&ids, |q| {
            let ignore = s.qrels.ignored_rows(q, &s.collection);
            let v = s.queries.get(q).expect("checked at ingest");
            predictors::iterative_feature_removal(q, v, &s.collection, &cfg, &ignore, &params)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let exhausted = runs.iter().filter(|r| r.exhausted).count();
        if exhausted > 0 {
            ctx.advise(
                Stage::Predict,
                "DIMENSION_EXHAUSTED",
                name,
                format!(
                    "{exhausted} of {} queries ran out of dimensions before {} removal steps of {}",
                    ids.len(),
                    params.steps,
                    params.per_step
                ),
            );
        }
        let values = runs.into_iter().map(|r| Ok(r.score)).collect();
        outputs.push(output(names::FEATURE_REMOVAL, Orientation::HigherIsBetter, &ids, values)?);
    }
    if config.wants(names::EMBEDDING_VARIANCE) {
        let values = par::map(ranked, |r| predictors::embedding_variance(r, &s.collection));
        outputs.push(output(names::EMBEDDING_VARIANCE, Orientation::HigherIsBetter, &ids, values)?);
    }

    for p in &outputs {
        io::write_scores(p, &ctx.meta_for(name), ctx.out.join("scores").join(name).join(format!("{}.tsv", p.name)))?;
    }
    outputs.extend(s.external.iter().cloned());
    Ok(outputs)
}

fn train_meta(ctx: &mut Ctx, systems: &[SystemData], blocks: &mut [SystemBlock]) -> Result<()> {
    let config = ctx.config;
    let ids = query_ids(&systems[0]);
    let folds = match &config.meta.folds_file {
        Some(path) => {
            let f = io::load_folds(path)?;
            if f.keys().ne(ids.iter()) {
                return Err(Error::InvalidArgument(format!(
                    "fold file {} does not cover exactly the evaluated queries",
                    path.display()
                )));
            }
            f
        }
        None => make_folds(&ids, config.meta.folds, config.seed)?,
    };
    io::write_folds(&folds, &ctx.meta, ctx.out.join("folds.tsv"))?;
    let params = TrainParams {
        grid: config.meta.grid.clone(),
        inner_folds: config.meta.inner_folds,
        seed: config.seed,
    };
    for block in blocks.iter_mut() {
        let name = block.system.clone();
        let features: Vec<&PredictorOutput> = block.predictors.iter().collect();
        if features.is_empty() {
            return Err(Error::Config(format!(
                "`{}` needs at least one other predictor",
                names::META_REGRESSOR
            )));
        }
        let table = FeatureTable::from_predictors(&features, &ids)?;
        for target in &block.tables {
            let cv = cross_validate(&table, target, &folds, &params)?;
            let degenerate = cv.degenerate_folds();
            if !degenerate.is_empty() {
                ctx.advise(
                    Stage::TrainMeta,
                    "DEGENERATE_TARGETS",
                    &name,
                    format!("{}: folds {degenerate:?} had constant training targets", target.measure),
                );
            }
            let meta = ctx.meta_for(&name).with("measure", target.measure);
            for m in &cv.models {
                m.save(
                    &meta,
                    ctx.out
                        .join("models")
                        .join(&name)
                        .join(format!("meta.{}.fold{}.bin", target.measure, m.fold)),
                )?;
            }
            let out = PredictorOutput::new(names::META_REGRESSOR, Orientation::HigherIsBetter, cv.predictions)?;
            io::write_scores(
                &out,
                &meta,
                ctx.out
                    .join("scores")
                    .join(&name)
                    .join(format!("{}.{}.tsv", names::META_REGRESSOR, target.measure)),
            )?;
            block.supervised.push(SupervisedOutput {
                output: out,
                measure: target.measure,
                folds: folds.clone(),
            });
        }
    }
    Ok(())
}

fn evaluate(ctx: &Ctx, blocks: &[SystemBlock]) -> Result<EvaluationReport> {
    let report = build_report(blocks, ctx.config.alpha, ctx.meta.0.clone())?;
    io::write_report(&report, ctx.out.join("report.json"))?;
    io::write_report_csv(&report, ctx.out.join("report.csv"))?;
    io::write_plot_data(&plot_data(blocks)?, &ctx.meta, ctx.out.join("plotdata"))?;
    Ok(report)
}

/// Writes `matrices/<system>.bin`: the pairwise similarity matrix of every
/// query's top-k list. Returns the files written.
pub fn emit_matrices(config: &Config) -> Result<Vec<PathBuf>, StageError> {
    with_threads(config.threads, || {
        config.validate().map_err(at(Stage::Config))?;
        let ctx = Ctx {
            config,
            out: &config.output_dir,
            meta: Meta::new()
                .with("config_hash", config.hash())
                .with("seed", config.seed),
            advisories: Vec::new(),
        };
        let (systems, _) = ingest(&ctx).map_err(at(Stage::Ingest))?;
        let mut written = Vec::new();
        for s in &systems {
            let ranked = retrieve(&ctx, s).map_err(at(Stage::Retrieve))?;
            let matrices = par::map(&ranked, |r| similarity_matrix(r, &s.collection, s.cfg.similarity))
                .into_iter()
                .collect::<Result<Vec<_>>>()
                .map_err(at(Stage::Retrieve))?;
            let path = config.output_dir.join("matrices").join(format!("{}.bin", s.cfg.name));
            io::write_similarity_matrices(&matrices, &ctx.meta_for(&s.cfg.name), &path)
                .map_err(at(Stage::Retrieve))?;
            written.push(path);
        }
        Ok(written)
    })
}

/// Hyperparameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// k-means cluster count.
    K,
    /// Dimensions removed per feature-removal step.
    M,
    /// Feature-removal steps.
    L,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::K => "K",
            SweepParam::M => "m",
            SweepParam::L => "l",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(SweepParam::K),
            "m" | "M" => Ok(SweepParam::M),
            "l" | "L" => Ok(SweepParam::L),
            other => Err(Error::InvalidArgument(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// `from, from + step, ...` up to and including `to`.
pub fn sweep_values(from: usize, to: usize, step: usize) -> Result<Vec<usize>> {
    if step == 0 || from > to {
        return Err(Error::InvalidRange(format!("{from}..={to} step {step} is empty")));
    }
    Ok((from..=to).step_by(step).collect())
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub param: SweepParam,
    pub runs: Vec<(usize, RunSummary)>,
    pub summary_path: PathBuf,
}

/// One full run per value, each in `<output>/sweep/<param>_<value>/`, plus
/// `<output>/sweep/<param>_summary.csv` collecting every report row.
pub fn sweep(
    config: &Config,
    param: SweepParam,
    from: usize,
    to: usize,
    step: usize,
) -> Result<SweepResult, StageError> {
    let values = sweep_values(from, to, step).map_err(at(Stage::Config))?;
    let root = config.output_dir.join("sweep");
    let mut runs = Vec::with_capacity(values.len());
    let mut csv = String::new();
    let base_meta = Meta::new()
        .with("config_hash", config.hash())
        .with("seed", config.seed)
        .with("sweep", param);
    base_meta.write_header(&mut csv);
    csv.push_str("value,config_hash,predictor,system,measure,pearson,kendall,significant,significant_kendall\n");
    for v in values {
        let mut c = config.clone();
        match param {
            SweepParam::K => c.kmeans.clusters = v,
            SweepParam::M => c.feature_removal.m = v,
            SweepParam::L => c.feature_removal.l = v,
        }
        c.output_dir = root.join(format!("{param}_{v}"));
        let summary = run(&c, Stage::Evaluate)?;
        let report = summary.report.as_ref().expect("evaluate produces a report");
        for r in &report.rows {
            let f = |x: Option<f64>| x.map_or_else(|| io::UNDEFINED.to_string(), |x| format!("{x:?}"));
            csv.push_str(&format!(
                "{v},{},{},{},{},{},{},{},{}\n",
                summary.config_hash,
                r.predictor,
                r.system,
                r.measure,
                f(r.pearson),
                f(r.kendall),
                r.significant,
                r.significant_kendall
            ));
        }
        runs.push((v, summary));
    }
    let summary_path = root.join(format!("{param}_summary.csv"));
    io::write_file(&summary_path, csv).map_err(at(Stage::Evaluate))?;
    Ok(SweepResult {
        param,
        runs,
        summary_path,
    })
}
