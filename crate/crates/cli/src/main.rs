use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iqpp::pipeline::{emit_matrices, run, sweep, Config, Stage, StageError, SweepParam};
use iqpp::synth::{generate, write_fixture, SynthParams};
use iqpp::{Error, Measure};

#[derive(Parser)]
#[command(name = "qpp", version, about = "Query performance prediction over image embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; `IQPP_*` environment variables override its keys.
    #[arg(long, default_value = "bench.json")]
    config: PathBuf,
    /// Replaces `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check the config and every input file.
    Validate(Common),
    /// Write top-k ranked lists for every system.
    Retrieve(Common),
    /// Write ground-truth effectiveness tables.
    GroundTruth {
        #[command(flatten)]
        common: Common,
        /// Measure to compute, e.g. `ap` or `p@100`; repeatable.
        #[arg(long)]
        measure: Vec<Measure>,
        /// Retrieval cutoff for every system.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Write predictor score files.
    Predict(Common),
    /// Train the cross-validated meta-regressor.
    TrainMeta(Common),
    /// Correlate predictors with ground truth and write the report.
    Evaluate(Common),
    /// Every stage end to end.
    Run(Common),
    /// One full run per hyperparameter value plus a summary table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `K` (k-means clusters), `m` (dimensions removed per step) or `l` (steps).
        #[arg(long)]
        param: SweepParam,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long)]
        step: usize,
    },
    /// Write pairwise similarity matrices of every top-k list.
    EmitMatrices(Common),
    /// Generate a clustered synthetic benchmark and its config.
    Synth {
        /// Directory to write into.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthParams::default().clusters)]
        clusters: usize,
        #[arg(long, default_value_t = SynthParams::default().docs)]
        docs: usize,
        #[arg(long, default_value_t = SynthParams::default().queries)]
        queries: usize,
        #[arg(long, default_value_t = SynthParams::default().dim)]
        dim: usize,
        #[arg(long, default_value_t = SynthParams::default().spread)]
        spread: f64,
        #[arg(long, default_value_t = SynthParams::default().max_shift)]
        max_shift: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Failure {
    stage: String,
    error: Error,
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure { stage: e.stage.name().to_string(), error: e.error }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        let early = self.stage == Stage::Config.name() || self.stage == Stage::Ingest.name();
        match self.error {
            Error::Io { .. } if !early => 1,
            _ => 2,
        }
    }
}

fn load(common: &Common) -> Result<Config, Failure> {
    let mut config = Config::from_path(&common.config).map_err(|error| Failure {
        stage: Stage::Config.name().to_string(),
        error,
    })?;
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    if common.threads.is_some() {
        config.threads = common.threads;
    }
    Ok(config)
}

fn stage_run(common: &Common, until: Stage) -> Result<(), Failure> {
    let config = load(common)?;
    finish(&config, run(&config, until)?)
}

fn finish(config: &Config, summary: iqpp::pipeline::RunSummary) -> Result<(), Failure> {
    for a in &summary.advisories {
        eprintln!("{}", serde_json::json!({"advisory": a.code, "stage": a.stage, "system": a.system, "detail": a.detail}));
    }
    println!("config_hash={}", summary.config_hash);
    println!("output_dir={}", config.output_dir.display());
    if summary.report.is_some() {
        println!("report={}", config.output_dir.join("report.csv").display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(c) => {
            let config = load(&c)?;
            run(&config, Stage::Ingest)?;
            println!("ok config_hash={}", config.hash());
            Ok(())
        }
        Command::Retrieve(c) => stage_run(&c, Stage::Retrieve),
        Command::GroundTruth { common, measure, k } => {
            let mut config = load(&common)?;
            if !measure.is_empty() {
                config.measures = measure;
            }
            if let Some(k) = k {
                config.systems.iter_mut().for_each(|s| s.k = k);
            }
            let summary = run(&config, Stage::GroundTruth)?;
            for s in &config.systems {
                for m in &config.measures {
                    let p = config.output_dir.join("effectiveness").join(format!("{}.{m}.tsv", s.name));
                    println!("{}", p.display());
                }
            }
            finish(&config, summary)
        }
        Command::Predict(c) => stage_run(&c, Stage::Predict),
        Command::TrainMeta(c) => stage_run(&c, Stage::TrainMeta),
        Command::Evaluate(c) | Command::Run(c) => stage_run(&c, Stage::Evaluate),
        Command::Sweep { common, param, from, to, step } => {
            let config = load(&common)?;
            let result = sweep(&config, param, from, to, step)?;
            for (v, s) in &result.runs {
                println!("{param}={v} {}", s.output_dir.join("report.csv").display());
            }
            println!("summary={}", result.summary_path.display());
            Ok(())
        }
        Command::EmitMatrices(c) => {
            let config = load(&c)?;
            for p in emit_matrices(&config)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Synth { out, clusters, docs, queries, dim, spread, max_shift, seed } => {
            let params = SynthParams { clusters, docs, queries, dim, spread, max_shift, seed };
            let fail = |error| Failure { stage: "synth".to_string(), error };
            let corpus = generate(&params).map_err(fail)?;
            let path = write_fixture(&corpus, &params, &out).map_err(fail)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn report(stage: &str, code: &str, message: &str) {
    eprintln!("{}", serde_json::json!({"stage": stage, "code": code, "message": message}));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    panic::set_hook(Box::new(|_| {}));
    match panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            report(&f.stage, f.error.code(), &f.error.to_string());
            ExitCode::from(f.exit_code())
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            report("internal", "INTERNAL", &message);
            ExitCode::from(1)
        }
    }
}
