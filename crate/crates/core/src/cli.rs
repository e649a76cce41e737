//! Command-line front end.
//!
//! Settings resolve in three layers: built-in defaults, then command-line
//! flags, then the `--config` TOML file, which wins. Outputs land in
//! `--out-dir` under fixed file names.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::dataset::{load_csv, synth_biased, write_csv, Dataset, FeatureSchema, SynthSpec};
use crate::error::{Error, Result};
use crate::fair_training::FairnessConfig;
use crate::gbt::model_io;
use crate::pipeline::{self, PipelineConfig};
use crate::report::{read_report, render_table, to_json, ReportError};

#[derive(Debug, Parser)]
#[command(
    name = "fairgbt",
    version,
    about = "Fairness audits and penalty-tuned boosting for tabular cohorts"
)]
pub struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for fold evaluation and attribution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file whose values override flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic biased cohort and its schema.
    Synth(SynthOpts),
    /// Train the baseline and audit it on the test partition.
    Audit(AuditArgs),
    /// Audit, tune the penalty, retrain and compare.
    Mitigate(MitigateArgs),
    /// Attribution and group disparity of a saved model.
    Explain(ExplainArgs),
    /// Print the table of an existing report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOpts {
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub bias: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base name of the written files.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOpts {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Cohort label used in reports.
    #[arg(long)]
    pub cohort: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitOpts {
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Cut-off for hard predictions and accuracy.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOpts {
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_child_cover: Option<f64>,
    #[arg(long)]
    pub l2_leaf_reg: Option<f64>,
    #[arg(long = "train-seed")]
    #[serde(rename = "seed")]
    pub train_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOpts {
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub init_points: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long = "search-seed")]
    #[serde(rename = "seed")]
    pub search_seed: Option<u64>,
    /// Fixed `lambda,w1,w2,w3`; skips the search.
    #[arg(long)]
    pub theta: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub split: SplitOpts,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Clone, Args)]
pub struct MitigateArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub split: SplitOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub search: SearchOpts,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub split: SplitOpts,
    /// Model file written by `audit` or `mitigate`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Suffix of the attribution files.
    #[arg(long, default_value = "explain")]
    pub stage: String,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report JSON; defaults to `<out-dir>/report.json`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Print canonical JSON instead of the table.
    #[arg(long)]
    pub json: bool,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub synth: SynthOpts,
    pub data: DataOpts,
    pub split: SplitOpts,
    pub train: TrainOpts,
    pub search: SearchOpts,
    pub explain: ExplainFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainFile {
    pub model: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// `mine` takes values from `file` wherever the file sets them.
macro_rules! overlay {
    ($mine:expr, $file:expr; $($f:ident),+) => {{
        let (m, f) = ($mine, $file);
        $( let $f = f.$f.clone().or(m.$f.clone()); )+
        ($($f),+)
    }};
}

impl SynthOpts {
    fn merged(&self, file: &Self) -> Self {
        let (rows, cols, bias, seed, name) = overlay!(self, file; rows, cols, bias, seed, name);
        Self {
            rows,
            cols,
            bias,
            seed,
            name,
        }
    }
}

impl DataOpts {
    fn merged(&self, file: &Self) -> Self {
        let (data, schema, cohort) = overlay!(self, file; data, schema, cohort);
        Self {
            data,
            schema,
            cohort,
        }
    }

    fn load(&self) -> Result<Dataset> {
        let schema_path = self
            .schema
            .as_ref()
            .ok_or_else(|| Error::Usage("--schema is required".into()))?;
        let data_path = self
            .data
            .as_ref()
            .ok_or_else(|| Error::Usage("--data is required".into()))?;
        let schema = FeatureSchema::load(schema_path)?;
        let (data, report) = load_csv(data_path, &schema)?;
        if report.dropped() > 0 {
            log::warn!(
                "dropped {} of {} rows ({} bad label, {} bad sensitive value)",
                report.dropped(),
                report.rows_read,
                report.dropped_label,
                report.dropped_sensitive
            );
        }
        Ok(data)
    }

    fn cohort_name(&self) -> String {
        self.cohort.clone().unwrap_or_else(|| {
            self.data
                .as_ref()
                .and_then(|p| p.file_stem())
                .map_or_else(|| "cohort".into(), |s| s.to_string_lossy().into_owned())
        })
    }
}

impl SplitOpts {
    fn merged(&self, file: &Self) -> Self {
        let (test_fraction, split_seed, threshold) =
            overlay!(self, file; test_fraction, split_seed, threshold);
        Self {
            test_fraction,
            split_seed,
            threshold,
        }
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = self.split_seed {
            cfg.split_seed = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
    }
}

impl TrainOpts {
    fn merged(&self, file: &Self) -> Self {
        let (rounds, learning_rate, max_depth, min_child_cover, l2_leaf_reg, train_seed) = overlay!(self, file; rounds, learning_rate, max_depth, min_child_cover, l2_leaf_reg, train_seed);
        Self {
            rounds,
            learning_rate,
            max_depth,
            min_child_cover,
            l2_leaf_reg,
            train_seed,
        }
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        let t = &mut cfg.train;
        if let Some(v) = self.rounds {
            t.rounds = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.max_depth {
            t.max_depth = v;
        }
        if let Some(v) = self.min_child_cover {
            t.min_child_cover = v;
        }
        if let Some(v) = self.l2_leaf_reg {
            t.l2_leaf_reg = v;
        }
        if let Some(v) = self.train_seed {
            t.seed = v;
        }
    }
}

impl SearchOpts {
    fn merged(&self, file: &Self) -> Self {
        let (budget, init_points, folds, alpha, lambda_min, lambda_max, search_seed, theta) = overlay!(
            self, file; budget, init_points, folds, alpha, lambda_min, lambda_max, search_seed, theta
        );
        Self {
            budget,
            init_points,
            folds,
            alpha,
            lambda_min,
            lambda_max,
            search_seed,
            theta,
        }
    }

    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        let s = &mut cfg.search;
        if let Some(v) = self.budget {
            s.budget = v;
            // A budget below the default design size shrinks the design.
            if self.init_points.is_none() {
                s.init_points = s.init_points.min(v);
            }
        }
        if let Some(v) = self.init_points {
            s.init_points = v;
        }
        if let Some(v) = self.folds {
            s.folds = v;
        }
        if let Some(v) = self.alpha {
            s.alpha = v;
        }
        if let Some(v) = self.lambda_min {
            s.lambda_bounds.0 = v;
        }
        if let Some(v) = self.lambda_max {
            s.lambda_bounds.1 = v;
        }
        if let Some(v) = self.search_seed {
            s.seed = v;
        }
        cfg.theta = self.theta.as_deref().map(parse_theta).transpose()?;
        Ok(())
    }
}

/// Parses `lambda,w1,w2,w3`.
pub fn parse_theta(text: &str) -> Result<FairnessConfig> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Usage(format!("--theta: {e}")))?;
    let [lambda, w1, w2, w3] = parts[..] else {
        return Err(Error::Usage(format!(
            "--theta needs four values, got {}",
            parts.len()
        )));
    };
    let cfg = FairnessConfig::new(lambda, w1, w2, w3);
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::debug!("thread pool already initialised: {e}");
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let out = &cli.out_dir;
    match cli.command {
        Command::Synth(opts) => {
            let o = opts.merged(&file.synth);
            let rows = o.rows.unwrap_or(5000);
            let cols = o.cols.unwrap_or(10);
            let bias = o.bias.unwrap_or(2.0);
            let seed = o.seed.unwrap_or(0);
            let name = o.name.unwrap_or_else(|| "synth".into());
            let data = synth_biased(rows, cols, bias, seed)?;
            std::fs::create_dir_all(out)?;
            let csv = out.join(format!("{name}.csv"));
            let schema = out.join(format!("{name}.schema.toml"));
            write_csv(&data, &csv)?;
            write_file(&schema, &data.schema().to_toml_string())?;
            let spec = SynthSpec {
                rows,
                cols,
                bias_strength: bias,
                seed,
            };
            log::info!("synthetic cohort {spec:?}");
            println!("{}\n{}", csv.display(), schema.display());
        }
        Command::Audit(args) => {
            let data_opts = args.data.merged(&file.data);
            let data = data_opts.load()?;
            let mut cfg = PipelineConfig {
                cohort_name: data_opts.cohort_name(),
                ..PipelineConfig::default()
            };
            args.split.merged(&file.split).apply(&mut cfg);
            args.train.merged(&file.train).apply(&mut cfg);
            let (_, stage) = pipeline::run_audit(&data, &cfg)?;
            let snap = pipeline::write_audit(&data, &cfg, &stage, out)?;
            let f = &snap.fairness;
            println!(
                "spd {:.4}  theil {:.4}  wasserstein {:.4}  auc {:.4}  accuracy {:.4}",
                f.spd, f.theil, f.wasserstein, snap.eval.auc_roc, snap.eval.accuracy
            );
        }
        Command::Mitigate(args) => {
            let data_opts = args.data.merged(&file.data);
            let data = data_opts.load()?;
            let mut cfg = PipelineConfig {
                cohort_name: data_opts.cohort_name(),
                ..PipelineConfig::default()
            };
            args.split.merged(&file.split).apply(&mut cfg);
            args.train.merged(&file.train).apply(&mut cfg);
            args.search.merged(&file.search).apply(&mut cfg)?;
            let run = pipeline::run_mitigation(&data, &cfg)?;
            pipeline::write_mitigation(&run, out)?;
            print!("{}", render_table(&run.report));
        }
        Command::Explain(args) => {
            let data_opts = args.data.merged(&file.data);
            let data = data_opts.load()?;
            let model_path = file
                .explain
                .model
                .or(args.model)
                .ok_or_else(|| Error::Usage("--model is required".into()))?;
            let model = model_io::load(&model_path)?;
            let mut cfg = PipelineConfig::default();
            args.split.merged(&file.split).apply(&mut cfg);
            let prepared = pipeline::prepare(&data, cfg.test_fraction, cfg.split_seed)?;
            let stage = pipeline::audit_model(model, &prepared.test, cfg.threshold)?;
            std::fs::create_dir_all(out)?;
            for name in stage.write_shap(out, &args.stage)? {
                println!("{}", out.join(name).display());
            }
        }
        Command::Report(args) => {
            let path = args
                .input
                .unwrap_or_else(|| out.join(pipeline::REPORT_JSON));
            let report = read_report(&path)?;
            if args.json {
                print!("{}", to_json(&report).map_err(ReportError::from)?);
            } else {
                print!("{}", render_table(&report));
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                crate::exit::USAGE
            } else {
                crate::exit::OK
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run(cli) {
        Ok(()) => crate::exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
