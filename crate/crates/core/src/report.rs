//! Pre/post comparison reports: a schema-versioned JSON document plus a
//! plain-text table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bayes_opt::SearchSpace;
use crate::dataset::SynthSpec;
use crate::evaluate::EvalResult;
use crate::fair_training::FairnessConfig;
use crate::fairness::FairnessSnapshot;
use crate::gbt::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Theil drops of at least this many orders of magnitude are flagged.
pub const THEIL_COLLAPSE_ORDERS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortInfo {
    pub name: String,
    pub dataset_hash: String,
    pub rows: usize,
    pub features: Vec<String>,
    pub sensitive_column: String,
    pub sensitive_values: [String; 2],
    pub train_rows: usize,
    pub test_rows: usize,
    pub stratification: String,
}

/// Attribution gap of one feature between groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDisparity {
    pub feature: String,
    pub delta_phi: f64,
    pub mean_abs_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub fairness: FairnessSnapshot,
    pub eval: EvalResult,
    /// Features in mean `|φ|` order.
    pub shap: Vec<FeatureDisparity>,
}

/// Relative reductions in percent, `(|pre| − |post|)/|pre|·100`; `None`
/// when the pre value is zero. Negative values mean the metric got worse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reductions {
    pub spd: Option<f64>,
    pub theil: Option<f64>,
    pub theil_normalized: Option<f64>,
    pub wasserstein: Option<f64>,
    /// `log10(pre/post)` of the Theil index.
    pub theil_orders_of_magnitude: Option<f64>,
    pub theil_collapse: bool,
    /// `pre.auc − post.auc`.
    pub auc_drop: f64,
    pub accuracy_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub threshold: f64,
    pub train_config: TrainConfig,
    /// `None` when the configuration was fixed by the caller.
    pub search_space: Option<SearchSpace>,
    pub theta_star_unit: Option<[f64; 4]>,
    pub theta_star_j: Option<f64>,
    pub synth: Option<SynthSpec>,
    pub artifacts: Artifacts,
}

/// Paths of side outputs, relative to the report's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub bo_history: Option<String>,
    pub train_trace: Option<String>,
    pub shap: Vec<String>,
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub cohort: CohortInfo,
    pub pre: StageSummary,
    pub post: StageSummary,
    pub theta_star: FairnessConfig,
    pub reductions: Reductions,
    pub provenance: Provenance,
}

fn reduction(pre: f64, post: f64) -> Option<f64> {
    (pre != 0.0).then(|| (pre.abs() - post.abs()) / pre.abs() * 100.0)
}

pub fn compute_reductions(pre: &StageSummary, post: &StageSummary) -> Reductions {
    let (a, b) = (&pre.fairness, &post.fairness);
    let orders = (a.theil > 0.0 && b.theil > 0.0).then(|| (a.theil / b.theil).log10());
    Reductions {
        spd: reduction(a.spd, b.spd),
        theil: reduction(a.theil, b.theil),
        theil_normalized: reduction(a.theil_normalized, b.theil_normalized),
        wasserstein: reduction(a.wasserstein, b.wasserstein),
        theil_orders_of_magnitude: orders,
        theil_collapse: orders.is_some_and(|o| o >= THEIL_COLLAPSE_ORDERS)
            || (a.theil > 0.0 && b.theil == 0.0),
        auc_drop: pre.eval.auc_roc - post.eval.auc_roc,
        accuracy_drop: pre.eval.accuracy - post.eval.accuracy,
    }
}

pub fn compare(
    cohort: CohortInfo,
    pre: StageSummary,
    post: StageSummary,
    theta_star: FairnessConfig,
    provenance: Provenance,
) -> ComparisonReport {
    let reductions = compute_reductions(&pre, &post);
    ComparisonReport {
        schema_version: SCHEMA_VERSION,
        cohort,
        pre,
        post,
        theta_star,
        reductions,
        provenance,
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64 number");
                let _ = write!(out, "{f:.16e}");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// JSON with every float written to 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}%"))
}

/// Fixed-width table: one row per stage plus a reduction row.
pub fn render_table(r: &ComparisonReport) -> String {
    let [g0, g1] = &r.cohort.sensitive_values;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Cohort: {}  (test rows {})",
        r.cohort.name, r.cohort.test_rows
    );
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>14} {:>12} {:>12} {:>10} {:>10} {:>10}",
        "Stage",
        "SPD",
        "Theil",
        "Wasserstein",
        format!("{g0} pred %"),
        format!("{g1} pred %"),
        "AUC",
        "Accuracy"
    );
    for (name, s) in [("Pre", &r.pre), ("Post", &r.post)] {
        let f = &s.fairness;
        let _ = writeln!(
            out,
            "{:<10} {:>10.4} {:>14.4} {:>12.4} {:>12.2} {:>10.2} {:>10.4} {:>10.4}",
            name,
            f.spd,
            f.theil,
            f.wasserstein,
            100.0 * f.rate_group0,
            100.0 * f.rate_group1,
            s.eval.auc_roc,
            s.eval.accuracy
        );
    }
    let red = &r.reductions;
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>14} {:>12} {:>12} {:>10} {:>10.4} {:>10.4}",
        "Reduction",
        pct(red.spd),
        pct(red.theil),
        pct(red.wasserstein),
        "",
        "",
        0.0 - red.auc_drop,
        0.0 - red.accuracy_drop
    );
    if let Some(o) = red.theil_orders_of_magnitude {
        let _ = writeln!(
            out,
            "Theil change: {o:.2} orders of magnitude{}",
            if red.theil_collapse {
                " (collapse)"
            } else {
                ""
            }
        );
    }
    let t = &r.theta_star;
    let _ = writeln!(
        out,
        "theta*: lambda {:.6} w1 {:.4} w2 {:.4} w3 {:.4}",
        t.lambda, t.weights.w1, t.weights.w2, t.weights.w3
    );
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported report schema version {0}")]
    Version(u32),
}

/// Writes `<path>` (JSON) and the same path with a `.txt` extension.
pub fn emit_report(r: &ComparisonReport, path: &Path) -> Result<(PathBuf, PathBuf), ReportError> {
    let json = to_json(r)?;
    std::fs::write(path, json)?;
    let txt = path.with_extension("txt");
    std::fs::write(&txt, render_table(r))?;
    Ok((path.to_path_buf(), txt))
}

pub fn read_report(path: &Path) -> Result<ComparisonReport, ReportError> {
    let r: ComparisonReport = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if r.schema_version != SCHEMA_VERSION {
        return Err(ReportError::Version(r.schema_version));
    }
    Ok(r)
}
