//! End-to-end audit and mitigation runs shared by the CLI and the FFI.
//!
//! split → fit preprocessing on train → baseline → test-set audit →
//! search (or fixed θ) → fair retrain → test-set audit → comparison report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes_opt::{optimize, write_history_csv, BoResult, SearchSpace};
use crate::dataset::{stratified_split, Dataset, Preprocessor, Stratification, SynthSpec};
use crate::error::Result;
use crate::evaluate::EvalResult;
use crate::fair_training::{train_fair_traced, write_trace_csv, FairnessConfig, TraceRow};
use crate::fairness::{snapshot, FairnessSnapshot, GroupView};
use crate::gbt::{model_io, train_baseline, TrainConfig, TreeEnsemble};
use crate::report::{
    compare, emit_report, Artifacts, CohortInfo, ComparisonReport, FeatureDisparity, Provenance,
    StageSummary,
};
use crate::shap::{
    group_disparity, mean_abs_ranking, treeshap_ensemble, write_disparity_csv, GroupDisparity,
    ShapAttribution,
};

pub const REPORT_JSON: &str = "report.json";
pub const BO_HISTORY_CSV: &str = "bo_history.csv";
pub const TRACE_CSV: &str = "train_trace.csv";
pub const BASELINE_MODEL: &str = "model_baseline.txt";
pub const FAIR_MODEL: &str = "model_fair.txt";
pub const SNAPSHOT_JSON: &str = "audit_snapshot.json";

pub fn shap_file(kind: &str, stage: &str) -> String {
    format!("shap_{kind}_{stage}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cohort_name: String,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub threshold: f64,
    pub train: TrainConfig,
    pub search: SearchSpace,
    /// Fixed configuration; skips the search when set.
    pub theta: Option<FairnessConfig>,
    pub synth: Option<SynthSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cohort_name: "cohort".into(),
            test_fraction: 0.2,
            split_seed: 0,
            threshold: 0.5,
            train: TrainConfig::default(),
            search: SearchSpace::default(),
            theta: None,
            synth: None,
        }
    }
}

/// Preprocessed train/test partitions.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub stratification: Stratification,
    pub preprocessor: Preprocessor,
}

pub fn prepare(data: &Dataset, test_fraction: f64, seed: u64) -> Result<Prepared> {
    data.require_both_groups()?;
    let split = stratified_split(data, test_fraction, seed)?;
    let preprocessor = Preprocessor::fit(&split.train);
    let train = preprocessor.apply(&split.train)?;
    let test = preprocessor.apply(&split.test)?;
    for w in train.warnings().iter().chain(test.warnings()) {
        log::warn!("{w}");
    }
    test.require_both_groups()?;
    Ok(Prepared {
        train,
        test,
        stratification: split.stratification,
        preprocessor,
    })
}

/// A model audited on the test partition.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub model: TreeEnsemble,
    pub p_test: Vec<f64>,
    pub snapshot: FairnessSnapshot,
    pub eval: EvalResult,
    pub attribution: ShapAttribution,
    pub disparity: GroupDisparity,
}

impl StageResult {
    pub fn summary(&self) -> StageSummary {
        let mean_abs = self.attribution.mean_abs();
        StageSummary {
            fairness: self.snapshot,
            eval: self.eval,
            shap: mean_abs_ranking(&self.attribution)
                .into_iter()
                .map(|j| FeatureDisparity {
                    feature: self.attribution.feature_names[j].clone(),
                    delta_phi: self.disparity.delta_phi[j],
                    mean_abs_phi: mean_abs[j],
                })
                .collect(),
        }
    }

    pub fn write_shap(&self, dir: &Path, stage: &str) -> Result<Vec<String>> {
        let attr = shap_file("attribution", stage);
        let disp = shap_file("disparity", stage);
        self.attribution.write_csv(&dir.join(&attr))?;
        write_disparity_csv(&self.attribution, &self.disparity, &dir.join(&disp))?;
        Ok(vec![attr, disp])
    }
}

pub fn audit_model(model: TreeEnsemble, test: &Dataset, threshold: f64) -> Result<StageResult> {
    let x = test.feature_matrix()?;
    let p_test = model.predict_proba(&x)?;
    let view = GroupView::new(&p_test, test.sensitive(), threshold)?;
    let snapshot = snapshot(&view);
    let eval = EvalResult::compute(&p_test, test.labels(), threshold)?;
    let attribution = treeshap_ensemble(&model, &x)?.with_feature_names(test.feature_names());
    let disparity = group_disparity(&attribution, test.sensitive())?;
    Ok(StageResult {
        model,
        p_test,
        snapshot,
        eval,
        attribution,
        disparity,
    })
}

/// Baseline training plus its test-set audit.
pub fn run_audit(data: &Dataset, cfg: &PipelineConfig) -> Result<(Prepared, StageResult)> {
    let prepared = prepare(data, cfg.test_fraction, cfg.split_seed)?;
    let model = train_baseline(&prepared.train, &cfg.train)?;
    let stage = audit_model(model, &prepared.test, cfg.threshold)?;
    Ok((prepared, stage))
}

#[derive(Debug, Clone)]
pub struct MitigationRun {
    pub prepared: Prepared,
    pub pre: StageResult,
    pub post: StageResult,
    pub search: Option<BoResult>,
    pub theta_star: FairnessConfig,
    pub trace: Vec<TraceRow>,
    pub report: ComparisonReport,
}

pub fn run_mitigation(data: &Dataset, cfg: &PipelineConfig) -> Result<MitigationRun> {
    let (prepared, pre) = run_audit(data, cfg)?;
    let (theta_star, search) = match cfg.theta {
        Some(theta) => (theta, None),
        None => {
            let bo = optimize(&prepared.train, &cfg.search, &cfg.train)?;
            (bo.best.config, Some(bo))
        }
    };
    let (model, trace) = train_fair_traced(&prepared.train, &cfg.train, &theta_star)?;
    let post = audit_model(model, &prepared.test, cfg.threshold)?;

    let artifacts = Artifacts {
        bo_history: search.as_ref().map(|_| BO_HISTORY_CSV.to_string()),
        train_trace: Some(TRACE_CSV.into()),
        shap: ["pre", "post"]
            .iter()
            .flat_map(|s| [shap_file("attribution", s), shap_file("disparity", s)])
            .collect(),
        models: vec![BASELINE_MODEL.into(), FAIR_MODEL.into()],
    };
    let schema = data.schema();
    let cohort = CohortInfo {
        name: cfg.cohort_name.clone(),
        dataset_hash: data.content_hash(),
        rows: data.len(),
        features: data.feature_names(),
        sensitive_column: schema.sensitive_column.clone(),
        sensitive_values: schema.sensitive_values.clone(),
        train_rows: prepared.train.len(),
        test_rows: prepared.test.len(),
        stratification: match prepared.stratification {
            Stratification::SensitiveAndLabel => "sensitive_and_label".into(),
            Stratification::SensitiveOnly => "sensitive_only".into(),
        },
    };
    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        split_seed: cfg.split_seed,
        test_fraction: cfg.test_fraction,
        threshold: cfg.threshold,
        train_config: cfg.train,
        search_space: search.as_ref().map(|_| cfg.search),
        theta_star_unit: search.as_ref().map(|b| b.best.theta),
        theta_star_j: search.as_ref().map(|b| b.best.j_value),
        synth: cfg.synth,
        artifacts,
    };
    let report = compare(
        cohort,
        pre.summary(),
        post.summary(),
        theta_star,
        provenance,
    );
    Ok(MitigationRun {
        prepared,
        pre,
        post,
        search,
        theta_star,
        trace,
        report,
    })
}

/// Writes the report, table, models, traces and attribution CSVs to `dir`.
pub fn write_mitigation(run: &MitigationRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    emit_report(&run.report, &dir.join(REPORT_JSON))?;
    if let Some(bo) = &run.search {
        write_history_csv(&bo.history, &dir.join(BO_HISTORY_CSV))?;
    }
    write_trace_csv(&run.trace, &dir.join(TRACE_CSV))?;
    run.pre.write_shap(dir, "pre")?;
    run.post.write_shap(dir, "post")?;
    model_io::save(&run.pre.model, &dir.join(BASELINE_MODEL))?;
    model_io::save(&run.post.model, &dir.join(FAIR_MODEL))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSnapshot {
    pub cohort: String,
    pub dataset_hash: String,
    pub fairness: FairnessSnapshot,
    pub eval: EvalResult,
    pub shap: Vec<FeatureDisparity>,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub train_config: TrainConfig,
}

pub fn write_audit(
    data: &Dataset,
    cfg: &PipelineConfig,
    stage: &StageResult,
    dir: &Path,
) -> Result<AuditSnapshot> {
    std::fs::create_dir_all(dir)?;
    let summary = stage.summary();
    let snap = AuditSnapshot {
        cohort: cfg.cohort_name.clone(),
        dataset_hash: data.content_hash(),
        fairness: summary.fairness,
        eval: summary.eval,
        shap: summary.shap,
        split_seed: cfg.split_seed,
        test_fraction: cfg.test_fraction,
        train_config: cfg.train,
    };
    let json = crate::report::to_json(&snap).map_err(crate::report::ReportError::from)?;
    std::fs::write(dir.join(SNAPSHOT_JSON), json)?;
    stage.write_shap(dir, "pre")?;
    model_io::save(&stage.model, &dir.join(BASELINE_MODEL))?;
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_biased;

    fn quick() -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                rounds: 15,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn fixed_lambda_zero_is_identity() {
        let d = synth_biased(600, 5, 2.0, 1).unwrap();
        let cfg = PipelineConfig {
            theta: Some(FairnessConfig::new(0.0, 1.0, 1.0, 1.0)),
            ..quick()
        };
        let run = run_mitigation(&d, &cfg).unwrap();
        assert_eq!(run.pre.model, run.post.model);
        assert_eq!(run.report.reductions.spd, Some(0.0));
        assert_eq!(run.report.reductions.auc_drop, 0.0);
        assert!(run.search.is_none());
    }

    #[test]
    fn local_accuracy_on_test_partition() {
        let d = synth_biased(500, 4, 1.0, 2).unwrap();
        let (prep, stage) = run_audit(&d, &quick()).unwrap();
        let margins = stage
            .model
            .predict_margin(&prep.test.feature_matrix().unwrap())
            .unwrap();
        for (row, m) in stage.attribution.phi.iter().zip(margins) {
            assert!((stage.attribution.base_value + row.iter().sum::<f64>() - m).abs() < 1e-6);
        }
    }
}
