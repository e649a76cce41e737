use fairgbt::dataset::{preprocess, synth_biased, Dataset, FeatureColumn};
use fairgbt::fair_training::{term_gradients, train_fair, train_fair_traced, FairnessConfig};
use fairgbt::fairness::TheilForm;
use fairgbt::gbt::TrainConfig;

fn cohort(seed: u64) -> Dataset {
    preprocess(&synth_biased(5000, 10, 0.4, seed).unwrap()).unwrap()
}

fn rising_rounds(data: &Dataset, lambda: f64, w: (f64, f64, f64)) -> (usize, usize, f64, f64) {
    let fcfg = FairnessConfig::new(lambda, w.0, w.1, w.2);
    let (_, trace) = train_fair_traced(data, &TrainConfig::default(), &fcfg).unwrap();
    let rising = trace
        .windows(2)
        .filter(|p| p[1].total > p[0].total + 1e-12)
        .count();
    (
        rising,
        trace.len() - 1,
        trace[0].total,
        trace.last().unwrap().total,
    )
}

#[test]
fn total_loss_non_increasing() {
    let data = cohort(0);
    for lambda in [0.1, 1.0, 3.0, 10.0] {
        for w in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, 1.0, 1.0), (0.5, 0.2, 0.8)] {
            let (rising, rounds, start, end) = rising_rounds(&data, lambda, w);
            if rising > 0 {
                println!("lambda {lambda} w {w:?}: {rising}/{rounds} rising rounds");
            }
            assert!(
                rising as f64 <= 0.05 * rounds as f64,
                "lambda {lambda} w {w:?}: {rising} of {rounds} rounds raised L_total"
            );
            assert!(end < start);
        }
    }
}

#[test]
fn huge_lambda_dominates() {
    let data = cohort(1);
    let tcfg = TrainConfig::default();
    let fair_at = |lambda| {
        let (_, trace) =
            train_fair_traced(&data, &tcfg, &FairnessConfig::new(lambda, 1.0, 1.0, 1.0)).unwrap();
        trace.last().unwrap().fair_soft
    };
    let strong = fair_at(1e4);
    let unit = fair_at(1.0);
    assert!(strong < unit, "λ=1e4 gave {strong}, λ=1 gave {unit}");
}

#[test]
fn tuned_penalty_lowers_hard_spd() {
    use fairgbt::pipeline::{run_mitigation, PipelineConfig};
    let d = synth_biased(3000, 10, 2.0, 4).unwrap();
    let cfg = PipelineConfig {
        theta: Some(FairnessConfig::new(0.5, 1.0, 0.0, 1.0)),
        ..PipelineConfig::default()
    };
    let run = run_mitigation(&d, &cfg).unwrap();
    assert!(run.post.snapshot.spd.abs() < run.pre.snapshot.spd.abs());
}

/// Both groups hold the same rows, so every round sees mirrored margins.
#[test]
fn mirrored_groups_get_no_parity_gradient() {
    let base = preprocess(&synth_biased(400, 5, 0.0, 2).unwrap()).unwrap();
    let n = base.len();
    let columns = base
        .columns()
        .iter()
        .map(|c| match c {
            FeatureColumn::Numeric(v) => {
                FeatureColumn::Numeric(v.iter().chain(v).copied().collect())
            }
            other => other.clone(),
        })
        .collect();
    let y: Vec<u8> = base.labels().iter().chain(base.labels()).copied().collect();
    let a: Vec<u8> = std::iter::repeat_n(0, n)
        .chain(std::iter::repeat_n(1, n))
        .collect();
    let data = Dataset::new(base.schema().clone(), columns, y, a).unwrap();
    let tcfg = TrainConfig {
        rounds: 20,
        ..TrainConfig::default()
    };
    let x = data.feature_matrix().unwrap();
    for rounds in [1, 5, 20] {
        let cfg = TrainConfig { rounds, ..tcfg };
        let model = train_fair(&data, &cfg, &FairnessConfig::new(5.0, 1.0, 0.0, 1.0)).unwrap();
        let margins = model.predict_margin(&x).unwrap();
        assert_eq!(margins[..n], margins[n..]);
        let g = term_gradients(&margins, data.sensitive(), TheilForm::Mean).unwrap();
        assert!(g.spd.iter().chain(&g.wasserstein).all(|v| v.abs() < 1e-9));
    }
}
