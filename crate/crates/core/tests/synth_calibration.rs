use fairgbt::dataset::synth_biased;
use fairgbt::pipeline::{run_audit, PipelineConfig};

fn baseline_spd(m: usize, bias: f64, seed: u64) -> f64 {
    let data = synth_biased(m, 10, bias, seed).unwrap();
    let (_, stage) = run_audit(&data, &PipelineConfig::default()).unwrap();
    stage.snapshot.spd
}

#[test]
fn unbiased_generator_gives_near_parity() {
    let spds: Vec<f64> = (0..3).map(|s| baseline_spd(5000, 0.0, s).abs()).collect();
    let mean = spds.iter().sum::<f64>() / spds.len() as f64;
    assert!(mean < 0.05, "{spds:?}");
}

#[test]
fn strong_bias_gives_large_gap() {
    for seed in 0..3 {
        let spd = baseline_spd(5000, 2.0, seed);
        assert!(spd >= 0.2, "seed {seed}: {spd}");
    }
}

#[test]
fn gap_grows_with_bias() {
    let median = |bias: f64| {
        let mut v: Vec<f64> = (0..3).map(|s| baseline_spd(2000, bias, s)).collect();
        v.sort_by(f64::total_cmp);
        v[1]
    };
    let (m0, m1, m2) = (median(0.0), median(1.0), median(2.0));
    assert!(m0 <= m1 && m1 <= m2, "{m0} {m1} {m2}");
}
