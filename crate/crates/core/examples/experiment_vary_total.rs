//! Hold the expert budget fixed and grow the LLM-annotated corpus.
//!
//! cargo run --release --example experiment_vary_total

use debias::harness::{run_experiment, EstimatorConfigs, ExperimentGrid};
use debias::metrics::Metric;
use debias::synth::{generate, ErrorModel, SynthSpec};
use debias::EstimatorKind;

fn main() -> debias::Result<()> {
    let spec = SynthSpec::gaussian(
        8000,
        vec![0.4, 1.0, 0.5],
        ErrorModel::SymmetricFlip { q: 0.2 },
        8,
    );
    let corpus = generate(&spec)?;
    let grid = ExperimentGrid::vary_total(300, corpus.len(), 8)
        .with_reps(40)
        .with_estimators(vec![EstimatorKind::Classical, EstimatorKind::Ppi, EstimatorKind::Dsl]);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let records = run_experiment(&corpus, &grid, &EstimatorConfigs::default(), "synthetic", threads)?;
    println!("{:>8} {:>10} {:>8} {:>8}", "N", "estimator", "srmse", "+/-");
    for r in records.iter().filter(|r| r.metric == Metric::Srmse) {
        println!(
            "{:>8} {:>10} {:>8.4} {:>8.4}",
            r.n_total,
            r.estimator.as_str(),
            r.value.unwrap_or(f64::NAN),
            r.mc_halfwidth_2sigma.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
