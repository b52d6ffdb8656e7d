//! Sweep the expert-labeled share of a fixed corpus and write results.
//!
//! cargo run --release --example experiment_vary_expert -- [out_dir]

use debias::harness::{emit_results, run_experiment, EstimatorConfigs, ExperimentGrid};
use debias::metrics::Metric;
use debias::synth::{generate, ErrorModel, SynthSpec};

fn main() -> debias::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/vary_expert".into());
    let spec = SynthSpec::gaussian(
        4000,
        vec![0.5, 1.0, -0.8, 0.6],
        ErrorModel::ClassConditionalFlip { flip_given_0: 0.05, flip_given_1: 0.2 },
        42,
    );
    let corpus = generate(&spec)?;
    let grid = ExperimentGrid::vary_expert(corpus.len(), 42).with_reps(40);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let records = run_experiment(&corpus, &grid, &EstimatorConfigs::default(), "synthetic", threads)?;

    for r in records.iter().filter(|r| r.metric == Metric::Srmse) {
        println!(
            "{:>6.4} n={:<5} {:<10} srmse {:.4} +/- {:.4}",
            r.grid_point,
            r.n_expert,
            r.estimator.as_str(),
            r.value.unwrap_or(f64::NAN),
            r.mc_halfwidth_2sigma.unwrap_or(f64::NAN)
        );
    }
    let (jsonl, wide) = emit_results(&records, &out)?;
    println!("wrote {} and {}", jsonl.display(), wide.display());
    Ok(())
}
