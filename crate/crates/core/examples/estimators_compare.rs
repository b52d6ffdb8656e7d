//! Fits all five estimators on one synthetic corpus with biased LLM labels.
//!
//! cargo run --release --example estimators_compare

use debias::harness::{run_estimator, EstimatorConfigs};
use debias::synth::{generate, ErrorModel, SynthSpec};
use debias::EstimatorKind;

fn main() -> debias::Result<()> {
    let theta_true = vec![0.5, 1.0, -0.8, 0.6];
    let spec = SynthSpec::gaussian(
        10_000,
        theta_true.clone(),
        ErrorModel::ClassConditionalFlip { flip_given_0: 0.0, flip_given_1: 0.2 },
        2024,
    );
    let corpus = generate(&spec)?.split_expert_subset(500, 7)?;
    let configs = EstimatorConfigs::default();

    println!("truth       {theta_true:?}");
    for kind in [
        EstimatorKind::Reference,
        EstimatorKind::Classical,
        EstimatorKind::Imputation,
        EstimatorKind::Ppi,
        EstimatorKind::Dsl,
    ] {
        let input = if kind == EstimatorKind::Reference { generate(&spec)? } else { corpus.clone() };
        let report = run_estimator(kind, &input, &configs, 1)?;
        let theta: Vec<String> = report.theta.iter().map(|v| format!("{v:+.3}")).collect();
        let se: Vec<String> = report.std_errors().iter().map(|v| format!("{v:.3}")).collect();
        println!("{:<11} [{}]  se [{}]", kind.as_str(), theta.join(", "), se.join(", "));
    }
    Ok(())
}
