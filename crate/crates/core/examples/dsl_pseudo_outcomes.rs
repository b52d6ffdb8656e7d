//! Cross-fitted DSL pseudo-outcomes and the resulting estimate.
//!
//! cargo run --release --example dsl_pseudo_outcomes

use debias::dsl::{crossfit_g, estimate_dsl, DslConfig};
use debias::synth::{generate, ErrorModel, SynthSpec};

fn main() -> debias::Result<()> {
    let spec = SynthSpec::gaussian(
        5000,
        vec![-0.2, 0.8, 0.4],
        ErrorModel::CovariateDependentFlip { base: 0.15, direction: vec![0.7, 0.0] },
        5,
    );
    let corpus = generate(&spec)?.split_expert_subset(500, 2)?;
    let config = DslConfig::default();

    let po = crossfit_g(&corpus, &config, 9)?;
    let gold: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.rows()[i].selected()).collect();
    println!("pi = {:.3}, folds = {}", po.pi, config.folds);
    println!("pseudo-outcomes outside [0, 1]: {:.1}%", 100.0 * po.fraction_outside_unit());
    for &i in gold.iter().take(3) {
        let row = &corpus.rows()[i];
        println!(
            "{}: y_llm {} y_expert {:?} g {:.3} y_tilde {:+.3}",
            row.id, row.y_llm as u8, row.y_expert.map(u8::from), po.g_hat[i], po.y_tilde[i]
        );
    }

    let report = estimate_dsl(&corpus, &config, 9)?;
    println!("theta {:?}", &report.theta[..]);
    println!("2-sigma intervals {:?}", report.ci_2sigma);
    Ok(())
}
