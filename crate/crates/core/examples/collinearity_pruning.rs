//! Pairwise r^2 report and pruning of a near-duplicate feature.
//!
//! cargo run --release --example collinearity_pruning

use debias::dsl::{estimate_dsl, DslConfig};
use debias::metrics::prune_collinear;
use debias::synth::{generate, ErrorModel, FeatureDist, SynthSpec};

fn main() -> debias::Result<()> {
    let mut spec = SynthSpec::gaussian(
        3000,
        vec![0.2, 0.7, 0.7, -0.4],
        ErrorModel::SymmetricFlip { q: 0.15 },
        13,
    );
    spec.features = vec![FeatureDist::StandardNormal; 3];
    spec.collinear_pairs = vec![(1, 2, 0.95)];
    let corpus = generate(&spec)?.split_expert_subset(300, 1)?;

    let (pruned, report) = prune_collinear(&corpus, 0.9)?;
    for (j, row) in report.r2.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:>3} [{}]", report.feature_names[j], cells.join(", "));
    }
    println!("pruned columns {:?}, retained {:?}", report.pruned, report.retained);

    let cfg = DslConfig::default();
    let full = estimate_dsl(&corpus, &cfg, 4)?;
    let reduced = estimate_dsl(&pruned, &cfg, 4)?;
    println!("all features  se {:?}", full.std_errors());
    println!("after pruning se {:?}", reduced.std_errors());
    Ok(())
}
