//! Derive the sentiment feature recipe from a raw review file and estimate.
//!
//! cargo run --release --example load_csv_features -- [path.csv]

use debias::datasets::{load_corpus, AnnotationSource, DatasetName, DatasetSpec};
use debias::metrics::correlation_r2;
use debias::ppi::{estimate_ppi, PpiConfig};

fn main() -> debias::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_reviews.csv").into());
    let spec = DatasetSpec::preset(DatasetName::MultidomainSentiment, AnnotationSource::Claude)?;
    for f in &spec.feature_recipe {
        println!("{} <- {:?} of '{}'", f.name, f.kind, f.source_column);
    }
    let corpus = load_corpus(&path, &spec)?;
    println!("{} rows, {} with gold labels", corpus.len(), corpus.n_selected());
    for row in corpus.rows().iter().take(3) {
        println!("{} x = {:?}", row.id, row.x);
    }
    println!("r^2 {:?}", correlation_r2(&corpus)?);

    let labeled = corpus.split_expert_subset(150, 0)?;
    let report = estimate_ppi(&labeled, &PpiConfig::default())?;
    println!("ppi theta {:?}", &report.theta[..]);
    Ok(())
}
