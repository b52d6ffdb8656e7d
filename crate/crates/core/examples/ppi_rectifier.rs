//! The PPI rectifier, and how the estimate moves with the rectifier weight.
//!
//! cargo run --release --example ppi_rectifier

use debias::ppi::{estimate_ppi, rectifier, rectifier_closed_form, PpiConfig};
use debias::synth::{generate, ErrorModel, SynthSpec};
use debias::CoefficientVector;

fn main() -> debias::Result<()> {
    let spec = SynthSpec::gaussian(
        5000,
        vec![0.0, 1.0, -0.5],
        ErrorModel::SymmetricFlip { q: 0.15 },
        3,
    );
    let corpus = generate(&spec)?.split_expert_subset(400, 11)?;

    // The logistic rectifier does not depend on theta.
    let closed = rectifier_closed_form(&corpus)?;
    let at_zero = rectifier(&corpus, &CoefficientVector::zeros(3))?;
    let elsewhere = rectifier(&corpus, &CoefficientVector::new(vec![2.0, -1.0, 0.3])?)?;
    println!("closed form   {:?}", closed.as_slice());
    println!("at theta = 0  {:?}", at_zero.as_slice());
    println!("at theta = t  {:?}", elsewhere.as_slice());

    for lambda in [0.0, 0.5, 1.0] {
        let r = estimate_ppi(&corpus, &PpiConfig::with_lambda(lambda))?;
        println!("lambda {lambda:.1}  theta {:?}", &r.theta[..]);
    }
    let tuned = estimate_ppi(&corpus, &PpiConfig::tuned())?;
    println!(
        "tuned (lambda {:.3})  theta {:?}",
        tuned.diagnostics["lambda"],
        &tuned.theta[..]
    );
    Ok(())
}
