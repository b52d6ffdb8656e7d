//! How many expert labels cost as much as annotating a corpus with an LLM.
//!
//! cargo run --release --example cost_breakeven -- [n_docs]

use debias::harness::{cost_breakeven, CostModel};

fn main() -> debias::Result<()> {
    let n_docs: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    for (name, model) in [
        ("phi4", CostModel::phi4()),
        ("deepseek", CostModel::deepseek_v3()),
        ("claude", CostModel::claude_sonnet()),
    ] {
        let b = cost_breakeven(&model, n_docs)?;
        println!(
            "{name:<9} ${:>8.3} for {n_docs} docs = {} expert labels at ${:.2}",
            b.total_llm_cost, b.breakeven_expert_labels, model.expert_cost_per_label
        );
    }
    Ok(())
}
