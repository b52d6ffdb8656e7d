use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotation budget inputs. Prices are per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub expert_cost_per_label: f64,
    pub llm_input_price: f64,
    pub llm_output_price: f64,
    pub tokens_in_per_doc: f64,
    pub tokens_out_per_doc: f64,
    pub fixed_overhead: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            expert_cost_per_label: 0.10,
            llm_input_price: 0.0,
            llm_output_price: 0.0,
            tokens_in_per_doc: 300.0,
            tokens_out_per_doc: 10.0,
            fixed_overhead: 0.0,
        }
    }
}

impl CostModel {
    pub fn with_prices(input: f64, output: f64) -> Self {
        Self {
            llm_input_price: input,
            llm_output_price: output,
            ..Self::default()
        }
    }

    pub fn phi4() -> Self {
        Self::with_prices(0.06, 0.14)
    }

    pub fn deepseek_v3() -> Self {
        Self::with_prices(0.56, 1.68)
    }

    pub fn claude_sonnet() -> Self {
        Self::with_prices(3.0, 15.0)
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("expert_cost_per_label", self.expert_cost_per_label),
            ("llm_input_price", self.llm_input_price),
            ("llm_output_price", self.llm_output_price),
            ("tokens_in_per_doc", self.tokens_in_per_doc),
            ("tokens_out_per_doc", self.tokens_out_per_doc),
            ("fixed_overhead", self.fixed_overhead),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.expert_cost_per_label == 0.0 {
            return Err(Error::invalid("expert_cost_per_label must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakeven {
    pub total_llm_cost: f64,
    pub breakeven_expert_labels: u64,
}

/// Full-corpus LLM inference cost and the number of expert labels it buys.
pub fn cost_breakeven(model: &CostModel, n_docs: u64) -> Result<CostBreakeven> {
    model.validate()?;
    let docs = n_docs as f64;
    let total = docs * model.tokens_in_per_doc / 1e6 * model.llm_input_price
        + docs * model.tokens_out_per_doc / 1e6 * model.llm_output_price
        + model.fixed_overhead;
    // Prices like 0.56 are inexact in binary; keep 10.5 / 0.1 at 105.
    let ratio = total / model.expert_cost_per_label;
    let breakeven = (ratio - 1e-9 * ratio.max(1.0)).ceil().max(0.0) as u64;
    Ok(CostBreakeven {
        total_llm_cost: total,
        breakeven_expert_labels: breakeven,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_docs_cost_nothing() {
        let r = cost_breakeven(&CostModel::claude_sonnet(), 0).unwrap();
        assert_eq!(r.total_llm_cost, 0.0);
        assert_eq!(r.breakeven_expert_labels, 0);
    }

    #[test]
    fn claude_prices() {
        let r = cost_breakeven(&CostModel::claude_sonnet(), 10_000).unwrap();
        assert!((r.total_llm_cost - 10.5).abs() < 1e-12);
        assert_eq!(r.breakeven_expert_labels, 105);
    }

    #[test]
    fn partial_label_rounds_up() {
        let m = CostModel {
            fixed_overhead: 0.101,
            ..CostModel::default()
        };
        assert_eq!(cost_breakeven(&m, 0).unwrap().breakeven_expert_labels, 2);
    }

    #[test]
    fn negative_inputs_rejected() {
        let m = CostModel::with_prices(-1.0, 0.0);
        assert!(matches!(cost_breakeven(&m, 10), Err(Error::InvalidArgument(_))));
    }
}
