//! Token and cost accounting per pipeline stage.
//!
//! Costs are kept as integer picodollars (1e-12 USD) so that per-stage
//! totals add up to the overall total exactly; dollar figures are derived
//! from those integers only for display.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Usage;
use crate::prompt::PromptKind;

const PICOS_PER_USD: f64 = 1e12;

/// Price in USD per token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenPrice {
    pub input: f64,
    pub output: f64,
}

impl TokenPrice {
    fn picos(self) -> (u64, u64) {
        let conv = |usd: f64| (usd * PICOS_PER_USD).round().max(0.0) as u64;
        (conv(self.input), conv(self.output))
    }
}

pub type PriceTable = BTreeMap<String, TokenPrice>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub stage: PromptKind,
    pub model_tag: String,
    pub calls: u64,
    pub usage: Usage,
}

#[derive(Debug, Default)]
struct LedgerState {
    usage: BTreeMap<(PromptKind, String), (u64, Usage)>,
    queries: u64,
}

/// Thread-safe usage accumulator.
#[derive(Debug, Default)]
pub struct CostLedger {
    state: Mutex<LedgerState>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("no price configured for model `{0}`")]
    UnknownModel(String),
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, stage: PromptKind, model_tag: &str, usage: Usage) {
        self.record_calls(stage, model_tag, 1, usage);
    }

    pub fn record_calls(&self, stage: PromptKind, model_tag: &str, calls: u64, usage: Usage) {
        let mut state = self.state.lock().expect("ledger poisoned");
        let slot = state
            .usage
            .entry((stage, model_tag.to_string()))
            .or_default();
        slot.0 += calls;
        slot.1 += usage;
    }

    /// Counts one finished question for per-query averages.
    pub fn record_query(&self) {
        self.state.lock().expect("ledger poisoned").queries += 1;
    }

    pub fn add_queries(&self, n: u64) {
        self.state.lock().expect("ledger poisoned").queries += n;
    }

    pub fn queries(&self) -> u64 {
        self.state.lock().expect("ledger poisoned").queries
    }

    pub fn entries(&self) -> Vec<LedgerEntry> {
        let state = self.state.lock().expect("ledger poisoned");
        state
            .usage
            .iter()
            .map(|((stage, model), (calls, usage))| LedgerEntry {
                stage: *stage,
                model_tag: model.clone(),
                calls: *calls,
                usage: *usage,
            })
            .collect()
    }

    pub fn report(&self, prices: &PriceTable) -> Result<CostReport, LedgerError> {
        report_costs(self, prices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCost {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_picodollars: u64,
    pub cost_usd: f64,
}

impl StageCost {
    fn add(&mut self, calls: u64, usage: Usage, picos: u64) {
        self.calls += calls;
        self.prompt_tokens += usage.prompt_tokens;
        self.completion_tokens += usage.completion_tokens;
        self.cost_picodollars += picos;
        self.cost_usd = self.cost_picodollars as f64 / PICOS_PER_USD;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub stages: BTreeMap<PromptKind, StageCost>,
    pub total: StageCost,
    pub queries: u64,
    pub mean_cost_per_query_usd: f64,
}

/// Prices every ledger entry. All four stages appear in the report, with
/// zeros where nothing was recorded.
pub fn report_costs(ledger: &CostLedger, prices: &PriceTable) -> Result<CostReport, LedgerError> {
    let mut stages: BTreeMap<PromptKind, StageCost> = PromptKind::ALL
        .iter()
        .map(|k| (*k, StageCost::default()))
        .collect();
    let mut total = StageCost::default();
    for entry in ledger.entries() {
        let price = prices
            .get(&entry.model_tag)
            .ok_or_else(|| LedgerError::UnknownModel(entry.model_tag.clone()))?;
        let (pin, pout) = price.picos();
        let picos = entry.usage.prompt_tokens * pin + entry.usage.completion_tokens * pout;
        stages
            .get_mut(&entry.stage)
            .expect("all stages present")
            .add(entry.calls, entry.usage, picos);
        total.add(entry.calls, entry.usage, picos);
    }
    let queries = ledger.queries();
    let mean = if queries == 0 {
        0.0
    } else {
        total.cost_usd / queries as f64
    };
    Ok(CostReport {
        stages,
        total,
        queries,
        mean_cost_per_query_usd: mean,
    })
}
