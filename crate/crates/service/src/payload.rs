//! Wire types. Every top-level payload carries `schema_version`.

use std::collections::BTreeMap;

use hamlet_core::colearn::{AuditEntry, Decision, DecisionKind, ModelKind, RunStatus, Strategy, Suggestion};
use hamlet_core::ClassLabel;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const PAGE_SIZE: usize = 50;
pub const EXPERT_HEADER: &str = "x-expert-id";
pub const SAMPLE_ENCODING: &str = "f32le-base64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub schema_version: u32,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunItem {
    pub run_id: String,
    pub status: RunStatus,
    pub round: usize,
    pub rounds: usize,
    pub model: ModelKind,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunList {
    pub schema_version: u32,
    pub runs: Vec<RunItem>,
}

/// Review state of a run's current round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSession {
    pub schema_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    pub round: usize,
    pub rounds: usize,
    pub total: usize,
    pub decided: usize,
    /// Undecided suggestion ids, in queue order.
    pub pending: Vec<String>,
    /// Decisions recorded per expert id.
    pub progress: BTreeMap<String, usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionView {
    #[serde(flatten)]
    pub suggestion: Suggestion,
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionPage {
    pub schema_version: u32,
    pub run_id: String,
    pub round: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
    pub total: usize,
    pub items: Vec<SuggestionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePayload {
    pub schema_version: u32,
    pub sequence_id: String,
    pub patient_id: String,
    pub run_id: Option<String>,
    pub sample_rate_hz: f64,
    pub channels: usize,
    pub channel_names: Vec<String>,
    pub window_samples: usize,
    pub context_samples: usize,
    pub encoding: String,
    /// Channel-major samples of the window itself.
    pub core: String,
    pub left_context: String,
    pub right_context: String,
    pub left_valid: bool,
    pub right_valid: bool,
    pub current_label: Option<ClassLabel>,
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub sequence_id: String,
    pub decision: DecisionKind,
    /// Class name; required for `override`.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub expert_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionAck {
    pub schema_version: u32,
    pub run_id: String,
    pub round: usize,
    pub sequence_id: String,
    pub label: ClassLabel,
    pub expert_id: String,
    pub decided: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeAck {
    pub schema_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pending: Option<Vec<String>>,
}

/// Page `page` (1-based) of `total` items.
pub fn page_bounds(total: usize, page: usize) -> (usize, usize, usize) {
    let pages = total.div_ceil(PAGE_SIZE);
    let start = (page.saturating_sub(1) * PAGE_SIZE).min(total);
    (start, (start + PAGE_SIZE).min(total), pages)
}
