//! Reproducibility manifest: config snapshot, funnel counts and content
//! hashes of every stage file.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub source_lang: String,
    pub target_lang: String,
    pub k_dm: usize,
    pub min_views: u64,
    pub min_edits: u64,
    pub k_fuzz: f64,
    pub k_sim: f64,
    pub gate_mode: String,
    pub test_fraction: f64,
    pub seeds: BTreeMap<String, u64>,
    pub prompt_pack_version: String,
    pub model_ids: BTreeMap<String, String>,
}

/// Funnel counts; `None` until the producing stage has run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub mined: Option<usize>,
    pub generated: Option<usize>,
    pub deduped: Option<usize>,
    pub verbatim_kept: Option<usize>,
    pub translated: Option<usize>,
    pub validated: Option<usize>,
    pub train: Option<usize>,
    pub test: Option<usize>,
}

impl StageCounts {
    /// generated >= deduped >= verbatim_kept >= translated >= validated
    /// over the counts that are present.
    pub fn is_weakly_decreasing(&self) -> bool {
        let chain: Vec<usize> =
            [self.generated, self.deduped, self.verbatim_kept, self.translated, self.validated].into_iter().flatten().collect();
        let split_ok = match (self.train, self.test, self.validated) {
            (Some(a), Some(b), Some(v)) => a + b <= v,
            _ => true,
        };
        chain.windows(2).all(|w| w[0] >= w[1]) && split_ok
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hashes of the upstream files this stage consumed.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub config: ConfigSnapshot,
    pub counts: StageCounts,
    /// Relative path to sha256 of every file written so far.
    pub files: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weakly_decreasing() {
        let mut c = StageCounts {
            generated: Some(50),
            deduped: Some(48),
            verbatim_kept: Some(40),
            translated: Some(40),
            validated: Some(20),
            ..Default::default()
        };
        assert!(c.is_weakly_decreasing());
        c.train = Some(16);
        c.test = Some(4);
        assert!(c.is_weakly_decreasing());
        c.test = Some(5);
        assert!(!c.is_weakly_decreasing());
        c.test = Some(4);
        c.translated = Some(41);
        assert!(!c.is_weakly_decreasing());
        assert!(StageCounts::default().is_weakly_decreasing());
    }
}
