//! Parallel paragraph mining: fetch intro pairs and keep those from popular,
//! actively edited pages whose token lengths agree.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::item::Lang;
use crate::par::Exec;
use crate::providers::{wiki_fetch_intro_pair, wiki_fetch_stats, PageStats, ProviderError, WikiProvider};
use crate::text::slug;

pub use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelParagraphPair {
    pub pair_id: String,
    pub source_lang: Lang,
    pub target_lang: Lang,
    pub source_title: String,
    pub target_title: String,
    pub source_text: String,
    pub target_text: String,
    pub source_stats: PageStats,
    pub target_stats: PageStats,
    pub source_token_count: usize,
    pub target_token_count: usize,
}

impl ParallelParagraphPair {
    pub fn length_difference(&self) -> usize {
        self.source_token_count.abs_diff(self.target_token_count)
    }

    /// Token counts match the texts.
    pub fn counts_consistent(&self) -> bool {
        tokenize(&self.source_text).len() == self.source_token_count
            && tokenize(&self.target_text).len() == self.target_token_count
    }
}

/// Which page's view/edit statistics must clear the popularity gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsPolicy {
    Source,
    Target,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMode {
    /// `|n_src - n_tgt| <= k_dm`
    #[default]
    Absolute,
    /// `|n_src - n_tgt| <= k_ratio * max(n_src, n_tgt)`
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub k_dm: usize,
    pub min_views: u64,
    pub min_edits: u64,
    pub stats_policy: StatsPolicy,
    pub length_mode: LengthMode,
    pub k_ratio: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            k_dm: 40,
            min_views: 1000,
            min_edits: 5,
            stats_policy: StatsPolicy::Both,
            length_mode: LengthMode::Absolute,
            k_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowViews,
    LowEdits,
    LengthMismatch,
    NotParallel,
    PageMissing,
    ProviderFailed,
    DuplicateTitle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateVerdict {
    Accept,
    Reject { reason: RejectReason, detail: String },
}

impl GateVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, GateVerdict::Accept)
    }

    fn reject(reason: RejectReason, detail: String) -> Self {
        GateVerdict::Reject { reason, detail }
    }
}

/// Views and edits must strictly exceed their minimums; the length gate is inclusive.
pub fn accept_pair(pair: &ParallelParagraphPair, cfg: &MiningConfig) -> GateVerdict {
    let pages: Vec<&PageStats> = match cfg.stats_policy {
        StatsPolicy::Source => vec![&pair.source_stats],
        StatsPolicy::Target => vec![&pair.target_stats],
        StatsPolicy::Both => vec![&pair.source_stats, &pair.target_stats],
    };
    if let Some(p) = pages.iter().find(|p| p.view_count <= cfg.min_views) {
        return GateVerdict::reject(
            RejectReason::LowViews,
            format!("{}:{} has {} views <= {}", p.language, p.title, p.view_count, cfg.min_views),
        );
    }
    if let Some(p) = pages.iter().find(|p| p.edit_count <= cfg.min_edits) {
        return GateVerdict::reject(
            RejectReason::LowEdits,
            format!("{}:{} has {} edits <= {}", p.language, p.title, p.edit_count, cfg.min_edits),
        );
    }
    let diff = pair.length_difference();
    match cfg.length_mode {
        LengthMode::Absolute if diff > cfg.k_dm => {
            GateVerdict::reject(RejectReason::LengthMismatch, format!("{diff} > {}", cfg.k_dm))
        }
        LengthMode::Ratio => {
            let longest = pair.source_token_count.max(pair.target_token_count) as f64;
            if diff as f64 > cfg.k_ratio * longest {
                GateVerdict::reject(RejectReason::LengthMismatch, format!("{diff} > {} * {longest}", cfg.k_ratio))
            } else {
                GateVerdict::Accept
            }
        }
        LengthMode::Absolute => GateVerdict::Accept,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningFailure {
    pub title: String,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningReport {
    pub input_count: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    pub failures: Vec<MiningFailure>,
}

impl MiningReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

pub fn pair_id_for(title: &str) -> String {
    let s = slug(title);
    if s.is_empty() {
        format!("t{}", &crate::jsonl::sha256_hex(title.as_bytes())[..12])
    } else {
        s
    }
}

fn fetch_pair(
    wiki: &dyn WikiProvider,
    title: &str,
    pair_id: String,
    source: &Lang,
    target: &Lang,
) -> Result<ParallelParagraphPair, ProviderError> {
    let intro = wiki_fetch_intro_pair(wiki, title, source, target)?;
    let source_stats = wiki_fetch_stats(wiki, &intro.source_title, source)?;
    let target_stats = wiki_fetch_stats(wiki, &intro.target_title, target)?;
    Ok(ParallelParagraphPair {
        pair_id,
        source_lang: source.clone(),
        target_lang: target.clone(),
        source_token_count: tokenize(&intro.source_text).len(),
        target_token_count: tokenize(&intro.target_text).len(),
        source_title: intro.source_title,
        target_title: intro.target_title,
        source_text: intro.source_text,
        target_text: intro.target_text,
        source_stats,
        target_stats,
    })
}

fn failure_reason(e: &ProviderError) -> RejectReason {
    match e {
        ProviderError::NotParallel { .. } => RejectReason::NotParallel,
        ProviderError::PageMissing { .. } => RejectReason::PageMissing,
        _ => RejectReason::ProviderFailed,
    }
}

/// Fetches and gates every title. Never aborts on a single title: failures
/// are tallied in the report, and `accepted + rejected_total == input_count`.
/// Output is sorted by `pair_id`.
pub fn mine(
    titles: &[String],
    source: &Lang,
    target: &Lang,
    cfg: &MiningConfig,
    wiki: &dyn WikiProvider,
    exec: Exec,
) -> (Vec<ParallelParagraphPair>, MiningReport) {
    let mut report = MiningReport { input_count: titles.len(), ..Default::default() };
    let mut seen = HashSet::new();
    let mut work = Vec::new();
    for t in titles {
        let id = pair_id_for(t.trim());
        if t.trim().is_empty() || !seen.insert(id.clone()) {
            report.failures.push(MiningFailure {
                title: t.clone(),
                reason: RejectReason::DuplicateTitle,
                detail: format!("pair_id {id:?} already taken or title empty"),
            });
        } else {
            work.push((t.trim().to_owned(), id));
        }
    }

    let outcomes = exec.map(&work, |(title, id)| {
        let verdict = fetch_pair(wiki, title, id.clone(), source, target).map(|p| {
            let v = accept_pair(&p, cfg);
            (p, v)
        });
        (title.clone(), verdict)
    });

    let mut pairs = Vec::new();
    for (title, outcome) in outcomes {
        match outcome {
            Ok((pair, GateVerdict::Accept)) => pairs.push(pair),
            Ok((_, GateVerdict::Reject { reason, detail })) => {
                report.failures.push(MiningFailure { title, reason, detail })
            }
            Err(e) => report.failures.push(MiningFailure { title, reason: failure_reason(&e), detail: e.to_string() }),
        }
    }
    for f in &report.failures {
        *report.rejected.entry(f.reason).or_default() += 1;
    }
    report.failures.sort_by(|a, b| a.title.cmp(&b.title));
    pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    report.accepted = pairs.len();
    (pairs, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::FixtureWiki;
    use proptest::prelude::*;

    fn l(s: &str) -> Lang {
        Lang::new(s).unwrap()
    }

    fn stats(lang: &str, views: u64, edits: u64) -> PageStats {
        PageStats { title: "T".into(), language: l(lang), view_count: views, edit_count: edits }
    }

    pub(crate) fn pair(views: u64, edits: u64, n_src: usize, n_tgt: usize) -> ParallelParagraphPair {
        ParallelParagraphPair {
            pair_id: "t".into(),
            source_lang: l("en"),
            target_lang: l("hy"),
            source_title: "T".into(),
            target_title: "T".into(),
            source_text: vec!["w"; n_src].join(" "),
            target_text: vec!["w"; n_tgt].join(" "),
            source_stats: stats("en", views, edits),
            target_stats: stats("hy", views, edits),
            source_token_count: n_src,
            target_token_count: n_tgt,
        }
    }

    #[test]
    fn gate_examples() {
        let cfg = MiningConfig { k_dm: 40, ..Default::default() };
        assert_eq!(accept_pair(&pair(1500, 7, 12, 10), &cfg), GateVerdict::Accept);
        assert!(matches!(
            accept_pair(&pair(900, 7, 12, 10), &cfg),
            GateVerdict::Reject { reason: RejectReason::LowViews, .. }
        ));
        match accept_pair(&pair(1500, 7, 100, 30), &cfg) {
            GateVerdict::Reject { reason: RejectReason::LengthMismatch, detail } => assert_eq!(detail, "70 > 40"),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn gates_use_strict_inequalities() {
        let cfg = MiningConfig::default();
        assert!(!accept_pair(&pair(1000, 7, 1, 1), &cfg).is_accept());
        assert!(accept_pair(&pair(1001, 6, 1, 1), &cfg).is_accept());
        assert!(!accept_pair(&pair(1001, 5, 1, 1), &cfg).is_accept());
        assert!(accept_pair(&pair(1001, 6, 41, 1), &cfg).is_accept());
        assert!(!accept_pair(&pair(1001, 6, 42, 1), &cfg).is_accept());
    }

    #[test]
    fn stats_policy_selects_pages() {
        let mut p = pair(5000, 50, 10, 10);
        p.target_stats.view_count = 10;
        let both = MiningConfig::default();
        assert!(!accept_pair(&p, &both).is_accept());
        let src = MiningConfig { stats_policy: StatsPolicy::Source, ..Default::default() };
        assert!(accept_pair(&p, &src).is_accept());
        let tgt = MiningConfig { stats_policy: StatsPolicy::Target, ..Default::default() };
        assert!(!accept_pair(&p, &tgt).is_accept());
    }

    #[test]
    fn ratio_mode() {
        let cfg = MiningConfig { length_mode: LengthMode::Ratio, k_ratio: 0.25, ..Default::default() };
        assert!(accept_pair(&pair(5000, 50, 100, 75), &cfg).is_accept());
        assert!(!accept_pair(&pair(5000, 50, 100, 74), &cfg).is_accept());
    }

    fn mock_wiki(n: usize, bad_len: &[usize]) -> (FixtureWiki, Vec<String>) {
        let mut wiki = FixtureWiki::default();
        let mut titles = Vec::new();
        for i in 0..n {
            let t = format!("Article {i}");
            let hy_t = format!("Հոդված {i}");
            let tgt_len = if bad_len.contains(&i) { 80 } else { 22 };
            wiki = wiki
                .with_article(l("en"), &t, &vec!["word"; 20].join(" "), 2000, 20)
                .with_article(l("hy"), &hy_t, &vec!["բառ"; tgt_len].join(" "), 1500, 9)
                .with_link(l("en"), &t, l("hy"), &hy_t);
            titles.push(t);
        }
        (wiki, titles)
    }

    #[test]
    fn mine_counts_rejections() {
        let (wiki, titles) = mock_wiki(10, &[1, 4, 7]);
        let (pairs, report) = mine(&titles, &l("en"), &l("hy"), &MiningConfig::default(), &wiki, Exec::default());
        assert_eq!(pairs.len(), 7);
        assert_eq!(report.rejected, BTreeMap::from([(RejectReason::LengthMismatch, 3)]));
        assert_eq!(report.accepted + report.rejected_total(), report.input_count);
        assert!(pairs.windows(2).all(|w| w[0].pair_id < w[1].pair_id));
        assert!(pairs.iter().all(|p| p.counts_consistent() && accept_pair(p, &MiningConfig::default()).is_accept()));
    }

    #[test]
    fn mine_handles_empty_missing_and_duplicates() {
        let (wiki, _) = mock_wiki(2, &[]);
        let (pairs, report) = mine(&[], &l("en"), &l("hy"), &MiningConfig::default(), &wiki, Exec::Sequential);
        assert!(pairs.is_empty());
        assert_eq!(report, MiningReport::default());

        let titles = vec!["Article 0".to_string(), "article 0".into(), "Nope".into()];
        let (pairs, report) = mine(&titles, &l("en"), &l("hy"), &MiningConfig::default(), &wiki, Exec::Sequential);
        assert_eq!(pairs.len(), 1);
        assert_eq!(report.rejected[&RejectReason::DuplicateTitle], 1);
        assert_eq!(report.rejected[&RejectReason::NotParallel], 1);
        assert_eq!(report.accepted + report.rejected_total(), 3);
    }

    #[test]
    fn mine_is_schedule_independent() {
        let (wiki, titles) = mock_wiki(25, &[3, 9]);
        let a = mine(&titles, &l("en"), &l("hy"), &MiningConfig::default(), &wiki, Exec::Sequential);
        let b = mine(&titles, &l("en"), &l("hy"), &MiningConfig::default(), &wiki, Exec::default());
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn raising_k_dm_never_shrinks_accepted(
            cases in proptest::collection::vec((0u64..3000, 0u64..12, 0usize..150, 0usize..150), 1..40),
            k1 in 0usize..100, dk in 0usize..100,
        ) {
            let lo = MiningConfig { k_dm: k1, ..Default::default() };
            let hi = MiningConfig { k_dm: k1 + dk, ..Default::default() };
            for (v, e, a, b) in cases {
                let p = pair(v, e, a, b);
                if accept_pair(&p, &lo).is_accept() {
                    prop_assert!(accept_pair(&p, &hi).is_accept());
                }
            }
        }
    }
}
