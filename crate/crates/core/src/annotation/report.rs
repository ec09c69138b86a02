use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{cohen_kappa, AnnotationError, AnnotationRecord, AnnotationTask, HiddenFlag, Reason, Verdict};

/// Label space for agreement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    /// Four options plus unanswerable.
    #[default]
    FiveWay,
    /// Answerable versus unanswerable.
    Binary,
}

impl KappaMode {
    fn label(self, v: Verdict) -> &'static str {
        match (self, v) {
            (_, Verdict::Unanswerable) => "unanswerable",
            (KappaMode::Binary, Verdict::Chosen(_)) => "answerable",
            (KappaMode::FiveWay, Verdict::Chosen(i)) => ["A", "B", "C", "D"][i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub annotator_a: String,
    pub annotator_b: String,
    pub shared_tasks: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonRow {
    pub reason: Reason,
    pub filtered_pct: f64,
    pub unfiltered_pct: f64,
}

/// Share of unanswerable verdicts citing each reason, per population.
/// Kept items are the filtered population, flagged rejects the unfiltered one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonBreakdown {
    pub filtered_unanswerable: usize,
    pub unfiltered_unanswerable: usize,
    pub rows: Vec<ReasonRow>,
}

impl ReasonBreakdown {
    pub fn to_text(&self) -> String {
        let w = Reason::ALL.iter().map(|r| r.label().len()).max().unwrap().max("Problem type(%)".len());
        let mut out = format!("{:<w$}  {:>8}  {:>10}\n", "Problem type(%)", "Filtered", "Unfiltered");
        for r in &self.rows {
            out.push_str(&format!("{:<w$}  {:>8.0}  {:>10.0}\n", r.reason.label(), r.filtered_pct, r.unfiltered_pct));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa_mode: KappaMode,
    /// Mean of the pairwise values below.
    pub kappa: f64,
    pub pairwise: Vec<PairKappa>,
    /// Specific agreement per label: 2·both / (count_a + count_b).
    pub category_agreement: BTreeMap<String, f64>,
    pub flagged_records: usize,
    pub flagged_unanswerable_rate: f64,
    pub kept_records: usize,
    pub kept_correct_rate: f64,
    pub reason_breakdown: ReasonBreakdown,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `records` must hold at most one record per (task, annotator).
pub fn compute_agreement_report(
    tasks: &[AnnotationTask],
    records: &[AnnotationRecord],
    mode: KappaMode,
) -> Result<AgreementReport, AnnotationError> {
    let by_id: BTreeMap<&str, &AnnotationTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, Verdict>> = BTreeMap::new();
    for r in records {
        if !by_id.contains_key(r.task_id.as_str()) {
            return Err(AnnotationError::UnknownTask(r.task_id.clone()));
        }
        by_annotator.entry(&r.annotator_id).or_default().insert(&r.task_id, r.verdict);
    }

    let annotators: Vec<&str> = by_annotator.keys().copied().collect();
    let mut pairwise = Vec::new();
    let mut cat: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let (va, vb) = (&by_annotator[a], &by_annotator[b]);
            let shared: Vec<&str> = va.keys().filter(|t| vb.contains_key(*t)).copied().collect();
            if shared.is_empty() {
                continue;
            }
            let la: Vec<&str> = shared.iter().map(|t| mode.label(va[t])).collect();
            let lb: Vec<&str> = shared.iter().map(|t| mode.label(vb[t])).collect();
            for (x, y) in la.iter().zip(&lb) {
                cat.entry(x).or_default().1 += 1;
                cat.entry(y).or_default().1 += 1;
                if x == y {
                    cat.entry(x).or_default().0 += 2;
                }
            }
            let kappa = cohen_kappa(&la, &lb).expect("nonempty equal-length labels");
            pairwise.push(PairKappa { annotator_a: a.to_string(), annotator_b: b.to_string(), shared_tasks: shared.len(), kappa });
        }
    }
    if pairwise.is_empty() {
        return Err(AnnotationError::InsufficientAnnotators);
    }
    let kappa = pairwise.iter().map(|p| p.kappa).sum::<f64>() / pairwise.len() as f64;
    let category_agreement = cat.into_iter().map(|(c, (agree, tot))| (c.to_string(), ratio(agree, tot))).collect();

    let mut flagged = (0, 0);
    let mut kept = (0, 0);
    let mut reasons: [BTreeMap<Reason, usize>; 2] = Default::default();
    let mut unanswerable = [0usize; 2];
    for r in records {
        let task = by_id[r.task_id.as_str()];
        let pop = usize::from(task.hidden_flag == HiddenFlag::Flagged);
        match task.hidden_flag {
            HiddenFlag::Flagged => {
                flagged.1 += 1;
                flagged.0 += usize::from(r.verdict == Verdict::Unanswerable);
            }
            HiddenFlag::Kept => {
                kept.1 += 1;
                kept.0 += usize::from(r.verdict == Verdict::Chosen(task.item.correct_index));
            }
        }
        if r.verdict == Verdict::Unanswerable {
            unanswerable[pop] += 1;
            for &reason in r.reasons.iter().collect::<BTreeSet<_>>() {
                *reasons[pop].entry(reason).or_default() += 1;
            }
        }
    }
    let pct = |pop: usize, r: Reason| 100.0 * ratio(reasons[pop].get(&r).copied().unwrap_or(0), unanswerable[pop]);
    let reason_breakdown = ReasonBreakdown {
        filtered_unanswerable: unanswerable[0],
        unfiltered_unanswerable: unanswerable[1],
        rows: Reason::ALL.iter().map(|&r| ReasonRow { reason: r, filtered_pct: pct(0, r), unfiltered_pct: pct(1, r) }).collect(),
    };

    Ok(AgreementReport {
        kappa_mode: mode,
        kappa,
        pairwise,
        category_agreement,
        flagged_records: flagged.1,
        flagged_unanswerable_rate: ratio(flagged.0, flagged.1),
        kept_records: kept.1,
        kept_correct_rate: ratio(kept.0, kept.1),
        reason_breakdown,
    })
}
