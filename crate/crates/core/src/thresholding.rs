//! Score thresholds: best-F (label-aware), top-k and tail-p.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{f_from_counts, fc_from_counts};
use crate::types::{events_from_labels, LabelVector, ScoreSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FScore {
    F1,
    Fpa1,
    Fc1,
}

impl FScore {
    pub fn name(self) -> &'static str {
        match self {
            FScore::F1 => "f1",
            FScore::Fpa1 => "fpa1",
            FScore::Fc1 => "fc1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ThresholdMethod {
    BestF { metric: FScore },
    TopK { k: usize },
    TailP { neg_log_eps: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    /// `+inf` when nothing is labelled anomalous.
    pub threshold: f64,
    pub predictions: LabelVector,
    pub method: ThresholdMethod,
    /// Metric attained, for best-F only.
    pub metric_value: Option<f64>,
}

fn check_scores(scores: &ScoreSeries) -> Result<()> {
    if scores.as_slice().iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    Ok(())
}

/// `score >= threshold`.
pub fn apply_threshold(scores: &ScoreSeries, threshold: f64) -> LabelVector {
    LabelVector::new(scores.as_slice().iter().map(|&s| s >= threshold).collect())
}

fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Sweeps candidate thresholds from `+inf` down through every distinct score,
/// updating counts incrementally. Returns the strictly best candidate seen
/// first, which is the largest threshold among ties.
pub fn threshold_best_f(
    scores: &ScoreSeries,
    truth: &LabelVector,
    metric: FScore,
) -> Result<ThresholdResult> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty score series".into()));
    }
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "score length {} != truth length {}",
            scores.len(),
            truth.len()
        )));
    }
    check_scores(scores)?;
    let s = scores.as_slice();
    let y = truth.as_slice();
    let events = events_from_labels(truth);
    let mut event_of = vec![usize::MAX; s.len()];
    for (k, e) in events.iter().enumerate() {
        event_of[e.start..=e.end].iter_mut().for_each(|v| *v = k);
    }
    let total_pos = truth.positives();
    let n_events = events.len();

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut hit = vec![false; n_events];
    let (mut tp_e, mut adj_tp) = (0usize, 0usize);

    let value = |tp: usize, fp: usize, tp_e: usize, adj_tp: usize| match metric {
        FScore::F1 => f_from_counts(tp, fp, total_pos - tp),
        FScore::Fpa1 => f_from_counts(adj_tp, fp, total_pos - adj_tp),
        FScore::Fc1 => fc_from_counts(tp, fp, tp_e, n_events),
    };

    let mut best = (f64::INFINITY, value(0, 0, 0, 0));
    let order = descending_order(s);
    let mut i = 0;
    while i < order.len() {
        let level = s[order[i]];
        while i < order.len() && s[order[i]] == level {
            let t = order[i];
            if y[t] {
                tp += 1;
                let k = event_of[t];
                if !hit[k] {
                    hit[k] = true;
                    tp_e += 1;
                    adj_tp += events.events()[k].len();
                }
            } else {
                fp += 1;
            }
            i += 1;
        }
        let v = value(tp, fp, tp_e, adj_tp);
        if v > best.1 {
            best = (level, v);
        }
    }
    Ok(ThresholdResult {
        threshold: best.0,
        predictions: apply_threshold(scores, best.0),
        method: ThresholdMethod::BestF { metric },
        metric_value: Some(best.1),
    })
}

/// Exactly `k` positives: the `k` largest scores, earlier time-points first
/// among equal scores. The threshold is the `k`-th largest score.
pub fn threshold_top_k(scores: &ScoreSeries, k: usize) -> Result<ThresholdResult> {
    if k > scores.len() {
        return Err(Error::OutOfRange {
            what: "top-k count",
            index: k,
            bound: scores.len(),
        });
    }
    check_scores(scores)?;
    let s = scores.as_slice();
    let order = descending_order(s);
    let mut pred = vec![false; s.len()];
    for &t in &order[..k] {
        pred[t] = true;
    }
    let threshold = if k == 0 { f64::INFINITY } else { s[order[k - 1]] };
    Ok(ThresholdResult {
        threshold,
        predictions: LabelVector::new(pred),
        method: ThresholdMethod::TopK { k },
        metric_value: None,
    })
}

pub fn tail_p_threshold(m_scored: usize, neg_log_eps: u32) -> Result<f64> {
    if neg_log_eps < 1 {
        return Err(Error::InvalidInput("neg_log_eps must be >= 1".into()));
    }
    if m_scored == 0 {
        return Err(Error::InvalidInput("tail-p needs at least one scored channel".into()));
    }
    Ok(m_scored as f64 * neg_log_eps as f64)
}

/// `th = m * (-log10 eps)` on a sum of `m` Gauss-family channel scores.
pub fn threshold_tail_p(
    scores: &ScoreSeries,
    m_scored: usize,
    neg_log_eps: u32,
) -> Result<ThresholdResult> {
    check_scores(scores)?;
    let threshold = tail_p_threshold(m_scored, neg_log_eps)?;
    Ok(ThresholdResult {
        threshold,
        predictions: apply_threshold(scores, threshold),
        method: ThresholdMethod::TailP { neg_log_eps },
        metric_value: None,
    })
}
