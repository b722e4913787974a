//! Point-wise, point-adjusted and composite F-scores, ranking metrics and the
//! random anomaly detector baseline. Every 0/0 ratio is defined as 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{events_from_labels, EventSet, LabelVector, ScoreSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp_t: usize,
    pub fp_t: usize,
    pub fn_t: usize,
    pub tn_t: usize,
    pub tp_e: usize,
    pub fn_e: usize,
}

impl ConfusionCounts {
    pub fn precision_t(&self) -> f64 {
        ratio(self.tp_t, self.tp_t + self.fp_t)
    }

    pub fn recall_t(&self) -> f64 {
        ratio(self.tp_t, self.tp_t + self.fn_t)
    }

    pub fn recall_e(&self) -> f64 {
        ratio(self.tp_e, self.tp_e + self.fn_e)
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of `tp / (tp + fp)` and `tp_e / n_events`, cleared of
/// fractions.
pub(crate) fn fc_from_counts(tp: usize, fp: usize, tp_e: usize, n_events: usize) -> f64 {
    ratio(2 * tp * tp_e, tp * n_events + tp_e * (tp + fp))
}

/// Point-wise F from raw counts, `2TP / (2TP + FP + FN)`.
pub(crate) fn f_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("prediction length {a} != truth length {b}")));
    }
    Ok(())
}

fn detected(pred: &[bool], events: &EventSet) -> Vec<bool> {
    events
        .iter()
        .map(|e| pred[e.start..=e.end].iter().any(|&p| p))
        .collect()
}

pub fn confusion(pred: &LabelVector, truth: &LabelVector) -> Result<ConfusionCounts> {
    check_len(pred.len(), truth.len())?;
    let mut c = ConfusionCounts::default();
    for (&p, &y) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p, y) {
            (true, true) => c.tp_t += 1,
            (true, false) => c.fp_t += 1,
            (false, true) => c.fn_t += 1,
            (false, false) => c.tn_t += 1,
        }
    }
    let events = events_from_labels(truth);
    let hits = detected(pred.as_slice(), &events);
    c.tp_e = hits.iter().filter(|&&h| h).count();
    c.fn_e = hits.len() - c.tp_e;
    Ok(c)
}

pub fn f1_point(counts: &ConfusionCounts) -> f64 {
    f_from_counts(counts.tp_t, counts.fp_t, counts.fn_t)
}

/// Expands every detected true event to its full span, then scores point-wise.
pub fn point_adjust(pred: &LabelVector, truth: &LabelVector) -> Result<LabelVector> {
    check_len(pred.len(), truth.len())?;
    let mut adjusted = pred.as_slice().to_vec();
    let events = events_from_labels(truth);
    for (e, hit) in events.iter().zip(detected(pred.as_slice(), &events)) {
        if hit {
            adjusted[e.start..=e.end].iter_mut().for_each(|v| *v = true);
        }
    }
    Ok(LabelVector::new(adjusted))
}

pub fn f1_point_adjusted(pred: &LabelVector, truth: &LabelVector) -> Result<f64> {
    let adjusted = point_adjust(pred, truth)?;
    Ok(f1_point(&confusion(&adjusted, truth)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeF {
    pub fc1: f64,
    pub prec_t: f64,
    pub rec_e: f64,
}

/// Harmonic mean of point-wise precision and event-wise recall.
pub fn fc1(pred: &LabelVector, truth: &LabelVector) -> Result<CompositeF> {
    let c = confusion(pred, truth)?;
    let prec_t = c.precision_t();
    let rec_e = c.recall_e();
    Ok(CompositeF {
        fc1: fc_from_counts(c.tp_t, c.fp_t, c.tp_e, c.tp_e + c.fn_e),
        prec_t,
        rec_e,
    })
}

fn check_scores(scores: &ScoreSeries, truth: &LabelVector) -> Result<()> {
    check_len(scores.len(), truth.len())?;
    if scores.as_slice().iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    Ok(())
}

/// 1-based midranks of `values` in ascending order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney form of the ROC area, ties at half weight.
pub fn auroc(scores: &ScoreSeries, truth: &LabelVector) -> Result<f64> {
    check_scores(scores, truth)?;
    let pos = truth.positives();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput("AU-ROC needs both classes in the truth".into()));
    }
    let ranks = midranks(scores.as_slice());
    let rank_sum: f64 = ranks
        .iter()
        .zip(truth.as_slice())
        .filter(|(_, &y)| y)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision over descending distinct-score cut points.
pub fn auprc(scores: &ScoreSeries, truth: &LabelVector) -> Result<f64> {
    check_scores(scores, truth)?;
    let pos = truth.positives();
    if pos == 0 {
        return Err(Error::InvalidInput("AU-PRC needs at least one positive".into()));
    }
    let s = scores.as_slice();
    let y = truth.as_slice();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let level = s[order[i]];
        while i < order.len() && s[order[i]] == level {
            if y[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * tp as f64 / (tp + fp) as f64;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Random anomaly detector: i.i.d. uniform scores in `[0, 1)`.
pub fn rad_scores(n: usize, seed: u64) -> ScoreSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreSeries((0..n).map(|_| rng.random::<f64>()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f1: f64,
    pub fpa1: f64,
    pub fc1: f64,
    pub prec_t: f64,
    pub rec_e: f64,
    pub prec_point: f64,
    pub rec_point: f64,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

impl MetricReport {
    /// Threshold-free metrics are filled only when `scores` is given and the
    /// truth admits them.
    pub fn evaluate(
        pred: &LabelVector,
        truth: &LabelVector,
        scores: Option<&ScoreSeries>,
    ) -> Result<Self> {
        let c = confusion(pred, truth)?;
        let composite = fc1(pred, truth)?;
        Ok(Self {
            f1: f1_point(&c),
            fpa1: f1_point_adjusted(pred, truth)?,
            fc1: composite.fc1,
            prec_t: composite.prec_t,
            rec_e: composite.rec_e,
            prec_point: c.precision_t(),
            rec_point: c.recall_t(),
            auroc: scores.and_then(|s| auroc(s, truth).ok()),
            auprc: scores.and_then(|s| auprc(s, truth).ok()),
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "f1" => Some(self.f1),
            "fpa1" => Some(self.fpa1),
            "fc1" => Some(self.fc1),
            "prec_t" => Some(self.prec_t),
            "rec_e" => Some(self.rec_e),
            "prec_point" => Some(self.prec_point),
            "rec_point" => Some(self.rec_point),
            "auroc" => self.auroc,
            "auprc" => self.auprc,
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 9] = [
        "f1", "fpa1", "fc1", "prec_t", "rec_e", "prec_point", "rec_point", "auroc", "auprc",
    ];
}
