use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{f1_point, f1_point_adjusted, confusion, fc1, rad_scores};
use crate::thresholding::{threshold_best_f, FScore};
use crate::types::LabelVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub f1: f64,
    pub fpa1: f64,
    pub fc1: f64,
    pub prec_t: f64,
    pub rec_e: f64,
    pub positives: usize,
}

pub fn compare_row(name: &str, pred: &LabelVector, truth: &LabelVector) -> Result<CompareRow> {
    let c = confusion(pred, truth)?;
    let composite = fc1(pred, truth)?;
    Ok(CompareRow {
        name: name.to_owned(),
        f1: f1_point(&c),
        fpa1: f1_point_adjusted(pred, truth)?,
        fc1: composite.fc1,
        prec_t: composite.prec_t,
        rec_e: composite.rec_e,
        positives: pred.positives(),
    })
}

/// F1 / Fpa1 / Fc1 for each named prediction, then one random-detector row
/// per F-score, thresholded at that score's best value.
pub fn compare_metrics(
    truth: &LabelVector,
    predictions: &[(String, LabelVector)],
    rad_seed: Option<u64>,
) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::with_capacity(predictions.len() + 3);
    for (name, pred) in predictions {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!(
                "prediction '{name}' has {} points, truth has {}",
                pred.len(),
                truth.len()
            )));
        }
        rows.push(compare_row(name, pred, truth)?);
    }
    if let Some(seed) = rad_seed.filter(|_| !truth.is_empty()) {
        let scores = rad_scores(truth.len(), seed);
        for metric in [FScore::F1, FScore::Fpa1, FScore::Fc1] {
            let th = threshold_best_f(&scores, truth, metric)?;
            rows.push(compare_row(&format!("RAD best-{}", metric.name()), &th.predictions, truth)?);
        }
    }
    Ok(rows)
}
