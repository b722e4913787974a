use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SeriesMatrix;

/// Test-phase values are clipped to this range after scaling.
pub const TEST_CLIP: (f64, f64) = (-4.0, 5.0);

/// Divisor used for channels that are constant in the training set.
const CONSTANT_CHANNEL_RANGE: f64 = 1.0;

/// Per-channel min/max computed on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn m(&self) -> usize {
        self.min.len()
    }

    fn range(&self, i: usize) -> f64 {
        let r = self.max[i] - self.min[i];
        if r > 0.0 {
            r
        } else {
            CONSTANT_CHANNEL_RANGE
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

pub fn fit_normalizer(train: &SeriesMatrix) -> NormStats {
    let (min, max) = train
        .values()
        .columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        })
        .unzip();
    NormStats { min, max }
}

/// Maps each value to `(v - min) / (max - min)`. Test-phase output is clipped
/// to [`TEST_CLIP`]; constant training channels divide by 1 instead.
pub fn apply_normalizer(x: &SeriesMatrix, stats: &NormStats, phase: Phase) -> Result<SeriesMatrix> {
    if x.m() != stats.m() {
        return Err(Error::Shape(format!(
            "normalizer fitted on {} channels, input has {}",
            stats.m(),
            x.m()
        )));
    }
    let mut out = x.values().to_owned();
    for (i, mut col) in out.columns_mut().into_iter().enumerate() {
        let (lo, range) = (stats.min[i], stats.range(i));
        Zip::from(&mut col).for_each(|v| {
            let scaled = (*v - lo) / range;
            *v = match phase {
                Phase::Train => scaled,
                Phase::Test => scaled.clamp(TEST_CLIP.0, TEST_CLIP.1),
            };
        });
    }
    Ok(x.with_values(out))
}
