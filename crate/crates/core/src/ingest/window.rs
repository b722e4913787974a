use ndarray::{s, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SeriesMatrix;

/// Window length `l_w` and step `l_s`, with `1 <= l_s <= l_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWindowSpec")]
pub struct WindowSpec {
    pub l_w: usize,
    pub l_s: usize,
}

#[derive(Deserialize)]
struct RawWindowSpec {
    l_w: usize,
    l_s: usize,
}

impl TryFrom<RawWindowSpec> for WindowSpec {
    type Error = Error;

    fn try_from(raw: RawWindowSpec) -> Result<Self> {
        WindowSpec::new(raw.l_w, raw.l_s)
    }
}

impl WindowSpec {
    pub fn new(l_w: usize, l_s: usize) -> Result<Self> {
        if l_s == 0 || l_s > l_w {
            return Err(Error::InvalidInput(format!(
                "window step must satisfy 1 <= l_s <= l_w, got l_w={l_w}, l_s={l_s}"
            )));
        }
        Ok(Self { l_w, l_s })
    }
}

pub fn window_count(n: usize, spec: WindowSpec) -> usize {
    if n < spec.l_w {
        0
    } else {
        (n - spec.l_w) / spec.l_s + 1
    }
}

/// Start indices `0, l_s, 2*l_s, ...` of all complete windows.
pub fn window_starts(n: usize, spec: WindowSpec) -> impl Iterator<Item = usize> {
    (0..window_count(n, spec)).map(move |i| i * spec.l_s)
}

/// Overlapping `l_w x m` windows over `x`.
pub fn make_windows(x: &SeriesMatrix, spec: WindowSpec) -> Result<Vec<ArrayView2<'_, f64>>> {
    if x.n() < spec.l_w {
        return Err(Error::InsufficientData {
            what: "time-points for one window",
            need: spec.l_w,
            have: x.n(),
        });
    }
    let values = x.values();
    Ok(window_starts(x.n(), spec)
        .map(|start| values.slice_move(s![start..start + spec.l_w, ..]))
        .collect())
}
